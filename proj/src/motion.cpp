#include "mgtr/motion.hpp"

#include <cmath>
#include <limits>

#include "mgtr/errors.hpp"

namespace mgtr::motion {

State eval_segment(const Segment& seg, double t) {
  State s;
  switch (seg.kind) {
    case Segment::Kind::ConstVel: {
      s.p = seg.p0 + seg.v0 * t;
      s.v = seg.v0;
      return s;
    }
    case Segment::Kind::Arc: {
      const double speed = seg.v0.norm();
      if (std::abs(seg.curvature) < 1e-12 || speed < 1e-12) {
        s.p = seg.p0 + seg.v0 * t;
        s.v = seg.v0;
        return s;
      }
      const double theta0 = std::atan2(seg.v0.y(), seg.v0.x());
      const double r = 1.0 / seg.curvature;  // signed radius
      const Vec2 center = seg.p0 - r * Vec2(std::sin(theta0), -std::cos(theta0));
      const double theta = theta0 + seg.curvature * speed * t;
      s.p = center + r * Vec2(std::sin(theta), -std::cos(theta));
      s.v = speed * Vec2(std::cos(theta), std::sin(theta));
      return s;
    }
    case Segment::Kind::Stop: {
      const double speed = seg.v0.norm();
      if (speed < 1e-12 || seg.decel <= 0.0) {
        s.p = seg.p0;
        s.v = Vec2::Zero();
        return s;
      }
      const Vec2 dir = seg.v0 / speed;
      const double t_stop = speed / seg.decel;
      const double tc = std::min(t, t_stop);
      const double dist = speed * tc - 0.5 * seg.decel * tc * tc;
      s.p = seg.p0 + dir * dist;
      s.v = dir * std::max(0.0, speed - seg.decel * tc);
      return s;
    }
  }
  throw ContractError("eval_segment: unknown segment kind");
}

State Plan::at(double t) const {
  if (segments_.empty()) throw ContractError("Plan::at: empty plan");
  double remaining = t;
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    const Segment& seg = segments_[i];
    const bool last = i + 1 == segments_.size();
    if (last || remaining <= seg.duration) return eval_segment(seg, remaining);
    remaining -= seg.duration;
  }
  return eval_segment(segments_.back(), remaining);
}

Plan make_plan(const Vec2& p0, const Vec2& v0, std::vector<Segment> protos) {
  Vec2 p = p0, v = v0;
  for (auto& seg : protos) {
    seg.p0 = p;
    seg.v0 = v;
    const State end = eval_segment(seg, seg.duration);
    p = end.p;
    v = end.v;
  }
  return Plan(std::move(protos));
}

}  // namespace mgtr::motion
