#pragma once

#include <vector>

#include "mgtr/types.hpp"

namespace mgtr::motion {

// Closed-form motion primitives used for synthetic futures. A plan is a
// sequence of segments evaluated analytically at any time offset.
struct Segment {
  enum class Kind { ConstVel, Arc, Stop };
  Kind kind = Kind::ConstVel;
  double duration = 0;     // seconds; last segment may be open-ended (inf)
  Vec2 p0 = Vec2::Zero();  // state at segment start
  Vec2 v0 = Vec2::Zero();
  double curvature = 0;    // Arc: signed, 1/m
  double decel = 0;        // Stop: m/s^2 along the velocity direction
};

struct State {
  Vec2 p;
  Vec2 v;
};

State eval_segment(const Segment& seg, double t);

class Plan {
 public:
  Plan() = default;
  explicit Plan(std::vector<Segment> segments) : segments_(std::move(segments)) {}

  State at(double t) const;  // t >= 0, measured from plan start
  const std::vector<Segment>& segments() const { return segments_; }
  bool empty() const { return segments_.empty(); }

 private:
  std::vector<Segment> segments_;
};

// Builders fix up each segment's start state from the previous one.
Plan make_plan(const Vec2& p0, const Vec2& v0, std::vector<Segment> protos);

}  // namespace mgtr::motion
