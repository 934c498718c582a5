#include "mgtr/svg_plot.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "mgtr/errors.hpp"

namespace mgtr {

namespace {

struct Box {
  double x0 = 1e30, y0 = 1e30, x1 = -1e30, y1 = -1e30;
  void add(double x, double y) {
    x0 = std::min(x0, x);
    y0 = std::min(y0, y);
    x1 = std::max(x1, x);
    y1 = std::max(y1, y);
  }
};

const char* kind_color(MapKind k) {
  switch (k) {
    case MapKind::LaneCenterline: return "#9aa5b1";
    case MapKind::RoadBoundary: return "#52606d";
    case MapKind::Crosswalk: return "#d97706";
  }
  return "#000";
}

}  // namespace

void write_prediction_svg(const std::string& path, const Scenario& s, int target_id,
                          const GmmModeSet& world_modes) {
  const AgentTrack* target = s.find_agent(target_id);
  if (!target) throw ContractError("svg: unknown target");

  Box box;
  for (const auto& e : s.map)
    for (Index i = 0; i < e.points.rows(); ++i) box.add(e.points(i, 0), e.points(i, 1));
  for (const auto& f : target->future) box.add(f.x, f.y);
  for (Index m = 0; m < world_modes.modes(); ++m)
    for (Index t = 0; t < world_modes.steps; ++t)
      box.add(world_modes.mean(m, t).x(), world_modes.mean(m, t).y());
  const double pad = 5.0;
  box.x0 -= pad;
  box.y0 -= pad;
  box.x1 += pad;
  box.y1 += pad;

  std::ostringstream svg;
  // flip y so north is up
  svg << "<svg xmlns='http://www.w3.org/2000/svg' viewBox='" << box.x0 << " " << -box.y1 << " "
      << (box.x1 - box.x0) << " " << (box.y1 - box.y0) << "'>\n";
  svg << "<rect x='" << box.x0 << "' y='" << -box.y1 << "' width='" << (box.x1 - box.x0)
      << "' height='" << (box.y1 - box.y0) << "' fill='#f8fafc'/>\n";

  auto polyline = [&svg](auto&& points, const std::string& color, double width,
                         const std::string& dash = "") {
    svg << "<polyline fill='none' stroke='" << color << "' stroke-width='" << width << "'";
    if (!dash.empty()) svg << " stroke-dasharray='" << dash << "'";
    svg << " points='";
    points();
    svg << "'/>\n";
  };

  for (const auto& e : s.map) {
    polyline(
        [&] {
          for (Index i = 0; i < e.points.rows(); ++i)
            svg << e.points(i, 0) << "," << -e.points(i, 1) << " ";
        },
        kind_color(e.kind), e.kind == MapKind::Crosswalk ? 0.8 : 0.4,
        e.kind == MapKind::LaneCenterline ? "2,2" : "");
  }

  for (const auto& a : s.agents) {
    polyline(
        [&] {
          for (std::size_t k = 0; k < a.states.size(); ++k) {
            if (!a.valid[k]) continue;
            svg << a.states[k].x << "," << -a.states[k].y << " ";
          }
        },
        a.agent_id == target_id ? "#111827" : "#9ca3af", 0.5);
  }

  if (!target->future.empty()) {
    polyline(
        [&] {
          svg << target->current().x << "," << -target->current().y << " ";
          for (const auto& f : target->future) svg << f.x << "," << -f.y << " ";
        },
        "#16a34a", 0.6);
  }

  for (Index m = 0; m < world_modes.modes(); ++m) {
    const double w = 0.25 + 0.75 * world_modes.probabilities(m);
    polyline(
        [&] {
          svg << target->current().x << "," << -target->current().y << " ";
          for (Index t = 0; t < world_modes.steps; ++t)
            svg << world_modes.mean(m, t).x() << "," << -world_modes.mean(m, t).y() << " ";
        },
        "#2563eb", 0.3 * w + 0.2, "1,1");
  }

  svg << "</svg>\n";
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open svg for writing: " + path);
  out << svg.str();
}

}  // namespace mgtr
