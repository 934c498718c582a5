#include "mgtr/scene.hpp"

#include <cmath>
#include <limits>
#include <random>

#include "mgtr/errors.hpp"
#include "mgtr/motion.hpp"

namespace mgtr {

const char* to_string(AgentType t) {
  switch (t) {
    case AgentType::Vehicle: return "Vehicle";
    case AgentType::Pedestrian: return "Pedestrian";
    case AgentType::Cyclist: return "Cyclist";
  }
  return "?";
}

const char* to_string(MapKind k) {
  switch (k) {
    case MapKind::LaneCenterline: return "LaneCenterline";
    case MapKind::RoadBoundary: return "RoadBoundary";
    case MapKind::Crosswalk: return "Crosswalk";
  }
  return "?";
}

AgentType agent_type_from_string(const std::string& s) {
  if (s == "Vehicle") return AgentType::Vehicle;
  if (s == "Pedestrian") return AgentType::Pedestrian;
  if (s == "Cyclist") return AgentType::Cyclist;
  throw SchemaError("unknown agent_type: " + s);
}

MapKind map_kind_from_string(const std::string& s) {
  if (s == "LaneCenterline") return MapKind::LaneCenterline;
  if (s == "RoadBoundary") return MapKind::RoadBoundary;
  if (s == "Crosswalk") return MapKind::Crosswalk;
  throw SchemaError("unknown map kind: " + s);
}

double wrap_angle(double a) {
  a = std::fmod(a, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  if (a > kPi) a -= 2.0 * kPi;
  return a;
}

Eigen::Vector3d VoxelGrid::analytic_center(Index d, Index h, Index w) const {
  return {origin.x() + (static_cast<double>(w) + 0.5) * cell_size,
          origin.y() + (static_cast<double>(h) + 0.5) * cell_size,
          (static_cast<double>(d) + 0.5) * cell_size};
}

const AgentTrack* Scenario::find_agent(int agent_id) const {
  for (const auto& a : agents)
    if (a.agent_id == agent_id) return &a;
  return nullptr;
}

void SceneGenConfig::validate() const {
  if (num_scenarios <= 0) throw ContractError("gen config: num_scenarios must be positive");
  if (history_steps < 2) throw ContractError("gen config: history_steps must be >= 2");
  if (future_steps <= 0) throw ContractError("gen config: future_steps must be positive");
  if (dt <= 0) throw ContractError("gen config: dt must be positive");
  if (voxel_cell <= 0 || voxel_hw <= 0 || voxel_depth <= 0)
    throw ContractError("gen config: voxel grid dimensions must be positive");
  if (road_half_length <= 10 || lane_half_width <= 0)
    throw ContractError("gen config: road dimensions out of range");
}

// ---------------------------------------------------------------------------
// validation

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw SchemaError(msg);
}

}  // namespace

void validate_scenario(const Scenario& s, bool generated_grid) {
  require(s.timestamp_step > 0, "scenario: timestamp_step must be positive");
  require(!s.agents.empty(), "scenario: no agents");
  const std::size_t th = s.agents.front().states.size();
  for (const auto& a : s.agents) {
    require(a.states.size() == th, "agent: inconsistent history length");
    require(a.states.size() == a.valid.size(), "agent: states and valid lengths differ");
    for (std::size_t k = 0; k < a.states.size(); ++k) {
      const AgentState& st = a.states[k];
      if (!a.valid[k]) {
        require(st.x == 0 && st.y == 0 && st.vx == 0 && st.vy == 0 && st.heading == 0 &&
                    st.length == 0 && st.width == 0 && st.height == 0,
                "agent: invalid step must be zero padded");
      } else {
        require(st.heading > -kPi - 1e-12 && st.heading <= kPi + 1e-12,
                "agent: heading outside (-pi, pi]");
      }
    }
    for (const auto& f : a.future)
      require(std::isfinite(f.x) && std::isfinite(f.y) && std::isfinite(f.vx) && std::isfinite(f.vy),
              "agent: non-finite future");
  }
  for (const auto& e : s.map) {
    require(e.points.rows() >= 2, "map element: fewer than 2 points");
    require(e.curvature.size() == e.points.rows(), "map element: curvature length mismatch");
    for (Index i = 1; i < e.points.rows(); ++i)
      require((e.points.row(i) - e.points.row(i - 1)).norm() > 1e-12,
              "map element: consecutive duplicate points");
  }
  const VoxelGrid& g = s.voxels;
  require(g.features.rows() == VoxelGrid::kFeatureDim, "voxels: feature dim must be 57");
  require(g.features.cols() == g.cell_count(), "voxels: cell count mismatch");
  require(g.cell_size > 0, "voxels: cell_size must be positive");
  if (generated_grid) {
    for (Index d = 0; d < g.depth; ++d)
      for (Index h = 0; h < g.height; ++h)
        for (Index w = 0; w < g.width; ++w) {
          const Index c = g.cell_index(d, h, w);
          const Eigen::Vector3d pc = g.analytic_center(d, h, w);
          const Index base = VoxelGrid::kSegDim + VoxelGrid::kNumClasses;
          require(g.features(base + 0, c) == pc.x() && g.features(base + 1, c) == pc.y() &&
                      g.features(base + 2, c) == pc.z(),
                  "voxels: position channels disagree with analytic centers");
        }
  }
  for (int t : s.targets) {
    const AgentTrack* a = s.find_agent(t);
    require(a != nullptr, "target agent id not present: " + std::to_string(t));
    require(a->current_valid(), "target agent has invalid current step");
  }
}

// ---------------------------------------------------------------------------
// rigid transform

void apply_rigid_transform(Scenario& s, double angle, const Vec2& translation) {
  const double c = std::cos(angle), sn = std::sin(angle);
  auto rot = [&](double x, double y) { return Vec2(c * x - sn * y, sn * x + c * y); };
  for (auto& a : s.agents) {
    for (std::size_t k = 0; k < a.states.size(); ++k) {
      if (!a.valid[k]) continue;
      AgentState& st = a.states[k];
      const Vec2 p = rot(st.x, st.y) + translation;
      const Vec2 v = rot(st.vx, st.vy);
      st.x = p.x();
      st.y = p.y();
      st.vx = v.x();
      st.vy = v.y();
      st.heading = wrap_angle(st.heading + angle);
    }
    for (auto& f : a.future) {
      const Vec2 p = rot(f.x, f.y) + translation;
      const Vec2 v = rot(f.vx, f.vy);
      f.x = p.x();
      f.y = p.y();
      f.vx = v.x();
      f.vy = v.y();
    }
  }
  for (auto& e : s.map) {
    for (Index i = 0; i < e.points.rows(); ++i) {
      const Vec2 p = rot(e.points(i, 0), e.points(i, 1)) + translation;
      e.points(i, 0) = p.x();
      e.points(i, 1) = p.y();
    }
  }
  VoxelGrid& g = s.voxels;
  g.origin = rot(g.origin.x(), g.origin.y()) + translation;
  const Index px = VoxelGrid::kSegDim + VoxelGrid::kNumClasses;
  for (Index i = 0; i < g.features.cols(); ++i) {
    const Vec2 p = rot(g.features(px, i), g.features(px + 1, i)) + translation;
    g.features(px, i) = p.x();
    g.features(px + 1, i) = p.y();
  }
}

// ---------------------------------------------------------------------------
// synthetic generation

namespace {

using motion::Plan;
using motion::Segment;

constexpr int kClassRoad = 0;
constexpr int kClassSidewalk = 1;
constexpr int kClassVegetation = 2;
constexpr int kClassBuilding = 3;
constexpr int kClassCrosswalk = 4;
constexpr int kClassGround = 21;

// Fixed per-class signature so voxel features are a deterministic function of
// semantic occupancy and carry learnable signal through average pooling.
double seg_feature(Index j, int cls) {
  return std::sin(0.35 * static_cast<double>(j + 1) + 1.7 * static_cast<double>(cls)) +
         0.3 * std::cos(0.9 * static_cast<double>(j + 1) * static_cast<double>(cls + 1));
}

struct Rect {
  double x0, x1, y0, y1;
  bool contains(const Vec2& p) const {
    return p.x() >= x0 && p.x() <= x1 && p.y() >= y0 && p.y() <= y1;
  }
};

struct SceneSketch {
  // canonical-frame semantic regions, later rasterized in the world frame
  std::vector<Rect> vegetation;
  std::vector<Rect> crosswalks;
  std::vector<Rect> buildings;
  std::vector<Rect> roads;
  std::vector<Rect> sidewalks;
  Vec2 focus = Vec2::Zero();  // voxel grid center, canonical frame

  int classify(const Vec2& p) const {
    for (const auto& r : vegetation)
      if (r.contains(p)) return kClassVegetation;
    for (const auto& r : crosswalks)
      if (r.contains(p)) return kClassCrosswalk;
    for (const auto& r : roads)
      if (r.contains(p)) return kClassRoad;
    for (const auto& r : sidewalks)
      if (r.contains(p)) return kClassSidewalk;
    for (const auto& r : buildings)
      if (r.contains(p)) return kClassBuilding;
    return kClassGround;
  }
};

struct AgentSketch {
  AgentType type;
  Plan plan;               // t = 0 is the current step
  double length, width, height;
  bool is_target = false;
};

MatX2 line_points(const Vec2& a, const Vec2& b, double step) {
  const double len = (b - a).norm();
  const Index n = std::max<Index>(2, static_cast<Index>(std::floor(len / step)) + 1);
  MatX2 pts(n, 2);
  for (Index i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(n - 1);
    pts.row(i) = (a + t * (b - a)).transpose();
  }
  return pts;
}

MapElement line_element(int id, MapKind kind, const Vec2& a, const Vec2& b, double step,
                        std::optional<double> speed_limit = std::nullopt) {
  MapElement e;
  e.element_id = id;
  e.kind = kind;
  e.points = line_points(a, b, step);
  e.speed_limit = speed_limit;
  e.curvature = Vec::Zero(e.points.rows());
  return e;
}

// Quarter-ish arc boundary element, sampled finely enough to carry curvature.
MapElement arc_element(int id, const Vec2& center, double radius, double theta0, double theta1,
                       double step) {
  MapElement e;
  e.element_id = id;
  e.kind = MapKind::RoadBoundary;
  const double arc_len = std::abs(theta1 - theta0) * radius;
  const Index n = std::max<Index>(3, static_cast<Index>(std::ceil(arc_len / step)) + 1);
  e.points.resize(n, 2);
  e.curvature = Vec::Constant(n, (theta1 > theta0 ? 1.0 : -1.0) / radius);
  for (Index i = 0; i < n; ++i) {
    const double t = theta0 + (theta1 - theta0) * static_cast<double>(i) / static_cast<double>(n - 1);
    e.points(i, 0) = center.x() + radius * std::cos(t);
    e.points(i, 1) = center.y() + radius * std::sin(t);
  }
  return e;
}

double urand(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  return d(rng);
}

bool coin(std::mt19937_64& rng, double p) {
  std::uniform_real_distribution<double> d(0.0, 1.0);
  return d(rng) < p;
}

struct Sketches {
  SceneSketch scene;
  std::vector<AgentSketch> agents;
  std::vector<MapElement> map;
};

// Straight road, optional crosswalk. A pedestrian either turns onto the
// crosswalk or keeps walking; an approaching vehicle brakes for a crossing
// pedestrian. Both behaviors are functions of the crosswalk in the map.
Sketches build_straight_template(std::mt19937_64& rng, const SceneGenConfig& cfg) {
  Sketches out;
  const double L = cfg.road_half_length;
  const double hw = cfg.lane_half_width;  // road edge at +-hw

  out.scene.roads.push_back({-L, L, -hw, hw});
  out.scene.sidewalks.push_back({-L, L, hw, hw + 2.5});
  out.scene.sidewalks.push_back({-L, L, -hw - 2.5, -hw});
  if (coin(rng, 0.7)) out.scene.buildings.push_back({-L * 0.8, L * 0.8, hw + 4.5, hw + 12.0});
  if (coin(rng, 0.7)) out.scene.buildings.push_back({-L * 0.8, L * 0.8, -hw - 12.0, -hw - 4.5});

  int id = 0;
  const double lane_y = hw / 2.0;
  out.map.push_back(line_element(id++, MapKind::LaneCenterline, {-L, -lane_y}, {L, -lane_y}, 5.0, 13.9));
  out.map.push_back(line_element(id++, MapKind::LaneCenterline, {L, lane_y}, {-L, lane_y}, 5.0, 13.9));
  out.map.push_back(line_element(id++, MapKind::RoadBoundary, {-L, hw}, {L, hw}, 5.0));
  out.map.push_back(line_element(id++, MapKind::RoadBoundary, {-L, -hw}, {L, -hw}, 5.0));

  const bool has_crosswalk = coin(rng, 0.75);
  const double xc = urand(rng, -8.0, 8.0);
  if (has_crosswalk) {
    out.scene.crosswalks.push_back({xc - 1.5, xc + 1.5, -hw - 1.2, hw + 1.2});
    out.map.push_back(
        line_element(id++, MapKind::Crosswalk, {xc, -hw - 1.2}, {xc, hw + 1.2}, 1.0));
  }
  out.scene.focus = Vec2(xc, 0.0);

  // pedestrian walking east on the south sidewalk, at the crosswalk entrance now
  const double ped_speed = urand(rng, 1.1, 1.6);
  AgentSketch ped;
  ped.type = AgentType::Pedestrian;
  ped.length = 0.6;
  ped.width = 0.6;
  ped.height = 1.8;
  ped.is_target = true;
  const Vec2 ped_pos(xc, -hw - 1.0);
  if (has_crosswalk) {
    ped.plan = motion::make_plan(ped_pos, Vec2(0.0, ped_speed),
                                 {Segment{Segment::Kind::ConstVel, 1e9, {}, {}, 0, 0}});
  } else {
    ped.plan = motion::make_plan(ped_pos, Vec2(ped_speed, 0.0),
                                 {Segment{Segment::Kind::ConstVel, 1e9, {}, {}, 0, 0}});
  }
  out.agents.push_back(ped);

  // eastbound vehicle approaching the crosswalk
  const double vspeed = urand(rng, 6.0, 10.0);
  const double dv = urand(rng, 16.0, 30.0);
  AgentSketch veh;
  veh.type = AgentType::Vehicle;
  veh.length = urand(rng, 4.2, 5.0);
  veh.width = 1.9;
  veh.height = 1.7;
  veh.is_target = true;
  const Vec2 veh_pos(xc - dv, -lane_y);
  if (has_crosswalk) {
    const double stop_distance = dv - 4.5;  // halt just before the crosswalk
    const double decel = vspeed * vspeed / (2.0 * stop_distance);
    veh.plan = motion::make_plan(veh_pos, Vec2(vspeed, 0.0),
                                 {Segment{Segment::Kind::Stop, 1e9, {}, {}, 0, decel}});
  } else {
    veh.plan = motion::make_plan(veh_pos, Vec2(vspeed, 0.0),
                                 {Segment{Segment::Kind::ConstVel, 1e9, {}, {}, 0, 0}});
  }
  out.agents.push_back(veh);

  // westbound filler vehicle
  if (coin(rng, 0.7)) {
    AgentSketch w;
    w.type = AgentType::Vehicle;
    w.length = 4.6;
    w.width = 1.9;
    w.height = 1.7;
    w.plan = motion::make_plan(Vec2(urand(rng, 5.0, L * 0.6), lane_y),
                               Vec2(-urand(rng, 6.0, 10.0), 0.0),
                               {Segment{Segment::Kind::ConstVel, 1e9, {}, {}, 0, 0}});
    out.agents.push_back(w);
  }

  // cyclist riding along the north boundary
  if (coin(rng, 0.55)) {
    AgentSketch cyc;
    cyc.type = AgentType::Cyclist;
    cyc.length = 1.8;
    cyc.width = 0.6;
    cyc.height = 1.7;
    cyc.is_target = true;
    const double cs = urand(rng, 3.0, 5.5);
    // slows for the crosswalk when a pedestrian is about to cross
    const Vec2 cyc_pos(xc - urand(rng, 10.0, 20.0), hw + 0.7);
    if (has_crosswalk) {
      const double stop_distance = xc - 2.0 - cyc_pos.x();
      const double decel = cs * cs / (2.0 * stop_distance);
      cyc.plan = motion::make_plan(cyc_pos, Vec2(cs, 0.0),
                                   {Segment{Segment::Kind::Stop, 1e9, {}, {}, 0, decel}});
    } else {
      cyc.plan = motion::make_plan(cyc_pos, Vec2(cs, 0.0),
                                   {Segment{Segment::Kind::ConstVel, 1e9, {}, {}, 0, 0}});
    }
    out.agents.push_back(cyc);
  }
  return out;
}

// T-intersection with a side road to the south. A vehicle turns onto the side
// road only when vegetation blocks the main road past the junction (visible
// only in the voxel grid); a pedestrian detours north around a corner
// vegetation strip; a cyclist corners along the junction boundary arc.
Sketches build_tee_template(std::mt19937_64& rng, const SceneGenConfig& cfg) {
  Sketches out;
  const double L = cfg.road_half_length;
  const double hw = cfg.lane_half_width;
  const double xj = urand(rng, 10.0, 22.0);
  const double side_len = 45.0;

  out.scene.roads.push_back({-L, L, -hw, hw});
  out.scene.roads.push_back({xj - hw, xj + hw, -hw - side_len, -hw});
  out.scene.sidewalks.push_back({-L, L, hw, hw + 2.5});
  out.scene.sidewalks.push_back({-L, xj - hw, -hw - 2.5, -hw});
  out.scene.sidewalks.push_back({xj + hw, L, -hw - 2.5, -hw});
  if (coin(rng, 0.7)) out.scene.buildings.push_back({-L * 0.8, L * 0.8, hw + 9.0, hw + 16.0});

  int id = 0;
  const double lane_y = hw / 2.0;
  out.map.push_back(line_element(id++, MapKind::LaneCenterline, {-L, -lane_y}, {L, -lane_y}, 5.0, 13.9));
  out.map.push_back(line_element(id++, MapKind::LaneCenterline, {L, lane_y}, {-L, lane_y}, 5.0, 13.9));
  out.map.push_back(line_element(id++, MapKind::LaneCenterline, {xj, -hw}, {xj, -hw - side_len}, 5.0, 11.1));
  out.map.push_back(line_element(id++, MapKind::RoadBoundary, {-L, hw}, {L, hw}, 5.0));
  out.map.push_back(line_element(id++, MapKind::RoadBoundary, {-L, -hw}, {xj - hw, -hw}, 5.0));
  out.map.push_back(line_element(id++, MapKind::RoadBoundary, {xj + hw, -hw}, {L, -hw}, 5.0));
  out.map.push_back(line_element(id++, MapKind::RoadBoundary, {xj - hw, -hw - side_len}, {xj - hw, -hw}, 5.0));
  out.map.push_back(line_element(id++, MapKind::RoadBoundary, {xj + hw, -hw - side_len}, {xj + hw, -hw}, 5.0));
  // junction corner arcs
  out.map.push_back(arc_element(id++, {xj - hw - 1.5, -hw - 1.5}, 1.5, kPi / 2, 0.0, 0.4));
  out.map.push_back(arc_element(id++, {xj + hw + 1.5, -hw - 1.5}, 1.5, kPi, kPi / 2, 0.4));

  out.scene.focus = Vec2(xj, 0.0);

  // vegetation wall past the junction forces the turn; 50/50
  const bool blocked = coin(rng, 0.5);
  if (blocked) {
    const double xb = xj + urand(rng, 9.0, 14.0);
    out.scene.vegetation.push_back({xb, xb + 5.0, -hw - 2.0, hw + 2.0});
  }

  const double vspeed = urand(rng, 7.0, 10.5);
  const double da = urand(rng, 22.0, 38.0);
  AgentSketch veh;
  veh.type = AgentType::Vehicle;
  veh.length = urand(rng, 4.2, 5.0);
  veh.width = 1.9;
  veh.height = 1.7;
  veh.is_target = true;
  const Vec2 veh_pos(xj - da, -lane_y);
  if (blocked) {
    const double r = urand(rng, 4.0, 6.0);
    const double approach = da - r;  // arrive at the turn-in point
    const double quarter = (kPi / 2.0) * r / vspeed;
    veh.plan = motion::make_plan(
        veh_pos, Vec2(vspeed, 0.0),
        {Segment{Segment::Kind::ConstVel, approach / vspeed, {}, {}, 0, 0},
         Segment{Segment::Kind::Arc, quarter, {}, {}, -1.0 / r, 0},
         Segment{Segment::Kind::ConstVel, 1e9, {}, {}, 0, 0}});
  } else {
    veh.plan = motion::make_plan(veh_pos, Vec2(vspeed, 0.0),
                                 {Segment{Segment::Kind::ConstVel, 1e9, {}, {}, 0, 0}});
  }
  out.agents.push_back(veh);

  // pedestrian at the NE corner: vegetation strip forces the detour north
  const bool strip = coin(rng, 0.5);
  if (strip) out.scene.vegetation.push_back({xj + 2.0, xj + 9.0, hw + 1.5, hw + 8.5});
  const double ped_speed = urand(rng, 1.1, 1.6);
  AgentSketch ped;
  ped.type = AgentType::Pedestrian;
  ped.length = 0.6;
  ped.width = 0.6;
  ped.height = 1.8;
  ped.is_target = true;
  const Vec2 ped_pos(xj + 0.8, hw + 1.2);
  const Vec2 dir = strip ? Vec2(0.0, 1.0) : Vec2(std::sqrt(0.5), std::sqrt(0.5));
  ped.plan = motion::make_plan(ped_pos, dir * ped_speed,
                               {Segment{Segment::Kind::ConstVel, 1e9, {}, {}, 0, 0}});
  out.agents.push_back(ped);

  // cyclist cornering along the west junction arc, turning south
  if (coin(rng, 0.6)) {
    AgentSketch cyc;
    cyc.type = AgentType::Cyclist;
    cyc.length = 1.8;
    cyc.width = 0.6;
    cyc.height = 1.7;
    cyc.is_target = true;
    const double cs = urand(rng, 3.0, 5.0);
    const double rc = 2.3;  // boundary corner radius plus the riding offset
    const double quarter = (kPi / 2.0) * rc / cs;
    cyc.plan = motion::make_plan(Vec2(xj - hw - rc, -hw - 0.8), Vec2(cs, 0.0),
                                 {Segment{Segment::Kind::Arc, quarter, {}, {}, -1.0 / rc, 0},
                                  Segment{Segment::Kind::ConstVel, 1e9, {}, {}, 0, 0}});
    out.agents.push_back(cyc);
  }

  // westbound filler vehicle
  if (coin(rng, 0.5)) {
    AgentSketch w;
    w.type = AgentType::Vehicle;
    w.length = 4.6;
    w.width = 1.9;
    w.height = 1.7;
    w.plan = motion::make_plan(Vec2(urand(rng, xj + 6.0, L * 0.8), lane_y),
                               Vec2(-urand(rng, 6.0, 10.0), 0.0),
                               {Segment{Segment::Kind::ConstVel, 1e9, {}, {}, 0, 0}});
    out.agents.push_back(w);
  }
  return out;
}

// Rotate a whole plan into the world frame so futures are evaluated directly
// there; a constant-velocity future then satisfies x_k = x_0 + vx k dt
// bitwise, with no rotated-sum rounding in between.
Plan to_world(const Plan& plan, double cr, double sr, const Vec2& trans) {
  std::vector<Segment> segs = plan.segments();
  for (auto& s : segs) {
    s.p0 = Vec2(cr * s.p0.x() - sr * s.p0.y(), sr * s.p0.x() + cr * s.p0.y()) + trans;
    s.v0 = Vec2(cr * s.v0.x() - sr * s.v0.y(), sr * s.v0.x() + cr * s.v0.y());
  }
  return Plan(std::move(segs));
}

AgentTrack realize_track(const Plan& world_plan, const AgentSketch& sk, int agent_id,
                         const SceneGenConfig& cfg, std::mt19937_64& rng) {
  AgentTrack tr;
  tr.agent_id = agent_id;
  tr.agent_type = sk.type;
  const Index th = cfg.history_steps;
  tr.states.resize(th);
  tr.valid.assign(th, 1);

  // straight-line history backwards from the current state
  const motion::State now = world_plan.at(0.0);
  const double heading = wrap_angle(std::atan2(now.v.y(), now.v.x()));
  for (Index k = 0; k < th; ++k) {
    const double t = (static_cast<double>(k) - static_cast<double>(th - 1)) * cfg.dt;
    AgentState st;
    st.x = now.p.x() + now.v.x() * t;
    st.y = now.p.y() + now.v.y() * t;
    st.vx = now.v.x();
    st.vy = now.v.y();
    st.heading = heading;
    st.length = sk.length;
    st.width = sk.width;
    st.height = sk.height;
    tr.states[static_cast<std::size_t>(k)] = st;
  }
  // simulate short tracks: some agents appear mid-history
  if (coin(rng, 0.25) && th > 3) {
    const Index cut = 1 + static_cast<Index>(rng() % static_cast<std::uint64_t>(th - 2));
    for (Index k = 0; k < cut; ++k) {
      tr.states[static_cast<std::size_t>(k)] = AgentState{};
      tr.valid[static_cast<std::size_t>(k)] = 0;
    }
  }

  // future positions from the closed-form plan; stored velocities are the
  // central finite differences of the positions (one-sided at the last step),
  // which makes the dynamic-consistency property exact by construction.
  const Index T = cfg.future_steps;
  std::vector<Vec2> pos(static_cast<std::size_t>(T) + 2);
  pos[0] = now.p;
  for (Index k = 1; k <= T + 1; ++k)
    pos[static_cast<std::size_t>(k)] = world_plan.at(static_cast<double>(k) * cfg.dt).p;
  tr.future.resize(T);
  for (Index k = 1; k <= T; ++k) {
    FutureState f;
    f.x = pos[static_cast<std::size_t>(k)].x();
    f.y = pos[static_cast<std::size_t>(k)].y();
    Vec2 v;
    if (k < T) {
      v = (pos[static_cast<std::size_t>(k) + 1] - pos[static_cast<std::size_t>(k) - 1]) / (2.0 * cfg.dt);
    } else {
      v = (pos[static_cast<std::size_t>(k)] - pos[static_cast<std::size_t>(k) - 1]) / cfg.dt;
    }
    f.vx = v.x();
    f.vy = v.y();
    tr.future[static_cast<std::size_t>(k - 1)] = f;
  }
  return tr;
}

}  // namespace

Scenario generate_scenario(std::uint64_t seed, int index, const SceneGenConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(seed ^ static_cast<std::uint64_t>(index));

  Sketches sk = coin(rng, 0.5) ? build_tee_template(rng, cfg) : build_straight_template(rng, cfg);

  // a random world pose decouples training data from absolute coordinates
  const double rot_angle = urand(rng, -kPi, kPi);
  const Vec2 trans(urand(rng, -20.0, 20.0), urand(rng, -20.0, 20.0));
  const double cr = std::cos(rot_angle), sr = std::sin(rot_angle);
  auto rot = [&](const Vec2& p) { return Vec2(cr * p.x() - sr * p.y(), sr * p.x() + cr * p.y()); };
  auto inv = [&](const Vec2& p) {
    const Vec2 q = p - trans;
    return Vec2(cr * q.x() + sr * q.y(), -sr * q.x() + cr * q.y());
  };

  Scenario s;
  char idbuf[64];
  std::snprintf(idbuf, sizeof(idbuf), "syn-%016llx-%06d", static_cast<unsigned long long>(seed),
                index);
  s.scenario_id = idbuf;
  s.timestamp_step = cfg.dt;

  for (auto& e : sk.map) {
    for (Index i = 0; i < e.points.rows(); ++i) {
      const Vec2 p = rot(Vec2(e.points(i, 0), e.points(i, 1))) + trans;
      e.points(i, 0) = p.x();
      e.points(i, 1) = p.y();
    }
    s.map.push_back(std::move(e));
  }

  int next_id = 0;
  for (const auto& a : sk.agents) {
    AgentTrack tr = realize_track(to_world(a.plan, cr, sr, trans), a, next_id, cfg, rng);
    if (a.is_target) s.targets.push_back(next_id);
    s.agents.push_back(std::move(tr));
    ++next_id;
  }

  // voxel grid: axis-aligned in the world frame, centered on the scene focus
  VoxelGrid& g = s.voxels;
  g.cell_size = cfg.voxel_cell;
  g.depth = cfg.voxel_depth;
  g.height = cfg.voxel_hw;
  g.width = cfg.voxel_hw;
  const Vec2 focus_world = rot(sk.scene.focus) + trans;
  g.origin = focus_world - 0.5 * cfg.voxel_cell *
                               Vec2(static_cast<double>(g.width), static_cast<double>(g.height));
  g.features.resize(VoxelGrid::kFeatureDim, g.cell_count());
  g.features.setZero();
  for (Index d = 0; d < g.depth; ++d) {
    for (Index h = 0; h < g.height; ++h) {
      for (Index w = 0; w < g.width; ++w) {
        const Index cidx = g.cell_index(d, h, w);
        const Eigen::Vector3d pc = g.analytic_center(d, h, w);
        const int cls = sk.scene.classify(inv(Vec2(pc.x(), pc.y())));
        for (Index j = 0; j < VoxelGrid::kSegDim; ++j)
          g.features(j, cidx) = seg_feature(j, cls);
        g.features(VoxelGrid::kSegDim + cls, cidx) = 1.0;
        const Index base = VoxelGrid::kSegDim + VoxelGrid::kNumClasses;
        g.features(base + 0, cidx) = pc.x();
        g.features(base + 1, cidx) = pc.y();
        g.features(base + 2, cidx) = pc.z();
      }
    }
  }

  validate_scenario(s, /*generated_grid=*/true);
  return s;
}

std::vector<Scenario> generate_synthetic(std::uint64_t seed, const SceneGenConfig& cfg) {
  cfg.validate();
  std::vector<Scenario> out;
  out.reserve(static_cast<std::size_t>(cfg.num_scenarios));
  for (int i = 0; i < cfg.num_scenarios; ++i) out.push_back(generate_scenario(seed, i, cfg));
  return out;
}

}  // namespace mgtr
