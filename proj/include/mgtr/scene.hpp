#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mgtr/types.hpp"

namespace mgtr {

enum class AgentType { Vehicle = 0, Pedestrian = 1, Cyclist = 2 };
enum class MapKind { LaneCenterline = 0, RoadBoundary = 1, Crosswalk = 2 };

constexpr int kNumAgentTypes = 3;

const char* to_string(AgentType t);
const char* to_string(MapKind k);
AgentType agent_type_from_string(const std::string& s);
MapKind map_kind_from_string(const std::string& s);

struct AgentState {
  double x = 0, y = 0, vx = 0, vy = 0;
  double heading = 0;
  double length = 0, width = 0, height = 0;
};

struct FutureState {
  double x = 0, y = 0, vx = 0, vy = 0;
};

// One agent's tracked history plus optional ground-truth future. Invalid
// history steps carry zero padding; heading lies in (-pi, pi].
struct AgentTrack {
  int agent_id = 0;
  AgentType agent_type = AgentType::Vehicle;
  std::vector<AgentState> states;      // T_h entries, oldest first
  std::vector<std::uint8_t> valid;     // T_h entries
  std::vector<FutureState> future;     // empty or T entries

  const AgentState& current() const { return states.back(); }
  bool current_valid() const { return !valid.empty() && valid.back(); }
};

struct MapElement {
  int element_id = 0;
  MapKind kind = MapKind::LaneCenterline;
  MatX2 points;                        // >= 2 rows, consecutive points distinct
  std::optional<double> speed_limit;   // m/s
  Vec curvature;                       // per point, signed, 1/m
};

// Dense context-feature grid standing in for LiDAR voxel features.
// features: one column per voxel in row-major (d, h, w) order; rows are
// [32 segmentation features | 22-class one-hot | x, y, z voxel center].
// The position rows are authoritative for geometry: a rigid transform of a
// scenario rotates them while the grid indexing stays axis-aligned. Held as
// doubles in memory; the file format stores float32.
struct VoxelGrid {
  static constexpr Index kSegDim = 32;
  static constexpr Index kNumClasses = 22;
  static constexpr Index kPosDim = 3;
  static constexpr Index kFeatureDim = kSegDim + kNumClasses + kPosDim;  // 57

  Vec2 origin = Vec2::Zero();          // corner of cell (d=0, h=0, w=0)
  double cell_size = 1.0;
  Index depth = 1, height = 1, width = 1;
  Mat features;                        // kFeatureDim x (depth*height*width)

  Index cell_count() const { return depth * height * width; }
  Index cell_index(Index d, Index h, Index w) const { return (d * height + h) * width + w; }
  // Analytic center used at generation time (axis-aligned grids).
  Eigen::Vector3d analytic_center(Index d, Index h, Index w) const;
};

struct Scenario {
  std::string scenario_id;
  double timestamp_step = 0.1;         // seconds between consecutive steps
  std::vector<AgentTrack> agents;
  std::vector<MapElement> map;
  VoxelGrid voxels;
  std::vector<int> targets;            // agent_ids to predict

  const AgentTrack* find_agent(int agent_id) const;
};

// Synthetic generation -------------------------------------------------------

struct SceneGenConfig {
  int num_scenarios = 50;
  Index history_steps = 11;            // includes the current step
  Index future_steps = 80;
  double dt = 0.1;

  double voxel_cell = 1.6;
  Index voxel_hw = 44;                 // grid is voxel_hw x voxel_hw
  Index voxel_depth = 1;

  double road_half_length = 55.0;
  double lane_half_width = 3.5;

  void validate() const;               // throws ContractError on bad values
};

// Deterministic: scenario i uses an rng seeded with (seed XOR i), so batches
// can be produced independently and out of order.
Scenario generate_scenario(std::uint64_t seed, int index, const SceneGenConfig& config);
std::vector<Scenario> generate_synthetic(std::uint64_t seed, const SceneGenConfig& config);

// Rigid SE(2) transform of every geometric quantity in the scenario
// (agent states, futures, map points, voxel origin and position channels).
void apply_rigid_transform(Scenario& s, double angle, const Vec2& translation);

double wrap_angle(double a);           // into (-pi, pi]

// Throws SchemaError/ContractError when a type invariant is violated.
// `generated_grid` additionally checks position channels against the
// axis-aligned analytic centers.
void validate_scenario(const Scenario& s, bool generated_grid = false);

// Persistence ----------------------------------------------------------------
// Newline-delimited JSON, one scenario per line, schema_version 1. Voxel
// features travel as base64 little-endian float32. Round-trips are
// byte-identical.

void save_scenarios(const std::string& path, const std::vector<Scenario>& scenarios);
std::vector<Scenario> load_scenarios(const std::string& path);

std::string scenario_to_json_line(const Scenario& s);
Scenario scenario_from_json_line(const std::string& line, int line_number = 0);

// Streaming reader: indexes line offsets so scenarios load one at a time.
class ScenarioReader {
 public:
  explicit ScenarioReader(const std::string& path);
  std::size_t size() const { return offsets_.size(); }
  Scenario load(std::size_t i) const;

 private:
  std::string path_;
  std::vector<std::streamoff> offsets_;
};

}  // namespace mgtr
