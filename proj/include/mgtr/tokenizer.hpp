#pragma once

#include <cstdint>
#include <vector>

#include "mgtr/autodiff.hpp"
#include "mgtr/scene.hpp"
#include "mgtr/types.hpp"

namespace mgtr {

// Target-agent frame: target at the origin, heading along +x.
struct Pose2 {
  Vec2 position = Vec2::Zero();
  double heading = 0;
};

Pose2 target_pose(const AgentTrack& target);  // ContractError on invalid current step

Vec2 to_agent_frame_point(const Vec2& p, const Pose2& pose);
Vec2 to_agent_frame_vector(const Vec2& v, const Pose2& pose);
Vec2 from_agent_frame_point(const Vec2& p, const Pose2& pose);
Vec2 from_agent_frame_vector(const Vec2& v, const Pose2& pose);
MatX2 to_agent_frame_points(const MatX2& pts, const Pose2& pose);

// Granularities ---------------------------------------------------------------

struct GranularityLevel {
  Index points_per_polyline = 20;
  double point_spacing = 0.5;  // m
  double chunk_length() const { return static_cast<double>(points_per_polyline) * point_spacing; }
};

// Levels are ordered coarse to fine: strictly decreasing chunk length for map
// levels, strictly decreasing cell size for voxel levels.
struct GranularitySpec {
  std::vector<GranularityLevel> map_levels;
  std::vector<double> voxel_levels;  // pooled cell sizes, m

  void validate() const;
};

// Map vectorization ------------------------------------------------------------

// Per-point feature layout used for map polylines (world or target frame):
// [x, y, dir_x, dir_y, kind one-hot (3), curvature, speed_limit, validity]
constexpr Index kMapPointDim = 10;

struct VectorizedLevel {
  Index points_per_polyline = 0;
  Mat points;                        // (P * S) x kMapPointDim, zero rows for padding
  std::vector<std::uint8_t> valid;   // per row
  MatX2 ref_world;                   // P x 2, centroid of valid points
  Index polyline_count() const { return ref_world.rows(); }
};

struct VectorizedMap {
  std::vector<VectorizedLevel> levels;
  int warnings = 0;  // degenerate elements skipped
};

// Arc-length resampling at the level spacing (inclusive of both endpoints,
// tolerance 1e-9), chopped into polylines of the level's point count with
// zero-padding; direction and curvature are computed on the resampled element
// before chopping. Curvature comes from the circumradius of consecutive point
// triples, signed by turn direction.
VectorizedMap vectorize_map(const std::vector<MapElement>& map, const GranularitySpec& spec);
MatX2 resample_polyline(const MatX2& pts, double spacing);

// Transforms the x, y and direction columns of a vectorized level into the
// target frame. Padded rows stay zero.
Mat map_points_to_frame(const Mat& level_points, const std::vector<std::uint8_t>& valid,
                        const Pose2& pose);

// Encoders ----------------------------------------------------------------------

// PointNet-style polyline encoder: per-point MLP, masked max-pool over each
// polyline, then one post-pool layer.
struct PolylineEncoderParams {
  std::vector<ad::Linear> point_mlp;
  ad::Linear post;
};

struct MlpParams {
  std::vector<ad::Linear> layers;
};

// framed_points: (P * S) x F in target frame. Returns P x C token features.
ad::Var encode_polylines(const ad::Var& framed_points, Index points_per_polyline,
                         const std::vector<std::uint8_t>& valid,
                         const PolylineEncoderParams& params);

// Agent history arrays ------------------------------------------------------------

// Per-step feature layout: [x, y, vx, vy, cos h, sin h, l, w, h,
//                           type one-hot (3), time one-hot (T_h), validity]
struct AgentArrays {
  Mat feats;                        // (N_a * T_h) x (13 + T_h), target frame
  std::vector<std::uint8_t> valid;  // per row
  MatX2 ref;                        // N_a x 2: current positions, target frame
  std::vector<int> agent_ids;
  Index history_steps = 0;
};

AgentArrays build_agent_arrays(const Scenario& s, const Pose2& pose);

// Voxel pooling -------------------------------------------------------------------

// Average-pools the grid at the level cell size after transforming the
// position channels into the target frame (partial edge blocks average over
// their members). Ref positions are the pooled x, y position channels.
struct PooledVoxelLevel {
  Mat features;  // N x 57, position channels in target frame
  MatX2 ref;     // N x 2
};

PooledVoxelLevel pool_voxels(const VoxelGrid& grid, double level_cell, const Pose2& pose);

// Fast paths used by the model: refs for every block, features only for chosen
// blocks. Equivalent to pool_voxels followed by row selection.
MatX2 pooled_voxel_refs(const VoxelGrid& grid, double level_cell, const Pose2& pose);
Mat pool_voxel_subset(const VoxelGrid& grid, double level_cell, const Pose2& pose,
                      const std::vector<Index>& block_indices);

// Tokens ---------------------------------------------------------------------------

enum class TokenSource { Agent = 0, Map = 1, Voxel = 2 };

struct TokenSet {
  ad::Var features;  // n x C
  MatX2 ref;         // n x 2, target frame
};

struct TokenizerParams {
  PolylineEncoderParams agent_encoder;
  std::vector<PolylineEncoderParams> map_encoders;  // one per map level, unshared
  std::vector<MlpParams> voxel_encoders;            // one per voxel level, unshared
};

// Full tokenization of one target: every token at every granularity (used by
// the dump tool and tests; the model selects before encoding).
struct TargetTokens {
  TokenSet agents;
  std::vector<TokenSet> map_levels;
  std::vector<TokenSet> voxel_levels;
};

TargetTokens tokenize_target(const Scenario& s, int target_id, const GranularitySpec& spec,
                             const TokenizerParams& params);

ad::Var encode_voxel_features(const Mat& pooled, const MlpParams& params);

}  // namespace mgtr
