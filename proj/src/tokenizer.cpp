#include "mgtr/tokenizer.hpp"

#include <cmath>

#include "mgtr/errors.hpp"
#include "mgtr/log.hpp"

namespace mgtr {

Pose2 target_pose(const AgentTrack& target) {
  if (!target.current_valid()) throw ContractError("target agent has invalid current step");
  const AgentState& st = target.current();
  return Pose2{Vec2(st.x, st.y), st.heading};
}

Vec2 to_agent_frame_point(const Vec2& p, const Pose2& pose) {
  const double c = std::cos(pose.heading), s = std::sin(pose.heading);
  const Vec2 d = p - pose.position;
  return {c * d.x() + s * d.y(), -s * d.x() + c * d.y()};
}

Vec2 to_agent_frame_vector(const Vec2& v, const Pose2& pose) {
  const double c = std::cos(pose.heading), s = std::sin(pose.heading);
  return {c * v.x() + s * v.y(), -s * v.x() + c * v.y()};
}

Vec2 from_agent_frame_point(const Vec2& p, const Pose2& pose) {
  const double c = std::cos(pose.heading), s = std::sin(pose.heading);
  return {c * p.x() - s * p.y() + pose.position.x(), s * p.x() + c * p.y() + pose.position.y()};
}

Vec2 from_agent_frame_vector(const Vec2& v, const Pose2& pose) {
  const double c = std::cos(pose.heading), s = std::sin(pose.heading);
  return {c * v.x() - s * v.y(), s * v.x() + c * v.y()};
}

MatX2 to_agent_frame_points(const MatX2& pts, const Pose2& pose) {
  MatX2 out(pts.rows(), 2);
  for (Index i = 0; i < pts.rows(); ++i)
    out.row(i) = to_agent_frame_point(Vec2(pts(i, 0), pts(i, 1)), pose).transpose();
  return out;
}

void GranularitySpec::validate() const {
  if (map_levels.empty()) throw ContractError("granularity: need at least one map level");
  if (voxel_levels.empty()) throw ContractError("granularity: need at least one voxel level");
  for (const auto& l : map_levels)
    if (l.points_per_polyline < 1 || l.point_spacing <= 0)
      throw ContractError("granularity: bad map level");
  for (std::size_t i = 1; i < map_levels.size(); ++i)
    if (map_levels[i].chunk_length() >= map_levels[i - 1].chunk_length())
      throw ContractError("granularity: map levels must be ordered coarse to fine");
  for (double c : voxel_levels)
    if (c <= 0) throw ContractError("granularity: bad voxel level");
  for (std::size_t i = 1; i < voxel_levels.size(); ++i)
    if (voxel_levels[i] >= voxel_levels[i - 1])
      throw ContractError("granularity: voxel levels must be ordered coarse to fine");
}

// ---------------------------------------------------------------------------
// resampling

MatX2 resample_polyline(const MatX2& pts, double spacing) {
  const Index n = pts.rows();
  if (n < 2) throw ContractError("resample: need at least 2 points");
  std::vector<double> cum(static_cast<std::size_t>(n), 0.0);
  for (Index i = 1; i < n; ++i)
    cum[static_cast<std::size_t>(i)] =
        cum[static_cast<std::size_t>(i - 1)] + (pts.row(i) - pts.row(i - 1)).norm();
  const double total = cum.back();
  if (total < 1e-12) throw ContractError("resample: zero-length polyline");

  // inclusive of both endpoints; 1e-9 tolerance keeps exact-spacing inputs stable
  std::vector<double> ts;
  for (double t = 0.0;; t += spacing) {
    if (t > total + 1e-9) break;
    ts.push_back(std::min(t, total));
  }
  if (ts.size() < 2 || total - ts.back() > 1e-9) ts.push_back(total);

  MatX2 out(static_cast<Index>(ts.size()), 2);
  Index seg = 0;
  for (std::size_t k = 0; k < ts.size(); ++k) {
    const double t = ts[k];
    while (seg + 2 < n && cum[static_cast<std::size_t>(seg + 1)] < t) ++seg;
    const double s0 = cum[static_cast<std::size_t>(seg)];
    const double s1 = cum[static_cast<std::size_t>(seg + 1)];
    const double u = s1 > s0 ? std::clamp((t - s0) / (s1 - s0), 0.0, 1.0) : 0.0;
    out.row(static_cast<Index>(k)) = pts.row(seg) + u * (pts.row(seg + 1) - pts.row(seg));
  }
  return out;
}

namespace {

// signed curvature from the circumradius of consecutive triples
Vec triple_curvature(const MatX2& pts) {
  const Index n = pts.rows();
  Vec curv = Vec::Zero(n);
  for (Index i = 1; i + 1 < n; ++i) {
    const Vec2 a = pts.row(i - 1), b = pts.row(i), c = pts.row(i + 1);
    const Vec2 ab = b - a, ac = c - a, bc = c - b;
    const double cross = ab.x() * ac.y() - ab.y() * ac.x();
    const double denom = ab.norm() * ac.norm() * bc.norm();
    curv(i) = denom > 1e-12 ? 2.0 * cross / denom : 0.0;
  }
  if (n >= 3) {
    curv(0) = curv(1);
    curv(n - 1) = curv(n - 2);
  }
  return curv;
}

MatX2 tangents(const MatX2& pts) {
  const Index n = pts.rows();
  MatX2 dir(n, 2);
  for (Index i = 0; i < n; ++i) {
    const Index a = std::max<Index>(0, i - 1);
    const Index b = std::min<Index>(n - 1, i + 1);
    Vec2 d = pts.row(b) - pts.row(a);
    const double len = d.norm();
    dir.row(i) = (len > 1e-12 ? Vec2(d / len) : Vec2(1.0, 0.0)).transpose();
  }
  return dir;
}

}  // namespace

VectorizedMap vectorize_map(const std::vector<MapElement>& map, const GranularitySpec& spec) {
  spec.validate();
  VectorizedMap out;
  for (const auto& level : spec.map_levels) {
    const Index S = level.points_per_polyline;
    std::vector<Mat> chunks;
    std::vector<std::uint8_t> valid;
    std::vector<Vec2> refs;
    for (const auto& e : map) {
      if (e.points.rows() < 2) {
        ++out.warnings;
        continue;
      }
      MatX2 rs;
      try {
        rs = resample_polyline(e.points, level.point_spacing);
      } catch (const ContractError&) {
        ++out.warnings;
        continue;
      }
      const MatX2 dir = tangents(rs);
      const Vec curv = triple_curvature(rs);
      const double speed = e.speed_limit.value_or(0.0);
      Vec kind = Vec::Zero(3);
      kind(static_cast<Index>(e.kind)) = 1.0;

      for (Index start = 0; start < rs.rows(); start += S) {
        const Index count = std::min<Index>(S, rs.rows() - start);
        Mat chunk = Mat::Zero(S, kMapPointDim);
        Vec2 centroid = Vec2::Zero();
        for (Index i = 0; i < count; ++i) {
          const Index r = start + i;
          chunk(i, 0) = rs(r, 0);
          chunk(i, 1) = rs(r, 1);
          chunk(i, 2) = dir(r, 0);
          chunk(i, 3) = dir(r, 1);
          chunk(i, 4) = kind(0);
          chunk(i, 5) = kind(1);
          chunk(i, 6) = kind(2);
          chunk(i, 7) = curv(r);
          chunk(i, 8) = speed;
          chunk(i, 9) = 1.0;
          centroid += Vec2(rs(r, 0), rs(r, 1));
        }
        chunks.push_back(std::move(chunk));
        for (Index i = 0; i < S; ++i) valid.push_back(i < count ? 1 : 0);
        refs.push_back(centroid / static_cast<double>(count));
      }
    }
    VectorizedLevel lv;
    lv.points_per_polyline = S;
    lv.points = Mat::Zero(static_cast<Index>(chunks.size()) * S, kMapPointDim);
    for (std::size_t k = 0; k < chunks.size(); ++k)
      lv.points.middleRows(static_cast<Index>(k) * S, S) = chunks[k];
    lv.valid = std::move(valid);
    lv.ref_world.resize(static_cast<Index>(refs.size()), 2);
    for (std::size_t k = 0; k < refs.size(); ++k) lv.ref_world.row(static_cast<Index>(k)) = refs[k].transpose();
    out.levels.push_back(std::move(lv));
  }
  if (out.warnings > 0)
    log::warn("vectorize_map: skipped " + std::to_string(out.warnings) + " degenerate element(s)");
  return out;
}

Mat map_points_to_frame(const Mat& level_points, const std::vector<std::uint8_t>& valid,
                        const Pose2& pose) {
  Mat out = level_points;
  for (Index i = 0; i < out.rows(); ++i) {
    if (!valid[static_cast<std::size_t>(i)]) continue;
    const Vec2 p = to_agent_frame_point(Vec2(out(i, 0), out(i, 1)), pose);
    const Vec2 d = to_agent_frame_vector(Vec2(out(i, 2), out(i, 3)), pose);
    out(i, 0) = p.x();
    out(i, 1) = p.y();
    out(i, 2) = d.x();
    out(i, 3) = d.y();
  }
  return out;
}

// ---------------------------------------------------------------------------
// encoders

ad::Var encode_polylines(const ad::Var& framed_points, Index points_per_polyline,
                         const std::vector<std::uint8_t>& valid,
                         const PolylineEncoderParams& params) {
  ad::Var h = ad::mlp_forward(framed_points, params.point_mlp);
  ad::Var pooled = ad::segment_max_rows(h, points_per_polyline, valid);
  return ad::add(ad::matmul(ad::relu(pooled), params.post.weight), params.post.bias);
}

AgentArrays build_agent_arrays(const Scenario& s, const Pose2& pose) {
  AgentArrays out;
  const Index th = static_cast<Index>(s.agents.front().states.size());
  out.history_steps = th;
  const Index feat_dim = 13 + th;

  std::vector<const AgentTrack*> kept;  // agents with no valid step carry no token
  for (const auto& tr : s.agents) {
    bool any = false;
    for (auto v : tr.valid) any = any || v;
    if (any) kept.push_back(&tr);
  }
  const Index na = static_cast<Index>(kept.size());
  out.feats = Mat::Zero(na * th, feat_dim);
  out.valid.assign(static_cast<std::size_t>(na * th), 0);
  out.ref.resize(na, 2);
  for (Index a = 0; a < na; ++a) {
    const AgentTrack& tr = *kept[static_cast<std::size_t>(a)];
    out.agent_ids.push_back(tr.agent_id);
    for (Index k = 0; k < th; ++k) {
      const Index row = a * th + k;
      if (!tr.valid[static_cast<std::size_t>(k)]) continue;  // padded rows stay zero
      const AgentState& st = tr.states[static_cast<std::size_t>(k)];
      const Vec2 p = to_agent_frame_point(Vec2(st.x, st.y), pose);
      const Vec2 v = to_agent_frame_vector(Vec2(st.vx, st.vy), pose);
      const double rel_heading = st.heading - pose.heading;
      out.feats(row, 0) = p.x();
      out.feats(row, 1) = p.y();
      out.feats(row, 2) = v.x();
      out.feats(row, 3) = v.y();
      out.feats(row, 4) = std::cos(rel_heading);
      out.feats(row, 5) = std::sin(rel_heading);
      out.feats(row, 6) = st.length;
      out.feats(row, 7) = st.width;
      out.feats(row, 8) = st.height;
      out.feats(row, 9 + static_cast<Index>(tr.agent_type)) = 1.0;
      out.feats(row, 12 + k) = 1.0;
      out.feats(row, 12 + th) = 1.0;
      out.valid[static_cast<std::size_t>(row)] = 1;
    }
    // ref: most recent valid position
    Index last = th - 1;
    while (last > 0 && !tr.valid[static_cast<std::size_t>(last)]) --last;
    const AgentState& ls = tr.states[static_cast<std::size_t>(last)];
    out.ref.row(a) = to_agent_frame_point(Vec2(ls.x, ls.y), pose).transpose();
  }
  return out;
}

// ---------------------------------------------------------------------------
// voxels

namespace {

struct BlockGrid {
  Index block = 1;  // cells per block edge
  Index bh = 0, bw = 0;
  Index count(const VoxelGrid& g) const { return g.depth * bh * bw; }
};

BlockGrid block_grid(const VoxelGrid& g, double level_cell) {
  if (level_cell + 1e-9 < g.cell_size)
    throw ContractError("voxel level finer than the base grid cell");
  BlockGrid bg;
  bg.block = std::max<Index>(1, static_cast<Index>(std::llround(level_cell / g.cell_size)));
  bg.bh = (g.height + bg.block - 1) / bg.block;  // partial edge blocks allowed
  bg.bw = (g.width + bg.block - 1) / bg.block;
  return bg;
}

// mean of the block's columns with position channels mapped to the pose frame
void pool_block(const VoxelGrid& g, const BlockGrid& bg, const Pose2& pose, Index d, Index hb,
                Index wb, double* out_feat, Vec2* out_ref) {
  const Index px = VoxelGrid::kSegDim + VoxelGrid::kNumClasses;
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(VoxelGrid::kFeatureDim);
  int members = 0;
  for (Index h = hb * bg.block; h < std::min(g.height, (hb + 1) * bg.block); ++h) {
    for (Index w = wb * bg.block; w < std::min(g.width, (wb + 1) * bg.block); ++w) {
      const Index c = g.cell_index(d, h, w);
      acc += g.features.col(c);
      // position channels transform per cell before pooling
      const Vec2 p = to_agent_frame_point(Vec2(g.features(px, c), g.features(px + 1, c)), pose);
      acc(px) += p.x() - g.features(px, c);
      acc(px + 1) += p.y() - g.features(px + 1, c);
      ++members;
    }
  }
  acc /= static_cast<double>(members);
  if (out_feat)
    for (Index j = 0; j < VoxelGrid::kFeatureDim; ++j) out_feat[j] = acc(j);
  if (out_ref) *out_ref = Vec2(acc(px), acc(px + 1));
}

}  // namespace

PooledVoxelLevel pool_voxels(const VoxelGrid& grid, double level_cell, const Pose2& pose) {
  const BlockGrid bg = block_grid(grid, level_cell);
  PooledVoxelLevel out;
  out.features.resize(bg.count(grid), VoxelGrid::kFeatureDim);
  out.ref.resize(bg.count(grid), 2);
  Index r = 0;
  for (Index d = 0; d < grid.depth; ++d)
    for (Index hb = 0; hb < bg.bh; ++hb)
      for (Index wb = 0; wb < bg.bw; ++wb, ++r) {
        Vec2 ref;
        pool_block(grid, bg, pose, d, hb, wb, out.features.row(r).data(), &ref);
        out.ref.row(r) = ref.transpose();
      }
  return out;
}

MatX2 pooled_voxel_refs(const VoxelGrid& grid, double level_cell, const Pose2& pose) {
  const BlockGrid bg = block_grid(grid, level_cell);
  MatX2 out(bg.count(grid), 2);
  Index r = 0;
  for (Index d = 0; d < grid.depth; ++d)
    for (Index hb = 0; hb < bg.bh; ++hb)
      for (Index wb = 0; wb < bg.bw; ++wb, ++r) {
        Vec2 ref;
        pool_block(grid, bg, pose, d, hb, wb, nullptr, &ref);
        out.row(r) = ref.transpose();
      }
  return out;
}

Mat pool_voxel_subset(const VoxelGrid& grid, double level_cell, const Pose2& pose,
                      const std::vector<Index>& block_indices) {
  const BlockGrid bg = block_grid(grid, level_cell);
  Mat out(static_cast<Index>(block_indices.size()), VoxelGrid::kFeatureDim);
  for (std::size_t k = 0; k < block_indices.size(); ++k) {
    const Index b = block_indices[k];
    if (b < 0 || b >= bg.count(grid)) throw ContractError("voxel block index out of range");
    const Index d = b / (bg.bh * bg.bw);
    const Index hb = (b / bg.bw) % bg.bh;
    const Index wb = b % bg.bw;
    pool_block(grid, bg, pose, d, hb, wb, out.row(static_cast<Index>(k)).data(), nullptr);
  }
  return out;
}

ad::Var encode_voxel_features(const Mat& pooled, const MlpParams& params) {
  return ad::mlp_forward(ad::Var(pooled), params.layers);
}

// ---------------------------------------------------------------------------
// full tokenization

TargetTokens tokenize_target(const Scenario& s, int target_id, const GranularitySpec& spec,
                             const TokenizerParams& params) {
  const AgentTrack* target = s.find_agent(target_id);
  if (!target) throw ContractError("tokenize: unknown target agent");
  const Pose2 pose = target_pose(*target);

  TargetTokens out;
  const AgentArrays agents = build_agent_arrays(s, pose);
  out.agents.features = encode_polylines(ad::Var(agents.feats), agents.history_steps, agents.valid,
                                         params.agent_encoder);
  out.agents.ref = agents.ref;

  const VectorizedMap vm = vectorize_map(s.map, spec);
  for (std::size_t i = 0; i < vm.levels.size(); ++i) {
    const VectorizedLevel& lv = vm.levels[i];
    TokenSet ts;
    if (lv.polyline_count() > 0) {
      const Mat framed = map_points_to_frame(lv.points, lv.valid, pose);
      ts.features = encode_polylines(ad::Var(framed), lv.points_per_polyline, lv.valid,
                                     params.map_encoders.at(i));
      ts.ref = to_agent_frame_points(lv.ref_world, pose);
    } else {
      ts.features = ad::Var(Mat::Zero(0, params.map_encoders.at(i).post.bias.cols()));
      ts.ref = MatX2(0, 2);
    }
    out.map_levels.push_back(std::move(ts));
  }

  for (std::size_t i = 0; i < spec.voxel_levels.size(); ++i) {
    const PooledVoxelLevel pv = pool_voxels(s.voxels, spec.voxel_levels[i], pose);
    TokenSet ts;
    ts.features = encode_voxel_features(pv.features, params.voxel_encoders.at(i));
    ts.ref = pv.ref;
    out.voxel_levels.push_back(std::move(ts));
  }
  return out;
}

}  // namespace mgtr
