#include "mgtr/model.hpp"

#include <cmath>

#include "mgtr/errors.hpp"

namespace mgtr {

void ModelConfig::validate() const {
  if (model_dim < 4 || model_dim % 4 != 0)
    throw ConfigError("model_dim must be a positive multiple of 4");
  if (model_dim % heads != 0) throw ConfigError("model_dim must divide by heads");
  if (enc_layers < 1 || dec_layers < 1 || heads < 1 || ffn_dim < 1 || knn_k < 1)
    throw ConfigError("layer, head, ffn and knn counts must be positive");
  if (num_modes < 1 || future_steps < 1 || history_steps < 2)
    throw ConfigError("mode and horizon counts must be positive");
  if (map_budget < 1) throw ConfigError("map budget must be positive");
  if (voxel_budget < 0) throw ConfigError("voxel budget must be non-negative");
  if (dec_traj_budget < 1 || dec_motion_budget < 1)
    throw ConfigError("decoder context budgets must be positive");
  if (tau <= 0) throw ConfigError("tau must be positive");
  granularity.validate();
}

ad::Linear MgtrModel::make_linear(std::mt19937_64& rng, const std::string& name, Index in,
                                  Index out) {
  ad::Linear l;
  l.weight = params_.create(name + ".weight", in, out, xavier_init(rng, in, out));
  l.bias = params_.create(name + ".bias", Mat::Zero(1, out));
  return l;
}

MgtrModel::MgtrModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  const Index c = cfg_.model_dim;
  const Index agent_dim = 13 + cfg_.history_steps;

  agent_enc_.point_mlp = {make_linear(rng, "agent_encoder.point0", agent_dim, c),
                          make_linear(rng, "agent_encoder.point1", c, c)};
  agent_enc_.post = make_linear(rng, "agent_encoder.post", c, c);

  for (std::size_t i = 0; i < cfg_.granularity.map_levels.size(); ++i) {
    const std::string base = "map_encoder" + std::to_string(i);
    PolylineEncoderParams p;
    p.point_mlp = {make_linear(rng, base + ".point0", kMapPointDim, c),
                   make_linear(rng, base + ".point1", c, c)};
    p.post = make_linear(rng, base + ".post", c, c);
    map_enc_.push_back(std::move(p));
  }
  for (std::size_t i = 0; i < cfg_.granularity.voxel_levels.size(); ++i) {
    const std::string base = "voxel_encoder" + std::to_string(i);
    MlpParams p;
    p.layers = {make_linear(rng, base + ".layer0", VoxelGrid::kFeatureDim, c),
                make_linear(rng, base + ".layer1", c, c)};
    voxel_enc_.push_back(std::move(p));
  }

  for (Index l = 0; l < cfg_.enc_layers; ++l) {
    const std::string base = "encoder.layer" + std::to_string(l);
    EncoderLayerParams p;
    p.attn = {make_linear(rng, base + ".attn.q", c, c), make_linear(rng, base + ".attn.k", c, c),
              make_linear(rng, base + ".attn.v", c, c), make_linear(rng, base + ".attn.out", c, c)};
    p.ffn1 = make_linear(rng, base + ".ffn1", c, cfg_.ffn_dim);
    p.ffn2 = make_linear(rng, base + ".ffn2", cfg_.ffn_dim, c);
    p.norm1_gain = params_.create(base + ".norm1.gain", Mat::Ones(1, c));
    p.norm1_bias = params_.create(base + ".norm1.bias", Mat::Zero(1, c));
    p.norm2_gain = params_.create(base + ".norm2.gain", Mat::Ones(1, c));
    p.norm2_bias = params_.create(base + ".norm2.bias", Mat::Zero(1, c));
    enc_layers_.push_back(std::move(p));
  }

  future_.traj_head = {make_linear(rng, "future.head0", c, c),
                       make_linear(rng, "future.head1", c, cfg_.future_steps * 4)};
  future_.traj_encoder.point_mlp = {make_linear(rng, "future.encoder.point0", 4, c),
                                    make_linear(rng, "future.encoder.point1", c, c)};
  future_.traj_encoder.post = make_linear(rng, "future.encoder.post", c, c);
  future_.fusion = {make_linear(rng, "future.fusion", 2 * c, c)};

  for (Index l = 0; l < cfg_.dec_layers; ++l) {
    const std::string base = "decoder.layer" + std::to_string(l);
    DecoderLayerParams p;
    p.self_attn = {make_linear(rng, base + ".self.q", c, c), make_linear(rng, base + ".self.k", c, c),
                   make_linear(rng, base + ".self.v", c, c),
                   make_linear(rng, base + ".self.out", c, c)};
    p.cross_attn = {make_linear(rng, base + ".cross.q", c, c),
                    make_linear(rng, base + ".cross.k", c, c),
                    make_linear(rng, base + ".cross.v", c, c),
                    make_linear(rng, base + ".cross.out", c, c)};
    p.ffn1 = make_linear(rng, base + ".ffn1", c, cfg_.ffn_dim);
    p.ffn2 = make_linear(rng, base + ".ffn2", cfg_.ffn_dim, c);
    p.norm1_gain = params_.create(base + ".norm1.gain", Mat::Ones(1, c));
    p.norm1_bias = params_.create(base + ".norm1.bias", Mat::Zero(1, c));
    p.norm2_gain = params_.create(base + ".norm2.gain", Mat::Ones(1, c));
    p.norm2_bias = params_.create(base + ".norm2.bias", Mat::Zero(1, c));
    p.norm3_gain = params_.create(base + ".norm3.gain", Mat::Ones(1, c));
    p.norm3_bias = params_.create(base + ".norm3.bias", Mat::Zero(1, c));
    p.cls_head = {make_linear(rng, base + ".cls0", c, c), make_linear(rng, base + ".cls1", c, 1)};
    p.reg_head = {make_linear(rng, base + ".reg0", c, c),
                  make_linear(rng, base + ".reg1", c, cfg_.future_steps * kGmmChannels)};
    dec_layers_.push_back(std::move(p));
  }

  for (int t = 0; t < kNumAgentTypes; ++t) {
    const std::string name = std::string("goal_embedding.") + to_string(static_cast<AgentType>(t));
    goal_embed_[static_cast<std::size_t>(t)] =
        params_.create(name, cfg_.num_modes, c, uniform_init(rng, -0.02, 0.02));
  }
}

TokenizerParams MgtrModel::tokenizer_params() const {
  return TokenizerParams{agent_enc_, map_enc_, voxel_enc_};
}

LevelSelection select_across_levels(const std::vector<MatX2>& level_refs, const Vec2& center,
                                    Index budget, bool per_level_budget) {
  LevelSelection out;
  out.center = center;
  out.per_level.resize(level_refs.size());
  Index total = 0;
  for (const auto& r : level_refs) total += r.rows();
  const Index take = std::min(budget, total);
  if (take == 0) return out;

  if (per_level_budget) {
    // proportional split, remainders to the largest fractional shares
    std::vector<double> share(level_refs.size());
    std::vector<Index> counts(level_refs.size());
    Index assigned = 0;
    for (std::size_t i = 0; i < level_refs.size(); ++i) {
      share[i] = static_cast<double>(take) * static_cast<double>(level_refs[i].rows()) /
                 static_cast<double>(total);
      counts[i] = std::min<Index>(static_cast<Index>(std::floor(share[i])), level_refs[i].rows());
      assigned += counts[i];
    }
    while (assigned < take) {
      std::size_t best = 0;
      double best_frac = -1;
      for (std::size_t i = 0; i < level_refs.size(); ++i) {
        if (counts[i] >= level_refs[i].rows()) continue;
        const double frac = share[i] - std::floor(share[i]);
        if (frac > best_frac) {
          best_frac = frac;
          best = i;
        }
      }
      counts[best]++;
      assigned++;
    }
    for (std::size_t i = 0; i < level_refs.size(); ++i) {
      const SearchResult r = nearest_tokens(level_refs[i], center, counts[i]);
      out.per_level[i] = r.indices;
      out.total += static_cast<Index>(r.indices.size());
    }
    return out;
  }

  // single pooled budget across the concatenated levels
  MatX2 all(total, 2);
  std::vector<std::pair<std::size_t, Index>> origin(static_cast<std::size_t>(total));
  Index row = 0;
  for (std::size_t i = 0; i < level_refs.size(); ++i)
    for (Index j = 0; j < level_refs[i].rows(); ++j, ++row) {
      all.row(row) = level_refs[i].row(j);
      origin[static_cast<std::size_t>(row)] = {i, j};
    }
  const SearchResult r = nearest_tokens(all, center, take);
  for (Index idx : r.indices) {
    const auto& o = origin[static_cast<std::size_t>(idx)];
    out.per_level[o.first].push_back(o.second);
  }
  out.total = take;
  return out;
}

MgtrModel::Forward MgtrModel::forward(const Scenario& s, int target_id,
                                      const IntentionGoalSet& goals, DecodeRoute* record_route,
                                      const DecodeRoute* replay_route) const {
  const AgentTrack* target = s.find_agent(target_id);
  if (!target) throw ContractError("forward: unknown target agent id " + std::to_string(target_id));
  if (goals.num_modes() != cfg_.num_modes)
    throw ContractError("forward: goal set mode count disagrees with the model");
  const Pose2 pose = target_pose(*target);

  // frame-local current state: position at origin, velocity rotated
  AgentState local = target->current();
  const Vec2 v_local = to_agent_frame_vector(Vec2(local.vx, local.vy), pose);
  local.x = 0;
  local.y = 0;
  local.vx = v_local.x();
  local.vy = v_local.y();
  const Vec2 search_center =
      cfg_.motion_aware ? motion_projected_center(local, cfg_.tau) : Vec2(0, 0);

  Forward out;
  out.pose = pose;

  // agent tokens
  const AgentArrays agents = build_agent_arrays(s, pose);
  ad::Var agent_tokens =
      encode_polylines(ad::Var(agents.feats), agents.history_steps, agents.valid, agent_enc_);
  out.agent_tokens = agent_tokens.rows();
  out.aux_agent_ids = agents.agent_ids;

  std::vector<ad::Var> token_blocks{agent_tokens};
  std::vector<MatX2> ref_blocks{agents.ref};

  // map tokens: select polylines by ref distance, then encode only those
  const VectorizedMap vm = vectorize_map(s.map, cfg_.granularity);
  std::vector<MatX2> map_refs;
  for (const auto& lv : vm.levels) map_refs.push_back(to_agent_frame_points(lv.ref_world, pose));
  const LevelSelection map_sel =
      select_across_levels(map_refs, search_center, cfg_.map_budget, cfg_.per_level_budget);
  for (std::size_t i = 0; i < vm.levels.size(); ++i) {
    const auto& chosen = map_sel.per_level[i];
    if (chosen.empty()) continue;
    const VectorizedLevel& lv = vm.levels[i];
    const Index S = lv.points_per_polyline;
    Mat pts(static_cast<Index>(chosen.size()) * S, kMapPointDim);
    std::vector<std::uint8_t> valid(static_cast<std::size_t>(pts.rows()));
    MatX2 refs(static_cast<Index>(chosen.size()), 2);
    for (std::size_t k = 0; k < chosen.size(); ++k) {
      pts.middleRows(static_cast<Index>(k) * S, S) = lv.points.middleRows(chosen[k] * S, S);
      for (Index r = 0; r < S; ++r)
        valid[static_cast<std::size_t>(static_cast<Index>(k) * S + r)] =
            lv.valid[static_cast<std::size_t>(chosen[k] * S + r)];
      refs.row(static_cast<Index>(k)) = map_refs[i].row(chosen[k]);
    }
    const Mat framed = map_points_to_frame(pts, valid, pose);
    token_blocks.push_back(encode_polylines(ad::Var(framed), S, valid, map_enc_[i]));
    ref_blocks.push_back(refs);
    out.map_tokens += static_cast<Index>(chosen.size());
  }

  // voxel tokens: pool refs first, then pool features only for the selection
  if (cfg_.voxel_budget > 0) {
    std::vector<MatX2> vox_refs;
    for (double cell : cfg_.granularity.voxel_levels)
      vox_refs.push_back(pooled_voxel_refs(s.voxels, cell, pose));
    const LevelSelection vox_sel =
        select_across_levels(vox_refs, search_center, cfg_.voxel_budget, cfg_.per_level_budget);
    for (std::size_t i = 0; i < vox_refs.size(); ++i) {
      const auto& chosen = vox_sel.per_level[i];
      if (chosen.empty()) continue;
      const Mat pooled =
          pool_voxel_subset(s.voxels, cfg_.granularity.voxel_levels[i], pose, chosen);
      token_blocks.push_back(encode_voxel_features(pooled, voxel_enc_[i]));
      MatX2 refs(static_cast<Index>(chosen.size()), 2);
      for (std::size_t k = 0; k < chosen.size(); ++k)
        refs.row(static_cast<Index>(k)) = vox_refs[i].row(chosen[k]);
      ref_blocks.push_back(refs);
      out.voxel_tokens += static_cast<Index>(chosen.size());
    }
  }

  // encoder over the selected token set
  ad::Var tokens = token_blocks.size() == 1 ? token_blocks[0] : ad::concat_rows(token_blocks);
  MatX2 refs(tokens.rows(), 2);
  Index row = 0;
  for (const auto& rb : ref_blocks) {
    refs.middleRows(row, rb.rows()) = rb;
    row += rb.rows();
  }
  EncoderConfig ecfg;
  ecfg.layers = cfg_.enc_layers;
  ecfg.heads = cfg_.heads;
  ecfg.model_dim = cfg_.model_dim;
  ecfg.ffn_dim = cfg_.ffn_dim;
  ecfg.knn_k = cfg_.knn_k;
  ad::Var encoded = encode_tokens(tokens, refs, ecfg, enc_layers_);

  // future enhancement of the agent rows
  ad::Var enc_agents = ad::slice_rows(encoded, 0, out.agent_tokens);
  const FutureEnhanceResult fut = future_state_enhance(enc_agents, cfg_.future_steps, future_);
  out.aux_traj = fut.aux_traj;

  // decoder context: future-aware agent tokens plus refined map/voxel tokens
  ad::Var context =
      encoded.rows() == out.agent_tokens
          ? fut.future_aware
          : ad::concat_rows({fut.future_aware,
                             ad::slice_rows(encoded, out.agent_tokens,
                                            encoded.rows() - out.agent_tokens)});

  const auto type_idx = static_cast<std::size_t>(target->agent_type);
  DecoderRunConfig dcfg;
  dcfg.layers = cfg_.dec_layers;
  dcfg.heads = cfg_.heads;
  dcfg.future_steps = cfg_.future_steps;
  dcfg.traj_budget = cfg_.dec_traj_budget;
  dcfg.motion_budget = cfg_.dec_motion_budget;
  dcfg.tau = cfg_.tau;
  dcfg.motion_aware = cfg_.motion_aware;
  DecodeResult dec = decode(context, refs, local, goals.goals[type_idx], goal_embed_[type_idx],
                            dcfg, dec_layers_, record_route, replay_route);
  out.logits = std::move(dec.logits);
  out.raw = std::move(dec.raw);
  out.modes = std::move(dec.modes);
  return out;
}

}  // namespace mgtr
