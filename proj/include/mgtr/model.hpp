#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mgtr/decoder.hpp"
#include "mgtr/encoder.hpp"
#include "mgtr/optim.hpp"
#include "mgtr/scene.hpp"
#include "mgtr/tokenizer.hpp"

namespace mgtr {

struct ModelConfig {
  Index model_dim = 64;  // C == C_dec
  Index enc_layers = 2;
  Index dec_layers = 2;
  Index heads = 2;
  Index ffn_dim = 128;
  Index knn_k = 8;
  Index num_modes = 16;     // K
  Index future_steps = 80;  // T
  Index history_steps = 11;
  GranularitySpec granularity{{{20, 0.5}, {10, 0.5}}, {3.2, 1.6}};
  Index map_budget = 64;    // selected map tokens across levels
  Index voxel_budget = 32;  // selected voxel tokens across levels; 0 disables
  Index dec_traj_budget = 48;
  Index dec_motion_budget = 48;
  double tau = 4.0;
  bool motion_aware = true;
  bool per_level_budget = false;  // split budgets proportionally per level

  void validate() const;
};

// Full model: per-granularity token encoders, local-attention encoder stack,
// future-state enhancement, and the intention-query decoder with GMM heads.
class MgtrModel {
 public:
  MgtrModel(const ModelConfig& cfg, std::uint64_t seed);

  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }
  const ModelConfig& config() const { return cfg_; }

  struct Forward {
    std::vector<ad::Var> logits;   // per decoder layer, K x 1
    std::vector<ad::Var> raw;      // per decoder layer, K x (T*7)
    std::vector<GmmModeSet> modes;
    ad::Var aux_traj;              // N_kept x (T*4)
    std::vector<int> aux_agent_ids;
    Pose2 pose;
    Index agent_tokens = 0, map_tokens = 0, voxel_tokens = 0;
  };

  Forward forward(const Scenario& s, int target_id, const IntentionGoalSet& goals,
                  DecodeRoute* record_route = nullptr,
                  const DecodeRoute* replay_route = nullptr) const;

  TokenizerParams tokenizer_params() const;

 private:
  ad::Linear make_linear(std::mt19937_64& rng, const std::string& name, Index in, Index out);

  ModelConfig cfg_;
  ParameterStore params_;
  PolylineEncoderParams agent_enc_;
  std::vector<PolylineEncoderParams> map_enc_;
  std::vector<MlpParams> voxel_enc_;
  std::vector<EncoderLayerParams> enc_layers_;
  FutureEnhanceParams future_;
  std::vector<DecoderLayerParams> dec_layers_;
  std::array<ad::Var, kNumAgentTypes> goal_embed_;
};

// Selection of map/voxel tokens ahead of encoding: indices per level plus the
// frame-local search center used.
struct LevelSelection {
  std::vector<std::vector<Index>> per_level;
  Vec2 center = Vec2::Zero();
  Index total = 0;
};

// Budgeted nearest-token selection across granularity levels, pooled by
// default or proportional per level.
LevelSelection select_across_levels(const std::vector<MatX2>& level_refs, const Vec2& center,
                                    Index budget, bool per_level_budget);

}  // namespace mgtr
