#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mgtr/autodiff.hpp"
#include "mgtr/context_search.hpp"
#include "mgtr/encoder.hpp"
#include "mgtr/scene.hpp"
#include "mgtr/types.hpp"

namespace mgtr {

// K-means ---------------------------------------------------------------------

struct KMeansResult {
  MatX2 centroids;  // K x 2
  double inertia = 0;
};

// Lloyd's algorithm with k-means++ initialization, run to an assignment
// fixpoint or 100 iterations. Empty clusters take the point farthest from its
// centroid.
KMeansResult kmeans_2d(const MatX2& points, Index k, std::uint64_t seed);

// K representative trajectory endpoints per agent type, in the target frame.
struct IntentionGoalSet {
  std::array<MatX2, kNumAgentTypes> goals;  // each K x 2
  std::uint64_t embedding_seed = 0;

  Index num_modes() const { return goals[0].rows(); }
};

IntentionGoalSet cluster_intention_goals(const std::array<std::vector<Vec2>, kNumAgentTypes>& endpoints,
                                         Index k, std::uint64_t seed);

void save_goals(const std::string& path, const IntentionGoalSet& goals);
IntentionGoalSet load_goals(const std::string& path);

// GMM outputs -----------------------------------------------------------------

// Row layout per mode: T consecutive steps of
// [mu_x, mu_y, log_sigma_x, log_sigma_y, rho_raw, vx, vy].
constexpr Index kGmmChannels = 7;

// Output units of the regression heads: network outputs map to stored
// parameters as mu = 10 * out (decameters), v = 5 * out, and
// log sigma = log(5) * tanh(out), bounding sigma to [0.2, 5] m so the
// likelihood can neither explain errors away with huge variance nor spike on
// sub-meter residuals. Zero network output still means mu = 0, sigma = 1,
// rho = 0.
constexpr double kGmmPosScale = 10.0;
constexpr double kGmmVelScale = 5.0;
constexpr double kGmmLogSigmaScale = 1.6094379124341003;  // log 5
constexpr double kGmmRhoScale = 0.7;  // caps stored rho_raw: |rho| <= tanh(0.7)

struct GmmModeSet {
  Vec probabilities;  // K, simplex
  Mat raw;            // K x (T * 7)
  Index steps = 0;

  Index modes() const { return raw.rows(); }
  Vec2 mean(Index mode, Index t) const;
  Vec2 endpoint(Index mode) const { return mean(mode, steps - 1); }
  double sigma_x(Index mode, Index t) const;
  double sigma_y(Index mode, Index t) const;
  double rho(Index mode, Index t) const;
  Vec2 velocity(Index mode, Index t) const;
};

// Decoder ---------------------------------------------------------------------

struct DecoderLayerParams {
  AttentionParams self_attn;
  AttentionParams cross_attn;
  ad::Linear ffn1, ffn2;
  ad::Var norm1_gain, norm1_bias;
  ad::Var norm2_gain, norm2_bias;
  ad::Var norm3_gain, norm3_bias;
  std::vector<ad::Linear> cls_head;  // C -> ... -> 1 applied per mode row
  std::vector<ad::Linear> reg_head;  // C -> ... -> T*7
};

struct DecoderRunConfig {
  Index layers = 2;
  Index heads = 2;
  Index future_steps = 80;
  Index traj_budget = 48;    // trajectory-aware context tokens per layer
  Index motion_budget = 48;  // motion-aware context tokens per layer
  double tau = 4.0;
  bool motion_aware = true;  // false: search around the current position
  Index first_layer_line_points = 10;
};

struct DecodeResult {
  std::vector<ad::Var> logits;      // per layer, K x 1
  std::vector<ad::Var> raw;         // per layer, K x (T*7)
  std::vector<GmmModeSet> modes;    // extracted values per layer
};

// Context-token routing per decoder layer. The loss is piecewise smooth in
// the parameters: selections are integer-valued and locally constant, so
// gradient checks replay the recorded route of the unperturbed forward.
struct DecodeRoute {
  std::vector<std::vector<Index>> selected_per_layer;
};

// Iterative intention-query decoding over the encoded context set. Context
// selection unions trajectory-aware search (previous layer's mean
// trajectories; straight origin-to-goal lines at the first layer) with
// motion-aware search around the target's velocity-projected position.
// target_current must be the frame-local state: position at the origin,
// velocity rotated into the target frame.
DecodeResult decode(const ad::Var& context_tokens, const MatX2& context_refs,
                    const AgentState& target_current, const MatX2& goal_endpoints,
                    const ad::Var& goal_embedding, const DecoderRunConfig& cfg,
                    const std::vector<DecoderLayerParams>& layers,
                    DecodeRoute* record_route = nullptr, const DecodeRoute* replay_route = nullptr);

// Classification + regression heads for one decoder layer.
struct GmmHeadOut {
  ad::Var logits;  // K x 1
  ad::Var raw;     // K x (T*7)
};
GmmHeadOut gmm_heads(const ad::Var& intention_features, const DecoderLayerParams& p);

GmmModeSet extract_modes(const ad::Var& logits, const ad::Var& raw, Index steps);

// Greedy non-maximum suppression by descending probability with endpoint
// radius, backfilled to `keep` modes, probabilities renormalized.
GmmModeSet nms_select(const GmmModeSet& modes, Index keep, double radius);

}  // namespace mgtr
