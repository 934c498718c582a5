#pragma once

#include <vector>

#include "mgtr/autodiff.hpp"
#include "mgtr/tokenizer.hpp"
#include "mgtr/types.hpp"

namespace mgtr {

struct EncoderConfig {
  Index layers = 2;
  Index heads = 2;
  Index model_dim = 64;  // C; must be divisible by heads and by 4 (PE bands)
  Index ffn_dim = 128;
  Index knn_k = 8;

  void validate() const;
};

struct AttentionParams {
  ad::Linear q, k, v, out;
};

// Post-norm Transformer block: MHSA then FFN, each with residual + layer norm.
struct EncoderLayerParams {
  AttentionParams attn;
  ad::Linear ffn1, ffn2;
  ad::Var norm1_gain, norm1_bias;
  ad::Var norm2_gain, norm2_bias;
};

// 0 for neighbors (and self), -inf elsewhere; row i masks query i's keys.
Mat neighbor_mask_bias(const std::vector<std::vector<Index>>& neighbors, Index n);

// Multi-head attention over already-embedded inputs. Queries and keys carry
// their positional terms before the call; mask_bias may be null for dense.
ad::Var multi_head_attention(const ad::Var& q_in, const ad::Var& k_in, const ad::Var& v_in,
                             const Mat* mask_bias, Index heads, const AttentionParams& p);

// One local self-attention layer: Q and K take per-layer sinusoidal encodings
// of the token refs, values do not; attention is restricted to each token's
// k-NN list.
ad::Var local_self_attention_layer(const ad::Var& tokens, const MatX2& refs,
                                   const std::vector<std::vector<Index>>& neighbors, Index heads,
                                   const EncoderLayerParams& p);

// Stacked layers over one target's selected token set.
ad::Var encode_tokens(const ad::Var& tokens, const MatX2& refs, const EncoderConfig& cfg,
                      const std::vector<EncoderLayerParams>& layers);

// Future state enhancement: an auxiliary trajectory per agent token, encoded
// back into the agent feature.
struct FutureEnhanceParams {
  std::vector<ad::Linear> traj_head;   // C -> ... -> T*4
  PolylineEncoderParams traj_encoder;  // per-step (x, y, vx, vy) -> C, pooled over T
  std::vector<ad::Linear> fusion;      // 2C -> C
};

struct FutureEnhanceResult {
  ad::Var future_aware;  // N_a x C
  ad::Var aux_traj;      // N_a x (T*4), [x y vx vy] per step
};

FutureEnhanceResult future_state_enhance(const ad::Var& agent_tokens, Index future_steps,
                                         const FutureEnhanceParams& p);

}  // namespace mgtr
