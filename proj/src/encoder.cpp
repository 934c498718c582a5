#include "mgtr/encoder.hpp"

#include <cmath>
#include <limits>

#include "mgtr/context_search.hpp"
#include "mgtr/errors.hpp"

namespace mgtr {

void EncoderConfig::validate() const {
  if (layers < 1 || heads < 1 || model_dim < 4 || ffn_dim < 1 || knn_k < 1)
    throw ContractError("encoder config: counts must be positive");
  if (model_dim % heads != 0) throw ContractError("encoder config: model_dim must divide by heads");
  if (model_dim % 4 != 0) throw ContractError("encoder config: model_dim must divide by 4");
}

Mat neighbor_mask_bias(const std::vector<std::vector<Index>>& neighbors, Index n) {
  const double ninf = -std::numeric_limits<double>::infinity();
  Mat bias = Mat::Constant(n, n, ninf);
  if (static_cast<Index>(neighbors.size()) != n)
    throw ContractError("neighbor_mask_bias: list count mismatch");
  for (Index i = 0; i < n; ++i)
    for (Index j : neighbors[static_cast<std::size_t>(i)]) bias(i, j) = 0.0;
  return bias;
}

ad::Var multi_head_attention(const ad::Var& q_in, const ad::Var& k_in, const ad::Var& v_in,
                             const Mat* mask_bias, Index heads, const AttentionParams& p) {
  const Index dim = p.q.weight.cols();
  if (dim % heads != 0) throw ContractError("attention: dim must divide by heads");
  const Index hd = dim / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));

  ad::Var q = ad::add(ad::matmul(q_in, p.q.weight), p.q.bias);
  ad::Var k = ad::add(ad::matmul(k_in, p.k.weight), p.k.bias);
  ad::Var v = ad::add(ad::matmul(v_in, p.v.weight), p.v.bias);

  ad::Var heads_out;
  for (Index h = 0; h < heads; ++h) {
    ad::Var qh = ad::slice_cols(q, h * hd, hd);
    ad::Var kh = ad::slice_cols(k, h * hd, hd);
    ad::Var vh = ad::slice_cols(v, h * hd, hd);
    ad::Var scores = ad::scale(ad::matmul_nt(qh, kh), inv_sqrt);
    if (mask_bias) scores = ad::add_const(scores, *mask_bias);
    ad::Var weights = ad::softmax_rows(scores);
    ad::Var oh = ad::matmul(weights, vh);
    heads_out = h == 0 ? oh : ad::concat_cols(heads_out, oh);
  }
  return ad::add(ad::matmul(heads_out, p.out.weight), p.out.bias);
}

ad::Var local_self_attention_layer(const ad::Var& tokens, const MatX2& refs,
                                   const std::vector<std::vector<Index>>& neighbors, Index heads,
                                   const EncoderLayerParams& p) {
  if (refs.rows() != tokens.rows()) throw ContractError("attention: refs/token count mismatch");
  const Mat pe = ad::sinusoidal_pe_values(refs, tokens.cols());
  ad::Var qk = ad::add_const(tokens, pe);
  const Mat bias = neighbor_mask_bias(neighbors, tokens.rows());
  ad::Var attn = multi_head_attention(qk, qk, tokens, &bias, heads, p.attn);
  ad::Var x = ad::layer_norm_rows(ad::add(tokens, attn), p.norm1_gain, p.norm1_bias);
  ad::Var h = ad::add(ad::matmul(ad::relu(ad::add(ad::matmul(x, p.ffn1.weight), p.ffn1.bias)),
                                 p.ffn2.weight),
                      p.ffn2.bias);
  return ad::layer_norm_rows(ad::add(x, h), p.norm2_gain, p.norm2_bias);
}

ad::Var encode_tokens(const ad::Var& tokens, const MatX2& refs, const EncoderConfig& cfg,
                      const std::vector<EncoderLayerParams>& layers) {
  cfg.validate();
  if (static_cast<Index>(layers.size()) != cfg.layers)
    throw ContractError("encode_tokens: layer parameter count mismatch");
  const auto neighbors = knn_neighbors(refs, std::min<Index>(cfg.knn_k, tokens.rows()));
  ad::Var h = tokens;
  for (const auto& p : layers) h = local_self_attention_layer(h, refs, neighbors, cfg.heads, p);
  return h;
}

FutureEnhanceResult future_state_enhance(const ad::Var& agent_tokens, Index future_steps,
                                         const FutureEnhanceParams& p) {
  const Index na = agent_tokens.rows();
  FutureEnhanceResult out;
  ad::Var net = ad::mlp_forward(agent_tokens, p.traj_head);
  if (net.cols() != future_steps * 4)
    throw ContractError("future_state_enhance: trajectory head output must be T*4");
  // same output units as the decoder heads: positions in 10 m, velocities 5 m/s
  ad::Var flat = ad::reshape(net, na * future_steps, 4);
  out.aux_traj = ad::reshape(ad::concat_cols(ad::scale(ad::slice_cols(flat, 0, 2), 10.0),
                                             ad::scale(ad::slice_cols(flat, 2, 2), 5.0)),
                             na, future_steps * 4);
  ad::Var pts = ad::reshape(out.aux_traj, na * future_steps, 4);
  std::vector<std::uint8_t> valid(static_cast<std::size_t>(na * future_steps), 1);
  ad::Var enc = encode_polylines(pts, future_steps, valid, p.traj_encoder);
  out.future_aware = ad::mlp_forward(ad::concat_cols(agent_tokens, enc), p.fusion);
  return out;
}

}  // namespace mgtr
