#include "mgtr/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include "json.hpp"
#include "mgtr/errors.hpp"

namespace mgtr {

// ---------------------------------------------------------------------------
// k-means

namespace {

double sq_dist(const MatX2& pts, Index i, const Vec2& c) {
  const double dx = pts(i, 0) - c.x(), dy = pts(i, 1) - c.y();
  return dx * dx + dy * dy;
}

}  // namespace

KMeansResult kmeans_2d(const MatX2& points, Index k, std::uint64_t seed) {
  const Index n = points.rows();
  if (k < 1) throw ContractError("kmeans: k must be >= 1");
  if (n < k)
    throw ContractError("kmeans: fewer points (" + std::to_string(n) + ") than clusters (" +
                        std::to_string(k) + ")");
  std::mt19937_64 rng(seed);

  // k-means++ seeding
  MatX2 centers(k, 2);
  std::vector<double> d2(static_cast<std::size_t>(n), 0.0);
  {
    std::uniform_int_distribution<Index> first(0, n - 1);
    centers.row(0) = points.row(first(rng));
    for (Index c = 1; c < k; ++c) {
      double total = 0;
      for (Index i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (Index j = 0; j < c; ++j)
          best = std::min(best, sq_dist(points, i, Vec2(centers.row(j).transpose())));
        d2[static_cast<std::size_t>(i)] = best;
        total += best;
      }
      if (total <= 0) {
        // all remaining mass on already-chosen positions; reuse any point
        std::uniform_int_distribution<Index> any(0, n - 1);
        centers.row(c) = points.row(any(rng));
        continue;
      }
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(rng), run = 0;
      Index pick = n - 1;
      for (Index i = 0; i < n; ++i) {
        run += d2[static_cast<std::size_t>(i)];
        if (run >= target) {
          pick = i;
          break;
        }
      }
      centers.row(c) = points.row(pick);
    }
  }

  std::vector<Index> assign(static_cast<std::size_t>(n), -1);
  for (int iter = 0; iter < 100; ++iter) {
    bool changed = false;
    for (Index i = 0; i < n; ++i) {
      Index best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (Index c = 0; c < k; ++c) {
        const double d = sq_dist(points, i, Vec2(centers.row(c).transpose()));
        if (d < bd) {
          bd = d;
          best = c;
        }
      }
      if (assign[static_cast<std::size_t>(i)] != best) {
        assign[static_cast<std::size_t>(i)] = best;
        changed = true;
      }
    }
    MatX2 sums = MatX2::Zero(k, 2);
    std::vector<Index> counts(static_cast<std::size_t>(k), 0);
    for (Index i = 0; i < n; ++i) {
      sums.row(assign[static_cast<std::size_t>(i)]) += points.row(i);
      counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])]++;
    }
    for (Index c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        centers.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
      } else {
        // adopt the point farthest from its own centroid
        Index far = 0;
        double fd = -1;
        for (Index i = 0; i < n; ++i) {
          const double d =
              sq_dist(points, i, Vec2(centers.row(assign[static_cast<std::size_t>(i)]).transpose()));
          if (d > fd) {
            fd = d;
            far = i;
          }
        }
        centers.row(c) = points.row(far);
        changed = true;
      }
    }
    if (!changed) break;
  }

  KMeansResult out;
  out.centroids = centers;
  for (Index i = 0; i < n; ++i)
    out.inertia += sq_dist(points, i, Vec2(centers.row(assign[static_cast<std::size_t>(i)]).transpose()));
  return out;
}

IntentionGoalSet cluster_intention_goals(
    const std::array<std::vector<Vec2>, kNumAgentTypes>& endpoints, Index k, std::uint64_t seed) {
  IntentionGoalSet out;
  out.embedding_seed = seed;
  for (int t = 0; t < kNumAgentTypes; ++t) {
    const auto& pts = endpoints[static_cast<std::size_t>(t)];
    if (static_cast<Index>(pts.size()) < k)
      throw ContractError(std::string("cluster_intention_goals: type ") +
                          to_string(static_cast<AgentType>(t)) + " has " +
                          std::to_string(pts.size()) + " endpoints, needs >= " + std::to_string(k));
    MatX2 m(static_cast<Index>(pts.size()), 2);
    for (std::size_t i = 0; i < pts.size(); ++i) m.row(static_cast<Index>(i)) = pts[i].transpose();
    out.goals[static_cast<std::size_t>(t)] = kmeans_2d(m, k, seed + static_cast<std::uint64_t>(t)).centroids;
  }
  return out;
}

void save_goals(const std::string& path, const IntentionGoalSet& goals) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["embedding_seed"] = goals.embedding_seed;
  for (int t = 0; t < kNumAgentTypes; ++t) {
    nlohmann::json arr = nlohmann::json::array();
    const MatX2& g = goals.goals[static_cast<std::size_t>(t)];
    for (Index i = 0; i < g.rows(); ++i) arr.push_back({g(i, 0), g(i, 1)});
    j["types"][to_string(static_cast<AgentType>(t))] = std::move(arr);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << j.dump(2) << "\n";
}

IntentionGoalSet load_goals(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open goals file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("goals file: ") + e.what());
  }
  try {
    if (j.at("schema_version").get<int>() != 1) throw SchemaError("goals file: unsupported schema");
    IntentionGoalSet out;
    out.embedding_seed = j.at("embedding_seed").get<std::uint64_t>();
    Index k = -1;
    for (int t = 0; t < kNumAgentTypes; ++t) {
      const auto& arr = j.at("types").at(to_string(static_cast<AgentType>(t)));
      MatX2 g(static_cast<Index>(arr.size()), 2);
      for (std::size_t i = 0; i < arr.size(); ++i) {
        g(static_cast<Index>(i), 0) = arr[i][0];
        g(static_cast<Index>(i), 1) = arr[i][1];
      }
      if (k < 0) k = g.rows();
      if (g.rows() != k) throw SchemaError("goals file: per-type mode counts differ");
      out.goals[static_cast<std::size_t>(t)] = std::move(g);
    }
    if (k < 1) throw SchemaError("goals file: no modes");
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("goals file: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// GMM mode sets

Vec2 GmmModeSet::mean(Index mode, Index t) const {
  return {raw(mode, t * kGmmChannels + 0), raw(mode, t * kGmmChannels + 1)};
}
double GmmModeSet::sigma_x(Index mode, Index t) const {
  return std::exp(raw(mode, t * kGmmChannels + 2));
}
double GmmModeSet::sigma_y(Index mode, Index t) const {
  return std::exp(raw(mode, t * kGmmChannels + 3));
}
double GmmModeSet::rho(Index mode, Index t) const {
  return std::tanh(raw(mode, t * kGmmChannels + 4));
}
Vec2 GmmModeSet::velocity(Index mode, Index t) const {
  return {raw(mode, t * kGmmChannels + 5), raw(mode, t * kGmmChannels + 6)};
}

GmmHeadOut gmm_heads(const ad::Var& intention_features, const DecoderLayerParams& p) {
  GmmHeadOut out;
  out.logits = ad::mlp_forward(intention_features, p.cls_head);
  ad::Var net = ad::mlp_forward(intention_features, p.reg_head);
  if (out.logits.cols() != 1) throw ContractError("gmm_heads: cls head must emit one logit per mode");
  if (net.cols() % kGmmChannels != 0)
    throw ContractError("gmm_heads: reg head output must be a multiple of 7");

  // per-channel output units (see kGmm*Scale)
  const Index k = net.rows();
  const Index steps = net.cols() / kGmmChannels;
  ad::Var flat = ad::reshape(net, k * steps, kGmmChannels);
  ad::Var mu = ad::scale(ad::slice_cols(flat, 0, 2), kGmmPosScale);
  ad::Var log_sigma = ad::scale(ad::tanh_of(ad::slice_cols(flat, 2, 2)), kGmmLogSigmaScale);
  ad::Var rho = ad::scale(ad::tanh_of(ad::slice_cols(flat, 4, 1)), kGmmRhoScale);
  ad::Var vel = ad::scale(ad::slice_cols(flat, 5, 2), kGmmVelScale);
  ad::Var stored = ad::concat_cols(ad::concat_cols(mu, log_sigma), ad::concat_cols(rho, vel));
  out.raw = ad::reshape(stored, k, steps * kGmmChannels);
  return out;
}

GmmModeSet extract_modes(const ad::Var& logits, const ad::Var& raw, Index steps) {
  GmmModeSet out;
  out.steps = steps;
  out.raw = raw.value();
  ad::NoGradGuard guard;
  out.probabilities = ad::softmax_rows(ad::transpose(logits)).value().row(0).transpose();
  return out;
}

// ---------------------------------------------------------------------------
// decoding

namespace {

// straight origin-to-goal polylines stand in for layer-1 predicted trajectories
MatX2 first_layer_waypoints(const MatX2& goal_endpoints, Index points_per_line) {
  const Index k = goal_endpoints.rows();
  MatX2 out(k * points_per_line, 2);
  for (Index m = 0; m < k; ++m)
    for (Index i = 0; i < points_per_line; ++i) {
      const double t = static_cast<double>(i + 1) / static_cast<double>(points_per_line);
      out.row(m * points_per_line + i) = goal_endpoints.row(m) * t;
    }
  return out;
}

MatX2 mode_mean_waypoints(const GmmModeSet& modes) {
  MatX2 out(modes.modes() * modes.steps, 2);
  Index r = 0;
  for (Index m = 0; m < modes.modes(); ++m)
    for (Index t = 0; t < modes.steps; ++t) out.row(r++) = modes.mean(m, t).transpose();
  return out;
}

}  // namespace

DecodeResult decode(const ad::Var& context_tokens, const MatX2& context_refs,
                    const AgentState& target_current, const MatX2& goal_endpoints,
                    const ad::Var& goal_embedding, const DecoderRunConfig& cfg,
                    const std::vector<DecoderLayerParams>& layers, DecodeRoute* record_route,
                    const DecodeRoute* replay_route) {
  if (replay_route &&
      static_cast<Index>(replay_route->selected_per_layer.size()) != cfg.layers)
    throw ContractError("decode: replay route layer count mismatch");
  if (static_cast<Index>(layers.size()) != cfg.layers)
    throw ContractError("decode: layer parameter count mismatch");
  const Index k = goal_endpoints.rows();
  const Index dim = context_tokens.cols();
  if (goal_embedding.rows() != k || goal_embedding.cols() != dim)
    throw ContractError("decode: goal embedding must be K x C");

  // target_current is the frame-local state (position at the origin, velocity
  // rotated into the target frame)
  const Vec2 center_local = cfg.motion_aware
                                ? motion_projected_center(target_current, cfg.tau)
                                : Vec2(target_current.x, target_current.y);

  DecodeResult out;
  ad::Var f_d(Mat::Zero(k, dim));  // intention features start at zero
  ad::Var endpoints_var(goal_endpoints);
  MatX2 traj_waypoints = first_layer_waypoints(goal_endpoints, cfg.first_layer_line_points);

  const Mat pe_context = ad::sinusoidal_pe_values(context_refs, dim);

  for (Index layer = 0; layer < cfg.layers; ++layer) {
    const DecoderLayerParams& p = layers[static_cast<std::size_t>(layer)];

    // intention self-attention: Q = K = F_d + PE(endpoints) + embedding, V = F_d
    ad::Var pe_goal = ad::sinusoidal_pe(endpoints_var, dim);
    ad::Var qk = ad::add(ad::add(f_d, pe_goal), goal_embedding);
    ad::Var f_i = multi_head_attention(qk, qk, f_d, nullptr, cfg.heads, p.self_attn);
    f_i = ad::layer_norm_rows(ad::add(f_d, f_i), p.norm1_gain, p.norm1_bias);

    // context cross-attention over the searched token subset
    std::vector<Index> selected;
    if (replay_route) {
      selected = replay_route->selected_per_layer[static_cast<std::size_t>(layer)];
    } else {
      const SearchResult traj_sel =
          trajectory_aware_select(context_refs, traj_waypoints, cfg.traj_budget);
      const SearchResult motion_sel = nearest_tokens(context_refs, center_local, cfg.motion_budget);
      selected = union_select(traj_sel, motion_sel);
    }
    if (selected.empty()) throw ContractError("decode: empty context selection");
    if (record_route) record_route->selected_per_layer.push_back(selected);

    ad::Var ctx = ad::gather_rows(context_tokens, selected);
    Mat pe_sel(static_cast<Index>(selected.size()), dim);
    for (std::size_t i = 0; i < selected.size(); ++i) pe_sel.row(static_cast<Index>(i)) = pe_context.row(selected[i]);
    ad::Var kv = ad::add_const(ctx, pe_sel);

    ad::Var q = ad::add(f_i, ad::sinusoidal_pe(endpoints_var, dim));
    ad::Var f_c = multi_head_attention(q, kv, kv, nullptr, cfg.heads, p.cross_attn);
    ad::Var x = ad::layer_norm_rows(ad::add(f_i, f_c), p.norm2_gain, p.norm2_bias);
    ad::Var h = ad::add(
        ad::matmul(ad::relu(ad::add(ad::matmul(x, p.ffn1.weight), p.ffn1.bias)), p.ffn2.weight),
        p.ffn2.bias);
    f_d = ad::layer_norm_rows(ad::add(x, h), p.norm3_gain, p.norm3_bias);

    GmmHeadOut heads_out = gmm_heads(f_d, p);
    if (heads_out.raw.cols() != cfg.future_steps * kGmmChannels)
      throw ContractError("decode: reg head output must be T*7");
    out.logits.push_back(heads_out.logits);
    out.raw.push_back(heads_out.raw);
    out.modes.push_back(extract_modes(heads_out.logits, heads_out.raw, cfg.future_steps));

    // next layer: predicted endpoints replace goal endpoints in the PE, and
    // the predicted mean trajectories drive the trajectory-aware search
    endpoints_var = ad::slice_cols(heads_out.raw, (cfg.future_steps - 1) * kGmmChannels, 2);
    traj_waypoints = mode_mean_waypoints(out.modes.back());
  }
  return out;
}

// ---------------------------------------------------------------------------
// NMS

GmmModeSet nms_select(const GmmModeSet& modes, Index keep, double radius) {
  const Index k = modes.modes();
  if (keep < 1 || keep > k) throw ContractError("nms_select: keep must be in [1, K]");

  std::vector<Index> order(static_cast<std::size_t>(k));
  for (Index i = 0; i < k; ++i) order[static_cast<std::size_t>(i)] = i;
  std::sort(order.begin(), order.end(), [&](Index a, Index b) {
    const double pa = modes.probabilities(a), pb = modes.probabilities(b);
    return pa > pb || (pa == pb && a < b);
  });

  std::vector<Index> kept, suppressed;
  for (Index idx : order) {
    if (static_cast<Index>(kept.size()) >= keep) {
      suppressed.push_back(idx);
      continue;
    }
    bool close = false;
    for (Index j : kept)
      if ((modes.endpoint(idx) - modes.endpoint(j)).norm() <= radius) close = true;
    (close ? suppressed : kept).push_back(idx);
  }
  // backfill by descending probability among the suppressed
  for (Index idx : suppressed) {
    if (static_cast<Index>(kept.size()) >= keep) break;
    kept.push_back(idx);
  }

  GmmModeSet out;
  out.steps = modes.steps;
  out.raw.resize(static_cast<Index>(kept.size()), modes.raw.cols());
  out.probabilities.resize(static_cast<Index>(kept.size()));
  double total = 0;
  for (std::size_t i = 0; i < kept.size(); ++i) {
    out.raw.row(static_cast<Index>(i)) = modes.raw.row(kept[i]);
    out.probabilities(static_cast<Index>(i)) = modes.probabilities(kept[i]);
    total += modes.probabilities(kept[i]);
  }
  if (total > 0) out.probabilities /= total;
  return out;
}

}  // namespace mgtr
