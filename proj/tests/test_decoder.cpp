#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "mgtr/decoder.hpp"
#include "mgtr/errors.hpp"
#include "test_util.hpp"

using namespace mgtr;
using mgtr::testutil::fd_grad;
using mgtr::testutil::max_rel_err;
using mgtr::testutil::random_mat;

namespace {

ad::Linear make_linear(std::mt19937_64& rng, Index in, Index out) {
  return {ad::Var(random_mat(rng, in, out, -0.4, 0.4), true),
          ad::Var(random_mat(rng, 1, out, -0.1, 0.1), true)};
}

DecoderLayerParams make_layer(std::mt19937_64& rng, Index c, Index T) {
  DecoderLayerParams p;
  p.self_attn = {make_linear(rng, c, c), make_linear(rng, c, c), make_linear(rng, c, c),
                 make_linear(rng, c, c)};
  p.cross_attn = {make_linear(rng, c, c), make_linear(rng, c, c), make_linear(rng, c, c),
                  make_linear(rng, c, c)};
  p.ffn1 = make_linear(rng, c, 2 * c);
  p.ffn2 = make_linear(rng, 2 * c, c);
  p.norm1_gain = ad::Var(Mat::Ones(1, c), true);
  p.norm1_bias = ad::Var(Mat::Zero(1, c), true);
  p.norm2_gain = ad::Var(Mat::Ones(1, c), true);
  p.norm2_bias = ad::Var(Mat::Zero(1, c), true);
  p.norm3_gain = ad::Var(Mat::Ones(1, c), true);
  p.norm3_bias = ad::Var(Mat::Zero(1, c), true);
  p.cls_head = {make_linear(rng, c, c), make_linear(rng, c, 1)};
  p.reg_head = {make_linear(rng, c, c), make_linear(rng, c, T * kGmmChannels)};
  return p;
}

GmmModeSet make_modes(const Mat& raw, const Vec& probs, Index steps) {
  GmmModeSet m;
  m.raw = raw;
  m.probabilities = probs;
  m.steps = steps;
  return m;
}

}  // namespace

TEST_CASE("kmeans recovers exact clusters") {
  MatX2 pts(4, 2);
  pts << 0, 0, 10, 0, 0, 10, 10, 10;
  const KMeansResult r = kmeans_2d(pts, 4, 7);
  CHECK(r.inertia == doctest::Approx(0.0).epsilon(1e-12));
  // every input point appears among the centroids
  for (Index i = 0; i < 4; ++i) {
    double best = 1e9;
    for (Index c = 0; c < 4; ++c) best = std::min(best, (r.centroids.row(c) - pts.row(i)).norm());
    CHECK(best < 1e-12);
  }
}

TEST_CASE("kmeans separates two blobs") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> noise(0.0, 0.3);
  MatX2 pts(200, 2);
  Vec2 m1(-20, 3), m2(25, -8);
  Vec2 sum1 = Vec2::Zero(), sum2 = Vec2::Zero();
  for (Index i = 0; i < 200; ++i) {
    const Vec2 base = i < 100 ? m1 : m2;
    const Vec2 p = base + Vec2(noise(rng), noise(rng));
    pts.row(i) = p.transpose();
    (i < 100 ? sum1 : sum2) += p;
  }
  sum1 /= 100;
  sum2 /= 100;
  const KMeansResult r = kmeans_2d(pts, 2, 3);
  const Vec2 c0 = r.centroids.row(0).transpose(), c1 = r.centroids.row(1).transpose();
  const bool direct = (c0 - sum1).norm() < 1e-6 && (c1 - sum2).norm() < 1e-6;
  const bool swapped = (c0 - sum2).norm() < 1e-6 && (c1 - sum1).norm() < 1e-6;
  CHECK((direct || swapped));
}

TEST_CASE("kmeans inertia beats random assignment baselines") {
  std::mt19937_64 rng(13);
  MatX2 pts = random_mat(rng, 300, 2, -40, 40);
  const Index k = 8;
  const KMeansResult r = kmeans_2d(pts, k, 5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Index> assign(300);
    for (auto& a : assign) a = static_cast<Index>(rng() % k);
    MatX2 centers = MatX2::Zero(k, 2);
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (Index i = 0; i < 300; ++i) {
      centers.row(assign[static_cast<std::size_t>(i)]) += pts.row(i);
      counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])]++;
    }
    for (Index c = 0; c < k; ++c)
      if (counts[static_cast<std::size_t>(c)] > 0)
        centers.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
    double inertia = 0;
    for (Index i = 0; i < 300; ++i)
      inertia += (pts.row(i) - centers.row(assign[static_cast<std::size_t>(i)])).squaredNorm();
    CHECK(r.inertia <= inertia);
  }
}

TEST_CASE("kmeans contract errors") {
  MatX2 pts(3, 2);
  pts << 0, 0, 1, 1, 2, 2;
  CHECK_THROWS_AS(kmeans_2d(pts, 4, 1), ContractError);

  std::array<std::vector<Vec2>, kNumAgentTypes> endpoints;
  endpoints[0] = {Vec2(0, 0), Vec2(1, 1)};
  endpoints[1] = {Vec2(0, 0), Vec2(1, 1)};
  endpoints[2] = {Vec2(0, 0)};
  CHECK_THROWS_AS(cluster_intention_goals(endpoints, 2, 1), ContractError);
}

TEST_CASE("goal set json round trip") {
  std::array<std::vector<Vec2>, kNumAgentTypes> endpoints;
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> d(-50, 50);
  for (auto& v : endpoints)
    for (int i = 0; i < 32; ++i) v.push_back(Vec2(d(rng), d(rng)));
  const IntentionGoalSet goals = cluster_intention_goals(endpoints, 8, 123);

  const std::string path = (std::filesystem::temp_directory_path() / "mgtr_goals.json").string();
  save_goals(path, goals);
  const IntentionGoalSet loaded = load_goals(path);
  CHECK(loaded.embedding_seed == goals.embedding_seed);
  for (int t = 0; t < kNumAgentTypes; ++t)
    CHECK((loaded.goals[static_cast<std::size_t>(t)] - goals.goals[static_cast<std::size_t>(t)])
              .cwiseAbs()
              .maxCoeff() < 1e-15);
  std::remove(path.c_str());
}

TEST_CASE("gmm heads on zero features") {
  std::mt19937_64 rng(19);
  const Index c = 8, T = 4, K = 5;
  DecoderLayerParams p = make_layer(rng, c, T);
  // zero biases so zero input maps to exactly zero output
  for (auto* head : {&p.cls_head, &p.reg_head})
    for (auto& l : *head) l.bias = ad::Var(Mat::Zero(1, l.bias.cols()));

  const GmmHeadOut out = gmm_heads(ad::Var(Mat::Zero(K, c)), p);
  CHECK(out.logits.value().cwiseAbs().maxCoeff() == 0.0);
  CHECK(out.raw.value().cwiseAbs().maxCoeff() == 0.0);
  const GmmModeSet modes = extract_modes(out.logits, out.raw, T);
  for (Index m = 0; m < K; ++m) {
    CHECK(modes.probabilities(m) == doctest::Approx(1.0 / K).epsilon(1e-12));
    CHECK(modes.sigma_x(m, 0) == doctest::Approx(1.0));
    CHECK(modes.rho(m, 0) == doctest::Approx(0.0));
  }

  // random features: p stays a simplex
  const GmmHeadOut r2 = gmm_heads(ad::Var(random_mat(rng, K, c, -3, 3)), p);
  const GmmModeSet m2 = extract_modes(r2.logits, r2.raw, T);
  CHECK(std::abs(m2.probabilities.sum() - 1.0) < 1e-12);
  CHECK(m2.probabilities.minCoeff() >= 0.0);
}

TEST_CASE("gmm head gradient check") {
  std::mt19937_64 rng(23);
  const Index c = 8, T = 3, K = 4;
  DecoderLayerParams p = make_layer(rng, c, T);
  Mat feats = random_mat(rng, K, c);
  ad::Var f(feats, true);
  const GmmHeadOut out = gmm_heads(f, p);
  ad::backprop(ad::sum_all(ad::add(ad::mul(out.raw, out.raw),
                                   ad::Var(Mat::Zero(K, T * kGmmChannels)))));

  auto loss = [&](const Mat& m) {
    ad::NoGradGuard g;
    const GmmHeadOut o = gmm_heads(ad::Var(m), p);
    return o.raw.value().cwiseProduct(o.raw.value()).sum();
  };
  CHECK(max_rel_err(f.grad(), fd_grad(loss, feats), 1e-4) < 1e-4);
}

TEST_CASE("decode shapes, determinism, and agent-count invariance") {
  std::mt19937_64 rng(29);
  const Index c = 16, T = 5, K = 6;
  DecoderRunConfig cfg;
  cfg.layers = 2;
  cfg.heads = 2;
  cfg.future_steps = T;
  cfg.traj_budget = 6;
  cfg.motion_budget = 6;
  std::vector<DecoderLayerParams> layers = {make_layer(rng, c, T), make_layer(rng, c, T)};
  MatX2 goals = random_mat(rng, K, 2, -30, 30);
  ad::Var embed(random_mat(rng, K, c, -0.5, 0.5));
  AgentState current;
  current.vx = 5.0;

  auto run = [&](Index n_ctx, std::uint64_t seed) {
    std::mt19937_64 r2(seed);
    ad::Var ctx(mgtr::testutil::random_mat(r2, n_ctx, c));
    MatX2 refs = mgtr::testutil::random_mat(r2, n_ctx, 2, -40, 40);
    return decode(ctx, refs, current, goals, embed, cfg, layers);
  };

  const DecodeResult a = run(20, 1);
  CHECK(a.logits.size() == 2);
  CHECK(a.raw.size() == 2);
  for (const auto& l : a.logits) {
    CHECK(l.rows() == K);
    CHECK(l.cols() == 1);
  }
  for (const auto& r : a.raw) {
    CHECK(r.rows() == K);
    CHECK(r.cols() == T * kGmmChannels);
  }

  // bitwise determinism
  const DecodeResult b = run(20, 1);
  for (std::size_t l = 0; l < 2; ++l) {
    CHECK(std::memcmp(a.raw[l].value().data(), b.raw[l].value().data(),
                      sizeof(double) * static_cast<std::size_t>(a.raw[l].size())) == 0);
  }

  // shapes invariant under context size
  const DecodeResult c2 = run(33, 2);
  CHECK(c2.raw[0].rows() == K);
  CHECK(c2.raw[0].cols() == T * kGmmChannels);

  // empty context rejected
  CHECK_THROWS_AS(run(0, 3), ContractError);
}

TEST_CASE("nms basics") {
  const Index T = 4;
  // all endpoints identical: one survivor pre-backfill, backfill restores keep
  Mat raw = Mat::Zero(5, T * kGmmChannels);
  Vec probs(5);
  probs << 0.4, 0.25, 0.15, 0.12, 0.08;
  const GmmModeSet same = make_modes(raw, probs, T);
  const GmmModeSet pruned = nms_select(same, 3, 2.0);
  CHECK(pruned.modes() == 3);
  CHECK(pruned.probabilities(0) == doctest::Approx(0.4 / 0.8));
  CHECK(std::abs(pruned.probabilities.sum() - 1.0) < 1e-12);

  // far endpoints: top-keep by probability, order preserved
  Mat far = Mat::Zero(4, T * kGmmChannels);
  for (Index m = 0; m < 4; ++m) {
    far(m, (T - 1) * kGmmChannels + 0) = 100.0 * static_cast<double>(m);
    far(m, (T - 1) * kGmmChannels + 1) = -50.0 * static_cast<double>(m);
  }
  Vec p2(4);
  p2 << 0.1, 0.5, 0.15, 0.25;
  const GmmModeSet spread = make_modes(far, p2, T);
  const GmmModeSet kept = nms_select(spread, 3, 2.5);
  REQUIRE(kept.modes() == 3);
  CHECK(kept.raw.row(0) == spread.raw.row(1));
  CHECK(kept.raw.row(1) == spread.raw.row(3));
  CHECK(kept.raw.row(2) == spread.raw.row(2));
}

TEST_CASE("nms matches exhaustive greedy oracle") {
  std::mt19937_64 rng(31);
  const Index T = 3;
  for (int trial = 0; trial < 200; ++trial) {
    const Index K = 64;
    Mat raw = random_mat(rng, K, T * kGmmChannels, -20, 20);
    Vec probs(K);
    double total = 0;
    for (Index i = 0; i < K; ++i) {
      probs(i) = std::abs(raw(i, 0)) + 0.01;
      total += probs(i);
    }
    probs /= total;
    const GmmModeSet modes = make_modes(raw, probs, T);
    const double radius = 4.0;
    const Index keep = 6;
    const GmmModeSet got = nms_select(modes, keep, radius);

    // direct greedy re-implementation
    std::vector<Index> order(K);
    for (Index i = 0; i < K; ++i) order[static_cast<std::size_t>(i)] = i;
    std::sort(order.begin(), order.end(), [&](Index a, Index b) {
      return probs(a) > probs(b) || (probs(a) == probs(b) && a < b);
    });
    std::vector<Index> kept, rest;
    for (Index idx : order) {
      if (static_cast<Index>(kept.size()) >= keep) {
        rest.push_back(idx);
        continue;
      }
      bool ok = true;
      for (Index j : kept)
        if ((modes.endpoint(idx) - modes.endpoint(j)).norm() <= radius) ok = false;
      if (ok)
        kept.push_back(idx);
      else
        rest.push_back(idx);
    }
    for (Index idx : rest) {
      if (static_cast<Index>(kept.size()) >= keep) break;
      kept.push_back(idx);
    }
    REQUIRE(got.modes() == static_cast<Index>(kept.size()));
    for (std::size_t i = 0; i < kept.size(); ++i)
      CHECK(got.raw.row(static_cast<Index>(i)) == modes.raw.row(kept[i]));

    // kept pre-backfill modes are pairwise separated: verify on the
    // first min(keep, separated-count) greedy picks
    std::vector<Index> prefix;
    for (Index idx : order) {
      bool ok = true;
      for (Index j : prefix)
        if ((modes.endpoint(idx) - modes.endpoint(j)).norm() <= radius) ok = false;
      if (ok && static_cast<Index>(prefix.size()) < keep) prefix.push_back(idx);
    }
    for (std::size_t i = 0; i < prefix.size(); ++i)
      for (std::size_t j = i + 1; j < prefix.size(); ++j)
        CHECK((modes.endpoint(prefix[i]) - modes.endpoint(prefix[j])).norm() > radius);
  }
}
