#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>

#include "doctest.h"
#include "mgtr/errors.hpp"
#include "mgtr/metrics.hpp"
#include "test_util.hpp"

using namespace mgtr;
using mgtr::testutil::random_mat;

namespace {

// modes whose means follow the provided trajectories
GmmModeSet modes_from_trajs(const std::vector<Mat>& trajs, const Vec& probs) {
  const Index T = trajs[0].rows();
  GmmModeSet m;
  m.steps = T;
  m.raw = Mat::Zero(static_cast<Index>(trajs.size()), T * kGmmChannels);
  for (std::size_t k = 0; k < trajs.size(); ++k)
    for (Index t = 0; t < T; ++t) {
      m.raw(static_cast<Index>(k), t * kGmmChannels + 0) = trajs[k](t, 0);
      m.raw(static_cast<Index>(k), t * kGmmChannels + 1) = trajs[k](t, 1);
    }
  m.probabilities = probs;
  return m;
}

Mat straight(Index T, double vx, double vy, double x0 = 0, double y0 = 0) {
  Mat out(T, 2);
  for (Index t = 0; t < T; ++t) {
    out(t, 0) = x0 + vx * (t + 1);
    out(t, 1) = y0 + vy * (t + 1);
  }
  return out;
}

PredictionRecord make_record(AgentType type, const std::vector<Mat>& trajs, const Vec& probs,
                             const Mat& gt) {
  PredictionRecord r;
  r.type = type;
  r.modes = modes_from_trajs(trajs, probs);
  r.gt_xy = gt;
  r.gt_valid.assign(static_cast<std::size_t>(gt.rows()), 1);
  return r;
}

}  // namespace

TEST_CASE("min ade and fde basics") {
  const Index T = 80;
  Mat gt = straight(T, 0.5, 0.1);
  Vec p1 = Vec::Ones(1);
  const GmmModeSet exact = modes_from_trajs({gt}, p1);
  CHECK(min_ade(exact, gt, 30) == 0.0);
  CHECK(min_fde(exact, gt, 80) == 0.0);

  // one mode offset 1 m everywhere, other 2 m: min picks 1
  Mat off1 = gt, off2 = gt;
  off1.col(1).array() += 1.0;
  off2.col(1).array() += 2.0;
  Vec p2 = Vec::Constant(2, 0.5);
  const GmmModeSet two = modes_from_trajs({off1, off2}, p2);
  CHECK(min_ade(two, gt, 50) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(min_fde(two, gt, 50) == doctest::Approx(1.0).epsilon(1e-12));

  // single mode equals plain ADE (oracle identity)
  std::mt19937_64 rng(1);
  Mat noisy = gt + random_mat(rng, T, 2, -1, 1);
  const GmmModeSet one = modes_from_trajs({noisy}, p1);
  double direct = 0;
  for (Index t = 0; t < 30; ++t) direct += (noisy.row(t) - gt.row(t)).norm();
  CHECK(min_ade(one, gt, 30) == doctest::Approx(direct / 30.0).epsilon(1e-12));

  // random 6-mode case against a direct double loop
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Mat> trajs;
    for (int m = 0; m < 6; ++m) trajs.push_back(gt + random_mat(rng, T, 2, -3, 3));
    Vec probs = Vec::Constant(6, 1.0 / 6.0);
    const GmmModeSet six = modes_from_trajs(trajs, probs);
    const Index h = 30 + static_cast<Index>(rng() % 50);
    double best_ade = 1e30, best_fde = 1e30;
    for (int m = 0; m < 6; ++m) {
      double sum = 0;
      for (Index t = 0; t < h; ++t) sum += (trajs[static_cast<std::size_t>(m)].row(t) - gt.row(t)).norm();
      best_ade = std::min(best_ade, sum / static_cast<double>(h));
      best_fde = std::min(best_fde, (trajs[static_cast<std::size_t>(m)].row(h - 1) - gt.row(h - 1)).norm());
    }
    CHECK(min_ade(six, gt, h) == doctest::Approx(best_ade).epsilon(1e-12));
    CHECK(min_fde(six, gt, h) == doctest::Approx(best_fde).epsilon(1e-12));
  }
}

TEST_CASE("miss rate") {
  const Index T = 80;
  Mat gt = straight(T, 0.4, 0.0);
  Vec p1 = Vec::Ones(1);

  std::vector<PredictionRecord> exact, displaced, half;
  for (int i = 0; i < 4; ++i) {
    exact.push_back(make_record(AgentType::Vehicle, {gt}, p1, gt));
    Mat far = gt;
    far.col(0).array() += 100.0;
    displaced.push_back(make_record(AgentType::Vehicle, {far}, p1, gt));
    // alternate hit/miss for the constructed half batch
    Mat maybe = gt;
    if (i % 2 == 1) maybe.col(0).array() += 100.0;
    half.push_back(make_record(AgentType::Vehicle, {maybe}, p1, gt));
  }
  CHECK(miss_rate(exact, 80, 6.0) == 0.0);
  CHECK(miss_rate(displaced, 80, 6.0) == 1.0);
  CHECK(miss_rate(half, 80, 6.0) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("average precision basics and hand-computed case") {
  const Index T = 10;
  Mat gt = straight(T, 1.0, 0.0);
  // single target, first mode hits
  Mat hit = gt;
  Mat miss = gt;
  miss.col(1).array() += 50.0;
  Vec p(2);
  p << 0.7, 0.3;
  std::vector<PredictionRecord> single{make_record(AgentType::Pedestrian, {hit, miss}, p, gt)};
  CHECK(average_precision(single, T, 2.0) == doctest::Approx(1.0).epsilon(1e-12));

  std::vector<PredictionRecord> none{make_record(AgentType::Pedestrian, {miss, miss}, p, gt)};
  CHECK(average_precision(none, T, 2.0) == 0.0);

  // three targets, two modes each, known ranking:
  //   probs: t0: (0.9 hit, 0.1 miss), t1: (0.8 miss, 0.2 hit), t2: (0.6 hit, 0.4 miss)
  // ranking: 0.9 TP, 0.8 FP, 0.6 TP, 0.4 FP, 0.2 TP, 0.1 FP
  // precision at TP ranks: 1/1, 2/3, 3/5 ; recalls 1/3, 2/3, 3/3
  // envelope: [1, 2/3, 3/5] -> AP = (1/3)(1) + (1/3)(2/3) + (1/3)(3/5)
  Vec pa(2), pb(2), pc(2);
  pa << 0.9, 0.1;
  pb << 0.8, 0.2;
  pc << 0.6, 0.4;
  std::vector<PredictionRecord> three{
      make_record(AgentType::Vehicle, {hit, miss}, pa, gt),
      make_record(AgentType::Vehicle, {miss, hit}, pb, gt),
      make_record(AgentType::Vehicle, {hit, miss}, pc, gt),
  };
  const double expect = (1.0 + 2.0 / 3.0 + 3.0 / 5.0) / 3.0;
  CHECK(average_precision(three, T, 2.0) == doctest::Approx(expect).epsilon(1e-12));

  // swapping a true positive's probability below a false positive cannot raise AP
  Vec pa2(2);
  pa2 << 0.05, 0.1;  // the hit mode of target 0 drops to the bottom
  std::vector<PredictionRecord> worse = three;
  worse[0] = make_record(AgentType::Vehicle, {hit, miss}, pa2, gt);
  CHECK(average_precision(worse, T, 2.0) <= average_precision(three, T, 2.0) + 1e-12);

  CHECK_THROWS_AS(average_precision({}, T, 2.0), ContractError);
}

TEST_CASE("metrics invariant under joint rigid transform") {
  std::mt19937_64 rng(5);
  const Index T = 40;
  Mat gt = straight(T, 0.6, -0.2);
  std::vector<Mat> trajs;
  for (int m = 0; m < 4; ++m) trajs.push_back(gt + random_mat(rng, T, 2, -2, 2));
  Vec probs = Vec::Constant(4, 0.25);

  const double angle = 1.2, tx = 40, ty = -9;
  const double c = std::cos(angle), s = std::sin(angle);
  auto rot = [&](const Mat& m) {
    Mat out(m.rows(), 2);
    for (Index i = 0; i < m.rows(); ++i) {
      out(i, 0) = c * m(i, 0) - s * m(i, 1) + tx;
      out(i, 1) = s * m(i, 0) + c * m(i, 1) + ty;
    }
    return out;
  };
  std::vector<Mat> rtrajs;
  for (const auto& t : trajs) rtrajs.push_back(rot(t));

  std::vector<PredictionRecord> a{make_record(AgentType::Cyclist, trajs, probs, gt)};
  std::vector<PredictionRecord> b{make_record(AgentType::Cyclist, rtrajs, probs, rot(gt))};
  CHECK(min_ade(a[0].modes, a[0].gt_xy, T) ==
        doctest::Approx(min_ade(b[0].modes, b[0].gt_xy, T)).epsilon(1e-9));
  CHECK(min_fde(a[0].modes, a[0].gt_xy, T) ==
        doctest::Approx(min_fde(b[0].modes, b[0].gt_xy, T)).epsilon(1e-9));
  CHECK(miss_rate(a, T, 3.0) == miss_rate(b, T, 3.0));
  CHECK(average_precision(a, T, 3.0) ==
        doctest::Approx(average_precision(b, T, 3.0)).epsilon(1e-12));
}

TEST_CASE("evaluation report aggregates") {
  const Index T = 80;
  Mat gt = straight(T, 0.5, 0.0);
  Vec p1 = Vec::Ones(1);
  std::vector<PredictionRecord> records;
  for (int i = 0; i < 3; ++i) records.push_back(make_record(AgentType::Vehicle, {gt}, p1, gt));
  Mat off = gt;
  off.col(1).array() += 1.0;
  for (int i = 0; i < 2; ++i) records.push_back(make_record(AgentType::Pedestrian, {off}, p1, gt));

  MetricsConfig cfg;
  const EvalReport rep = evaluate_predictions(records, cfg);
  CHECK(rep.cells[0][2].minADE == doctest::Approx(0.0));
  CHECK(rep.cells[1][2].minADE == doctest::Approx(1.0));
  CHECK(rep.cells[2][0].count == 0);

  // averages are arithmetic means of the present cells
  CHECK(rep.per_horizon[2].minADE == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(rep.overall.minADE == doctest::Approx(0.5).epsilon(1e-12));
  for (std::size_t h = 0; h < 3; ++h) {
    CHECK(rep.per_horizon[h].mAP >= 0.0);
    CHECK(rep.per_horizon[h].mAP <= 1.0);
    CHECK(rep.per_horizon[h].MR >= 0.0);
    CHECK(rep.per_horizon[h].MR <= 1.0);
  }

  const std::string js = rep.to_json();
  CHECK(js.find("\"minADE\"") != std::string::npos);
  CHECK(js.find("\"mAP\"") != std::string::npos);
  CHECK(js.find("\"Vehicle\"") != std::string::npos);
  CHECK(!rep.to_table().empty());

  CHECK_THROWS_AS(evaluate_predictions({}, cfg), ContractError);
}

TEST_CASE("horizon steps from config") {
  MetricsConfig cfg;
  CHECK(cfg.horizon_step(0) == 30);
  CHECK(cfg.horizon_step(1) == 50);
  CHECK(cfg.horizon_step(2) == 80);
}
