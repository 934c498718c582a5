#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>

#include "doctest.h"
#include "mgtr/autodiff.hpp"
#include "mgtr/errors.hpp"
#include "mgtr/optim.hpp"
#include "test_util.hpp"

using namespace mgtr;
using namespace mgtr::ad;
using mgtr::testutil::fd_grad;
using mgtr::testutil::max_rel_err;
using mgtr::testutil::random_mat;

namespace {

Mat m2(std::initializer_list<std::initializer_list<double>> rows) {
  const Index r = static_cast<Index>(rows.size());
  const Index c = static_cast<Index>(rows.begin()->size());
  Mat m(r, c);
  Index i = 0;
  for (const auto& row : rows) {
    Index j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

}  // namespace

TEST_CASE("matmul basics") {
  Var id(m2({{1, 0}, {0, 1}}));
  Var b(m2({{3, 4}, {5, 6}}));
  CHECK(matmul(id, b).value() == b.value());

  Var a(m2({{1, 2}}));
  Var c(m2({{3}, {4}}));
  CHECK(matmul(a, c).value()(0, 0) == doctest::Approx(11.0).epsilon(1e-15));

  CHECK_THROWS_AS(matmul(Var(Mat::Zero(4, 5)), Var(Mat::Zero(3, 2))), DimensionError);
  try {
    matmul(Var(Mat::Zero(4, 5)), Var(Mat::Zero(3, 2)));
  } catch (const DimensionError& e) {
    std::string msg = e.what();
    CHECK(msg.find("4x5") != std::string::npos);
    CHECK(msg.find("3x2") != std::string::npos);
  }
}

TEST_CASE("matmul gradient vs finite differences") {
  std::mt19937_64 rng(7);
  Mat a0 = random_mat(rng, 4, 5), b0 = random_mat(rng, 5, 3);
  Var a(a0, true), b(b0, true);
  Var out = sum_all(matmul(a, b));
  backprop(out);

  auto fa = [&](const Mat& x) { return Mat(x * b0).sum(); };
  auto fb = [&](const Mat& x) { return Mat(a0 * x).sum(); };
  CHECK(max_rel_err(a.grad(), fd_grad(fa, a0)) < 1e-6);
  CHECK(max_rel_err(b.grad(), fd_grad(fb, b0)) < 1e-6);
}

TEST_CASE("softmax values") {
  Var x(m2({{0, 0, 0}}));
  Mat s = softmax_rows(x).value();
  for (int j = 0; j < 3; ++j) CHECK(s(0, j) == doctest::Approx(1.0 / 3).epsilon(1e-14));

  Mat big = softmax_rows(Var(m2({{1000, 0}}))).value();
  CHECK(std::abs(big(0, 0) - 1.0) < 1e-12);
  CHECK(std::abs(big(0, 1)) < 1e-12);

  // direct exp/sum oracle
  Mat t = m2({{1, 2, 3}});
  Mat got = softmax_rows(Var(t)).value();
  double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  for (int j = 0; j < 3; ++j)
    CHECK(std::abs(got(0, j) - std::exp(t(0, j)) / z) < 1e-12);

  Mat bad = m2({{1, 2}});
  bad(0, 1) = std::nan("");
  CHECK_THROWS_AS(softmax_rows(Var(bad)), NumericError);
}

TEST_CASE("softmax invariances") {
  std::mt19937_64 rng(11);
  for (int it = 0; it < 50; ++it) {
    Mat x = random_mat(rng, 3, 6, -5, 5);
    Mat s = softmax_rows(Var(x)).value();
    for (Index i = 0; i < s.rows(); ++i) CHECK(std::abs(s.row(i).sum() - 1.0) < 1e-12);
    Mat shifted = x.array() + 3.25;
    Mat s2 = softmax_rows(Var(shifted)).value();
    CHECK((s - s2).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("layer_norm values") {
  Var gain(Mat::Ones(1, 4)), bias(Mat::Zero(1, 4));
  Mat constant = Mat::Constant(2, 4, 3.7);
  Mat out = layer_norm_rows(Var(constant), gain, bias).value();
  CHECK(out.cwiseAbs().maxCoeff() == 0.0);

  Var g2(Mat::Ones(1, 2)), b2(Mat::Zero(1, 2));
  Mat two = layer_norm_rows(Var(m2({{1, 3}})), g2, b2).value();
  CHECK(two(0, 0) == doctest::Approx(-1.0).epsilon(1e-5));
  CHECK(two(0, 1) == doctest::Approx(1.0).epsilon(1e-5));

  std::mt19937_64 rng(3);
  Var g8(Mat::Ones(1, 8)), b8(Mat::Zero(1, 8));
  Mat x = random_mat(rng, 3, 8, -10.0, 10.0);
  Mat y = layer_norm_rows(Var(x), g8, b8).value();
  for (Index i = 0; i < 3; ++i) {
    const double mu = y.row(i).mean();
    const double var = (y.row(i).array() - mu).square().sum() / 8.0;
    CHECK(std::abs(mu) < 1e-6);
    CHECK(std::abs(var - 1.0) < 1e-6);
  }
}

TEST_CASE("layer_norm gradient") {
  std::mt19937_64 rng(5);
  Mat x0 = random_mat(rng, 3, 6), g0 = random_mat(rng, 1, 6, 0.5, 1.5), b0 = random_mat(rng, 1, 6);
  Var x(x0, true), g(g0, true), b(b0, true);
  backprop(sum_all(mul(layer_norm_rows(x, g, b), layer_norm_rows(x, g, b))));

  auto f = [&](const Mat& xin, const Mat& gin, const Mat& bin) {
    Var xx(xin), gg(gin), bb(bin);
    Var y = layer_norm_rows(xx, gg, bb);
    return mul(y, y).value().sum();
  };
  CHECK(max_rel_err(x.grad(), fd_grad([&](const Mat& m) { return f(m, g0, b0); }, x0)) < 1e-5);
  CHECK(max_rel_err(g.grad(), fd_grad([&](const Mat& m) { return f(x0, m, b0); }, g0)) < 1e-5);
  CHECK(max_rel_err(b.grad(), fd_grad([&](const Mat& m) { return f(x0, g0, m); }, b0)) < 1e-5);
}

TEST_CASE("mlp_forward") {
  // single identity layer leaves input unchanged
  Var w(Mat::Identity(3, 3).eval()), b(Mat::Zero(1, 3));
  Mat x = m2({{0.5, -1, 2}});
  CHECK((mlp_forward(Var(x), {{w, b}}).value() - x).cwiseAbs().maxCoeff() == 0.0);

  // two fixed layers, hand-computed forward
  Var w1(m2({{1, 0}, {0, -1}})), b1(m2({{0.5, 0.5}}));
  Var w2(m2({{2}, {1}})), b2(m2({{-1}}));
  Mat in = m2({{1, 2}});
  // h = relu([1*1, -2] + [0.5, 0.5]) = relu([1.5, -1.5]) = [1.5, 0]
  // out = 1.5*2 + 0*1 - 1 = 2
  Mat out = mlp_forward(Var(in), {{w1, b1}, {w2, b2}}).value();
  CHECK(out(0, 0) == doctest::Approx(2.0).epsilon(1e-15));

  // gradient check on 4 -> 8 -> 2
  std::mt19937_64 rng(13);
  Mat x0 = random_mat(rng, 3, 4);
  Mat w1m = random_mat(rng, 4, 8), b1m = random_mat(rng, 1, 8);
  Mat w2m = random_mat(rng, 8, 2), b2m = random_mat(rng, 1, 2);
  Var xv(x0, true), w1v(w1m, true), b1v(b1m, true), w2v(w2m, true), b2v(b2m, true);
  backprop(sum_all(mlp_forward(xv, {{w1v, b1v}, {w2v, b2v}})));

  auto run = [&](const Mat& a, const Mat& c, const Mat& d, const Mat& e, const Mat& f) {
    return mlp_forward(Var(a), {{Var(c), Var(d)}, {Var(e), Var(f)}}).value().sum();
  };
  CHECK(max_rel_err(xv.grad(), fd_grad([&](const Mat& m) { return run(m, w1m, b1m, w2m, b2m); }, x0)) < 1e-5);
  CHECK(max_rel_err(w1v.grad(), fd_grad([&](const Mat& m) { return run(x0, m, b1m, w2m, b2m); }, w1m)) < 1e-5);
  CHECK(max_rel_err(b1v.grad(), fd_grad([&](const Mat& m) { return run(x0, w1m, m, w2m, b2m); }, b1m)) < 1e-5);
  CHECK(max_rel_err(w2v.grad(), fd_grad([&](const Mat& m) { return run(x0, w1m, b1m, m, b2m); }, w2m)) < 1e-5);
  CHECK(max_rel_err(b2v.grad(), fd_grad([&](const Mat& m) { return run(x0, w1m, b1m, w2m, m); }, b2m)) < 1e-5);
}

TEST_CASE("backward contract") {
  Var x(Mat::Ones(2, 2), true);
  CHECK_THROWS_AS(backprop(scale(x, 2.0)), ContractError);

  // reuse accumulates rather than overwrites
  Var y(Mat::Ones(1, 3), true);
  backprop(sum_all(add(y, y)));
  CHECK((y.grad().array() == 2.0).all());

  Var z(m2({{0.7, -0.3, 1.1}}), true);
  backprop(sum_all(add(mul(z, z), scale(z, 3.0))));  // d/dz (z^2 + 3z) = 2z + 3
  Mat expect = (2.0 * z.value().array() + 3.0).matrix();
  CHECK(max_rel_err(z.grad(), expect) < 1e-12);
}

TEST_CASE("gradients of elementwise and shape ops") {
  std::mt19937_64 rng(17);

  auto check_unary = [&](const std::string& name, auto op, Mat x0, double tol = 1e-5) {
    INFO("op: ", name);
    Var x(x0, true);
    Var y = op(x);
    backprop(sum_all(mul(y, y)));  // squared loss keeps gradients nondegenerate
    auto f = [&](const Mat& m) {
      Var t = op(Var(m));
      return mul(t, t).value().sum();
    };
    CHECK(max_rel_err(x.grad(), fd_grad(f, x0)) < tol);
  };

  check_unary("tanh", [](const Var& v) { return tanh_of(v); }, random_mat(rng, 3, 4));
  check_unary("exp", [](const Var& v) { return exp_of(v); }, random_mat(rng, 3, 4));
  check_unary("log", [](const Var& v) { return log_of(v); }, random_mat(rng, 3, 4, 0.5, 2.0));
  check_unary("abs", [](const Var& v) { return abs_of(v); }, random_mat(rng, 3, 4, 0.2, 1.0));
  check_unary("relu", [](const Var& v) { return relu(v); }, random_mat(rng, 3, 4, 0.1, 1.0));
  check_unary("square", [](const Var& v) { return square(v); }, random_mat(rng, 3, 4));
  check_unary("transpose", [](const Var& v) { return transpose(scale(v, 2.0)); }, random_mat(rng, 3, 4));
  check_unary("softmax", [](const Var& v) { return softmax_rows(v); }, random_mat(rng, 3, 5));
  check_unary("logsumexp", [](const Var& v) { return logsumexp_rows(v); }, random_mat(rng, 4, 5));
  check_unary("reshape", [](const Var& v) { return reshape(v, 2, 6); }, random_mat(rng, 3, 4));
  check_unary("slice_rows", [](const Var& v) { return slice_rows(v, 1, 2); }, random_mat(rng, 4, 3));
  check_unary("slice_cols", [](const Var& v) { return slice_cols(v, 1, 2); }, random_mat(rng, 3, 4));
  check_unary("gather_rows", [](const Var& v) { return gather_rows(v, {2, 0, 2}); }, random_mat(rng, 4, 3));
  {
    // weighted linear loss: a squared loss is constant here (sin^2 + cos^2)
    Mat pw = random_mat(rng, 5, 16);
    check_unary("pe", [pw](const Var& v) { return mul_const(sinusoidal_pe(v, 16), pw); },
                random_mat(rng, 5, 2, -20, 20));
  }
  check_unary("mean", [](const Var& v) { return mean_all(v); }, random_mat(rng, 3, 4));

  // binary ops
  Mat a0 = random_mat(rng, 3, 4), b0 = random_mat(rng, 3, 4, 0.5, 1.5);
  Var a(a0, true), b(b0, true);
  backprop(sum_all(div(mul(a, b), add(b, b))));
  auto fa = [&](const Mat& m) {
    return div(mul(Var(m), Var(b0)), add(Var(b0), Var(b0))).value().sum();
  };
  auto fb = [&](const Mat& m) {
    return div(mul(Var(a0), Var(m)), add(Var(m), Var(m))).value().sum();
  };
  CHECK(max_rel_err(a.grad(), fd_grad(fa, a0)) < 1e-5);
  CHECK(max_rel_err(b.grad(), fd_grad(fb, b0)) < 1e-5);

  // row-broadcast bias
  Mat c0 = random_mat(rng, 1, 4);
  Var big(a0, true), bias(c0, true);
  backprop(sum_all(mul(add(big, bias), add(big, bias))));
  auto fbig = [&](const Mat& m) {
    Var t = add(Var(m), Var(c0));
    return mul(t, t).value().sum();
  };
  auto fbias = [&](const Mat& m) {
    Var t = add(Var(a0), Var(m));
    return mul(t, t).value().sum();
  };
  CHECK(max_rel_err(big.grad(), fd_grad(fbig, a0)) < 1e-5);
  CHECK(max_rel_err(bias.grad(), fd_grad(fbias, c0)) < 1e-5);

  // concat
  Mat d0 = random_mat(rng, 3, 2);
  Var d(d0, true), e(a0, true);
  backprop(sum_all(square(concat_cols(e, d))));
  auto fd_ = [&](const Mat& m) {
    Var t = concat_cols(Var(a0), Var(m));
    return mul(t, t).value().sum();
  };
  CHECK(max_rel_err(d.grad(), fd_grad(fd_, d0)) < 1e-5);

  Var r1(random_mat(rng, 2, 3), true), r2(random_mat(rng, 1, 3), true);
  Mat r1v = r1.value(), r2v = r2.value();
  backprop(sum_all(square(concat_rows({r1, r2}))));
  auto fr = [&](const Mat& m) {
    Var t = concat_rows({Var(m), Var(r2v)});
    return mul(t, t).value().sum();
  };
  CHECK(max_rel_err(r1.grad(), fd_grad(fr, r1v)) < 1e-5);

  // matmul_nt
  Mat p0 = random_mat(rng, 3, 4), q0 = random_mat(rng, 5, 4);
  Var p(p0, true), q(q0, true);
  backprop(sum_all(matmul_nt(p, q)));
  CHECK(max_rel_err(p.grad(), fd_grad([&](const Mat& m) { return Mat(m * q0.transpose()).sum(); }, p0)) < 1e-6);
  CHECK(max_rel_err(q.grad(), fd_grad([&](const Mat& m) { return Mat(p0 * m.transpose()).sum(); }, q0)) < 1e-6);
}

TEST_CASE("segment max pooling") {
  std::mt19937_64 rng(23);
  Mat x0 = random_mat(rng, 6, 3);
  std::vector<std::uint8_t> valid{1, 1, 0, 1, 1, 1};
  Var x(x0, true);
  Var pooled = segment_max_rows(x, 3, valid);
  CHECK(pooled.rows() == 2);
  for (Index c = 0; c < 3; ++c) {
    CHECK(pooled.value()(0, c) == doctest::Approx(std::max(x0(0, c), x0(1, c))).epsilon(1e-15));
    CHECK(pooled.value()(1, c) ==
          doctest::Approx(std::max({x0(3, c), x0(4, c), x0(5, c)})).epsilon(1e-15));
  }
  backprop(sum_all(square(pooled)));
  auto f = [&](const Mat& m) {
    Var t = segment_max_rows(Var(m), 3, valid);
    return mul(t, t).value().sum();
  };
  CHECK(max_rel_err(x.grad(), fd_grad(f, x0)) < 1e-5);

  std::vector<std::uint8_t> none{0, 0, 0, 1, 1, 1};
  CHECK_THROWS_AS(segment_max_rows(x, 3, none), ContractError);
}

TEST_CASE("positional encoding values") {
  Mat zero = sinusoidal_pe_values(Mat::Zero(1, 2), 16);
  for (Index j = 0; j < 16; j += 2) {
    CHECK(zero(0, j) == 0.0);
    CHECK(zero(0, j + 1) == 1.0);
  }
  // deterministic
  Mat p = m2({{3.5, -2.25}});
  CHECK(sinusoidal_pe_values(p, 32) == sinusoidal_pe_values(p, 32));

  // lowest band has wavelength 1000 m: phase difference over 1000 m is 1 rad
  Mat pa = m2({{0.0, 0.0}}), pb = m2({{1000.0, 0.0}});
  Mat ea = sinusoidal_pe_values(pa, 16), eb = sinusoidal_pe_values(pb, 16);
  // last band columns: 4*(B-1) .. with B = 4 bands -> columns 12..15
  CHECK(eb(0, 12) == doctest::Approx(std::sin(1.0)).epsilon(1e-12));
  CHECK(eb(0, 13) == doctest::Approx(std::cos(1.0)).epsilon(1e-12));
  CHECK(ea(0, 12) == 0.0);
}

TEST_CASE("adamw single steps") {
  ParameterStore store;
  Var p = store.create("p", Mat::Ones(1, 1));
  AdamWConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.0;
  AdamW opt(store, cfg);

  // zero gradient, zero weight decay: unchanged
  store.zero_grad();
  opt.step();
  CHECK(p.value()(0, 0) == doctest::Approx(1.0).epsilon(1e-15));

  // unit gradient: bias-corrected first step moves by ~lr
  ParameterStore store2;
  Var p2 = store2.create("p", Mat::Ones(1, 1));
  AdamW opt2(store2, cfg);
  store2.zero_grad();
  backprop(p2);  // d p2 / d p2 = 1
  opt2.step();
  CHECK(p2.value()(0, 0) == doctest::Approx(0.9).epsilon(1e-7));
}

TEST_CASE("adamw quadratic bowl") {
  ParameterStore store;
  Var p = store.create("p", Mat::Ones(1, 1));
  AdamWConfig cfg;
  cfg.lr = 0.01;
  cfg.weight_decay = 0.0;
  AdamW opt(store, cfg);
  for (int i = 0; i < 500; ++i) {
    store.zero_grad();
    backprop(square(p));
    opt.step();
  }
  CHECK(std::abs(p.value()(0, 0)) < 1e-3);
}

TEST_CASE("deterministic trajectories") {
  auto run = [](std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    ParameterStore store;
    Var w = store.create("w", 4, 4, uniform_init(rng, -1, 1));
    Var b = store.create("b", 1, 4, uniform_init(rng, -1, 1));
    AdamWConfig cfg;
    cfg.lr = 0.01;
    AdamW opt(store, cfg);
    Mat x0 = random_mat(rng, 8, 4);
    for (int i = 0; i < 25; ++i) {
      store.zero_grad();
      backprop(mean_all(square(add(matmul(Var(x0), w), b))));
      opt.step();
    }
    Mat out(2, 4 * 4 / 4 + 1);  // unused shape guard
    (void)out;
    Mat flat(1, 20);
    flat.leftCols(16) = Eigen::Map<const Mat>(w.value().data(), 1, 16);
    flat.rightCols(4) = b.value();
    return flat;
  };
  Mat r1 = run(42), r2 = run(42);
  CHECK(std::memcmp(r1.data(), r2.data(), sizeof(double) * 20) == 0);
}

TEST_CASE("no-grad guard skips graph construction") {
  Var w(Mat::Ones(2, 2), true);
  {
    NoGradGuard guard;
    Var out = matmul(w, w);
    CHECK_FALSE(out.requires_grad());
  }
  Var out2 = matmul(w, w);
  CHECK(out2.requires_grad());
}
