#include "mgtr/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <string>
#include <unordered_set>
#include <utility>

#include "mgtr/errors.hpp"

namespace mgtr::ad {

namespace {

std::atomic<std::uint64_t> g_next_id{1};
thread_local bool g_grad_enabled = true;

std::string shape_str(const Mat& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

struct Shapes {
  static void require(bool ok, const std::string& what) {
    if (!ok) throw DimensionError(what);
  }
};

NodePtr fresh(Mat value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  return n;
}

bool any_grad(const std::vector<NodePtr>& parents) {
  if (!g_grad_enabled) return false;
  for (const auto& p : parents)
    if (p && p->requires_grad) return true;
  return false;
}

}  // namespace

Mat& Node::grad_ref() {
  if (grad.rows() != value.rows() || grad.cols() != value.cols())
    grad = Mat::Zero(value.rows(), value.cols());
  return grad;
}

Var::Var(Mat value, bool requires_grad) {
  node_ = fresh(std::move(value));
  node_->requires_grad = requires_grad;
}

Var Var::scalar(double v, bool requires_grad) {
  Mat m(1, 1);
  m(0, 0) = v;
  return Var(std::move(m), requires_grad);
}

const Mat& Var::value() const {
  if (!node_) throw ContractError("Var: undefined handle");
  return node_->value;
}

Mat& Var::value_mut() {
  if (!node_) throw ContractError("Var: undefined handle");
  return node_->value;
}

const Mat& Var::grad() const {
  if (!node_) throw ContractError("Var: undefined handle");
  return node_->grad_ref();
}

bool Var::requires_grad() const { return node_ && node_->requires_grad; }
Index Var::rows() const { return value().rows(); }
Index Var::cols() const { return value().cols(); }

void Var::zero_grad() {
  if (node_) node_->grad_ref().setZero();
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }
bool grad_enabled() { return g_grad_enabled; }

Var make_node(Mat value, std::vector<NodePtr> parents, std::function<void(Node&)> backward) {
  NodePtr n = fresh(std::move(value));
  if (any_grad(parents)) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backward = std::move(backward);
  }
  return Var(n);
}

// ---------------------------------------------------------------------------
// elementwise

namespace {

// b may equal a's shape or be a 1 x n row broadcast over a's rows.
void check_add_shapes(const Var& a, const Var& b, const char* op) {
  const bool same = a.rows() == b.rows() && a.cols() == b.cols();
  const bool row_bcast = b.rows() == 1 && b.cols() == a.cols();
  Shapes::require(same || row_bcast, std::string(op) + ": shape mismatch: " +
                                         shape_str(a.value()) + " vs " + shape_str(b.value()));
}

void accumulate_row_aware(Node& parent, const Mat& g) {
  if (parent.value.rows() == g.rows()) {
    parent.grad_ref() += g;
  } else {
    parent.grad_ref() += g.colwise().sum();
  }
}

}  // namespace

Var add(const Var& a, const Var& b) {
  check_add_shapes(a, b, "add");
  Mat v = (b.rows() == a.rows()) ? Mat(a.value() + b.value())
                                 : Mat(a.value().rowwise() + Eigen::RowVectorXd(b.value().row(0)));
  auto pa = a.node(), pb = b.node();
  return make_node(std::move(v), {pa, pb}, [pa, pb](Node& self) {
    if (pa->requires_grad) pa->grad_ref() += self.grad;
    if (pb->requires_grad) accumulate_row_aware(*pb, self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  check_add_shapes(a, b, "sub");
  Mat v = (b.rows() == a.rows()) ? Mat(a.value() - b.value())
                                 : Mat(a.value().rowwise() - Eigen::RowVectorXd(b.value().row(0)));
  auto pa = a.node(), pb = b.node();
  return make_node(std::move(v), {pa, pb}, [pa, pb](Node& self) {
    if (pa->requires_grad) pa->grad_ref() += self.grad;
    if (pb->requires_grad) {
      Mat neg = -self.grad;
      accumulate_row_aware(*pb, neg);
    }
  });
}

Var mul(const Var& a, const Var& b) {
  Shapes::require(a.rows() == b.rows() && a.cols() == b.cols(),
                  "mul: shape mismatch: " + shape_str(a.value()) + " vs " + shape_str(b.value()));
  Mat v = a.value().cwiseProduct(b.value());
  auto pa = a.node(), pb = b.node();
  return make_node(std::move(v), {pa, pb}, [pa, pb](Node& self) {
    if (pa->requires_grad) pa->grad_ref() += self.grad.cwiseProduct(pb->value);
    if (pb->requires_grad) pb->grad_ref() += self.grad.cwiseProduct(pa->value);
  });
}

Var div(const Var& a, const Var& b) {
  Shapes::require(a.rows() == b.rows() && a.cols() == b.cols(),
                  "div: shape mismatch: " + shape_str(a.value()) + " vs " + shape_str(b.value()));
  Mat v = a.value().cwiseQuotient(b.value());
  auto pa = a.node(), pb = b.node();
  return make_node(std::move(v), {pa, pb}, [pa, pb](Node& self) {
    if (pa->requires_grad) pa->grad_ref() += self.grad.cwiseQuotient(pb->value);
    if (pb->requires_grad)
      pb->grad_ref() -= self.grad.cwiseProduct(pa->value).cwiseQuotient(pb->value.cwiseProduct(pb->value));
  });
}

Var scale(const Var& a, double s) {
  Mat v = a.value() * s;
  auto pa = a.node();
  return make_node(std::move(v), {pa}, [pa, s](Node& self) {
    if (pa->requires_grad) pa->grad_ref() += self.grad * s;
  });
}

Var add_const(const Var& a, const Mat& c) {
  Shapes::require(a.rows() == c.rows() && a.cols() == c.cols(),
                  "add_const: shape mismatch: " + shape_str(a.value()) + " vs " + shape_str(c));
  Mat v = a.value() + c;
  auto pa = a.node();
  return make_node(std::move(v), {pa}, [pa](Node& self) {
    if (pa->requires_grad) pa->grad_ref() += self.grad;
  });
}

Var mul_const(const Var& a, const Mat& c) {
  Shapes::require(a.rows() == c.rows() && a.cols() == c.cols(),
                  "mul_const: shape mismatch: " + shape_str(a.value()) + " vs " + shape_str(c));
  Mat v = a.value().cwiseProduct(c);
  auto pa = a.node();
  return make_node(std::move(v), {pa}, [pa, c](Node& self) {
    if (pa->requires_grad) pa->grad_ref() += self.grad.cwiseProduct(c);
  });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var relu(const Var& a) {
  Mat v = a.value().cwiseMax(0.0);
  auto pa = a.node();
  return make_node(std::move(v), {pa}, [pa](Node& self) {
    if (!pa->requires_grad) return;
    pa->grad_ref() += self.grad.cwiseProduct((pa->value.array() > 0.0).cast<double>().matrix());
  });
}

Var tanh_of(const Var& a) {
  Mat v = a.value().array().tanh().matrix();
  auto pa = a.node();
  return make_node(std::move(v), {pa}, [pa](Node& self) {
    if (!pa->requires_grad) return;
    pa->grad_ref() += self.grad.cwiseProduct((1.0 - self.value.array().square()).matrix());
  });
}

Var exp_of(const Var& a) {
  Mat v = a.value().array().exp().matrix();
  auto pa = a.node();
  return make_node(std::move(v), {pa}, [pa](Node& self) {
    if (!pa->requires_grad) return;
    pa->grad_ref() += self.grad.cwiseProduct(self.value);
  });
}

Var log_of(const Var& a) {
  Mat v = a.value().array().log().matrix();
  auto pa = a.node();
  return make_node(std::move(v), {pa}, [pa](Node& self) {
    if (!pa->requires_grad) return;
    pa->grad_ref() += self.grad.cwiseQuotient(pa->value);
  });
}

Var abs_of(const Var& a) {
  Mat v = a.value().cwiseAbs();
  auto pa = a.node();
  return make_node(std::move(v), {pa}, [pa](Node& self) {
    if (!pa->requires_grad) return;
    pa->grad_ref() += self.grad.cwiseProduct(pa->value.unaryExpr(
        [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }));
  });
}

Var square(const Var& a) { return mul(a, a); }

Var transpose(const Var& a) {
  Mat v = a.value().transpose();
  auto pa = a.node();
  return make_node(std::move(v), {pa}, [pa](Node& self) {
    if (pa->requires_grad) pa->grad_ref() += self.grad.transpose();
  });
}

// ---------------------------------------------------------------------------
// products

Var matmul(const Var& a, const Var& b) {
  Shapes::require(a.cols() == b.rows(), "matmul: inner dimensions disagree: " +
                                            shape_str(a.value()) + " vs " + shape_str(b.value()));
  Mat v = a.value() * b.value();
  auto pa = a.node(), pb = b.node();
  return make_node(std::move(v), {pa, pb}, [pa, pb](Node& self) {
    if (pa->requires_grad) pa->grad_ref() += self.grad * pb->value.transpose();
    if (pb->requires_grad) pb->grad_ref() += pa->value.transpose() * self.grad;
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  Shapes::require(a.cols() == b.cols(), "matmul_nt: inner dimensions disagree: " +
                                            shape_str(a.value()) + " vs " + shape_str(b.value()));
  Mat v = a.value() * b.value().transpose();
  auto pa = a.node(), pb = b.node();
  return make_node(std::move(v), {pa, pb}, [pa, pb](Node& self) {
    if (pa->requires_grad) pa->grad_ref() += self.grad * pb->value;
    if (pb->requires_grad) pb->grad_ref() += self.grad.transpose() * pa->value;
  });
}

// ---------------------------------------------------------------------------
// reductions and row ops

Var sum_all(const Var& a) {
  Mat v(1, 1);
  v(0, 0) = a.value().sum();
  auto pa = a.node();
  return make_node(std::move(v), {pa}, [pa](Node& self) {
    if (pa->requires_grad) pa->grad_ref().array() += self.grad(0, 0);
  });
}

Var mean_all(const Var& a) {
  const double inv = 1.0 / static_cast<double>(a.size());
  return scale(sum_all(a), inv);
}

namespace {

void check_softmax_input(const Mat& x, const char* op) {
  // -inf is the masking sentinel and legal; +inf and NaN are not.
  for (Index i = 0; i < x.rows(); ++i) {
    bool any_finite = false;
    for (Index j = 0; j < x.cols(); ++j) {
      const double e = x(i, j);
      if (std::isnan(e) || (std::isinf(e) && e > 0))
        throw NumericError(std::string(op) + ": non-finite input");
      if (std::isfinite(e)) any_finite = true;
    }
    if (!any_finite) throw NumericError(std::string(op) + ": row with no finite entry");
  }
}

}  // namespace

namespace {

// exp(x - m) with -inf (mask sentinel) and deep underflow flushed to an exact
// zero; Eigen's vectorized exp would clamp -inf to ~2e-308 and flood the
// downstream matmuls with subnormals.
void stable_exp_row(const Mat& x, Index i, double m, Eigen::ArrayXd& e) {
  const Index n = x.cols();
  e.resize(n);
  for (Index j = 0; j < n; ++j) {
    const double d = x(i, j) - m;
    e(j) = d < -700.0 ? 0.0 : std::exp(d);
  }
}

}  // namespace

Var softmax_rows(const Var& a) {
  check_softmax_input(a.value(), "softmax");
  const Mat& x = a.value();
  Mat v(x.rows(), x.cols());
  Eigen::ArrayXd e;
  for (Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    stable_exp_row(x, i, m, e);
    v.row(i) = (e / e.sum()).matrix().transpose();
  }
  auto pa = a.node();
  return make_node(std::move(v), {pa}, [pa](Node& self) {
    if (!pa->requires_grad) return;
    Mat& g = pa->grad_ref();
    for (Index i = 0; i < self.value.rows(); ++i) {
      const auto s = self.value.row(i).array();
      const auto gy = self.grad.row(i).array();
      const double dot = (gy * s).sum();
      g.row(i) += (s * (gy - dot)).matrix();
    }
  });
}

Var logsumexp_rows(const Var& a) {
  check_softmax_input(a.value(), "logsumexp");
  const Mat& x = a.value();
  Mat v(x.rows(), 1);
  Mat soft(x.rows(), x.cols());
  Eigen::ArrayXd e;
  for (Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    stable_exp_row(x, i, m, e);
    const double s = e.sum();
    v(i, 0) = m + std::log(s);
    soft.row(i) = (e / s).matrix().transpose();
  }
  auto pa = a.node();
  return make_node(std::move(v), {pa}, [pa, soft](Node& self) {
    if (!pa->requires_grad) return;
    Mat& g = pa->grad_ref();
    for (Index i = 0; i < soft.rows(); ++i) g.row(i) += self.grad(i, 0) * soft.row(i);
  });
}

Var layer_norm_rows(const Var& a, const Var& gain, const Var& bias) {
  constexpr double kEps = 1e-5;
  Shapes::require(gain.rows() == 1 && gain.cols() == a.cols() && bias.rows() == 1 &&
                      bias.cols() == a.cols(),
                  "layer_norm: gain/bias must be 1x" + std::to_string(a.cols()));
  const Mat& x = a.value();
  const Index n = x.cols();
  Mat xhat(x.rows(), n);
  Eigen::ArrayXd inv_std(x.rows());
  for (Index i = 0; i < x.rows(); ++i) {
    const double mu = x.row(i).mean();
    const double var = (x.row(i).array() - mu).square().sum() / static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + kEps);
    inv_std(i) = is;
    xhat.row(i) = ((x.row(i).array() - mu) * is).matrix();
  }
  Mat v(x.rows(), n);
  for (Index i = 0; i < x.rows(); ++i)
    v.row(i) = xhat.row(i).cwiseProduct(gain.value().row(0)) + bias.value().row(0);
  auto pa = a.node(), pg = gain.node(), pb = bias.node();
  return make_node(std::move(v), {pa, pg, pb}, [pa, pg, pb, xhat, inv_std](Node& self) {
    const Mat& gy = self.grad;
    if (pb->requires_grad) pb->grad_ref() += gy.colwise().sum();
    if (pg->requires_grad) pg->grad_ref() += gy.cwiseProduct(xhat).colwise().sum();
    if (pa->requires_grad) {
      Eigen::ArrayXd gamma = pg->value.row(0).transpose().array();
      Mat& g = pa->grad_ref();
      for (Index i = 0; i < xhat.rows(); ++i) {
        Eigen::ArrayXd xh = xhat.row(i).transpose().array();
        Eigen::ArrayXd gxhat = gy.row(i).transpose().array() * gamma;
        const double mean_g = gxhat.mean();
        const double mean_gx = (gxhat * xh).mean();
        Eigen::ArrayXd gx = inv_std(i) * (gxhat - mean_g - xh * mean_gx);
        g.row(i) += gx.matrix().transpose();
      }
    }
  });
}

// ---------------------------------------------------------------------------
// shape ops

Var reshape(const Var& a, Index rows, Index cols) {
  Shapes::require(rows * cols == a.size(), "reshape: element count mismatch: " +
                                               shape_str(a.value()) + " -> " + std::to_string(rows) +
                                               "x" + std::to_string(cols));
  Mat v = Eigen::Map<const Mat>(a.value().data(), rows, cols);
  auto pa = a.node();
  return make_node(std::move(v), {pa}, [pa](Node& self) {
    if (!pa->requires_grad) return;
    pa->grad_ref() += Eigen::Map<const Mat>(self.grad.data(), pa->value.rows(), pa->value.cols());
  });
}

Var concat_cols(const Var& a, const Var& b) {
  Shapes::require(a.rows() == b.rows(), "concat_cols: row counts disagree: " +
                                            shape_str(a.value()) + " vs " + shape_str(b.value()));
  Mat v(a.rows(), a.cols() + b.cols());
  v.leftCols(a.cols()) = a.value();
  v.rightCols(b.cols()) = b.value();
  auto pa = a.node(), pb = b.node();
  const Index ac = a.cols();
  return make_node(std::move(v), {pa, pb}, [pa, pb, ac](Node& self) {
    if (pa->requires_grad) pa->grad_ref() += self.grad.leftCols(ac);
    if (pb->requires_grad) pb->grad_ref() += self.grad.rightCols(self.grad.cols() - ac);
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_rows: empty input");
  Index rows = 0;
  const Index cols = parts.front().cols();
  for (const auto& p : parts) {
    Shapes::require(p.cols() == cols, "concat_rows: column counts disagree");
    rows += p.rows();
  }
  Mat v(rows, cols);
  std::vector<NodePtr> parents;
  std::vector<Index> offsets;
  Index off = 0;
  for (const auto& p : parts) {
    v.middleRows(off, p.rows()) = p.value();
    parents.push_back(p.node());
    offsets.push_back(off);
    off += p.rows();
  }
  return make_node(std::move(v), parents, [offsets](Node& self) {
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      Node& p = *self.parents[k];
      if (p.requires_grad) p.grad_ref() += self.grad.middleRows(offsets[k], p.value.rows());
    }
  });
}

Var slice_rows(const Var& a, Index first, Index count) {
  Shapes::require(first >= 0 && count >= 0 && first + count <= a.rows(),
                  "slice_rows: range out of bounds");
  Mat v = a.value().middleRows(first, count);
  auto pa = a.node();
  return make_node(std::move(v), {pa}, [pa, first, count](Node& self) {
    if (pa->requires_grad) pa->grad_ref().middleRows(first, count) += self.grad;
  });
}

Var slice_cols(const Var& a, Index first, Index count) {
  Shapes::require(first >= 0 && count >= 0 && first + count <= a.cols(),
                  "slice_cols: range out of bounds");
  Mat v = a.value().middleCols(first, count);
  auto pa = a.node();
  return make_node(std::move(v), {pa}, [pa, first, count](Node& self) {
    if (pa->requires_grad) pa->grad_ref().middleCols(first, count) += self.grad;
  });
}

Var gather_rows(const Var& a, std::vector<Index> idx) {
  for (Index i : idx)
    Shapes::require(i >= 0 && i < a.rows(), "gather_rows: index out of bounds");
  Mat v(static_cast<Index>(idx.size()), a.cols());
  for (std::size_t k = 0; k < idx.size(); ++k) v.row(static_cast<Index>(k)) = a.value().row(idx[k]);
  auto pa = a.node();
  return make_node(std::move(v), {pa}, [pa, idx = std::move(idx)](Node& self) {
    if (!pa->requires_grad) return;
    Mat& g = pa->grad_ref();
    for (std::size_t k = 0; k < idx.size(); ++k) g.row(idx[k]) += self.grad.row(static_cast<Index>(k));
  });
}

Var segment_max_rows(const Var& a, Index segment, const std::vector<std::uint8_t>& valid) {
  Shapes::require(segment > 0 && a.rows() % segment == 0,
                  "segment_max_rows: rows not divisible by segment");
  if (static_cast<Index>(valid.size()) != a.rows())
    throw ContractError("segment_max_rows: valid mask length mismatch");
  const Index nseg = a.rows() / segment;
  const Index cols = a.cols();
  Mat v(nseg, cols);
  // First attaining valid row per (segment, column); ties to the lowest row.
  std::vector<Index> arg(static_cast<std::size_t>(nseg * cols));
  for (Index s = 0; s < nseg; ++s) {
    bool any_valid = false;
    for (Index c = 0; c < cols; ++c) {
      double best = -std::numeric_limits<double>::infinity();
      Index best_r = -1;
      for (Index r = s * segment; r < (s + 1) * segment; ++r) {
        if (!valid[static_cast<std::size_t>(r)]) continue;
        any_valid = true;
        const double x = a.value()(r, c);
        if (x > best) {
          best = x;
          best_r = r;
        }
      }
      v(s, c) = best;
      arg[static_cast<std::size_t>(s * cols + c)] = best_r;
    }
    if (!any_valid) throw ContractError("segment_max_rows: segment with no valid row");
  }
  auto pa = a.node();
  return make_node(std::move(v), {pa}, [pa, arg = std::move(arg), cols](Node& self) {
    if (!pa->requires_grad) return;
    Mat& g = pa->grad_ref();
    for (Index s = 0; s < self.value.rows(); ++s)
      for (Index c = 0; c < cols; ++c)
        g(arg[static_cast<std::size_t>(s * cols + c)], c) += self.grad(s, c);
  });
}

// ---------------------------------------------------------------------------
// positional encoding

namespace {

Eigen::ArrayXd pe_frequencies(Index dim) {
  if (dim % 4 != 0 || dim <= 0) throw ContractError("sinusoidal_pe: dim must be a positive multiple of 4");
  const Index bands = dim / 4;
  Eigen::ArrayXd w(bands);
  for (Index b = 0; b < bands; ++b) {
    const double t = bands == 1 ? 0.0 : static_cast<double>(b) / static_cast<double>(bands - 1);
    w(b) = std::pow(1000.0, -t);  // wavelengths 1 m .. 1000 m
  }
  return w;
}

}  // namespace

Mat sinusoidal_pe_values(const Mat& positions, Index dim) {
  if (positions.cols() != 2) throw DimensionError("sinusoidal_pe: positions must be n x 2");
  const Eigen::ArrayXd w = pe_frequencies(dim);
  const Index bands = dim / 4;
  Mat v(positions.rows(), dim);
  for (Index i = 0; i < positions.rows(); ++i) {
    const double x = positions(i, 0), y = positions(i, 1);
    for (Index b = 0; b < bands; ++b) {
      v(i, 4 * b + 0) = std::sin(x * w(b));
      v(i, 4 * b + 1) = std::cos(x * w(b));
      v(i, 4 * b + 2) = std::sin(y * w(b));
      v(i, 4 * b + 3) = std::cos(y * w(b));
    }
  }
  return v;
}

Var sinusoidal_pe(const Var& positions, Index dim) {
  Mat v = sinusoidal_pe_values(positions.value(), dim);
  auto pa = positions.node();
  const Index bands = dim / 4;
  const Eigen::ArrayXd w = pe_frequencies(dim);
  return make_node(std::move(v), {pa}, [pa, bands, w](Node& self) {
    if (!pa->requires_grad) return;
    Mat& g = pa->grad_ref();
    for (Index i = 0; i < self.value.rows(); ++i) {
      double gx = 0, gy = 0;
      for (Index b = 0; b < bands; ++b) {
        const double sx = self.value(i, 4 * b + 0), cx = self.value(i, 4 * b + 1);
        const double sy = self.value(i, 4 * b + 2), cy = self.value(i, 4 * b + 3);
        gx += w(b) * (self.grad(i, 4 * b + 0) * cx - self.grad(i, 4 * b + 1) * sx);
        gy += w(b) * (self.grad(i, 4 * b + 2) * cy - self.grad(i, 4 * b + 3) * sy);
      }
      g(i, 0) += gx;
      g(i, 1) += gy;
    }
  });
}

Var mlp_forward(const Var& x, const std::vector<Linear>& layers) {
  if (layers.empty()) throw ContractError("mlp_forward: no layers");
  Var h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = add(matmul(h, layers[i].weight), layers[i].bias);
    if (i + 1 < layers.size()) h = relu(h);
  }
  return h;
}

// ---------------------------------------------------------------------------
// reverse sweep

void backprop(const Var& loss) {
  if (!loss.defined() || loss.rows() != 1 || loss.cols() != 1)
    throw ContractError("backprop: loss must be a 1x1 scalar");
  Node* root = loss.node().get();
  if (!root->requires_grad) return;

  // Reachable grad-requiring nodes; ids are topological (parents precede
  // children), so a reverse id sort gives a valid sweep order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{root};
  seen.insert(root);
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const auto& p : n->parents) {
      if (p && p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
  }
  std::sort(order.begin(), order.end(), [](const Node* a, const Node* b) { return a->id > b->id; });

  root->grad_ref().setConstant(1.0);
  for (Node* n : order) {
    if (!n->backward) continue;
    if (n->grad.size() == 0) continue;  // no downstream contribution reached it
    n->backward(*n);
  }
}

}  // namespace mgtr::ad
