#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "mgtr/types.hpp"

namespace mgtr::ad {

struct Node;
using NodePtr = std::shared_ptr<Node>;

// One tensor in the computation graph. Values are dense row-major doubles;
// rank-3 quantities are stored flattened row-major and documented per use.
// Parents are created before children, so node ids give a topological order.
struct Node {
  Mat value;
  Mat grad;  // empty until touched by a backward sweep
  bool requires_grad = false;
  std::uint64_t id = 0;
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward;  // accumulates into parents' grads

  Mat& grad_ref();  // allocates zeros of value's shape on first use
};

// Value-semantics handle to a graph node.
class Var {
 public:
  Var() = default;
  explicit Var(Mat value, bool requires_grad = false);
  explicit Var(NodePtr node) : node_(std::move(node)) {}
  static Var scalar(double v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Mat& value() const;
  Mat& value_mut();  // optimizer / checkpoint-load entry point
  const Mat& grad() const;
  bool requires_grad() const;
  Index rows() const;
  Index cols() const;
  Index size() const { return rows() * cols(); }
  void zero_grad();

  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

// While alive, newly created nodes record no graph (inference mode).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};
bool grad_enabled();

Var make_node(Mat value, std::vector<NodePtr> parents, std::function<void(Node&)> backward);

// Elementwise and structural ops. `add`/`sub` accept equal shapes or a 1 x n
// second argument broadcast over rows (bias convention).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);  // elementwise, equal shapes
Var div(const Var& a, const Var& b);  // elementwise, equal shapes
Var scale(const Var& a, double s);
Var add_const(const Var& a, const Mat& c);  // c is not differentiated
Var mul_const(const Var& a, const Mat& c);
Var neg(const Var& a);
Var relu(const Var& a);
Var tanh_of(const Var& a);
Var exp_of(const Var& a);
Var log_of(const Var& a);
Var abs_of(const Var& a);  // subgradient 0 at 0
Var square(const Var& a);
Var transpose(const Var& a);

Var matmul(const Var& a, const Var& b);     // (m x k) * (k x n)
Var matmul_nt(const Var& a, const Var& b);  // (m x k) * (n x k)^T

Var sum_all(const Var& a);  // 1 x 1
Var mean_all(const Var& a);

// Row-wise softmax, numerically stabilized by max subtraction. -inf entries
// are legal (masked attention); rows of all -inf are not. Non-finite input
// other than -inf raises NumericError.
Var softmax_rows(const Var& a);
Var logsumexp_rows(const Var& a);  // n x 1, same stabilization

// Per-row standardization with epsilon 1e-5 inside the square root, then
// affine by gain/bias (both 1 x n). Zero-variance rows map to the affine of
// zeros.
Var layer_norm_rows(const Var& a, const Var& gain, const Var& bias);

Var reshape(const Var& a, Index rows, Index cols);  // row-major reinterpretation
Var concat_cols(const Var& a, const Var& b);
Var concat_rows(const std::vector<Var>& parts);
Var slice_rows(const Var& a, Index first, Index count);
Var slice_cols(const Var& a, Index first, Index count);
Var gather_rows(const Var& a, std::vector<Index> idx);

// Max over each block of `segment` consecutive rows, per column, restricted to
// rows whose valid flag is nonzero. Gradient flows to the first attaining row.
// A block with no valid row raises ContractError.
Var segment_max_rows(const Var& a, Index segment, const std::vector<std::uint8_t>& valid);

// Sinusoidal encoding of 2D positions (n x 2) into `dim` channels, dim % 4 == 0.
// Band b of dim/4 uses wavelength 1000^(b/(B-1)) m; layout per band is
// [sin(x w), cos(x w), sin(y w), cos(y w)]. Differentiable in the positions.
Var sinusoidal_pe(const Var& positions, Index dim);
Mat sinusoidal_pe_values(const Mat& positions, Index dim);  // graph-free

// Multi-layer perceptron: affine then ReLU after every layer except the last.
struct Linear {
  Var weight;  // in x out
  Var bias;    // 1 x out
};
Var mlp_forward(const Var& x, const std::vector<Linear>& layers);

// Reverse-mode sweep from a scalar (1 x 1) loss. Accumulates into the grad of
// every reachable requires_grad node; callers zero parameter grads beforehand
// so untouched parameters read as zero.
void backprop(const Var& loss);

}  // namespace mgtr::ad
