#pragma once

#include <deque>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace navstate {

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct FiniteError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

/// Dense row-major matrix of doubles. Everything in this library is rank 1
/// or 2; a rank-1 tensor of length n is stored as a single row [1 x n].
class Tensor {
 public:
  Tensor() = default;
  Tensor(int rows, int cols, double fill = 0.0);

  static Tensor row(std::vector<double> values);
  static Tensor identity(int n);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int size() const { return rows_ * cols_; }
  bool empty() const { return data_.empty(); }

  double& at(int r, int c) { return data_[static_cast<size_t>(r) * cols_ + c]; }
  double at(int r, int c) const { return data_[static_cast<size_t>(r) * cols_ + c]; }
  double& operator[](int i) { return data_[i]; }
  double operator[](int i) const { return data_[i]; }
  /// Scalar access; throws unless the tensor is 1x1.
  double item() const;

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
  bool all_finite() const;
  std::string shape_str() const;

  void fill(double v);

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

class Tape;
struct Parameter;

/// Handle to a node on a Tape. Cheap to copy; values live on the tape.
class Var {
 public:
  Var() = default;
  bool valid() const { return tape_ != nullptr; }
  const Tensor& val() const;
  const Tensor& grad() const;
  bool requires_grad() const;
  Tape& tape() const { return *tape_; }
  int id() const { return id_; }

  int rows() const { return val().rows(); }
  int cols() const { return val().cols(); }

 private:
  friend class Tape;
  Var(Tape* t, int id) : tape_(t), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Reverse-mode tape. Operations append nodes in topological order; backward
/// walks the records once, newest to oldest, with fixed summation order so
/// seeded runs are bit-reproducible. First-order gradients only.
///
/// A tape constructed with grad_enabled=false records values but no backward
/// closures (cheap forward-only evaluation, e.g. inference rollouts and the
/// finite-difference oracle).
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  /// Constant leaf (no gradient).
  Var input(Tensor v);
  /// Free leaf, optionally differentiable.
  Var leaf(Tensor v, bool requires_grad);
  /// Leaf bound to a Parameter: after backward() the node's gradient is
  /// accumulated into the parameter's gradient buffer.
  Var param(Parameter& p);
  /// Copy of x's value with the gradient path cut.
  Var detach(Var x);

  /// Backpropagate from a scalar loss into every reachable leaf and bound
  /// parameter. Non-scalar loss is a contract error.
  void backward(Var loss);

  size_t size() const { return nodes_.size(); }

  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool grad_alloc = false;
    std::function<void(Tape&, int)> backward;  // (tape, own id)
    Parameter* bound = nullptr;
  };

  Node& node(int id) { return nodes_[id]; }
  const Node& node(int id) const { return nodes_[id]; }

  /// Append an operation result. `back` may be empty for non-differentiable
  /// results. Exposed so modules can define custom operations.
  Var emit(Tensor value, bool requires_grad, std::function<void(Tape&, int)> back);

  /// Gradient accumulator for a node, allocated and zeroed on first use.
  Tensor& grad_buf(int id);

  /// When set, every emitted value is scanned for NaN/Inf.
  static bool finite_checks;

 private:
  std::deque<Node> nodes_;
  bool grad_enabled_ = true;
};

// ---------------------------------------------------------------------------
// Operations. All take handles into the same tape.

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);           // same shape
Var add_bias(Var a, Var bias);   // [r x c] + [1 x c], broadcast over rows
Var sub(Var a, Var b);
Var mul(Var a, Var b);           // elementwise
Var div(Var a, Var b);           // elementwise
Var scale(Var a, double c);

Var sigmoid(Var x);
Var tanh(Var x);
Var exp(Var x);
Var log(Var x);
Var sqrt(Var x);
Var softplus(Var x);
Var clamp(Var x, double lo, double hi);

/// Row-wise softmax with max subtraction; temperature scales the logits.
Var softmax_rows(Var x, double temperature = 1.0);
Var log_softmax_rows(Var x);
/// Row-wise normalization to zero mean / unit variance (no affine part).
Var layer_norm(Var x, double eps = 1e-5);

Var concat_cols(Var a, Var b);
Var slice_cols(Var x, int c0, int c1);  // half-open column range
Var gather_rows(Var x, const std::vector<int>& idx);
/// Copy of `base` with rows replaced at `idx` by the rows of `rows`.
/// Untouched rows are copied bit-for-bit.
Var scatter_rows(Var base, Var rows, const std::vector<int>& idx);

/// Broadcast multiply by a 1x1 tensor.
Var scale_by(Var x, Var s);

Var sum_all(Var x);    // 1x1
Var mean_all(Var x);   // 1x1
Var mean_rows(Var x);  // [k x d] -> [1 x d]
Var gather_element(Var x, int r, int c);  // 1x1

/// Sums of a column vector over half-open row ranges -> [1 x m].
Var segment_sum(Var x, const std::vector<std::pair<int, int>>& ranges);
/// Normalizes a positive column vector to sum to one within each range.
Var segment_normalize(Var x, const std::vector<std::pair<int, int>>& ranges);

}  // namespace navstate
