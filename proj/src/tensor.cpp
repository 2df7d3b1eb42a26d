#include "navstate/tensor.hpp"

#include <cmath>

#include "navstate/nn.hpp"

namespace navstate {

bool Tape::finite_checks = true;

Tensor::Tensor(int rows, int cols, double fill)
    : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols, fill) {
  if (rows < 0 || cols < 0) throw ShapeError("Tensor: negative dimension");
}

Tensor Tensor::row(std::vector<double> values) {
  Tensor t;
  t.rows_ = 1;
  t.cols_ = static_cast<int>(values.size());
  t.data_ = std::move(values);
  return t;
}

Tensor Tensor::identity(int n) {
  Tensor t(n, n);
  for (int i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

double Tensor::item() const {
  if (rows_ != 1 || cols_ != 1)
    throw ContractError("item(): tensor is " + shape_str() + ", expected [1 x 1]");
  return data_[0];
}

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

std::string Tensor::shape_str() const {
  return "[" + std::to_string(rows_) + " x " + std::to_string(cols_) + "]";
}

void Tensor::fill(double v) {
  for (double& x : data_) x = v;
}

// ---------------------------------------------------------------------------

const Tensor& Var::val() const { return tape_->node(id_).value; }
const Tensor& Var::grad() const { return tape_->node(id_).grad; }
bool Var::requires_grad() const { return tape_->node(id_).requires_grad; }

Var Tape::input(Tensor v) { return leaf(std::move(v), false); }

Var Tape::leaf(Tensor v, bool requires_grad) {
  Node n;
  n.value = std::move(v);
  n.requires_grad = requires_grad && grad_enabled_;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::param(Parameter& p) {
  Node n;
  n.value = p.value;
  n.requires_grad = grad_enabled_;
  n.bound = &p;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::detach(Var x) { return input(x.val()); }

Var Tape::emit(Tensor value, bool requires_grad, std::function<void(Tape&, int)> back) {
  if (finite_checks && !value.all_finite())
    throw FiniteError("non-finite value produced by an operation");
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad && grad_enabled_;
  if (n.requires_grad) n.backward = std::move(back);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Tensor& Tape::grad_buf(int id) {
  Node& n = nodes_[id];
  if (!n.grad_alloc) {
    n.grad = Tensor(n.value.rows(), n.value.cols());
    n.grad_alloc = true;
  }
  return n.grad;
}

void Tape::backward(Var loss) {
  if (loss.val().rows() != 1 || loss.val().cols() != 1)
    throw ContractError("backward: loss must be scalar, got " + loss.val().shape_str());
  if (!grad_enabled_)
    throw ContractError("backward: tape was built with gradients disabled");
  grad_buf(loss.id())[0] = 1.0;
  for (int id = loss.id(); id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.grad_alloc && n.backward) n.backward(*this, id);
  }
  for (auto& n : nodes_) {
    if (n.bound && n.grad_alloc) {
      for (int i = 0; i < n.grad.size(); ++i) n.bound->grad[i] += n.grad[i];
    }
  }
}

// ---------------------------------------------------------------------------
// op helpers

namespace {

void check_same_tape(Var a, Var b, const char* op) {
  if (&a.tape() != &b.tape())
    throw ContractError(std::string(op) + ": operands live on different tapes");
}

bool wants_grad(Var a) { return a.tape().grad_enabled() && a.requires_grad(); }

void accumulate(Tape& t, int id, const Tensor& delta) {
  if (!t.node(id).requires_grad) return;
  Tensor& g = t.grad_buf(id);
  for (int i = 0; i < g.size(); ++i) g[i] += delta[i];
}

}  // namespace

Var matmul(Var a, Var b) {
  check_same_tape(a, b, "matmul");
  const Tensor& A = a.val();
  const Tensor& B = b.val();
  if (A.cols() != B.rows())
    throw ShapeError("matmul: inner dimensions disagree: " + A.shape_str() + " vs " +
                     B.shape_str());
  Tensor out(A.rows(), B.cols());
  for (int i = 0; i < A.rows(); ++i)
    for (int k = 0; k < A.cols(); ++k) {
      double aik = A.at(i, k);
      if (aik == 0.0) continue;
      for (int j = 0; j < B.cols(); ++j) out.at(i, j) += aik * B.at(k, j);
    }
  Tape& t = a.tape();
  bool rg = wants_grad(a) || wants_grad(b);
  int ai = a.id(), bi = b.id();
  return t.emit(std::move(out), rg, [ai, bi](Tape& t, int self) {
    const Tensor& g = t.node(self).grad;
    const Tensor& A = t.node(ai).value;
    const Tensor& B = t.node(bi).value;
    if (t.node(ai).requires_grad) {
      Tensor& ga = t.grad_buf(ai);
      for (int i = 0; i < A.rows(); ++i)
        for (int j = 0; j < B.cols(); ++j) {
          double gij = g.at(i, j);
          if (gij == 0.0) continue;
          for (int k = 0; k < A.cols(); ++k) ga.at(i, k) += gij * B.at(k, j);
        }
    }
    if (t.node(bi).requires_grad) {
      Tensor& gb = t.grad_buf(bi);
      for (int i = 0; i < A.rows(); ++i)
        for (int k = 0; k < A.cols(); ++k) {
          double aik = A.at(i, k);
          if (aik == 0.0) continue;
          for (int j = 0; j < B.cols(); ++j) gb.at(k, j) += aik * g.at(i, j);
        }
    }
  });
}

Var transpose(Var a) {
  const Tensor& A = a.val();
  Tensor out(A.cols(), A.rows());
  for (int i = 0; i < A.rows(); ++i)
    for (int j = 0; j < A.cols(); ++j) out.at(j, i) = A.at(i, j);
  Tape& t = a.tape();
  int ai = a.id();
  return t.emit(std::move(out), wants_grad(a), [ai](Tape& t, int self) {
    const Tensor& g = t.node(self).grad;
    if (!t.node(ai).requires_grad) return;
    Tensor& ga = t.grad_buf(ai);
    for (int i = 0; i < g.rows(); ++i)
      for (int j = 0; j < g.cols(); ++j) ga.at(j, i) += g.at(i, j);
  });
}

Var add(Var a, Var b) {
  check_same_tape(a, b, "add");
  const Tensor& A = a.val();
  const Tensor& B = b.val();
  if (!A.same_shape(B))
    throw ShapeError("add: shape mismatch: " + A.shape_str() + " vs " + B.shape_str());
  Tensor out = A;
  for (int i = 0; i < out.size(); ++i) out[i] += B[i];
  Tape& t = a.tape();
  int ai = a.id(), bi = b.id();
  return t.emit(std::move(out), wants_grad(a) || wants_grad(b), [ai, bi](Tape& t, int self) {
    const Tensor& g = t.node(self).grad;
    accumulate(t, ai, g);
    accumulate(t, bi, g);
  });
}

Var add_bias(Var a, Var bias) {
  check_same_tape(a, bias, "add_bias");
  const Tensor& A = a.val();
  const Tensor& B = bias.val();
  if (B.rows() != 1 || B.cols() != A.cols())
    throw ShapeError("add_bias: bias " + B.shape_str() + " does not match " + A.shape_str());
  Tensor out = A;
  for (int i = 0; i < A.rows(); ++i)
    for (int j = 0; j < A.cols(); ++j) out.at(i, j) += B[j];
  Tape& t = a.tape();
  int ai = a.id(), bi = bias.id();
  return t.emit(std::move(out), wants_grad(a) || wants_grad(bias), [ai, bi](Tape& t, int self) {
    const Tensor& g = t.node(self).grad;
    accumulate(t, ai, g);
    if (t.node(bi).requires_grad) {
      Tensor& gb = t.grad_buf(bi);
      for (int i = 0; i < g.rows(); ++i)
        for (int j = 0; j < g.cols(); ++j) gb[j] += g.at(i, j);
    }
  });
}

Var sub(Var a, Var b) {
  check_same_tape(a, b, "sub");
  const Tensor& A = a.val();
  const Tensor& B = b.val();
  if (!A.same_shape(B))
    throw ShapeError("sub: shape mismatch: " + A.shape_str() + " vs " + B.shape_str());
  Tensor out = A;
  for (int i = 0; i < out.size(); ++i) out[i] -= B[i];
  Tape& t = a.tape();
  int ai = a.id(), bi = b.id();
  return t.emit(std::move(out), wants_grad(a) || wants_grad(b), [ai, bi](Tape& t, int self) {
    const Tensor& g = t.node(self).grad;
    accumulate(t, ai, g);
    if (t.node(bi).requires_grad) {
      Tensor& gb = t.grad_buf(bi);
      for (int i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  check_same_tape(a, b, "mul");
  const Tensor& A = a.val();
  const Tensor& B = b.val();
  if (!A.same_shape(B))
    throw ShapeError("mul: shape mismatch: " + A.shape_str() + " vs " + B.shape_str());
  Tensor out = A;
  for (int i = 0; i < out.size(); ++i) out[i] *= B[i];
  Tape& t = a.tape();
  int ai = a.id(), bi = b.id();
  return t.emit(std::move(out), wants_grad(a) || wants_grad(b), [ai, bi](Tape& t, int self) {
    const Tensor& g = t.node(self).grad;
    const Tensor& A = t.node(ai).value;
    const Tensor& B = t.node(bi).value;
    if (t.node(ai).requires_grad) {
      Tensor& ga = t.grad_buf(ai);
      for (int i = 0; i < g.size(); ++i) ga[i] += g[i] * B[i];
    }
    if (t.node(bi).requires_grad) {
      Tensor& gb = t.grad_buf(bi);
      for (int i = 0; i < g.size(); ++i) gb[i] += g[i] * A[i];
    }
  });
}

Var div(Var a, Var b) {
  check_same_tape(a, b, "div");
  const Tensor& A = a.val();
  const Tensor& B = b.val();
  if (!A.same_shape(B))
    throw ShapeError("div: shape mismatch: " + A.shape_str() + " vs " + B.shape_str());
  Tensor out = A;
  for (int i = 0; i < out.size(); ++i) out[i] /= B[i];
  Tape& t = a.tape();
  int ai = a.id(), bi = b.id();
  return t.emit(std::move(out), wants_grad(a) || wants_grad(b), [ai, bi](Tape& t, int self) {
    const Tensor& g = t.node(self).grad;
    const Tensor& out = t.node(self).value;
    const Tensor& B = t.node(bi).value;
    if (t.node(ai).requires_grad) {
      Tensor& ga = t.grad_buf(ai);
      for (int i = 0; i < g.size(); ++i) ga[i] += g[i] / B[i];
    }
    if (t.node(bi).requires_grad) {
      Tensor& gb = t.grad_buf(bi);
      for (int i = 0; i < g.size(); ++i) gb[i] -= g[i] * out[i] / B[i];
    }
  });
}

Var scale(Var a, double c) {
  Tensor out = a.val();
  for (int i = 0; i < out.size(); ++i) out[i] *= c;
  Tape& t = a.tape();
  int ai = a.id();
  return t.emit(std::move(out), wants_grad(a), [ai, c](Tape& t, int self) {
    const Tensor& g = t.node(self).grad;
    if (!t.node(ai).requires_grad) return;
    Tensor& ga = t.grad_buf(ai);
    for (int i = 0; i < g.size(); ++i) ga[i] += c * g[i];
  });
}

namespace {

template <typename F, typename DF>
Var unary_op(Var x, F fwd, DF dfwd) {
  Tensor out = x.val();
  for (int i = 0; i < out.size(); ++i) out[i] = fwd(out[i]);
  Tape& t = x.tape();
  int xi = x.id();
  return t.emit(std::move(out), wants_grad(x), [xi, dfwd](Tape& t, int self) {
    const Tensor& g = t.node(self).grad;
    const Tensor& y = t.node(self).value;
    const Tensor& x = t.node(xi).value;
    if (!t.node(xi).requires_grad) return;
    Tensor& gx = t.grad_buf(xi);
    for (int i = 0; i < g.size(); ++i) gx[i] += g[i] * dfwd(x[i], y[i]);
  });
}

}  // namespace

Var sigmoid(Var x) {
  return unary_op(
      x,
      [](double v) { return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var x) {
  return unary_op(x, [](double v) { return std::tanh(v); },
                  [](double, double y) { return 1.0 - y * y; });
}

Var exp(Var x) {
  return unary_op(x, [](double v) { return std::exp(v); },
                  [](double, double y) { return y; });
}

Var log(Var x) {
  return unary_op(x, [](double v) { return std::log(v); },
                  [](double v, double) { return 1.0 / v; });
}

Var sqrt(Var x) {
  return unary_op(x, [](double v) { return std::sqrt(v); },
                  [](double, double y) { return 0.5 / y; });
}

Var softplus(Var x) {
  return unary_op(
      x,
      [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); },
      [](double v, double) {
        return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
      });
}

Var clamp(Var x, double lo, double hi) {
  Tensor out = x.val();
  for (int i = 0; i < out.size(); ++i) out[i] = std::min(std::max(out[i], lo), hi);
  Tape& t = x.tape();
  int xi = x.id();
  return t.emit(std::move(out), wants_grad(x), [xi, lo, hi](Tape& t, int self) {
    const Tensor& g = t.node(self).grad;
    const Tensor& x = t.node(xi).value;
    if (!t.node(xi).requires_grad) return;
    Tensor& gx = t.grad_buf(xi);
    for (int i = 0; i < g.size(); ++i)
      if (x[i] > lo && x[i] < hi) gx[i] += g[i];
  });
}

Var softmax_rows(Var x, double temperature) {
  if (temperature <= 0.0) throw std::domain_error("softmax: temperature must be positive");
  const Tensor& X = x.val();
  if (X.size() == 0) throw std::domain_error("softmax: empty input");
  Tensor out(X.rows(), X.cols());
  for (int i = 0; i < X.rows(); ++i) {
    double mx = X.at(i, 0);
    for (int j = 1; j < X.cols(); ++j) mx = std::max(mx, X.at(i, j));
    double sum = 0.0;
    for (int j = 0; j < X.cols(); ++j) {
      double e = std::exp((X.at(i, j) - mx) / temperature);
      out.at(i, j) = e;
      sum += e;
    }
    for (int j = 0; j < X.cols(); ++j) out.at(i, j) /= sum;
  }
  Tape& t = x.tape();
  int xi = x.id();
  return t.emit(std::move(out), wants_grad(x), [xi, temperature](Tape& t, int self) {
    const Tensor& g = t.node(self).grad;
    const Tensor& y = t.node(self).value;
    if (!t.node(xi).requires_grad) return;
    Tensor& gx = t.grad_buf(xi);
    for (int i = 0; i < y.rows(); ++i) {
      double dot = 0.0;
      for (int j = 0; j < y.cols(); ++j) dot += g.at(i, j) * y.at(i, j);
      for (int j = 0; j < y.cols(); ++j)
        gx.at(i, j) += y.at(i, j) * (g.at(i, j) - dot) / temperature;
    }
  });
}

Var log_softmax_rows(Var x) {
  const Tensor& X = x.val();
  if (X.size() == 0) throw std::domain_error("log_softmax: empty input");
  Tensor out(X.rows(), X.cols());
  for (int i = 0; i < X.rows(); ++i) {
    double mx = X.at(i, 0);
    for (int j = 1; j < X.cols(); ++j) mx = std::max(mx, X.at(i, j));
    double sum = 0.0;
    for (int j = 0; j < X.cols(); ++j) sum += std::exp(X.at(i, j) - mx);
    double lse = mx + std::log(sum);
    for (int j = 0; j < X.cols(); ++j) out.at(i, j) = X.at(i, j) - lse;
  }
  Tape& t = x.tape();
  int xi = x.id();
  return t.emit(std::move(out), wants_grad(x), [xi](Tape& t, int self) {
    const Tensor& g = t.node(self).grad;
    const Tensor& y = t.node(self).value;
    if (!t.node(xi).requires_grad) return;
    Tensor& gx = t.grad_buf(xi);
    for (int i = 0; i < y.rows(); ++i) {
      double gsum = 0.0;
      for (int j = 0; j < y.cols(); ++j) gsum += g.at(i, j);
      for (int j = 0; j < y.cols(); ++j)
        gx.at(i, j) += g.at(i, j) - std::exp(y.at(i, j)) * gsum;
    }
  });
}

Var layer_norm(Var x, double eps) {
  const Tensor& X = x.val();
  int n = X.cols();
  Tensor out(X.rows(), n);
  std::vector<double> inv(X.rows());
  for (int i = 0; i < X.rows(); ++i) {
    double mean = 0.0;
    for (int j = 0; j < n; ++j) mean += X.at(i, j);
    mean /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) {
      double d = X.at(i, j) - mean;
      var += d * d;
    }
    var /= n;
    inv[i] = 1.0 / std::sqrt(var + eps);
    for (int j = 0; j < n; ++j) out.at(i, j) = (X.at(i, j) - mean) * inv[i];
  }
  Tape& t = x.tape();
  int xi = x.id();
  return t.emit(std::move(out), wants_grad(x), [xi, inv](Tape& t, int self) {
    const Tensor& g = t.node(self).grad;
    const Tensor& y = t.node(self).value;
    if (!t.node(xi).requires_grad) return;
    Tensor& gx = t.grad_buf(xi);
    int n = y.cols();
    for (int i = 0; i < y.rows(); ++i) {
      double gmean = 0.0, gydot = 0.0;
      for (int j = 0; j < n; ++j) {
        gmean += g.at(i, j);
        gydot += g.at(i, j) * y.at(i, j);
      }
      gmean /= n;
      gydot /= n;
      for (int j = 0; j < n; ++j)
        gx.at(i, j) += inv[i] * (g.at(i, j) - gmean - y.at(i, j) * gydot);
    }
  });
}

Var concat_cols(Var a, Var b) {
  check_same_tape(a, b, "concat_cols");
  const Tensor& A = a.val();
  const Tensor& B = b.val();
  if (A.rows() != B.rows())
    throw ShapeError("concat_cols: row counts differ: " + A.shape_str() + " vs " + B.shape_str());
  Tensor out(A.rows(), A.cols() + B.cols());
  for (int i = 0; i < A.rows(); ++i) {
    for (int j = 0; j < A.cols(); ++j) out.at(i, j) = A.at(i, j);
    for (int j = 0; j < B.cols(); ++j) out.at(i, A.cols() + j) = B.at(i, j);
  }
  Tape& t = a.tape();
  int ai = a.id(), bi = b.id();
  int ac = A.cols();
  return t.emit(std::move(out), wants_grad(a) || wants_grad(b), [ai, bi, ac](Tape& t, int self) {
    const Tensor& g = t.node(self).grad;
    if (t.node(ai).requires_grad) {
      Tensor& ga = t.grad_buf(ai);
      for (int i = 0; i < ga.rows(); ++i)
        for (int j = 0; j < ac; ++j) ga.at(i, j) += g.at(i, j);
    }
    if (t.node(bi).requires_grad) {
      Tensor& gb = t.grad_buf(bi);
      for (int i = 0; i < gb.rows(); ++i)
        for (int j = 0; j < gb.cols(); ++j) gb.at(i, j) += g.at(i, ac + j);
    }
  });
}

Var slice_cols(Var x, int c0, int c1) {
  const Tensor& X = x.val();
  if (c0 < 0 || c1 > X.cols() || c0 >= c1)
    throw ShapeError("slice_cols: range [" + std::to_string(c0) + "," + std::to_string(c1) +
                     ") invalid for " + X.shape_str());
  Tensor out(X.rows(), c1 - c0);
  for (int i = 0; i < X.rows(); ++i)
    for (int j = c0; j < c1; ++j) out.at(i, j - c0) = X.at(i, j);
  Tape& t = x.tape();
  int xi = x.id();
  return t.emit(std::move(out), wants_grad(x), [xi, c0](Tape& t, int self) {
    const Tensor& g = t.node(self).grad;
    if (!t.node(xi).requires_grad) return;
    Tensor& gx = t.grad_buf(xi);
    for (int i = 0; i < g.rows(); ++i)
      for (int j = 0; j < g.cols(); ++j) gx.at(i, c0 + j) += g.at(i, j);
  });
}

Var gather_rows(Var x, const std::vector<int>& idx) {
  const Tensor& X = x.val();
  for (int r : idx)
    if (r < 0 || r >= X.rows())
      throw ContractError("gather_rows: index " + std::to_string(r) + " out of range for " +
                          X.shape_str());
  Tensor out(static_cast<int>(idx.size()), X.cols());
  for (size_t i = 0; i < idx.size(); ++i)
    for (int j = 0; j < X.cols(); ++j) out.at(static_cast<int>(i), j) = X.at(idx[i], j);
  Tape& t = x.tape();
  int xi = x.id();
  return t.emit(std::move(out), wants_grad(x), [xi, idx](Tape& t, int self) {
    const Tensor& g = t.node(self).grad;
    if (!t.node(xi).requires_grad) return;
    Tensor& gx = t.grad_buf(xi);
    for (size_t i = 0; i < idx.size(); ++i)
      for (int j = 0; j < g.cols(); ++j) gx.at(idx[i], j) += g.at(static_cast<int>(i), j);
  });
}

Var scatter_rows(Var base, Var rows, const std::vector<int>& idx) {
  check_same_tape(base, rows, "scatter_rows");
  const Tensor& B = base.val();
  const Tensor& R = rows.val();
  if (static_cast<int>(idx.size()) != R.rows())
    throw ContractError("scatter_rows: index count does not match row count");
  if (B.cols() != R.cols())
    throw ShapeError("scatter_rows: column mismatch: " + B.shape_str() + " vs " + R.shape_str());
  for (int r : idx)
    if (r < 0 || r >= B.rows())
      throw ContractError("scatter_rows: index " + std::to_string(r) + " out of range for " +
                          B.shape_str());
  Tensor out = B;
  for (size_t i = 0; i < idx.size(); ++i)
    for (int j = 0; j < R.cols(); ++j) out.at(idx[i], j) = R.at(static_cast<int>(i), j);
  Tape& t = base.tape();
  int bi = base.id(), ri = rows.id();
  return t.emit(std::move(out), wants_grad(base) || wants_grad(rows),
                [bi, ri, idx](Tape& t, int self) {
                  const Tensor& g = t.node(self).grad;
                  if (t.node(ri).requires_grad) {
                    Tensor& gr = t.grad_buf(ri);
                    for (size_t i = 0; i < idx.size(); ++i)
                      for (int j = 0; j < g.cols(); ++j)
                        gr.at(static_cast<int>(i), j) += g.at(idx[i], j);
                  }
                  if (t.node(bi).requires_grad) {
                    Tensor& gb = t.grad_buf(bi);
                    std::vector<char> replaced(g.rows(), 0);
                    for (int r : idx) replaced[r] = 1;
                    for (int i = 0; i < g.rows(); ++i) {
                      if (replaced[i]) continue;
                      for (int j = 0; j < g.cols(); ++j) gb.at(i, j) += g.at(i, j);
                    }
                  }
                });
}

Var scale_by(Var x, Var s) {
  check_same_tape(x, s, "scale_by");
  double c = s.val().item();
  Tensor out = x.val();
  for (int i = 0; i < out.size(); ++i) out[i] *= c;
  Tape& t = x.tape();
  int xi = x.id(), si = s.id();
  return t.emit(std::move(out), wants_grad(x) || wants_grad(s), [xi, si, c](Tape& t, int self) {
    const Tensor& g = t.node(self).grad;
    const Tensor& x = t.node(xi).value;
    if (t.node(xi).requires_grad) {
      Tensor& gx = t.grad_buf(xi);
      for (int i = 0; i < g.size(); ++i) gx[i] += c * g[i];
    }
    if (t.node(si).requires_grad) {
      double dot = 0.0;
      for (int i = 0; i < g.size(); ++i) dot += g[i] * x[i];
      t.grad_buf(si)[0] += dot;
    }
  });
}

Var sum_all(Var x) {
  const Tensor& X = x.val();
  double s = 0.0;
  for (int i = 0; i < X.size(); ++i) s += X[i];
  Tape& t = x.tape();
  int xi = x.id();
  return t.emit(Tensor::row({s}), wants_grad(x), [xi](Tape& t, int self) {
    double g = t.node(self).grad[0];
    if (!t.node(xi).requires_grad) return;
    Tensor& gx = t.grad_buf(xi);
    for (int i = 0; i < gx.size(); ++i) gx[i] += g;
  });
}

Var mean_all(Var x) {
  const Tensor& X = x.val();
  double s = 0.0;
  for (int i = 0; i < X.size(); ++i) s += X[i];
  double n = X.size();
  Tape& t = x.tape();
  int xi = x.id();
  return t.emit(Tensor::row({s / n}), wants_grad(x), [xi, n](Tape& t, int self) {
    double g = t.node(self).grad[0] / n;
    if (!t.node(xi).requires_grad) return;
    Tensor& gx = t.grad_buf(xi);
    for (int i = 0; i < gx.size(); ++i) gx[i] += g;
  });
}

Var mean_rows(Var x) {
  const Tensor& X = x.val();
  Tensor out(1, X.cols());
  for (int i = 0; i < X.rows(); ++i)
    for (int j = 0; j < X.cols(); ++j) out[j] += X.at(i, j);
  for (int j = 0; j < X.cols(); ++j) out[j] /= X.rows();
  Tape& t = x.tape();
  int xi = x.id();
  int k = X.rows();
  return t.emit(std::move(out), wants_grad(x), [xi, k](Tape& t, int self) {
    const Tensor& g = t.node(self).grad;
    if (!t.node(xi).requires_grad) return;
    Tensor& gx = t.grad_buf(xi);
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < g.cols(); ++j) gx.at(i, j) += g.at(0, j) / k;
  });
}

Var gather_element(Var x, int r, int c) {
  const Tensor& X = x.val();
  if (r < 0 || r >= X.rows() || c < 0 || c >= X.cols())
    throw ContractError("gather_element: (" + std::to_string(r) + "," + std::to_string(c) +
                        ") out of range for " + X.shape_str());
  Tape& t = x.tape();
  int xi = x.id();
  return t.emit(Tensor::row({X.at(r, c)}), wants_grad(x), [xi, r, c](Tape& t, int self) {
    double g = t.node(self).grad[0];
    if (!t.node(xi).requires_grad) return;
    t.grad_buf(xi).at(r, c) += g;
  });
}

namespace {

void check_ranges(const Tensor& X, const std::vector<std::pair<int, int>>& ranges,
                  const char* op) {
  if (X.cols() != 1) throw ShapeError(std::string(op) + ": expected a column vector");
  for (auto [b, e] : ranges)
    if (b < 0 || e > X.rows() || b >= e)
      throw ContractError(std::string(op) + ": bad range [" + std::to_string(b) + "," +
                          std::to_string(e) + ")");
}

}  // namespace

Var segment_sum(Var x, const std::vector<std::pair<int, int>>& ranges) {
  const Tensor& X = x.val();
  check_ranges(X, ranges, "segment_sum");
  Tensor out(1, static_cast<int>(ranges.size()));
  for (size_t k = 0; k < ranges.size(); ++k) {
    double s = 0.0;
    for (int i = ranges[k].first; i < ranges[k].second; ++i) s += X.at(i, 0);
    out[static_cast<int>(k)] = s;
  }
  Tape& t = x.tape();
  int xi = x.id();
  return t.emit(std::move(out), wants_grad(x), [xi, ranges](Tape& t, int self) {
    const Tensor& g = t.node(self).grad;
    if (!t.node(xi).requires_grad) return;
    Tensor& gx = t.grad_buf(xi);
    for (size_t k = 0; k < ranges.size(); ++k)
      for (int i = ranges[k].first; i < ranges[k].second; ++i)
        gx.at(i, 0) += g[static_cast<int>(k)];
  });
}

Var segment_normalize(Var x, const std::vector<std::pair<int, int>>& ranges) {
  const Tensor& X = x.val();
  check_ranges(X, ranges, "segment_normalize");
  Tensor out(X.rows(), 1);
  std::vector<double> sums(ranges.size());
  for (size_t k = 0; k < ranges.size(); ++k) {
    double s = 0.0;
    for (int i = ranges[k].first; i < ranges[k].second; ++i) s += X.at(i, 0);
    sums[k] = s;
    for (int i = ranges[k].first; i < ranges[k].second; ++i) out.at(i, 0) = X.at(i, 0) / s;
  }
  Tape& t = x.tape();
  int xi = x.id();
  return t.emit(std::move(out), wants_grad(x), [xi, ranges, sums](Tape& t, int self) {
    const Tensor& g = t.node(self).grad;
    const Tensor& y = t.node(self).value;
    if (!t.node(xi).requires_grad) return;
    Tensor& gx = t.grad_buf(xi);
    // y_i = x_i / s_k  =>  dx_j += (g_j - sum_i g_i y_i) / s_k within range k
    for (size_t k = 0; k < ranges.size(); ++k) {
      double dot = 0.0;
      for (int i = ranges[k].first; i < ranges[k].second; ++i) dot += g.at(i, 0) * y.at(i, 0);
      for (int i = ranges[k].first; i < ranges[k].second; ++i)
        gx.at(i, 0) += (g.at(i, 0) - dot) / sums[k];
    }
  });
}

}  // namespace navstate
