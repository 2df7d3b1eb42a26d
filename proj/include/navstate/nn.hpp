#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "navstate/tensor.hpp"

namespace navstate {

/// Deterministic RNG helpers on top of a fixed 64-bit generator. All
/// distributions are implemented here (not via std:: distributions) so the
/// byte stream consumed per draw is pinned down.
class Rng {
 public:
  explicit Rng(uint64_t seed);
  uint64_t raw();
  double uniform();                    // [0, 1)
  double uniform(double a, double b);  // [a, b)
  double normal();                     // standard normal (Box-Muller)
  int uniform_int(int lo, int hi);     // inclusive bounds
  /// Index sampled from an (unnormalized) nonnegative weight vector.
  int categorical(const std::vector<double>& weights);

 private:
  uint64_t state_[4];  // xoshiro256** keeps reseeding cheap and portable
  bool has_cached_ = false;
  double cached_ = 0.0;
};

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
};

/// Ordered registry of named parameters. Creation order is fixed by module
/// construction order, which makes seeded initialization reproducible.
class ParamStore {
 public:
  Parameter& create(const std::string& name, int rows, int cols);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool has(const std::string& name) const;

  std::deque<Parameter>& all() { return params_; }
  const std::deque<Parameter>& all() const { return params_; }
  size_t scalar_count() const;

  void zero_grad();
  /// Global L2 norm of all gradients.
  double grad_norm() const;
  /// Scales gradients so their global norm is at most `max_norm`.
  void clip_grad_norm(double max_norm);

  /// Binary checkpoint: one version byte, a text header with names and
  /// shapes, then the raw little-endian doubles in header order.
  void save(const std::string& path) const;
  /// Loads values into existing parameters; names and shapes must match.
  void load(const std::string& path);

 private:
  std::deque<Parameter> params_;  // deque: stable addresses
};

// seeded initializers
void init_uniform(Tensor& t, Rng& rng, double lo, double hi);
void init_xavier(Tensor& t, Rng& rng);  // U(-a, a), a = sqrt(6/(fan_in+fan_out))

/// Sinusoidal position table [len x d]; row p is the encoding of position p.
Tensor sinusoidal_positions(int len, int d);

struct Linear {
  Parameter* w = nullptr;  // [in x out]
  Parameter* b = nullptr;  // [1 x out]
  Linear() = default;
  Linear(ParamStore& ps, const std::string& prefix, int in, int out, Rng& rng,
         bool zero_init = false);
  Var operator()(Tape& t, Var x) const;
};

/// Two-layer perceptron with tanh hidden activation.
struct Mlp {
  Linear l1, l2;
  Mlp() = default;
  Mlp(ParamStore& ps, const std::string& prefix, int in, int hidden, int out, Rng& rng);
  Var operator()(Tape& t, Var x) const;
};

/// Multi-head scaled dot-product attention (scale 1/sqrt(d/heads)).
/// Queries come from x, keys and values from y.
struct MultiHeadAttention {
  Linear q, k, v, o;
  int heads = 1;
  int dim = 0;
  MultiHeadAttention() = default;
  MultiHeadAttention(ParamStore& ps, const std::string& prefix, int d, int heads, Rng& rng);
  Var operator()(Tape& t, Var x, Var y) const;
};

/// Self-attention + feed-forward block with post-norm residuals.
struct TransformerBlock {
  MultiHeadAttention attn;
  Linear ff1, ff2;
  TransformerBlock() = default;
  TransformerBlock(ParamStore& ps, const std::string& prefix, int d, int heads, Rng& rng);
  Var operator()(Tape& t, Var x) const;
};

/// Adam with fixed (0.9, 0.999, 1e-8). Individual parameters can run at a
/// scaled learning rate (set_lr_scale by name prefix).
class Adam {
 public:
  explicit Adam(ParamStore& ps, double lr);
  void step();
  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  /// Applies `scale` to every parameter whose name starts with `prefix`.
  void set_lr_scale(const std::string& prefix, double scale);

 private:
  ParamStore* ps_;
  double lr_;
  int t_ = 0;
  std::vector<Tensor> m_, v_;
  std::vector<double> scale_;
};

struct OracleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  int worst_index = -1;
  double analytic = 0.0, numeric = 0.0;
};

/// Central finite differences vs. tape gradients over every scalar of every
/// parameter in the store. `build` must construct the loss on the given tape
/// deterministically; non-determinism is detected by double evaluation.
/// Relative error per scalar: |analytic - numeric| / max(1, |numeric|).
GradCheckReport finite_difference_check(ParamStore& ps,
                                        const std::function<Var(Tape&)>& build,
                                        double eps = 1e-4);

}  // namespace navstate
