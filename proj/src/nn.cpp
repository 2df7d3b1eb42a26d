#include "navstate/nn.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace navstate {

namespace {

uint64_t splitmix64(uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Rng::Rng(uint64_t seed) {
  uint64_t s = seed;
  for (auto& w : state_) w = splitmix64(s);
}

uint64_t Rng::raw() {
  uint64_t* s = state_;
  uint64_t result = rotl(s[1] * 5, 7) * 9;
  uint64_t t = s[1] << 17;
  s[2] ^= s[0];
  s[3] ^= s[1];
  s[1] ^= s[2];
  s[0] ^= s[3];
  s[2] ^= t;
  s[3] = rotl(s[3], 45);
  return result;
}

double Rng::uniform() { return static_cast<double>(raw() >> 11) * 0x1.0p-53; }

double Rng::uniform(double a, double b) { return a + (b - a) * uniform(); }

double Rng::normal() {
  if (has_cached_) {
    has_cached_ = false;
    return cached_;
  }
  double u1 = 1.0 - uniform();  // (0, 1]
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double a = 2.0 * 3.14159265358979323846 * u2;
  cached_ = r * std::sin(a);
  has_cached_ = true;
  return r * std::cos(a);
}

int Rng::uniform_int(int lo, int hi) {
  int span = hi - lo + 1;
  int v = lo + static_cast<int>(uniform() * span);
  return v > hi ? hi : v;
}

int Rng::categorical(const std::vector<double>& weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  double u = uniform() * total;
  double acc = 0.0;
  for (size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(weights.size()) - 1;
}

// ---------------------------------------------------------------------------

Parameter& ParamStore::create(const std::string& name, int rows, int cols) {
  if (has(name)) throw ContractError("parameter already exists: " + name);
  params_.push_back(Parameter{name, Tensor(rows, cols), Tensor(rows, cols)});
  return params_.back();
}

Parameter& ParamStore::get(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return p;
  throw ContractError("no such parameter: " + name);
}

const Parameter& ParamStore::get(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return p;
  throw ContractError("no such parameter: " + name);
}

bool ParamStore::has(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return true;
  return false;
}

size_t ParamStore::scalar_count() const {
  size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.grad.fill(0.0);
}

double ParamStore::grad_norm() const {
  double s = 0.0;
  for (const auto& p : params_)
    for (int i = 0; i < p.grad.size(); ++i) s += p.grad[i] * p.grad[i];
  return std::sqrt(s);
}

void ParamStore::clip_grad_norm(double max_norm) {
  double norm = grad_norm();
  if (norm <= max_norm || norm == 0.0) return;
  double f = max_norm / norm;
  for (auto& p : params_)
    for (int i = 0; i < p.grad.size(); ++i) p.grad[i] *= f;
}

namespace {

constexpr uint8_t kCheckpointVersion = 1;

void write_doubles_le(std::ostream& out, const std::vector<double>& v) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
  } else {
    for (double d : v) {
      char buf[8];
      std::memcpy(buf, &d, 8);
      std::swap(buf[0], buf[7]);
      std::swap(buf[1], buf[6]);
      std::swap(buf[2], buf[5]);
      std::swap(buf[3], buf[4]);
      out.write(buf, 8);
    }
  }
}

void read_doubles_le(std::istream& in, std::vector<double>& v) {
  if constexpr (std::endian::native == std::endian::little) {
    in.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
  } else {
    for (double& d : v) {
      char buf[8];
      in.read(buf, 8);
      std::swap(buf[0], buf[7]);
      std::swap(buf[1], buf[6]);
      std::swap(buf[2], buf[5]);
      std::swap(buf[3], buf[4]);
      std::memcpy(&d, buf, 8);
    }
  }
}

}  // namespace

void ParamStore::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  char version = static_cast<char>(kCheckpointVersion);
  out.write(&version, 1);
  std::ostringstream header;
  header << "params " << params_.size() << "\n";
  for (const auto& p : params_)
    header << p.name << " " << p.value.rows() << " " << p.value.cols() << "\n";
  header << "data\n";
  std::string h = header.str();
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  for (const auto& p : params_) write_doubles_le(out, p.value.data());
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

void ParamStore::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char version = 0;
  in.read(&version, 1);
  if (static_cast<uint8_t>(version) != kCheckpointVersion)
    throw std::runtime_error("unsupported checkpoint version in " + path);
  std::string word;
  size_t count = 0;
  in >> word >> count;
  if (word != "params") throw std::runtime_error("malformed checkpoint header: " + path);
  std::vector<Parameter*> order;
  order.reserve(count);
  for (size_t i = 0; i < count; ++i) {
    std::string name;
    int rows = 0, cols = 0;
    in >> name >> rows >> cols;
    Parameter& p = get(name);
    if (p.value.rows() != rows || p.value.cols() != cols)
      throw std::runtime_error("checkpoint shape mismatch for " + name);
    order.push_back(&p);
  }
  in >> word;
  if (word != "data") throw std::runtime_error("malformed checkpoint header: " + path);
  in.get();  // newline before raw block
  for (Parameter* p : order) read_doubles_le(in, p->value.data());
  if (!in) throw std::runtime_error("checkpoint truncated: " + path);
}

void init_uniform(Tensor& t, Rng& rng, double lo, double hi) {
  for (int i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
}

void init_xavier(Tensor& t, Rng& rng) {
  double a = std::sqrt(6.0 / (t.rows() + t.cols()));
  init_uniform(t, rng, -a, a);
}

Tensor sinusoidal_positions(int len, int d) {
  Tensor pe(len, d);
  for (int p = 0; p < len; ++p)
    for (int i = 0; i < d; ++i) {
      double freq = std::pow(10000.0, -static_cast<double>(i - (i % 2)) / d);
      pe.at(p, i) = (i % 2 == 0) ? std::sin(p * freq) : std::cos(p * freq);
    }
  return pe;
}

// ---------------------------------------------------------------------------

Linear::Linear(ParamStore& ps, const std::string& prefix, int in, int out, Rng& rng,
               bool zero_init) {
  w = &ps.create(prefix + ".w", in, out);
  b = &ps.create(prefix + ".b", 1, out);
  if (!zero_init) init_xavier(w->value, rng);
}

Var Linear::operator()(Tape& t, Var x) const {
  return add_bias(matmul(x, t.param(*w)), t.param(*b));
}

Mlp::Mlp(ParamStore& ps, const std::string& prefix, int in, int hidden, int out, Rng& rng)
    : l1(ps, prefix + ".1", in, hidden, rng), l2(ps, prefix + ".2", hidden, out, rng) {}

Var Mlp::operator()(Tape& t, Var x) const { return l2(t, tanh(l1(t, x))); }

MultiHeadAttention::MultiHeadAttention(ParamStore& ps, const std::string& prefix, int d,
                                       int heads_, Rng& rng)
    : heads(heads_), dim(d) {
  if (heads_ <= 0 || d % heads_ != 0)
    throw std::invalid_argument("attention: dimension " + std::to_string(d) +
                                " not divisible by " + std::to_string(heads_) + " heads");
  q = Linear(ps, prefix + ".q", d, d, rng);
  k = Linear(ps, prefix + ".k", d, d, rng);
  v = Linear(ps, prefix + ".v", d, d, rng);
  o = Linear(ps, prefix + ".o", d, d, rng);
}

Var MultiHeadAttention::operator()(Tape& t, Var x, Var y) const {
  Var Q = q(t, x);
  Var K = k(t, y);
  Var V = v(t, y);
  int dh = dim / heads;
  double sc = 1.0 / std::sqrt(static_cast<double>(dh));
  Var merged;
  for (int h = 0; h < heads; ++h) {
    Var Qh = slice_cols(Q, h * dh, (h + 1) * dh);
    Var Kh = slice_cols(K, h * dh, (h + 1) * dh);
    Var Vh = slice_cols(V, h * dh, (h + 1) * dh);
    Var att = softmax_rows(scale(matmul(Qh, transpose(Kh)), sc));
    Var out = matmul(att, Vh);
    merged = (h == 0) ? out : concat_cols(merged, out);
  }
  return o(t, merged);
}

TransformerBlock::TransformerBlock(ParamStore& ps, const std::string& prefix, int d, int heads,
                                   Rng& rng)
    : attn(ps, prefix + ".attn", d, heads, rng),
      ff1(ps, prefix + ".ff1", d, 2 * d, rng),
      ff2(ps, prefix + ".ff2", 2 * d, d, rng) {}

Var TransformerBlock::operator()(Tape& t, Var x) const {
  Var y = layer_norm(add(x, attn(t, x, x)));
  Var f = ff2(t, tanh(ff1(t, y)));
  return layer_norm(add(y, f));
}

// ---------------------------------------------------------------------------

Adam::Adam(ParamStore& ps, double lr) : ps_(&ps), lr_(lr) {
  for (const auto& p : ps.all()) {
    m_.emplace_back(p.value.rows(), p.value.cols());
    v_.emplace_back(p.value.rows(), p.value.cols());
    scale_.push_back(1.0);
  }
}

void Adam::set_lr_scale(const std::string& prefix, double scale) {
  size_t j = 0;
  for (const auto& p : ps_->all()) {
    if (p.name.rfind(prefix, 0) == 0) scale_[j] = scale;
    ++j;
  }
}

void Adam::step() {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  ++t_;
  double c1 = 1.0 - std::pow(b1, t_);
  double c2 = 1.0 - std::pow(b2, t_);
  size_t j = 0;
  for (auto& p : ps_->all()) {
    Tensor& m = m_[j];
    Tensor& v = v_[j];
    double lr = lr_ * scale_[j];
    ++j;
    for (int i = 0; i < p.value.size(); ++i) {
      double g = p.grad[i];
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      p.value[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }
}

// ---------------------------------------------------------------------------

GradCheckReport finite_difference_check(ParamStore& ps,
                                        const std::function<Var(Tape&)>& build, double eps) {
  auto value_of = [&]() {
    Tape t(/*grad_enabled=*/false);
    return build(t).val().item();
  };

  double v1 = value_of();
  double v2 = value_of();
  if (v1 != v2)
    throw OracleError("finite_difference_check: function is not deterministic (" +
                      std::to_string(v1) + " vs " + std::to_string(v2) + ")");

  // Analytic pass. Parameter gradients are read from a private snapshot so
  // the check does not disturb training state.
  std::vector<Tensor> saved_grads;
  for (auto& p : ps.all()) saved_grads.push_back(p.grad);
  ps.zero_grad();
  {
    Tape t(/*grad_enabled=*/true);
    Var loss = build(t);
    t.backward(loss);
  }
  std::vector<Tensor> analytic;
  for (auto& p : ps.all()) analytic.push_back(p.grad);
  {
    size_t j = 0;
    for (auto& p : ps.all()) p.grad = saved_grads[j++];
  }

  GradCheckReport rep;
  size_t pi = 0;
  for (auto& p : ps.all()) {
    for (int i = 0; i < p.value.size(); ++i) {
      double orig = p.value[i];
      p.value[i] = orig + eps;
      double fp = value_of();
      p.value[i] = orig - eps;
      double fm = value_of();
      p.value[i] = orig;
      double numeric = (fp - fm) / (2.0 * eps);
      double a = analytic[pi][i];
      double rel = std::abs(a - numeric) / std::max(1.0, std::abs(numeric));
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst_param = p.name;
        rep.worst_index = i;
        rep.analytic = a;
        rep.numeric = numeric;
      }
    }
    ++pi;
  }
  return rep;
}

}  // namespace navstate
