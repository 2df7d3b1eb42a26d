#include <doctest.h>

#include <cmath>

#include "navstate/nn.hpp"
#include "navstate/tensor.hpp"

using namespace navstate;

namespace {

Tensor make(int rows, int cols, std::vector<double> v) {
  Tensor t(rows, cols);
  t.data() = std::move(v);
  return t;
}

Tensor random_tensor(int rows, int cols, Rng& rng, double scale = 1.0) {
  Tensor t(rows, cols);
  for (int i = 0; i < t.size(); ++i) t[i] = scale * rng.normal();
  return t;
}

}  // namespace

TEST_CASE("matmul basics") {
  Tape t;
  SUBCASE("identity leaves the matrix unchanged") {
    Var m = t.input(make(2, 2, {1.5, -2.0, 0.25, 4.0}));
    Var out = matmul(t.input(Tensor::identity(2)), m);
    for (int i = 0; i < 4; ++i) CHECK(out.val()[i] == m.val()[i]);
  }
  SUBCASE("hand multiplication") {
    // [[1,2]] * [[3],[4]] = [[11]]
    Var out = matmul(t.input(make(1, 2, {1, 2})), t.input(make(2, 1, {3, 4})));
    CHECK(out.val().item() == doctest::Approx(11.0).epsilon(1e-12));
  }
  SUBCASE("zero matrix annihilates") {
    Var out = matmul(t.input(Tensor(2, 3)), t.input(make(3, 1, {1, 2, 3})));
    for (int i = 0; i < out.val().size(); ++i) CHECK(out.val()[i] == 0.0);
  }
  SUBCASE("shape mismatch names both shapes") {
    bool threw = false;
    try {
      matmul(t.input(Tensor(2, 3)), t.input(Tensor(4, 5)));
    } catch (const ShapeError& e) {
      threw = true;
      std::string msg = e.what();
      CHECK(msg.find("[2 x 3]") != std::string::npos);
      CHECK(msg.find("[4 x 5]") != std::string::npos);
    }
    CHECK(threw);
  }
}

TEST_CASE("matmul associativity on random 3-chains") {
  Rng rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    Tape t;
    Var a = t.input(random_tensor(3, 4, rng));
    Var b = t.input(random_tensor(4, 2, rng));
    Var c = t.input(random_tensor(2, 5, rng));
    Var left = matmul(matmul(a, b), c);
    Var right = matmul(a, matmul(b, c));
    for (int i = 0; i < left.val().size(); ++i)
      CHECK(left.val()[i] == doctest::Approx(right.val()[i]).epsilon(1e-9));
  }
}

TEST_CASE("softmax") {
  Tape t;
  SUBCASE("uniform on equal logits") {
    Var out = softmax_rows(t.input(make(1, 3, {0.7, 0.7, 0.7})));
    for (int i = 0; i < 3; ++i) CHECK(out.val()[i] == doctest::Approx(1.0 / 3).epsilon(1e-12));
  }
  SUBCASE("single element") {
    Var out = softmax_rows(t.input(make(1, 1, {42.0})));
    CHECK(out.val().item() == 1.0);
  }
  SUBCASE("hand evaluation of [1,2,3]") {
    Var out = softmax_rows(t.input(make(1, 3, {1, 2, 3})));
    CHECK(out.val()[0] == doctest::Approx(0.09003057317038046).epsilon(1e-9));
    CHECK(out.val()[1] == doctest::Approx(0.24472847105479767).epsilon(1e-9));
    CHECK(out.val()[2] == doctest::Approx(0.6652409557748219).epsilon(1e-9));
  }
  SUBCASE("empty input is a domain error") {
    CHECK_THROWS_AS(softmax_rows(t.input(Tensor(0, 0))), std::domain_error);
  }
  SUBCASE("bad temperature is a domain error") {
    CHECK_THROWS_AS(softmax_rows(t.input(make(1, 2, {0, 1})), 0.0), std::domain_error);
  }
}

TEST_CASE("softmax is a probability vector and shift-invariant") {
  Rng rng(5);
  for (int rep = 0; rep < 50; ++rep) {
    int k = rng.uniform_int(1, 9);
    Tensor logits = random_tensor(1, k, rng, 3.0);
    Tape t;
    Var out = softmax_rows(t.input(logits));
    double sum = 0.0;
    for (int i = 0; i < k; ++i) {
      CHECK(out.val()[i] >= 0.0);
      sum += out.val()[i];
    }
    CHECK(std::abs(sum - 1.0) <= 1e-9);

    double shift = rng.uniform(-50.0, 50.0);
    Tensor shifted = logits;
    for (int i = 0; i < k; ++i) shifted[i] += shift;
    Var out2 = softmax_rows(t.input(shifted));
    for (int i = 0; i < k; ++i)
      CHECK(out.val()[i] == doctest::Approx(out2.val()[i]).epsilon(1e-9));
  }
}

TEST_CASE("sigmoid and layer_norm point values") {
  Tape t;
  Var s = sigmoid(t.input(make(1, 3, {0.0, 1.0, -10.0})));
  CHECK(s.val()[0] == 0.5);
  CHECK(s.val()[1] == doctest::Approx(0.7310585786300049).epsilon(1e-12));
  CHECK(s.val()[2] == doctest::Approx(4.5397868702434395e-05).epsilon(1e-9));

  Var ln = layer_norm(t.input(make(1, 3, {1, 2, 3})));
  CHECK(ln.val()[0] == doctest::Approx(-1.2247356859083902).epsilon(1e-9));
  CHECK(ln.val()[1] == doctest::Approx(0.0));
  CHECK(ln.val()[2] == doctest::Approx(1.2247356859083902).epsilon(1e-9));

  Var flat = layer_norm(t.input(make(1, 4, {2.5, 2.5, 2.5, 2.5})));
  for (int i = 0; i < 4; ++i) CHECK(flat.val()[i] == 0.0);
}

TEST_CASE("layer_norm rows have zero mean and unit variance") {
  Rng rng(17);
  for (int rep = 0; rep < 20; ++rep) {
    int rows = rng.uniform_int(1, 5), cols = rng.uniform_int(2, 16);
    Tensor in = random_tensor(rows, cols, rng, 10.0);
    // keep the input variance well above eps so the 1e-6 bound is meaningful
    for (int i = 0; i < rows; ++i) {
      in.at(i, 0) += 20.0;
      if (cols > 1) in.at(i, 1) -= 20.0;
    }
    Tape t;
    Var out = layer_norm(t.input(in));
    for (int i = 0; i < rows; ++i) {
      double mean = 0.0, var = 0.0;
      for (int j = 0; j < cols; ++j) mean += out.val().at(i, j);
      mean /= cols;
      for (int j = 0; j < cols; ++j) {
        double d = out.val().at(i, j) - mean;
        var += d * d;
      }
      var /= cols;
      CHECK(std::abs(mean) < 1e-9);
      CHECK(std::abs(var - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("backward basics") {
  SUBCASE("sum of a parameter gives ones") {
    ParamStore ps;
    Parameter& w = ps.create("w", 2, 3);
    w.value.fill(1.25);
    Tape t;
    t.backward(sum_all(t.param(w)));
    for (int i = 0; i < w.grad.size(); ++i) CHECK(w.grad[i] == 1.0);
  }
  SUBCASE("quadratic (w-3)^2 at w=5 gives 4") {
    ParamStore ps;
    Parameter& w = ps.create("w", 1, 1);
    w.value[0] = 5.0;
    Tape t;
    Var diff = sub(t.param(w), t.input(Tensor::row({3.0})));
    t.backward(mul(diff, diff));
    CHECK(w.grad[0] == doctest::Approx(4.0).epsilon(1e-12));
  }
  SUBCASE("detached branch gets zero gradient") {
    ParamStore ps;
    Parameter& w = ps.create("w", 1, 1);
    w.value[0] = 2.0;
    Tape t;
    Var x = t.param(w);
    Var loss = add(mul(x, x), t.detach(mul(x, x)));
    t.backward(loss);
    CHECK(w.grad[0] == doctest::Approx(4.0).epsilon(1e-12));  // only the live branch
  }
  SUBCASE("unreachable parameter keeps a zero gradient") {
    ParamStore ps;
    Parameter& w = ps.create("w", 1, 1);
    Parameter& u = ps.create("u", 1, 1);
    w.value[0] = 1.0;
    u.value[0] = 1.0;
    Tape t;
    t.backward(mul(t.param(w), t.param(w)));
    CHECK(u.grad[0] == 0.0);
  }
  SUBCASE("non-scalar loss is a contract error") {
    Tape t;
    Var x = t.leaf(Tensor(2, 2), true);
    CHECK_THROWS_AS(t.backward(x), ContractError);
  }
}

TEST_CASE("finite differences agree with the tape on every op") {
  // one pass per operation family, randomized over 20+ seeds
  Rng seeder(23);
  for (int rep = 0; rep < 24; ++rep) {
    uint64_t seed = seeder.raw();
    Rng rng(seed);
    ParamStore ps;
    Parameter& a = ps.create("a", 3, 4);
    Parameter& b = ps.create("b", 4, 2);
    Parameter& c = ps.create("c", 1, 2);
    Parameter& e = ps.create("e", 3, 4);
    init_uniform(a.value, rng, -1.5, 1.5);
    init_uniform(b.value, rng, -1.5, 1.5);
    init_uniform(c.value, rng, -1.5, 1.5);
    init_uniform(e.value, rng, 0.2, 1.7);  // kept positive for log/sqrt/div

    auto build = [&](Tape& t) {
      Var A = t.param(a);
      Var B = t.param(b);
      Var C = t.param(c);
      Var E = t.param(e);
      Var m = add_bias(matmul(A, B), C);            // [3 x 2]
      Var s = softmax_rows(m, 0.7);
      Var ln = layer_norm(concat_cols(m, s));
      Var u = sigmoid(slice_cols(ln, 0, 2));
      Var v = tanh(mul(u, slice_cols(ln, 2, 4)));
      Var w = exp(scale(v, 0.3));
      Var der = div(sqrt(E), add(E, E));
      Var sp = softplus(transpose(der));          // [4 x 3]
      Var g = gather_rows(sp, {1, 3, 2});
      Var sc = scatter_rows(sp, scale(g, 0.5), {0, 2, 3});
      Var pooled = mean_rows(concat_cols(w, transpose(sc)));  // [1 x 6]
      Var lsm = log_softmax_rows(matmul(slice_cols(pooled, 0, 4), B));  // [1 x 2]
      Var col = transpose(exp(clamp(lsm, -5.0, 5.0)));                  // [2 x 1]
      Var seg = segment_normalize(col, {{0, 2}});
      Var weighted = sum_all(mul(seg, t.input(make(2, 1, {1.0, 3.0}))));
      Var ss = segment_sum(transpose(slice_cols(pooled, 2, 6)), {{0, 2}, {2, 4}});
      return add(mean_all(sc),
                 add(weighted, add(gather_element(ss, 0, 1), gather_element(lsm, 0, 1))));
    };
    GradCheckReport rep_out = finite_difference_check(ps, build);
    INFO("seed ", seed, " worst ", rep_out.worst_param, " analytic ", rep_out.analytic,
         " numeric ", rep_out.numeric);
    CHECK(rep_out.max_rel_err < 1e-6);
  }
}

TEST_CASE("finite_difference_check oracle behavior") {
  SUBCASE("quadratic bowl is exact to 1e-6") {
    ParamStore ps;
    Parameter& w = ps.create("w", 1, 4);
    Rng rng(3);
    init_uniform(w.value, rng, -2.0, 2.0);
    auto build = [&](Tape& t) {
      Var x = t.param(w);
      return sum_all(mul(x, x));
    };
    CHECK(finite_difference_check(ps, build).max_rel_err < 1e-6);
  }
  SUBCASE("constant function gives zero on both sides") {
    ParamStore ps;
    ps.create("w", 2, 2).value.fill(1.0);
    auto build = [&](Tape& t) { return t.input(Tensor::row({3.25})); };
    GradCheckReport rep = finite_difference_check(ps, build);
    CHECK(rep.max_rel_err == 0.0);
  }
  SUBCASE("non-deterministic map raises an oracle error") {
    ParamStore ps;
    ps.create("w", 1, 1).value[0] = 1.0;
    int calls = 0;
    auto build = [&](Tape& t) {
      ++calls;
      return t.input(Tensor::row({static_cast<double>(calls)}));
    };
    CHECK_THROWS_AS(finite_difference_check(ps, build), OracleError);
  }
}

TEST_CASE("finite checks reject NaN") {
  Tape t;
  Var x = t.input(make(1, 2, {-1.0, 0.5}));
  CHECK_THROWS_AS(log(x), FiniteError);
}

TEST_CASE("scale_by broadcasts a scalar with gradients to both sides") {
  ParamStore ps;
  Parameter& x = ps.create("x", 2, 2);
  Parameter& s = ps.create("s", 1, 1);
  Rng rng(7);
  init_uniform(x.value, rng, -1.0, 1.0);
  s.value[0] = 0.75;
  auto build = [&](Tape& t) { return sum_all(mul(scale_by(t.param(x), t.param(s)), t.param(x))); };
  CHECK(finite_difference_check(ps, build).max_rel_err < 1e-6);
}
