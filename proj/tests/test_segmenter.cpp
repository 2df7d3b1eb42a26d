#include <doctest.h>

#include <cmath>

#include "navstate/encoder.hpp"
#include "navstate/segmenter.hpp"

using namespace navstate;

namespace {

Vocabulary seg_vocab() {
  return Vocabulary({"walk", "through", "the", "bedroom", "doorway", ".", "go", "forward",
                     "turn", "left", "and", "then", "stop", "next", "to", "sink"});
}

BoundaryScore handmade_scores(Tape& t, const std::vector<double>& logits) {
  BoundaryScore s;
  for (double z : logits) {
    s.logits.push_back(t.leaf(Tensor::row({z}), true));
    s.b_hat.push_back(1.0 / (1.0 + std::exp(-z)));
    s.prior.push_back(0.0);
    s.coherence.push_back(0.0);
  }
  return s;
}

}  // namespace

TEST_CASE("rule-based coarse segmentation") {
  Vocabulary v = seg_vocab();
  SUBCASE("boundary after a period") {
    Instruction inst = tokenize("walk through the bedroom . through the doorway next to sink", v);
    BoundarySet b = segment_rules(inst);
    // "." is token index 4, so the gap after it is 5
    CHECK(b.contains(5));
  }
  SUBCASE("no conjunctions means one clause") {
    Instruction inst = tokenize("go forward", v);
    BoundarySet b = segment_rules(inst);
    CHECK(b.positions.empty());
    CHECK(split_at(b, inst.length()).count() == 1);
  }
  SUBCASE("boundaries before and/then make three clauses") {
    Instruction inst = tokenize("turn left and walk then stop", v);
    BoundarySet b = segment_rules(inst);
    CHECK(b.positions == std::vector<int>{2, 4});
    CHECK(split_at(b, inst.length()).count() == 3);
  }
  SUBCASE("leading and trailing conjunctions are not boundaries") {
    Instruction inst = tokenize("and walk and", v);
    BoundarySet b = segment_rules(inst);
    CHECK(b.positions.empty());
  }
  SUBCASE("single token yields no gaps") {
    Instruction inst = tokenize("stop", v);
    CHECK(segment_rules(inst).positions.empty());
  }
  SUBCASE("idempotent and parameter-free") {
    Instruction inst = tokenize("walk then stop . go", v);
    BoundarySet b1 = segment_rules(inst);
    BoundarySet b2 = segment_rules(inst);
    CHECK(b1.positions == b2.positions);
  }
}

TEST_CASE("boundary scoring") {
  Vocabulary v = seg_vocab();
  ParamStore ps;
  Rng rng(11);
  InstructionEncoder enc(ps, v.size(), 8, 2, 80, rng);
  BoundaryScorer scorer(ps, 8, rng);

  SUBCASE("prior equals the coarse indicator and b_hat is the sigmoid of the logit") {
    Instruction inst = tokenize("turn left and walk then stop", v);
    Tape t;
    Var h = enc.encode(t, inst);
    BoundarySet coarse = segment_rules(inst);
    BoundaryScore s = scorer(t, h, coarse);
    REQUIRE(s.gaps() == inst.length() - 1);
    for (int g = 0; g < s.gaps(); ++g) {
      CHECK(s.prior[g] == (coarse.contains(g + 1) ? 1.0 : 0.0));
      double z = s.logits[g].val().item();
      CHECK(s.b_hat[g] == doctest::Approx(1.0 / (1.0 + std::exp(-z))).epsilon(1e-12));
      CHECK(s.b_hat[g] > 0.0);
      CHECK(s.b_hat[g] < 1.0);
    }
  }
  SUBCASE("identical windows give coherence one") {
    Tape t;
    Tensor flat(4, 8);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 8; ++j) flat.at(i, j) = 0.3 * (j + 1);  // equal rows
    BoundaryScore s = scorer(t, t.input(flat), BoundarySet{});
    for (int g = 0; g < s.gaps(); ++g)
      CHECK(s.coherence[g] == doctest::Approx(1.0).epsilon(1e-9));
  }
  SUBCASE("a single token has an empty score vector") {
    Instruction inst = tokenize("stop", v);
    Tape t;
    Var h = enc.encode(t, inst);
    BoundaryScore s = scorer(t, h, BoundarySet{});
    CHECK(s.gaps() == 0);
  }
}

TEST_CASE("refine thresholds strictly and splits") {
  Tape t;
  SUBCASE("frozen logits [2,-2,1] give the frozen confidences") {
    BoundaryScore s = handmade_scores(t, {2.0, -2.0, 1.0});
    CHECK(s.b_hat[0] == doctest::Approx(0.8807970779778823).epsilon(1e-9));
    CHECK(s.b_hat[1] == doctest::Approx(0.11920292202211755).epsilon(1e-9));
    CHECK(s.b_hat[2] == doctest::Approx(0.7310585786300049).epsilon(1e-9));
    auto [bset, segs] = refine(s, 0.5, 4);
    CHECK(bset.positions == std::vector<int>{1, 3});
    REQUIRE(segs.count() == 3);
    CHECK(segs.clauses[0].begin == 0);
    CHECK(segs.clauses[0].end == 1);
    CHECK(segs.clauses[1].begin == 1);
    CHECK(segs.clauses[1].end == 3);
    CHECK(segs.clauses[2].begin == 3);
    CHECK(segs.clauses[2].end == 4);
  }
  SUBCASE("no survivor means one clause") {
    BoundaryScore s = handmade_scores(t, {-1.0, -2.0, -3.0});
    auto [bset, segs] = refine(s, 0.5, 4);
    CHECK(bset.positions.empty());
    REQUIRE(segs.count() == 1);
    CHECK(segs.clauses[0].begin == 0);
    CHECK(segs.clauses[0].end == 4);
  }
  SUBCASE("all survivors means one clause per token") {
    BoundaryScore s = handmade_scores(t, {5.0, 5.0, 5.0});
    auto [bset, segs] = refine(s, 0.5, 4);
    CHECK(segs.count() == 4);
    for (const auto& c : segs.clauses) CHECK(c.size() == 1);
  }
  SUBCASE("threshold is strictly greater-than") {
    BoundaryScore s = handmade_scores(t, {0.0});  // b_hat exactly 0.5
    auto [bset, segs] = refine(s, 0.5, 2);
    CHECK(bset.positions.empty());
    CHECK(segs.count() == 1);
  }
}

TEST_CASE("split always partitions and clause count tracks boundaries") {
  Rng rng(19);
  for (int rep = 0; rep < 200; ++rep) {
    int L = rng.uniform_int(1, 24);
    Tape t;
    std::vector<double> logits;
    for (int g = 1; g < L; ++g) logits.push_back(rng.uniform(-4.0, 4.0));
    BoundaryScore s = handmade_scores(t, logits);
    double delta = rng.uniform(0.05, 0.95);
    auto [bset, segs] = refine(s, delta, L);
    CHECK(segs.count() == static_cast<int>(bset.positions.size()) + 1);
    int cursor = 0;
    for (const auto& c : segs.clauses) {
      CHECK(c.begin == cursor);
      CHECK(c.begin < c.end);
      cursor = c.end;
    }
    CHECK(cursor == L);
  }
}

TEST_CASE("a hugely negative scorer bias collapses to a single clause") {
  Vocabulary v = seg_vocab();
  ParamStore ps;
  Rng rng(13);
  InstructionEncoder enc(ps, v.size(), 8, 2, 80, rng);
  BoundaryScorer scorer(ps, 8, rng);
  scorer.mlp.l2.b->value.fill(-1e6);
  scorer.mlp.l2.w->value.fill(0.0);
  for (const char* text : {"walk then stop", "turn left and walk then stop . go forward"}) {
    Instruction inst = tokenize(text, v);
    Tape t;
    Var h = enc.encode(t, inst);
    BoundaryScore s = scorer(t, h, segment_rules(inst));
    auto [bset, segs] = refine(s, 0.5, inst.length());
    CHECK(segs.count() == 1);
  }
}

TEST_CASE("clause coefficients") {
  SUBCASE("straight-through forward is exactly one") {
    Tape t;
    BoundaryScore s = handmade_scores(t, {2.0, -2.0, 1.0});
    auto [bset, segs] = refine(s, 0.5, 4);
    auto coeffs = clause_coefficients(t, s, segs, 4, RouteGrad::StraightThrough);
    REQUIRE(coeffs.size() == 3);
    for (const Var& c : coeffs) CHECK(c.val().item() == 1.0);
  }
  SUBCASE("detached mode yields no coefficients") {
    Tape t;
    BoundaryScore s = handmade_scores(t, {2.0});
    auto [bset, segs] = refine(s, 0.5, 2);
    CHECK(clause_coefficients(t, s, segs, 2, RouteGrad::Detached).empty());
  }
  SUBCASE("straight-through backward carries the boundary log-probability gradient") {
    // loss = sum_k c_k * kappa_k; d(loss)/d(z_g) = scale * sum_k c_k * dq_k/dz_g
    // with dq/dz = 1 - b_hat on delimiting gaps and -b_hat on interior gaps
    Tape t;
    std::vector<double> logits = {1.5, -0.5, -0.25};
    BoundaryScore s = handmade_scores(t, logits);
    auto [bset, segs] = refine(s, 0.5, 4);  // boundary only at gap 1
    REQUIRE(segs.count() == 2);             // clauses [0,1) and [1,4)
    auto coeffs = clause_coefficients(t, s, segs, 4, RouteGrad::StraightThrough);
    std::vector<double> c = {0.7, -1.3};
    Var loss = add(scale(coeffs[0], c[0]), scale(coeffs[1], c[1]));
    t.backward(loss);
    double b0 = s.b_hat[0], b1 = s.b_hat[1], b2 = s.b_hat[2];
    const double k = kBoundaryGradScale;
    // gap 1 delimits both clauses; gaps 2,3 are interior to clause 2
    CHECK(s.logits[0].grad()[0] ==
          doctest::Approx(k * (c[0] + c[1]) * (1 - b0)).epsilon(1e-9));
    CHECK(s.logits[1].grad()[0] == doctest::Approx(k * c[1] * -b1).epsilon(1e-9));
    CHECK(s.logits[2].grad()[0] == doctest::Approx(k * c[1] * -b2).epsilon(1e-9));
  }
  SUBCASE("soft mode survives finite differences") {
    ParamStore ps;
    Parameter& z = ps.create("z", 1, 3);
    z.value[0] = 1.5;
    z.value[1] = -0.5;
    z.value[2] = 0.25;
    auto build = [&](Tape& t) {
      BoundaryScore s;
      Var zv = t.param(z);
      for (int g = 0; g < 3; ++g) {
        s.logits.push_back(gather_element(zv, 0, g));
        s.b_hat.push_back(1.0 / (1.0 + std::exp(-z.value[g])));
        s.prior.push_back(0.0);
        s.coherence.push_back(0.0);
      }
      auto [bset, segs] = refine(s, 0.5, 4);
      auto coeffs = clause_coefficients(t, s, segs, 4, RouteGrad::Soft);
      Var loss = scale(coeffs[0], 0.7);
      for (size_t k = 1; k < coeffs.size(); ++k)
        loss = add(loss, scale(coeffs[k], 0.7 + 0.4 * k));
      return loss;
    };
    CHECK(finite_difference_check(ps, build).max_rel_err < 1e-6);
  }
}
