#include "navstate/picker.hpp"

#include <cmath>

namespace navstate {

int argmax_lowest(const Tensor& v) {
  int best = 0;
  for (int i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

Var route_top1(Var phi, RouteGrad mode) {
  if (phi.val().rows() != 1) throw ShapeError("route_top1: expected a row vector");
  if (mode == RouteGrad::Soft) return softmax_rows(phi);

  int m = phi.val().cols();
  std::vector<double> alpha(m);
  double mx = phi.val()[0];
  for (int i = 1; i < m; ++i) mx = std::max(mx, phi.val()[i]);
  double sum = 0.0;
  for (int i = 0; i < m; ++i) {
    alpha[i] = std::exp(phi.val()[i] - mx);
    sum += alpha[i];
  }
  for (int i = 0; i < m; ++i) alpha[i] /= sum;

  Tensor hard(1, m);
  hard[argmax_lowest(phi.val())] = 1.0;

  Tape& t = phi.tape();
  if (mode == RouteGrad::Detached) return t.input(std::move(hard));

  // straight-through: backward behaves as if the output were softmax(phi)
  int pi = phi.id();
  bool rg = t.grad_enabled() && phi.requires_grad();
  return t.emit(std::move(hard), rg, [pi, alpha](Tape& t, int self) {
    const Tensor& g = t.node(self).grad;
    if (!t.node(pi).requires_grad) return;
    Tensor& gp = t.grad_buf(pi);
    double dot = 0.0;
    for (size_t j = 0; j < alpha.size(); ++j) dot += g[static_cast<int>(j)] * alpha[j];
    for (size_t j = 0; j < alpha.size(); ++j)
      gp[static_cast<int>(j)] += alpha[j] * (g[static_cast<int>(j)] - dot);
  });
}

ClausePicker::ClausePicker(ParamStore& ps, int d, int heads, Rng& rng)
    : attn(ps, "picker.attn", d, heads, rng),
      score(ps, "picker.score", d, 1, rng, /*zero_init=*/true),
      weight_mlp(ps, "picker.weight", d, d, 1, rng) {
  // Grounding rests on text embeddings matching the observation features
  // built from the same table; near-identity projections keep that alignment
  // visible from the first step instead of scrambling it.
  for (Linear* lin : {&attn.q, &attn.k, &attn.v, &attn.o}) {
    for (int i = 0; i < lin->w->value.size(); ++i) lin->w->value[i] *= 0.25;
    for (int i = 0; i < d; ++i) lin->w->value.at(i, i) += 1.0;
  }
}

Var ClausePicker::token_relevance(Tape& t, Var U) const { return sigmoid(score(t, U)); }

Var ClausePicker::clause_weights(Tape& t, Var U, const SegmentSet& segs) const {
  Var logits = clamp(weight_mlp(t, U), -30.0, 30.0);
  return segment_normalize(exp(logits), segs.ranges());
}

ClauseRelevance ClausePicker::step(Tape& t, Var S0, const SegmentSet& segs,
                                   const std::vector<Var>& clause_coeffs, Var V,
                                   RouteGrad mode) const {
  ClauseRelevance rel;
  rel.attended = attend(t, S0, V);
  rel.relevance = token_relevance(t, rel.attended);
  rel.weights = clause_weights(t, rel.attended, segs);
  Var phi = segment_sum(mul(rel.weights, rel.relevance), segs.ranges());
  if (!clause_coeffs.empty()) {
    if (static_cast<int>(clause_coeffs.size()) != segs.count())
      throw ContractError("clause coefficient count does not match clause count");
    Var kappa = clause_coeffs[0];
    for (size_t k = 1; k < clause_coeffs.size(); ++k)
      kappa = concat_cols(kappa, clause_coeffs[k]);
    phi = mul(phi, kappa);
  }
  rel.scores = phi;
  rel.alpha = softmax_rows(phi);
  rel.route = route_top1(phi, mode);
  rel.k_star = argmax_lowest(rel.alpha.val());
  return rel;
}

}  // namespace navstate
