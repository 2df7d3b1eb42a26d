#include "navstate/segmenter.hpp"

#include <algorithm>
#include <cmath>

namespace navstate {

bool BoundarySet::contains(int gap) const {
  return std::binary_search(positions.begin(), positions.end(), gap);
}

std::vector<std::pair<int, int>> SegmentSet::ranges() const {
  std::vector<std::pair<int, int>> r;
  r.reserve(clauses.size());
  for (const auto& c : clauses) r.emplace_back(c.begin, c.end);
  return r;
}

std::vector<int> SegmentSet::token_rows(int k) const {
  const Clause& c = clauses[k];
  std::vector<int> rows(c.size());
  for (int i = 0; i < c.size(); ++i) rows[i] = c.begin + i;
  return rows;
}

BoundarySet segment_rules(const Instruction& inst, const SegmenterRules& rules) {
  int L = inst.length();
  std::set<int> gaps;
  for (int i = 0; i < L; ++i) {
    const std::string& tok = inst.token_texts[i];
    if (rules.boundary_after.count(tok) && i + 1 < L) gaps.insert(i + 1);
    if (rules.boundary_before.count(tok) && i > 0 && i + 1 < L) gaps.insert(i);
  }
  BoundarySet out;
  out.positions.assign(gaps.begin(), gaps.end());
  out.source = BoundarySet::Source::Coarse;
  return out;
}

BoundaryScorer::BoundaryScorer(ParamStore& ps, int d_, Rng& rng)
    : mlp(ps, "segmenter.boundary", 2 * d_ + 2, d_, 1, rng), d(d_) {
  // Start at the rule-based prior: shrink the random init and wire the
  // prior-indicator feature through the first hidden unit, so the refined
  // boundaries initially coincide with the coarse ones and drift from there.
  for (int i = 0; i < mlp.l1.w->value.size(); ++i) mlp.l1.w->value[i] *= 0.25;
  for (int i = 0; i < mlp.l2.w->value.size(); ++i) mlp.l2.w->value[i] *= 0.25;
  mlp.l1.w->value.at(2 * d_, 0) += 3.0;
  mlp.l1.b->value[0] = -1.5;
  mlp.l2.w->value[0] += 2.5;
}

namespace {

// Cosine between the means of up to two token rows on each side of the gap.
Var window_cosine(Tape& t, Var h, int gap, int L) {
  std::vector<int> left, right;
  for (int i = std::max(0, gap - 2); i < gap; ++i) left.push_back(i);
  for (int i = gap; i < std::min(L, gap + 2); ++i) right.push_back(i);
  Var a = mean_rows(gather_rows(h, left));
  Var b = mean_rows(gather_rows(h, right));
  Var dot = sum_all(mul(a, b));
  Var eps = t.input(Tensor::row({1e-12}));
  Var na = sqrt(add(sum_all(mul(a, a)), eps));
  Var nb = sqrt(add(sum_all(mul(b, b)), eps));
  return div(dot, mul(na, nb));
}

}  // namespace

BoundaryScore BoundaryScorer::operator()(Tape& t, Var h, const BoundarySet& coarse) const {
  int L = h.rows();
  BoundaryScore out;
  if (L < 2) return out;  // no gaps
  out.b_hat.resize(L - 1);
  out.prior.resize(L - 1);
  out.coherence.resize(L - 1);
  out.logits.reserve(L - 1);
  for (int gap = 1; gap < L; ++gap) {
    int g = gap - 1;
    out.prior[g] = coarse.contains(gap) ? 1.0 : 0.0;
    Var hi = gather_rows(h, {gap - 1});
    Var hj = gather_rows(h, {gap});
    Var psi = window_cosine(t, h, gap, L);
    out.coherence[g] = psi.val().item();
    Var feat = concat_cols(concat_cols(hi, hj),
                           concat_cols(t.input(Tensor::row({out.prior[g]})), psi));
    Var logit = mlp(t, feat);
    out.logits.push_back(logit);
    out.b_hat[g] = 1.0 / (1.0 + std::exp(-logit.val().item()));
  }
  return out;
}

SegmentSet split_at(const BoundarySet& boundaries, int L) {
  SegmentSet segs;
  int begin = 0;
  for (int gap : boundaries.positions) {
    segs.clauses.push_back({begin, gap});
    begin = gap;
  }
  segs.clauses.push_back({begin, L});
  return segs;
}

std::pair<BoundarySet, SegmentSet> refine(const BoundaryScore& scores, double delta_b, int L) {
  BoundarySet refined;
  refined.source = BoundarySet::Source::Refined;
  for (int g = 0; g < scores.gaps(); ++g)
    if (scores.b_hat[g] > delta_b) refined.positions.push_back(g + 1);
  return {refined, split_at(refined, L)};
}

std::vector<Var> clause_coefficients(Tape& t, const BoundaryScore& scores,
                                     const SegmentSet& segs, int L, RouteGrad mode) {
  if (mode == RouteGrad::Detached) return {};
  std::vector<Var> coeffs;
  coeffs.reserve(segs.clauses.size());
  for (const Clause& c : segs.clauses) {
    // log-probability of this clause's boundary configuration, from logits:
    // log sigmoid(z) = -softplus(-z), log(1 - sigmoid(z)) = -softplus(z)
    Var q;
    auto accumulate = [&](Var term) { q = q.valid() ? add(q, term) : term; };
    if (c.begin > 0) accumulate(scale(softplus(scale(scores.logits[c.begin - 1], -1.0)), -1.0));
    if (c.end < L) accumulate(scale(softplus(scale(scores.logits[c.end - 1], -1.0)), -1.0));
    for (int gap = c.begin + 1; gap < c.end; ++gap)
      accumulate(scale(softplus(scores.logits[gap - 1]), -1.0));
    if (!q.valid()) {
      coeffs.push_back(t.input(Tensor::row({1.0})));
      continue;
    }
    if (mode == RouteGrad::Soft) {
      coeffs.push_back(exp(q));
    } else {
      coeffs.push_back(exp(scale(sub(q, t.detach(q)), kBoundaryGradScale)));
    }
  }
  return coeffs;
}

}  // namespace navstate
