#pragma once

#include "navstate/nn.hpp"
#include "navstate/segmenter.hpp"

namespace navstate {

/// Per-step clause-activation diagnostics.
struct ClauseRelevance {
  Var attended;   // U  [L x d] cross-attended tokens
  Var relevance;  // r  [L x 1] in (0,1)
  Var weights;    // w  [L x 1], sums to 1 within each clause
  Var scores;     // phi [1 x m]
  Var alpha;      // [1 x m] softmax of phi
  Var route;      // [1 x m] routing mask (one-hot; soft under RouteGrad::Soft)
  int k_star = 0; // argmax of alpha, lowest index on ties
};

/// Lowest-index argmax over a row vector.
int argmax_lowest(const Tensor& v);

/// Top-1 routing over clause scores. Forward is the hard one-hot selection
/// under StraightThrough and Detached; under StraightThrough the backward
/// pass substitutes the softmax Jacobian, under Detached there is none.
/// Soft returns softmax(phi) itself.
Var route_top1(Var phi, RouteGrad mode);

/// Grounds tokens against the observation and activates one clause.
/// Queries always come from the initial instruction state, never from the
/// evolving one.
struct ClausePicker {
  MultiHeadAttention attn;
  Linear score;    // d -> 1, zero-initialized so relevance starts at 0.5
  Mlp weight_mlp;  // d -> d -> 1

  ClausePicker() = default;
  ClausePicker(ParamStore& ps, int d, int heads, Rng& rng);

  Var attend(Tape& t, Var S0, Var V) const { return attn(t, S0, V); }
  Var token_relevance(Tape& t, Var U) const;
  Var clause_weights(Tape& t, Var U, const SegmentSet& segs) const;

  /// Full pass: attend, score, weight, aggregate, route. `clause_coeffs`
  /// (when non-empty) multiply the clause scores; see clause_coefficients().
  ClauseRelevance step(Tape& t, Var S0, const SegmentSet& segs,
                       const std::vector<Var>& clause_coeffs, Var V, RouteGrad mode) const;
};

}  // namespace navstate
