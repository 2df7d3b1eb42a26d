#pragma once

#include <set>
#include <string>
#include <utility>
#include <vector>

#include "navstate/nn.hpp"
#include "navstate/text.hpp"

namespace navstate {

/// How gradients cross the discrete choices (clause routing, boundary
/// thresholding).
///   StraightThrough - hard forward, soft backward (training)
///   Detached        - hard forward, no gradient path (inference)
///   Soft            - soft forward, exact gradients (used by the
///                     finite-difference harness, never in rollouts)
enum class RouteGrad { StraightThrough, Detached, Soft };

/// Inter-token gap positions. Gap i separates token i-1 and token i
/// (0-based tokens), so valid positions are 1..L-1.
struct BoundarySet {
  enum class Source { Coarse, Refined };
  std::vector<int> positions;  // strictly increasing
  Source source = Source::Coarse;
  bool contains(int gap) const;
};

struct Clause {
  int begin = 0;  // half-open token range
  int end = 0;
  int size() const { return end - begin; }
};

struct SegmentSet {
  std::vector<Clause> clauses;  // contiguous, disjoint, covering [0, L)
  int count() const { return static_cast<int>(clauses.size()); }
  std::vector<std::pair<int, int>> ranges() const;
  std::vector<int> token_rows(int k) const;
};

/// Conjunction/punctuation lists are configuration data.
struct SegmenterRules {
  std::set<std::string> boundary_after = {".", ",", ";"};
  std::set<std::string> boundary_before = {"and", "then", "after", "until"};
};

/// Coarse boundaries: after punctuation tokens and before navigational
/// conjunctions that are neither first nor last. Parameter-free, idempotent.
BoundarySet segment_rules(const Instruction& inst, const SegmenterRules& rules = {});

/// Per-gap scores from the learned refinement head.
struct BoundaryScore {
  std::vector<double> b_hat;      // refined confidences in (0,1)
  std::vector<double> prior;      // coarse-boundary indicator
  std::vector<double> coherence;  // windowed cosine between gap neighborhoods
  std::vector<Var> logits;        // pre-sigmoid scores, on the tape
  int gaps() const { return static_cast<int>(b_hat.size()); }
};

/// Sigmoid MLP over [h_i; h_{i+1}; p_i; psi_i] per gap.
struct BoundaryScorer {
  Mlp mlp;  // (2d+2) -> d -> 1
  int d = 0;
  BoundaryScorer() = default;
  BoundaryScorer(ParamStore& ps, int d, Rng& rng);
  BoundaryScore operator()(Tape& t, Var h, const BoundarySet& coarse) const;
};

/// Keeps gaps whose confidence strictly exceeds delta_b and splits the token
/// range at the survivors. No survivors means one clause covering everything.
std::pair<BoundarySet, SegmentSet> refine(const BoundaryScore& scores, double delta_b, int L);

/// Splits [0, L) at the given gaps.
SegmentSet split_at(const BoundarySet& boundaries, int L);

/// Structural step size for boundary refinement: the straight-through
/// coefficients expose kBoundaryGradScale * d(log clause configuration
/// probability)/d(logits) to the routing gradient. Unscaled, segmentation
/// restructures faster than grounding learns and collapses degenerately.
inline constexpr double kBoundaryGradScale = 0.1;

/// Per-clause multipliers that carry routing gradients back into the boundary
/// scorer. Under StraightThrough each coefficient is exactly 1 in the forward
/// pass (exp of a scaled q - detach(q))) while the backward pass sees the
/// scaled log-probability gradient of the clause's boundary configuration.
/// Detached returns an empty vector; Soft returns the live probabilities
/// exp(q).
std::vector<Var> clause_coefficients(Tape& t, const BoundaryScore& scores,
                                     const SegmentSet& segs, int L, RouteGrad mode);

}  // namespace navstate
