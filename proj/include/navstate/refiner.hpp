#pragma once

#include "navstate/nn.hpp"
#include "navstate/segmenter.hpp"

namespace navstate {

struct RefineResult {
  Var grounded;    // [|T| x d] cross-attended selected tokens
  Var encoded;     // [|T| x d] after the local transformer block
  Var scattered;   // [L x d] selected rows replaced, others carried over
  Var gate;        // [L x d] entries in (0,1)
  Var next_state;  // [L x d]
  double gate_mean = 0.0;
};

/// Refines the activated clause under the observation and folds the result
/// back into the full state with a gated residual update. Reads the previous
/// step's state, never the initial one.
struct SegmentRefiner {
  MultiHeadAttention attn;
  TransformerBlock block;
  Mlp gate_mlp;  // 2d -> d -> d, final bias at -2 for conservative early updates
  int d = 0;

  SegmentRefiner() = default;
  SegmentRefiner(ParamStore& ps, int d, int heads, Rng& rng);

  /// Cross-attention with queries from the selected rows of S_prev.
  Var ground(Tape& t, Var S_prev, const std::vector<int>& selected, Var V) const;
  /// Local contextual encoding; positions are relative to the segment start
  /// and can be disabled for equivariance checks.
  Var encode_segment(Tape& t, Var grounded, bool use_positions = true) const;
  /// Element-wise gate over [LN(S_prev); LN(R)].
  Var compute_gate(Tape& t, Var S_prev, Var R) const;
  /// S_prev + g * (R - S_prev) over the full state.
  Var fuse(Tape& t, Var S_prev, Var R) const;

  /// Full pass. When `route_coeff` is a valid 1x1 node its value multiplies
  /// the state delta (it is exactly 1 under hard routing, so forward values
  /// are unchanged while routing gradients pass through). The update is
  /// written only to the selected rows; all other rows of S_prev are carried
  /// over bit-for-bit.
  RefineResult step(Tape& t, Var S_prev, const std::vector<int>& selected, Var V,
                    Var route_coeff = {}, bool use_positions = true) const;
};

/// The gated residual formula with an explicit gate (test hook).
Var fuse_with_gate(Var S_prev, Var R, Var g);

}  // namespace navstate
