#pragma once

#include <iosfwd>

#include "navstate/agent.hpp"

namespace navstate {

/// A reproducible small-scale step fixture: a fresh model (d=8), a short
/// instruction, an observation, and a target action. The builder runs the
/// full composed pass (clause activation, segment refinement, action scoring,
/// cross-entropy) on a given tape under the soft routing relaxation, so every
/// parameter is exercised by a smooth objective the finite-difference oracle
/// can verify.
struct ComposedFixture {
  Model model;
  Instruction instruction;
  Observation observation;
  int target_action = 0;

  Var build_loss(Tape& t, RouteGrad mode = RouteGrad::Soft) const;
};

/// Draws a fixture whose discrete choices (clause count, routing argmax,
/// boundary thresholding) have comfortable margins, reseeding until stable.
/// Dimensions satisfy L <= 12, d = 8, N <= 6, clause count <= 3.
ComposedFixture make_composed_fixture(uint64_t seed);

/// Runs `fixtures` finite-difference checks of the composed step loss.
/// Prints one line per fixture; returns the number of failures.
int run_composed_gradcheck(int fixtures, uint64_t seed, double tol, std::ostream& out);

}  // namespace navstate
