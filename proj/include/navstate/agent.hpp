#pragma once

#include "navstate/encoder.hpp"
#include "navstate/picker.hpp"
#include "navstate/refiner.hpp"
#include "navstate/world.hpp"

namespace navstate {

struct ModelConfig {
  int d = 32;
  int heads = 2;
  double delta_b = 0.5;
  int l_max = 80;
  uint64_t seed = 1;
};

struct AblationFlags {
  bool picker = true;   // clause routing; off = the whole instruction is active
  bool refiner = true;  // state updates; off = the state stays at its initial value
};

/// Action scores over the candidate viewpoints plus STOP (always last).
struct ActionDistribution {
  Var logits;
  Var log_probs;
  Var probs;
  int num_actions = 0;
  int stop_index() const { return num_actions - 1; }
  double prob(int a) const { return probs.val()[a]; }
};

/// Bilinear score between the pooled instruction state and each candidate
/// feature; STOP uses a learned pseudo-candidate.
struct PolicyHead {
  Parameter* w_a = nullptr;    // [d x d]
  Parameter* f_stop = nullptr; // [1 x d]
  PolicyHead() = default;
  PolicyHead(ParamStore& ps, int d, Rng& rng);

  /// Masked candidates get probability exactly zero; STOP is never masked.
  ActionDistribution act(Tape& t, Var pooled, Var cand_features,
                         const std::vector<bool>& mask) const;
  /// Convenience: mean-pool the given state rows first (empty = all rows).
  ActionDistribution act(Tape& t, Var S_t, const std::vector<int>& pooled_rows,
                         Var cand_features, const std::vector<bool>& mask) const;
};

/// Scalar state value from the pooled instruction state and the mean
/// observation feature.
struct ValueHead {
  Linear lin;  // 2d -> 1
  ValueHead() = default;
  ValueHead(ParamStore& ps, int d, Rng& rng);
  Var operator()(Tape& t, Var pooled, Var V) const;
};

/// Mean over the active clause's rows of S_t, written as the route-mask
/// weighted sum of per-clause means. With hard routing the forward value is
/// exactly the selected clause's mean; the straight-through backward passes
/// the action gradient into the clause-relevance distribution.
Var pooled_state(Tape& t, Var S_t, const SegmentSet& segs, const ClauseRelevance& rel);

/// All learnable pieces plus the vocabulary. Parameter creation order is
/// fixed, so construction is reproducible for a given seed.
struct Model {
  ModelConfig cfg;
  Vocabulary vocab;
  ParamStore params;
  SegmenterRules rules;
  InstructionEncoder encoder;
  BoundaryScorer boundary;
  ClausePicker picker;
  SegmentRefiner refiner;
  PolicyHead policy;
  ValueHead value;

  Model(ModelConfig cfg, Vocabulary vocab);
};

/// Per-episode state. The initial instruction state is immutable for the
/// episode; segmentation happens once because it depends only on the text.
struct AgentState {
  Instruction inst;
  InstructionState s0;
  InstructionState s_prev;
  BoundarySet coarse;
  BoundaryScore bscore;
  BoundarySet refined;
  SegmentSet segs;
  std::vector<Var> clause_coeffs;
  int t = 0;
  AblationFlags flags;
};

/// Encode + segment on the episode tape.
AgentState init_episode(Tape& t, const Model& m, const Instruction& inst, RouteGrad mode,
                        AblationFlags flags = {});

struct StepResult {
  Var S_t;
  Var pooled;  // [1 x d] policy input, see pooled_state()
  ClauseRelevance rel;
  std::vector<int> selected;  // active token rows
  double gate_mean = 0.0;
};

/// One coarse-to-fine update: route a clause against the observation, refine
/// its tokens, fold them into the state. Ablations: picker off selects every
/// token; refiner off freezes the state (routing diagnostics still produced).
StepResult engine_step(Tape& t, const Model& m, AgentState& agent, const Observation& obs,
                       RouteGrad mode);

}  // namespace navstate
