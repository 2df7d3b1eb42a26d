#pragma once

#include "navstate/agent.hpp"
#include "navstate/metrics.hpp"

namespace navstate {

struct RolloutOptions {
  int max_steps = 20;
  double obs_sigma = 0.1;
  uint64_t obs_seed = 0;  // observation noise stream for the episode
  AblationFlags flags;
};

struct StepDiag {
  int t = 0;
  int node = 0;
  int action = 0;  // candidate index; the last index is STOP
  int k_star = 0;
  std::vector<double> alpha;
  double gate_mean = 0.0;
};

struct Rollout {
  Trajectory traj;
  std::vector<StepDiag> diags;
  MetricReport metrics;
};

/// Greedy (argmax) policy execution with a forward-only tape. The episode
/// ends on STOP or when the step cap forces one.
Rollout run_episode(const Model& m, const World& w, const EpisodeSpec& e,
                    const RolloutOptions& opt);

/// Line-delimited JSON: one record per step, then a final record with the
/// episode metrics.
std::string trajectory_log(const EpisodeSpec& e, const Rollout& r);

}  // namespace navstate
