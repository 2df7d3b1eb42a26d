#pragma once

#include <iosfwd>
#include <optional>

#include "navstate/rollout.hpp"

namespace navstate {

struct TrainConfig {
  // model
  int d = 32;
  int heads = 2;
  double delta_b = 0.5;
  int l_max = 80;
  // objective
  double lambda = 0.2;  // weight of the imitation term in the total loss
  double gamma = 0.95;
  double beta = 0.01;   // entropy bonus
  double rl_weight = 1.0;  // 0 = imitation only
  double il_warmup = 0.25;  // fraction of iterations with the RL term off
  // optimization
  double lr = 3e-4;
  // Boundary refinement runs slower than the rest: segmentation structure
  // must not outrun the grounding it is scored by.
  double boundary_lr_scale = 0.02;
  int batch = 8;
  int iters = 600;
  double grad_clip = 5.0;
  uint64_t seed = 1;
  // data
  int world_nodes = 20;
  int num_worlds = 4;
  int episode_pool = 500;
  int val_episodes = 40;
  int eval_every = 25;
  int patience = 8;
  double obs_sigma = 0.1;
  int max_steps = 20;

  AblationFlags flags;
};

/// Flat "key = value" text, '#' comments. Unknown keys are an error.
TrainConfig parse_config_text(const std::string& text);
TrainConfig parse_config_file(const std::string& path);
std::string config_to_text(const TrainConfig& cfg);

struct LossReport {
  double il = 0.0;
  double rl = 0.0;
  double lambda = 0.0;
  double total = 0.0;  // rl + lambda * il, same expression everywhere
};

/// Teacher-forced cross-entropy along the oracle path; the executed action is
/// always the oracle action and the final decision is STOP at the goal.
Var il_episode_loss(Tape& t, const Model& m, const World& w, const EpisodeSpec& e,
                    const RolloutOptions& opt, Rng& obs_rng, RouteGrad mode);

/// Same, over pre-captured per-leg observations (one per oracle node). Lets
/// a gradient oracle hold the observations fixed while parameters move, the
/// way frozen perceptual features behave.
Var il_episode_loss_with_obs(Tape& t, const Model& m, const EpisodeSpec& e,
                             const std::vector<Observation>& obs_per_leg, RouteGrad mode,
                             AblationFlags flags = {});

struct RlEpisodeLoss {
  Var loss;  // policy + 0.5 * value - beta * entropy
  double policy_term = 0.0;
  double value_term = 0.0;
  double entropy = 0.0;
  bool success = false;
};

/// Sampled rollout under the current policy with an advantage actor-critic
/// objective. Rewards: +2 for stopping within the radius, -2 for a failed
/// stop or timeout, plus per-step reduction of the shortest-path distance
/// to the goal. Returns are discounted by gamma; advantages are detached.
RlEpisodeLoss rl_episode_loss(Tape& t, const Model& m, const World& w, const EpisodeSpec& e,
                              const RolloutOptions& opt, Rng& action_rng, Rng& obs_rng,
                              double gamma, double beta);

struct IterationRecord {
  int iter = 0;
  LossReport loss;
  bool has_val = false;
  double val_sr = 0.0;
  double val_spl = 0.0;
};

struct TrainResult {
  std::vector<IterationRecord> history;
  double best_val_spl = -1.0;
  int best_iter = -1;
  int iterations_run = 0;
  std::vector<std::string> silent_params;  // no nonzero gradient on any batch
};

/// Samples batches from a fixed episode pool, alternates imitation and RL
/// per the warmup schedule, evaluates periodically on held-out episode seeds
/// of the same worlds, and keeps the checkpoint with the best validation SPL
/// (restored into the model on return). `metrics_out`, when set, receives
/// one JSON line per iteration. Aborts with the batch's episode seeds if the
/// loss turns non-finite.
TrainResult train_loop(Model& m, const TrainConfig& cfg, std::ostream* metrics_out = nullptr,
                       std::ostream* console = nullptr);

/// The worlds a config trains on (also used for held-out evaluation).
std::vector<World> training_worlds(const TrainConfig& cfg, const Vocabulary& vocab);
/// Validation specs: fresh episode seeds on the training worlds.
std::vector<std::pair<int, EpisodeSpec>> validation_specs(const TrainConfig& cfg,
                                                          const std::vector<World>& worlds);

}  // namespace navstate
