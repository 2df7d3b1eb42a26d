#include "navstate/rollout.hpp"

#include <json.hpp>

namespace navstate {

Rollout run_episode(const Model& m, const World& w, const EpisodeSpec& e,
                    const RolloutOptions& opt) {
  Rollout out;
  Tape tape(/*grad_enabled=*/false);
  Instruction inst = tokenize(e.instruction, m.vocab);
  AgentState agent = init_episode(tape, m, inst, RouteGrad::Detached, opt.flags);
  Rng obs_rng(opt.obs_seed ^ e.seed);

  int node = e.start;
  out.traj.nodes.push_back(node);
  for (int t = 0; t < opt.max_steps; ++t) {
    Observation obs = observe(w, node, m.encoder.embeddings->value, obs_rng, opt.obs_sigma, t);
    StepResult step = engine_step(tape, m, agent, obs, RouteGrad::Detached);
    ActionDistribution dist =
        m.policy.act(tape, step.pooled, tape.input(obs.cand_features), obs.mask);
    int action = argmax_lowest(dist.probs.val());

    StepDiag diag;
    diag.t = t;
    diag.node = node;
    diag.action = action;
    diag.k_star = step.rel.k_star;
    diag.alpha.assign(step.rel.alpha.val().data().begin(), step.rel.alpha.val().data().end());
    diag.gate_mean = step.gate_mean;
    out.diags.push_back(std::move(diag));

    if (action == dist.stop_index()) {
      out.traj.stopped = true;
      break;
    }
    node = obs.neighbors[action];
    out.traj.nodes.push_back(node);
  }
  if (!out.traj.stopped) out.traj.stopped = true;  // step cap forces STOP
  out.metrics = compute_metrics(w, e, out.traj);
  return out;
}

std::string trajectory_log(const EpisodeSpec& e, const Rollout& r) {
  using nlohmann::json;
  std::string lines;
  for (const auto& d : r.diags) {
    json j;
    j["t"] = d.t;
    j["node"] = d.node;
    j["action"] = d.action;
    j["k_star"] = d.k_star;
    j["alpha"] = d.alpha;
    j["gate_mean"] = d.gate_mean;
    lines += j.dump();
    lines += "\n";
  }
  json fin;
  fin["episode_seed"] = e.seed;
  fin["world_seed"] = e.world_seed;
  fin["nodes"] = r.traj.nodes;
  fin["stopped"] = r.traj.stopped;
  fin["metrics"] = {{"tl", r.metrics.tl},   {"ne", r.metrics.ne},   {"sr", r.metrics.sr},
                    {"osr", r.metrics.osr}, {"spl", r.metrics.spl}, {"rgspl", r.metrics.rgspl}};
  lines += fin.dump();
  lines += "\n";
  return lines;
}

}  // namespace navstate
