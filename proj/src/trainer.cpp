#include "navstate/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include <json.hpp>

namespace navstate {

namespace {

uint64_t mix(uint64_t a, uint64_t b) {
  uint64_t x = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

TrainConfig parse_config_text(const std::string& text) {
  TrainConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::string key, eq, value;
    std::istringstream ls(line);
    if (!(ls >> key)) continue;
    ls >> eq;
    if (eq != "=") {
      value = eq;  // "key value" form
    } else if (!(ls >> value)) {
      throw InputError("config line " + std::to_string(lineno) + ": missing value for " + key);
    }
    auto d = [&] { return std::stod(value); };
    auto i = [&] { return std::stoi(value); };
    if (key == "d") cfg.d = i();
    else if (key == "heads") cfg.heads = i();
    else if (key == "delta_b") cfg.delta_b = d();
    else if (key == "l_max") cfg.l_max = i();
    else if (key == "lambda") cfg.lambda = d();
    else if (key == "gamma") cfg.gamma = d();
    else if (key == "beta") cfg.beta = d();
    else if (key == "rl_weight") cfg.rl_weight = d();
    else if (key == "il_warmup") cfg.il_warmup = d();
    else if (key == "lr") cfg.lr = d();
    else if (key == "boundary_lr_scale") cfg.boundary_lr_scale = d();
    else if (key == "batch") cfg.batch = i();
    else if (key == "iters") cfg.iters = i();
    else if (key == "grad_clip") cfg.grad_clip = d();
    else if (key == "seed") cfg.seed = std::stoull(value);
    else if (key == "world_nodes") cfg.world_nodes = i();
    else if (key == "num_worlds") cfg.num_worlds = i();
    else if (key == "episode_pool") cfg.episode_pool = i();
    else if (key == "val_episodes") cfg.val_episodes = i();
    else if (key == "eval_every") cfg.eval_every = i();
    else if (key == "patience") cfg.patience = i();
    else if (key == "obs_sigma") cfg.obs_sigma = d();
    else if (key == "max_steps") cfg.max_steps = i();
    else if (key == "use_picker") cfg.flags.picker = i() != 0;
    else if (key == "use_refiner") cfg.flags.refiner = i() != 0;
    else throw InputError("config line " + std::to_string(lineno) + ": unknown key " + key);
  }
  return cfg;
}

TrainConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string config_to_text(const TrainConfig& cfg) {
  std::ostringstream out;
  out << "d = " << cfg.d << "\n"
      << "heads = " << cfg.heads << "\n"
      << "delta_b = " << cfg.delta_b << "\n"
      << "l_max = " << cfg.l_max << "\n"
      << "lambda = " << cfg.lambda << "\n"
      << "gamma = " << cfg.gamma << "\n"
      << "beta = " << cfg.beta << "\n"
      << "rl_weight = " << cfg.rl_weight << "\n"
      << "il_warmup = " << cfg.il_warmup << "\n"
      << "lr = " << cfg.lr << "\n"
      << "boundary_lr_scale = " << cfg.boundary_lr_scale << "\n"
      << "batch = " << cfg.batch << "\n"
      << "iters = " << cfg.iters << "\n"
      << "grad_clip = " << cfg.grad_clip << "\n"
      << "seed = " << cfg.seed << "\n"
      << "world_nodes = " << cfg.world_nodes << "\n"
      << "num_worlds = " << cfg.num_worlds << "\n"
      << "episode_pool = " << cfg.episode_pool << "\n"
      << "val_episodes = " << cfg.val_episodes << "\n"
      << "eval_every = " << cfg.eval_every << "\n"
      << "patience = " << cfg.patience << "\n"
      << "obs_sigma = " << cfg.obs_sigma << "\n"
      << "max_steps = " << cfg.max_steps << "\n"
      << "use_picker = " << (cfg.flags.picker ? 1 : 0) << "\n"
      << "use_refiner = " << (cfg.flags.refiner ? 1 : 0) << "\n";
  return out.str();
}

// ---------------------------------------------------------------------------

Var il_episode_loss_with_obs(Tape& t, const Model& m, const EpisodeSpec& e,
                             const std::vector<Observation>& obs_per_leg, RouteGrad mode,
                             AblationFlags flags) {
  Instruction inst = tokenize(e.instruction, m.vocab);
  AgentState agent = init_episode(t, m, inst, mode, flags);
  Var total;
  int decisions = 0;
  for (size_t leg = 0; leg < e.oracle_path.size(); ++leg) {
    const Observation& obs = obs_per_leg[leg];
    StepResult step = engine_step(t, m, agent, obs, mode);
    ActionDistribution dist =
        m.policy.act(t, step.pooled, t.input(obs.cand_features), obs.mask);
    int oracle_action;
    if (leg + 1 < e.oracle_path.size()) {
      int next = e.oracle_path[leg + 1];
      auto it = std::find(obs.neighbors.begin(), obs.neighbors.end(), next);
      if (it == obs.neighbors.end())
        throw ContractError("oracle path steps through a non-adjacent node");
      oracle_action = static_cast<int>(it - obs.neighbors.begin());
    } else {
      oracle_action = dist.stop_index();
    }
    Var nll = scale(gather_element(dist.log_probs, 0, oracle_action), -1.0);
    total = total.valid() ? add(total, nll) : nll;
    ++decisions;
  }
  return scale(total, 1.0 / decisions);
}

Var il_episode_loss(Tape& t, const Model& m, const World& w, const EpisodeSpec& e,
                    const RolloutOptions& opt, Rng& obs_rng, RouteGrad mode) {
  std::vector<Observation> obs_per_leg;
  obs_per_leg.reserve(e.oracle_path.size());
  for (size_t leg = 0; leg < e.oracle_path.size(); ++leg)
    obs_per_leg.push_back(observe(w, e.oracle_path[leg], m.encoder.embeddings->value, obs_rng,
                                  opt.obs_sigma, static_cast<int>(leg)));
  return il_episode_loss_with_obs(t, m, e, obs_per_leg, mode, opt.flags);
}

RlEpisodeLoss rl_episode_loss(Tape& t, const Model& m, const World& w, const EpisodeSpec& e,
                              const RolloutOptions& opt, Rng& action_rng, Rng& obs_rng,
                              double gamma, double beta) {
  if (opt.max_steps < 1) throw ContractError("rl_episode_loss: empty rollout");
  Instruction inst = tokenize(e.instruction, m.vocab);
  AgentState agent = init_episode(t, m, inst, RouteGrad::StraightThrough, opt.flags);
  std::vector<double> goal_dist = shortest_distances(w, e.goal);

  std::vector<Var> log_pi, values, entropies;
  std::vector<double> rewards;
  int node = e.start;
  bool stopped_in_radius = false;
  for (int step_i = 0; step_i < opt.max_steps; ++step_i) {
    Observation obs = observe(w, node, m.encoder.embeddings->value, obs_rng, opt.obs_sigma,
                              step_i);
    StepResult step = engine_step(t, m, agent, obs, RouteGrad::StraightThrough);
    ActionDistribution dist =
        m.policy.act(t, step.pooled, t.input(obs.cand_features), obs.mask);
    values.push_back(m.value(t, step.pooled, t.input(obs.features)));
    entropies.push_back(scale(sum_all(mul(dist.probs, dist.log_probs)), -1.0));

    int action = action_rng.categorical(dist.probs.val().data());
    log_pi.push_back(gather_element(dist.log_probs, 0, action));

    bool is_stop = action == dist.stop_index();
    bool timeout = step_i + 1 == opt.max_steps;
    double reward = 0.0;
    if (!is_stop) {
      int next = obs.neighbors[action];
      reward += goal_dist[node] - goal_dist[next];
      node = next;
    }
    if (is_stop || timeout) {
      bool success = w.distance(node, e.goal) <= e.success_radius;
      reward += success ? 2.0 : -2.0;
      stopped_in_radius = success;
      rewards.push_back(reward);
      break;
    }
    rewards.push_back(reward);
  }

  int T = static_cast<int>(rewards.size());
  std::vector<double> returns(T);
  double running = 0.0;
  for (int i = T - 1; i >= 0; --i) {
    running = rewards[i] + gamma * running;
    returns[i] = running;
  }

  Var policy_sum, value_sum, entropy_sum;
  for (int i = 0; i < T; ++i) {
    double advantage = returns[i] - values[i].val().item();  // detached baseline
    Var p = scale(log_pi[i], -advantage);
    Var verr = sub(values[i], t.input(Tensor::row({returns[i]})));
    Var v = mul(verr, verr);
    policy_sum = policy_sum.valid() ? add(policy_sum, p) : p;
    value_sum = value_sum.valid() ? add(value_sum, v) : v;
    entropy_sum = entropy_sum.valid() ? add(entropy_sum, entropies[i]) : entropies[i];
  }
  Var policy_term = scale(policy_sum, 1.0 / T);
  Var value_term = scale(value_sum, 1.0 / T);
  Var entropy_term = scale(entropy_sum, 1.0 / T);

  RlEpisodeLoss out;
  out.policy_term = policy_term.val().item();
  out.value_term = value_term.val().item();
  out.entropy = entropy_term.val().item();
  out.success = stopped_in_radius;
  out.loss = add(policy_term, scale(value_term, 0.5));
  if (beta != 0.0) out.loss = sub(out.loss, scale(entropy_term, beta));
  return out;
}

// ---------------------------------------------------------------------------

std::vector<World> training_worlds(const TrainConfig& cfg, const Vocabulary& vocab) {
  std::vector<World> worlds;
  worlds.reserve(cfg.num_worlds);
  for (int i = 0; i < cfg.num_worlds; ++i)
    worlds.push_back(generate_world(mix(cfg.seed, 100 + i), cfg.world_nodes, vocab));
  return worlds;
}

std::vector<std::pair<int, EpisodeSpec>> validation_specs(const TrainConfig& cfg,
                                                          const std::vector<World>& worlds) {
  std::vector<std::pair<int, EpisodeSpec>> specs;
  Vocabulary vocab = default_vocabulary();
  for (int i = 0; i < cfg.val_episodes; ++i) {
    int wi = i % static_cast<int>(worlds.size());
    specs.emplace_back(wi, make_episode(worlds[wi], mix(cfg.seed, 500000 + i), vocab));
  }
  return specs;
}

TrainResult train_loop(Model& m, const TrainConfig& cfg, std::ostream* metrics_out,
                       std::ostream* console) {
  std::vector<World> worlds = training_worlds(cfg, m.vocab);

  std::vector<std::pair<int, EpisodeSpec>> pool;
  pool.reserve(cfg.episode_pool);
  for (int i = 0; i < cfg.episode_pool; ++i) {
    int wi = i % static_cast<int>(worlds.size());
    pool.emplace_back(wi, make_episode(worlds[wi], mix(cfg.seed, 1000 + i), m.vocab));
  }
  auto val = validation_specs(cfg, worlds);

  Adam adam(m.params, cfg.lr);
  adam.set_lr_scale("segmenter.boundary", cfg.boundary_lr_scale);
  Rng action_rng(mix(cfg.seed, 7));
  int warmup_iters = static_cast<int>(cfg.il_warmup * cfg.iters);

  std::vector<bool> touched(m.params.all().size(), false);
  auto evaluate = [&](double& sr, double& spl) {
    std::vector<MetricReport> reports;
    for (auto& [wi, spec] : val) {
      RolloutOptions ro;
      ro.max_steps = cfg.max_steps;
      ro.obs_sigma = cfg.obs_sigma;
      ro.obs_seed = mix(cfg.seed, 31);
      ro.flags = cfg.flags;
      reports.push_back(run_episode(m, worlds[wi], spec, ro).metrics);
    }
    MetricReport mean = mean_report(reports);
    sr = mean.sr;
    spl = mean.spl;
  };

  TrainResult res;
  std::vector<Tensor> best_values;
  int evals_since_best = 0;
  for (int iter = 0; iter < cfg.iters; ++iter) {
    bool rl_active = cfg.rl_weight != 0.0 && iter >= warmup_iters;
    std::vector<uint64_t> batch_seeds;
    m.params.zero_grad();
    double il_sum = 0.0, rl_sum = 0.0;
    try {
      for (int j = 0; j < cfg.batch; ++j) {
        auto& [wi, spec] = pool[(static_cast<size_t>(iter) * cfg.batch + j) % pool.size()];
        batch_seeds.push_back(spec.seed);
        RolloutOptions ro;
        ro.max_steps = cfg.max_steps;
        ro.obs_sigma = cfg.obs_sigma;
        ro.flags = cfg.flags;
        {
          Tape tape;
          Rng obs_rng(mix(spec.seed, 2 * iter));
          Var il = il_episode_loss(tape, m, worlds[wi], spec, ro, obs_rng,
                                   RouteGrad::StraightThrough);
          il_sum += il.val().item();
          tape.backward(scale(il, cfg.lambda / cfg.batch));
        }
        if (rl_active) {
          Tape tape;
          Rng obs_rng(mix(spec.seed, 2 * iter + 1));
          RlEpisodeLoss rl = rl_episode_loss(tape, m, worlds[wi], spec, ro, action_rng,
                                             obs_rng, cfg.gamma, cfg.beta);
          rl_sum += rl.loss.val().item();
          tape.backward(scale(rl.loss, cfg.rl_weight / cfg.batch));
        }
      }
    } catch (const FiniteError& err) {
      std::string seeds;
      for (uint64_t s : batch_seeds) seeds += " " + std::to_string(s);
      throw std::runtime_error("training aborted, non-finite loss at iteration " +
                               std::to_string(iter) + "; batch episode seeds:" + seeds +
                               " (" + err.what() + ")");
    }

    IterationRecord rec;
    rec.iter = iter;
    rec.loss.il = il_sum / cfg.batch;
    rec.loss.rl = rl_sum / cfg.batch;
    rec.loss.lambda = cfg.lambda;
    rec.loss.total = rec.loss.rl + cfg.lambda * rec.loss.il;
    if (!std::isfinite(rec.loss.total)) {
      std::string seeds;
      for (uint64_t s : batch_seeds) seeds += " " + std::to_string(s);
      throw std::runtime_error("training aborted, non-finite loss at iteration " +
                               std::to_string(iter) + "; batch episode seeds:" + seeds);
    }

    // connectivity audit sees raw gradients, clipping comes after
    size_t pi = 0;
    for (const auto& p : m.params.all()) {
      if (!touched[pi]) {
        for (int i = 0; i < p.grad.size(); ++i)
          if (p.grad[i] != 0.0) {
            touched[pi] = true;
            break;
          }
      }
      ++pi;
    }
    m.params.clip_grad_norm(cfg.grad_clip);
    adam.step();

    bool eval_now = cfg.eval_every > 0 &&
                    ((iter + 1) % cfg.eval_every == 0 || iter + 1 == cfg.iters);
    if (eval_now) {
      rec.has_val = true;
      evaluate(rec.val_sr, rec.val_spl);
      if (rec.val_spl > res.best_val_spl) {
        res.best_val_spl = rec.val_spl;
        res.best_iter = iter;
        best_values.clear();
        for (const auto& p : m.params.all()) best_values.push_back(p.value);
        evals_since_best = 0;
      } else {
        ++evals_since_best;
      }
      if (console)
        *console << "iter " << iter << " il " << rec.loss.il << " rl " << rec.loss.rl
                 << " val_sr " << rec.val_sr << " val_spl " << rec.val_spl << "\n";
    }
    if (metrics_out) {
      nlohmann::json j;
      j["iter"] = rec.iter;
      j["il"] = rec.loss.il;
      j["rl"] = rec.loss.rl;
      j["total"] = rec.loss.total;
      if (rec.has_val) {
        j["val_sr"] = rec.val_sr;
        j["val_spl"] = rec.val_spl;
      }
      *metrics_out << j.dump() << "\n";
    }
    res.history.push_back(rec);
    res.iterations_run = iter + 1;
    if (cfg.patience > 0 && evals_since_best >= cfg.patience) break;
  }

  if (!best_values.empty()) {
    size_t i = 0;
    for (auto& p : m.params.all()) p.value = best_values[i++];
  }
  size_t pi = 0;
  for (const auto& p : m.params.all()) {
    if (!touched[pi]) res.silent_params.push_back(p.name);
    ++pi;
  }
  return res;
}

}  // namespace navstate
