// Command-line front end: world generation, segmentation, rollouts,
// training, evaluation, ablations, and the gradient self-check.

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "navstate/gradcheck.hpp"
#include "navstate/trainer.hpp"

using namespace navstate;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  out << text;
}

Model load_model(const std::string& checkpoint, const TrainConfig& cfg) {
  ModelConfig mc;
  mc.d = cfg.d;
  mc.heads = cfg.heads;
  mc.delta_b = cfg.delta_b;
  mc.l_max = cfg.l_max;
  mc.seed = cfg.seed;
  Model m(mc, default_vocabulary());
  if (!checkpoint.empty()) m.params.load(checkpoint);
  return m;
}

MetricReport eval_on_worlds(const Model& m, const std::vector<World>& worlds,
                            uint64_t episode_seed_base, int episodes, const RolloutOptions& ro,
                            std::ostream* plot_csv) {
  std::vector<MetricReport> reports;
  for (int i = 0; i < episodes; ++i) {
    const World& w = worlds[i % worlds.size()];
    EpisodeSpec spec = make_episode(w, episode_seed_base + i, m.vocab);
    Rollout r = run_episode(m, w, spec, ro);
    reports.push_back(r.metrics);
    if (plot_csv) {
      for (const auto& diag : r.diags) {
        *plot_csv << i << "," << diag.t << "," << w.nodes[diag.node].x << ","
                  << w.nodes[diag.node].y << "," << diag.k_star;
        for (double a : diag.alpha) *plot_csv << "," << a;
        *plot_csv << "\n";
      }
    }
  }
  return mean_report(reports);
}

void print_report(std::ostream& out, const std::string& name, const MetricReport& r) {
  out << name << ": TL " << r.tl << "  NE " << r.ne << "  SR " << r.sr << "  OSR " << r.osr
      << "  SPL " << r.spl << "  RGSPL " << r.rgspl << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"instruction-state navigation toolkit"};
  app.require_subcommand(1);

  // --- gen-world ---
  auto* gen = app.add_subcommand("gen-world", "generate a world and print it as JSON");
  uint64_t gen_seed = 1;
  int gen_nodes = 20;
  std::string gen_out;
  gen->add_option("--seed", gen_seed);
  gen->add_option("--nodes", gen_nodes);
  gen->add_option("--out", gen_out, "write to file instead of stdout");

  // --- segment ---
  auto* seg = app.add_subcommand("segment",
                                 "segment instructions (one per line) into clauses");
  std::string seg_checkpoint, seg_in;
  uint64_t seg_seed = 1;
  double seg_delta = 0.5;
  seg->add_option("--checkpoint", seg_checkpoint, "parameters to use (default: fresh init)");
  seg->add_option("--seed", seg_seed);
  seg->add_option("--delta-b", seg_delta, "boundary threshold");
  seg->add_option("--in", seg_in, "input file (default: stdin)");

  // --- rollout ---
  auto* roll = app.add_subcommand("rollout", "replay one episode and emit its trajectory log");
  std::string roll_world, roll_checkpoint, roll_log;
  uint64_t roll_seed = 1;
  double roll_sigma = 0.1;
  int roll_max_steps = 20;
  bool roll_no_picker = false, roll_no_refiner = false;
  roll->add_option("--world", roll_world, "world JSON file")->required();
  roll->add_option("--episode-seed", roll_seed);
  roll->add_option("--checkpoint", roll_checkpoint);
  roll->add_option("--log", roll_log, "trajectory log path (default: stdout)");
  roll->add_option("--sigma", roll_sigma);
  roll->add_option("--max-steps", roll_max_steps);
  roll->add_flag("--no-picker", roll_no_picker);
  roll->add_flag("--no-refiner", roll_no_refiner);

  // --- train ---
  auto* tr = app.add_subcommand("train", "train a model");
  std::string tr_config, tr_out = "checkpoint.bin", tr_metrics = "metrics.ldjson";
  tr->add_option("--config", tr_config, "flat key=value config file");
  tr->add_option("--out", tr_out, "checkpoint path");
  tr->add_option("--metrics", tr_metrics, "iteration history (line-delimited JSON)");

  // --- eval ---
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on held-out episodes");
  std::string ev_checkpoint, ev_config, ev_plot;
  uint64_t ev_world_seed = 9000;
  int ev_worlds = 2, ev_episodes = 40;
  bool ev_no_picker = false, ev_no_refiner = false;
  ev->add_option("--checkpoint", ev_checkpoint)->required();
  ev->add_option("--config", ev_config);
  ev->add_option("--world-seed", ev_world_seed, "base seed for evaluation worlds");
  ev->add_option("--worlds", ev_worlds);
  ev->add_option("--episodes", ev_episodes);
  ev->add_option("--plot-data", ev_plot, "CSV of per-step alpha and coordinates");
  ev->add_flag("--no-picker", ev_no_picker);
  ev->add_flag("--no-refiner", ev_no_refiner);

  // --- ablate ---
  auto* ab = app.add_subcommand("ablate",
                                "compare full/picker-only/refiner-only/static variants");
  std::string ab_checkpoint, ab_config;
  uint64_t ab_world_seed = 9000;
  int ab_worlds = 2, ab_episodes = 40;
  ab->add_option("--checkpoint", ab_checkpoint)->required();
  ab->add_option("--config", ab_config);
  ab->add_option("--world-seed", ab_world_seed);
  ab->add_option("--worlds", ab_worlds);
  ab->add_option("--episodes", ab_episodes);

  // --- gradcheck ---
  auto* gc = app.add_subcommand("gradcheck",
                                "finite-difference check of the composed step loss");
  int gc_fixtures = 20;
  uint64_t gc_seed = 1;
  double gc_tol = 1e-4;
  gc->add_option("--fixtures", gc_fixtures);
  gc->add_option("--seed", gc_seed);
  gc->add_option("--tol", gc_tol);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      World w = generate_world(gen_seed, gen_nodes, default_vocabulary());
      std::string j = world_to_json(w);
      if (gen_out.empty())
        std::cout << j << "\n";
      else
        spit(gen_out, j + "\n");
      return 0;
    }

    if (*seg) {
      TrainConfig cfg;
      cfg.seed = seg_seed;
      cfg.delta_b = seg_delta;
      Model m = load_model(seg_checkpoint, cfg);
      std::istream* in = &std::cin;
      std::ifstream file;
      if (!seg_in.empty()) {
        file.open(seg_in);
        if (!file) throw InputError("cannot open " + seg_in);
        in = &file;
      }
      std::string line;
      while (std::getline(*in, line)) {
        if (line.empty()) continue;
        Instruction inst = tokenize(line, m.vocab);
        Tape tape(/*grad_enabled=*/false);
        Var h = m.encoder.encode(tape, inst);
        BoundarySet coarse = segment_rules(inst, m.rules);
        BoundaryScore score = m.boundary(tape, h, coarse);
        auto [refined, segs] = refine(score, seg_delta, inst.length());
        nlohmann::json j;
        j["text"] = line;
        j["tokens"] = inst.token_texts;
        j["coarse"] = coarse.positions;
        j["refined"] = refined.positions;
        j["b_hat"] = score.b_hat;
        auto clauses = nlohmann::json::array();
        for (const auto& c : segs.clauses) clauses.push_back({c.begin, c.end});
        j["clauses"] = clauses;  // half-open token ranges
        std::cout << j.dump() << "\n";
      }
      return 0;
    }

    if (*roll) {
      TrainConfig cfg;
      Model m = load_model(roll_checkpoint, cfg);
      World w = world_from_json(slurp(roll_world));
      EpisodeSpec spec = make_episode(w, roll_seed, m.vocab);
      RolloutOptions ro;
      ro.max_steps = roll_max_steps;
      ro.obs_sigma = roll_sigma;
      ro.flags.picker = !roll_no_picker;
      ro.flags.refiner = !roll_no_refiner;
      Rollout r = run_episode(m, w, spec, ro);
      std::string log = trajectory_log(spec, r);
      if (roll_log.empty())
        std::cout << log;
      else
        spit(roll_log, log);
      return 0;
    }

    if (*tr) {
      TrainConfig cfg = tr_config.empty() ? TrainConfig{} : parse_config_file(tr_config);
      ModelConfig mc;
      mc.d = cfg.d;
      mc.heads = cfg.heads;
      mc.delta_b = cfg.delta_b;
      mc.l_max = cfg.l_max;
      mc.seed = cfg.seed;
      Model m(mc, default_vocabulary());
      std::ofstream metrics(tr_metrics);
      TrainResult res = train_loop(m, cfg, &metrics, &std::cout);
      m.params.save(tr_out);
      std::cout << "best val SPL " << res.best_val_spl << " at iteration " << res.best_iter
                << "; checkpoint written to " << tr_out << "\n";
      return 0;
    }

    if (*ev) {
      TrainConfig cfg = ev_config.empty() ? TrainConfig{} : parse_config_file(ev_config);
      Model m = load_model(ev_checkpoint, cfg);
      std::vector<World> worlds;
      for (int i = 0; i < ev_worlds; ++i)
        worlds.push_back(generate_world(ev_world_seed + i, cfg.world_nodes, m.vocab));
      RolloutOptions ro;
      ro.max_steps = cfg.max_steps;
      ro.obs_sigma = cfg.obs_sigma;
      ro.obs_seed = 17;
      ro.flags.picker = !ev_no_picker;
      ro.flags.refiner = !ev_no_refiner;
      std::ofstream plot;
      std::ostream* plot_ptr = nullptr;
      if (!ev_plot.empty()) {
        plot.open(ev_plot);
        plot << "episode,t,x,y,k_star,alpha...\n";
        plot_ptr = &plot;
      }
      MetricReport r = eval_on_worlds(m, worlds, ev_world_seed * 131, ev_episodes, ro, plot_ptr);
      print_report(std::cout, "eval", r);
      return 0;
    }

    if (*ab) {
      TrainConfig cfg = ab_config.empty() ? TrainConfig{} : parse_config_file(ab_config);
      Model m = load_model(ab_checkpoint, cfg);
      std::vector<World> worlds;
      for (int i = 0; i < ab_worlds; ++i)
        worlds.push_back(generate_world(ab_world_seed + i, cfg.world_nodes, m.vocab));
      struct VariantSpec {
        const char* name;
        AblationFlags flags;
      } variants[] = {
          {"full", {true, true}},
          {"picker-only", {true, false}},
          {"refiner-only", {false, true}},
          {"static", {false, false}},
      };
      for (const auto& v : variants) {
        RolloutOptions ro;
        ro.max_steps = cfg.max_steps;
        ro.obs_sigma = cfg.obs_sigma;
        ro.obs_seed = 17;
        ro.flags = v.flags;
        MetricReport r =
            eval_on_worlds(m, worlds, ab_world_seed * 131, ab_episodes, ro, nullptr);
        print_report(std::cout, v.name, r);
      }
      return 0;
    }

    if (*gc) {
      int failures = run_composed_gradcheck(gc_fixtures, gc_seed, gc_tol, std::cout);
      return failures == 0 ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
