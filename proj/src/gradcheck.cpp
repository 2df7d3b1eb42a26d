#include "navstate/gradcheck.hpp"

#include <cmath>
#include <ostream>

namespace navstate {

namespace {

Vocabulary fixture_vocabulary() {
  return Vocabulary({"walk", "to", "the", "then", "and", "stop", ".", "lamp", "door", "sofa",
                     "gate", "pond"});
}

Instruction random_instruction(const Vocabulary& vocab, Rng& rng) {
  static const std::vector<std::string> fillers = {"walk", "to",   "the",  "lamp",
                                                   "door", "sofa", "gate", "pond"};
  static const std::vector<std::string> joiners = {"then", "and", "."};
  int L = rng.uniform_int(4, 12);
  std::string text;
  for (int i = 0; i < L; ++i) {
    if (!text.empty()) text += " ";
    bool joiner = i > 0 && i + 1 < L && rng.uniform() < 0.25;
    if (joiner)
      text += joiners[rng.uniform_int(0, static_cast<int>(joiners.size()) - 1)];
    else
      text += fillers[rng.uniform_int(0, static_cast<int>(fillers.size()) - 1)];
  }
  return tokenize(text, vocab);
}

}  // namespace

Var ComposedFixture::build_loss(Tape& t, RouteGrad mode) const {
  AgentState agent = init_episode(t, model, instruction, mode);
  StepResult step = engine_step(t, model, agent, observation, mode);
  ActionDistribution dist =
      model.policy.act(t, step.pooled, t.input(observation.cand_features), observation.mask);
  return scale(gather_element(dist.log_probs, 0, target_action), -1.0);
}

ComposedFixture make_composed_fixture(uint64_t seed) {
  Vocabulary vocab = fixture_vocabulary();
  for (uint64_t attempt = 0;; ++attempt) {
    uint64_t s = seed + attempt * 7919;
    Rng rng(s ^ 0xfeedbeef);
    ModelConfig mc;
    mc.d = 8;
    mc.heads = 2;
    mc.seed = s;
    Model model(mc, vocab);
    // spread the zero-initialized relevance head so clause scores separate
    Rng spread(s ^ 0x1234);
    init_uniform(model.params.get("picker.score.w").value, spread, -0.8, 0.8);

    Instruction inst = random_instruction(vocab, rng);
    int N = rng.uniform_int(2, 6);
    int cands = rng.uniform_int(1, N - 1);
    Tensor features(N, mc.d);
    for (int i = 0; i < features.size(); ++i) features[i] = rng.normal();
    Observation obs;
    obs.features = features;
    obs.cand_features = Tensor(cands, mc.d);
    for (int i = 0; i < cands; ++i)
      for (int j = 0; j < mc.d; ++j) obs.cand_features.at(i, j) = features.at(i, j);
    obs.neighbors.resize(cands);
    obs.mask.assign(cands, true);

    ComposedFixture fx{std::move(model), std::move(inst), std::move(obs),
                       rng.uniform_int(0, cands)};  // cands == STOP index

    // the discrete structure must be stable under 1e-4 parameter nudges
    Tape probe(/*grad_enabled=*/false);
    AgentState agent = init_episode(probe, fx.model, fx.instruction, RouteGrad::Detached);
    bool stable = agent.segs.count() <= 3;
    for (double b : agent.bscore.b_hat)
      stable = stable && std::abs(b - fx.model.cfg.delta_b) > 1e-3;
    StepResult step = engine_step(probe, fx.model, agent, fx.observation, RouteGrad::Detached);
    const Tensor& alpha = step.rel.alpha.val();
    double top = -1.0, second = -1.0;
    for (int i = 0; i < alpha.size(); ++i) {
      if (alpha[i] > top) {
        second = top;
        top = alpha[i];
      } else if (alpha[i] > second) {
        second = alpha[i];
      }
    }
    stable = stable && (alpha.size() == 1 || top - second > 1e-3);
    if (stable) return fx;
  }
}

int run_composed_gradcheck(int fixtures, uint64_t seed, double tol, std::ostream& out) {
  int failures = 0;
  double worst = 0.0;
  for (int f = 0; f < fixtures; ++f) {
    ComposedFixture fx = make_composed_fixture(seed + static_cast<uint64_t>(f) * 1000003);
    GradCheckReport rep = finite_difference_check(
        fx.model.params, [&](Tape& t) { return fx.build_loss(t); });
    bool ok = rep.max_rel_err < tol;
    failures += ok ? 0 : 1;
    worst = std::max(worst, rep.max_rel_err);
    out << "fixture " << f << ": L=" << fx.instruction.length()
        << " max_rel_err=" << rep.max_rel_err << (ok ? " ok" : " FAIL (" + rep.worst_param + ")")
        << "\n";
  }
  out << "worst over " << fixtures << " fixtures: " << worst << (failures ? " FAIL" : " ok")
      << "\n";
  return failures;
}

}  // namespace navstate
