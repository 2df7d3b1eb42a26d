#include "navstate/agent.hpp"

namespace navstate {

PolicyHead::PolicyHead(ParamStore& ps, int d, Rng& rng) {
  w_a = &ps.create("policy.w_a", d, d);
  init_xavier(w_a->value, rng);
  f_stop = &ps.create("policy.f_stop", 1, d);
  init_uniform(f_stop->value, rng, -0.1, 0.1);
}

ActionDistribution PolicyHead::act(Tape& t, Var S_t, const std::vector<int>& pooled_rows,
                                   Var cand_features, const std::vector<bool>& mask) const {
  Var pooled = pooled_rows.empty() ? mean_rows(S_t) : mean_rows(gather_rows(S_t, pooled_rows));
  return act(t, pooled, cand_features, mask);
}

ActionDistribution PolicyHead::act(Tape& t, Var pooled, Var cand_features,
                                   const std::vector<bool>& mask) const {
  Var proj = matmul(pooled, t.param(*w_a));  // [1 x d]
  int k = cand_features.valid() ? cand_features.rows() : 0;
  if (static_cast<int>(mask.size()) != k)
    throw ContractError("act: mask size does not match candidate count");

  Var stop_logit = matmul(proj, transpose(t.param(*f_stop)));
  Var logits = stop_logit;
  if (k > 0) logits = concat_cols(matmul(proj, transpose(cand_features)), stop_logit);

  bool any_masked = false;
  for (bool ok : mask) any_masked |= !ok;
  if (any_masked) {
    Tensor penalty(1, k + 1);
    for (int i = 0; i < k; ++i)
      if (!mask[i]) penalty[i] = -1e30;
    logits = add(logits, t.input(std::move(penalty)));
  }

  ActionDistribution dist;
  dist.logits = logits;
  dist.probs = softmax_rows(logits);
  dist.log_probs = log_softmax_rows(logits);
  dist.num_actions = k + 1;
  return dist;
}

ValueHead::ValueHead(ParamStore& ps, int d, Rng& rng) : lin(ps, "value", 2 * d, 1, rng) {}

Var ValueHead::operator()(Tape& t, Var pooled, Var V) const {
  return lin(t, concat_cols(pooled, mean_rows(V)));
}

Var pooled_state(Tape& t, Var S_t, const SegmentSet& segs, const ClauseRelevance& rel) {
  Var acc;
  for (int k = 0; k < segs.count(); ++k) {
    Var mean_k = mean_rows(gather_rows(S_t, segs.token_rows(k)));
    Var term = scale_by(mean_k, gather_element(rel.route, 0, k));
    acc = acc.valid() ? add(acc, term) : term;
  }
  return acc;
}

Model::Model(ModelConfig cfg_, Vocabulary vocab_) : cfg(cfg_), vocab(std::move(vocab_)) {
  Rng rng(cfg.seed);
  encoder = InstructionEncoder(params, vocab.size(), cfg.d, cfg.heads, cfg.l_max, rng);
  boundary = BoundaryScorer(params, cfg.d, rng);
  picker = ClausePicker(params, cfg.d, cfg.heads, rng);
  refiner = SegmentRefiner(params, cfg.d, cfg.heads, rng);
  policy = PolicyHead(params, cfg.d, rng);
  value = ValueHead(params, cfg.d, rng);
}

AgentState init_episode(Tape& t, const Model& m, const Instruction& inst, RouteGrad mode,
                        AblationFlags flags) {
  AgentState agent;
  agent.inst = inst;
  agent.flags = flags;
  Var h = m.encoder.encode(t, inst);
  agent.s0 = InstructionState{h, 0};
  agent.s_prev = InstructionState{h, 0};
  agent.coarse = segment_rules(inst, m.rules);
  agent.bscore = m.boundary(t, h, agent.coarse);
  auto [refined, segs] = refine(agent.bscore, m.cfg.delta_b, inst.length());
  agent.refined = std::move(refined);
  agent.segs = std::move(segs);
  if (flags.picker)
    agent.clause_coeffs =
        clause_coefficients(t, agent.bscore, agent.segs, inst.length(), mode);
  return agent;
}

StepResult engine_step(Tape& t, const Model& m, AgentState& agent, const Observation& obs,
                       RouteGrad mode) {
  StepResult out;
  Var V = t.input(obs.features);
  int L = agent.inst.length();

  Var route_coeff;
  if (agent.flags.picker) {
    out.rel = m.picker.step(t, agent.s0.values, agent.segs, agent.clause_coeffs, V, mode);
    out.selected = agent.segs.token_rows(out.rel.k_star);
    route_coeff = gather_element(out.rel.route, 0, out.rel.k_star);
  } else {
    out.rel.k_star = 0;
    out.rel.scores = t.input(Tensor::row({1.0}));
    out.rel.alpha = t.input(Tensor::row({1.0}));
    out.rel.route = t.input(Tensor::row({1.0}));
    out.selected.resize(L);
    for (int i = 0; i < L; ++i) out.selected[i] = i;
    route_coeff = t.input(Tensor::row({1.0}));
  }

  if (agent.flags.refiner) {
    RefineResult ref = m.refiner.step(t, agent.s_prev.values, out.selected, V, route_coeff);
    out.S_t = ref.next_state;
    out.gate_mean = ref.gate_mean;
  } else {
    out.S_t = agent.s_prev.values;
  }

  out.pooled =
      agent.flags.picker ? pooled_state(t, out.S_t, agent.segs, out.rel) : mean_rows(out.S_t);

  agent.s_prev = InstructionState{out.S_t, agent.t + 1};
  agent.t += 1;
  return out;
}

}  // namespace navstate
