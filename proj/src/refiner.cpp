#include "navstate/refiner.hpp"

namespace navstate {

SegmentRefiner::SegmentRefiner(ParamStore& ps, int d_, int heads, Rng& rng)
    : attn(ps, "refiner.attn", d_, heads, rng),
      block(ps, "refiner.block", d_, heads, rng),
      gate_mlp(ps, "refiner.gate", 2 * d_, d_, d_, rng),
      d(d_) {
  gate_mlp.l2.b->value.fill(-2.0);
}

Var SegmentRefiner::ground(Tape& t, Var S_prev, const std::vector<int>& selected, Var V) const {
  if (selected.empty()) throw ContractError("refiner: empty token selection");
  return attn(t, gather_rows(S_prev, selected), V);
}

Var SegmentRefiner::encode_segment(Tape& t, Var grounded, bool use_positions) const {
  Var x = grounded;
  if (use_positions) x = add(x, t.input(sinusoidal_positions(x.rows(), d)));
  return block(t, x);
}

Var SegmentRefiner::compute_gate(Tape& t, Var S_prev, Var R) const {
  return sigmoid(gate_mlp(t, concat_cols(layer_norm(S_prev), layer_norm(R))));
}

Var fuse_with_gate(Var S_prev, Var R, Var g) { return add(S_prev, mul(g, sub(R, S_prev))); }

Var SegmentRefiner::fuse(Tape& t, Var S_prev, Var R) const {
  return fuse_with_gate(S_prev, R, compute_gate(t, S_prev, R));
}

RefineResult SegmentRefiner::step(Tape& t, Var S_prev, const std::vector<int>& selected, Var V,
                                  Var route_coeff, bool use_positions) const {
  RefineResult out;
  out.grounded = ground(t, S_prev, selected, V);
  out.encoded = encode_segment(t, out.grounded, use_positions);
  out.scattered = scatter_rows(S_prev, out.encoded, selected);
  out.gate = compute_gate(t, S_prev, out.scattered);
  {
    const Tensor& g = out.gate.val();
    double s = 0.0;
    for (int i = 0; i < g.size(); ++i) s += g[i];
    out.gate_mean = s / g.size();
  }
  Var s_sel = gather_rows(S_prev, selected);
  Var g_sel = gather_rows(out.gate, selected);
  Var delta = mul(g_sel, sub(out.encoded, s_sel));
  if (route_coeff.valid()) delta = scale_by(delta, route_coeff);
  out.next_state = scatter_rows(S_prev, add(s_sel, delta), selected);
  return out;
}

}  // namespace navstate
