#include "navstate/encoder.hpp"

namespace navstate {

InstructionEncoder::InstructionEncoder(ParamStore& ps, int vocab_size, int d_, int heads,
                                       int l_max_, Rng& rng)
    : d(d_), l_max(l_max_) {
  embeddings = &ps.create("encoder.embeddings", vocab_size, d_);
  init_uniform(embeddings->value, rng, -0.1, 0.1);
  block = TransformerBlock(ps, "encoder.block", d_, heads, rng);
}

Var InstructionEncoder::encode(Tape& t, const Instruction& inst) const {
  int L = inst.length();
  if (L > l_max)
    throw CapacityError("instruction has " + std::to_string(L) + " tokens, limit is " +
                        std::to_string(l_max));
  Var emb = gather_rows(t.param(*embeddings), inst.tokens);
  Var pos = t.input(sinusoidal_positions(L, d));
  return block(t, add(emb, pos));
}

}  // namespace navstate
