#pragma once

#include "navstate/nn.hpp"
#include "navstate/text.hpp"

namespace navstate {

struct CapacityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Token-level instruction state: an [L x d] matrix evolving over the episode.
struct InstructionState {
  Var values;
  int step = 0;
};

/// Word embeddings + sinusoidal positions + one self-attention block. The
/// block output doubles as the initial instruction state.
struct InstructionEncoder {
  Parameter* embeddings = nullptr;  // [vocab x d]
  TransformerBlock block;
  int d = 0;
  int l_max = 80;

  InstructionEncoder() = default;
  InstructionEncoder(ParamStore& ps, int vocab_size, int d, int heads, int l_max, Rng& rng);

  /// Contextual token matrix h [L x d]; the initial state is this same node.
  Var encode(Tape& t, const Instruction& inst) const;
};

}  // namespace navstate
