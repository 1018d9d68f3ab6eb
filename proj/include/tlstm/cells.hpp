#pragma once

// Per-timestep state updates, recorded on an autodiff tape.

#include <cstddef>
#include <vector>

#include "tlstm/autodiff.hpp"
#include "tlstm/config.hpp"
#include "tlstm/tensor.hpp"

namespace tlstm {

/// Hidden and memory tensors of a batch. Tensorised cells use
/// [N] x P-grid x M; the stacked baseline uses [N, L, M]. `c` is empty for
/// tRNN.
struct CellState {
  Tensor h;
  Tensor c;

  friend bool operator==(const CellState&, const CellState&) = default;
};

CellState zero_state(const TlstmConfig& cfg, std::size_t batch);
/// Throws DimensionError if the state does not fit cfg and batch.
void check_state(const CellState& s, const TlstmConfig& cfg, std::size_t batch);

namespace cell {

/// State living on a tape. Tensorised cells hold one entry in h (and c);
/// the stacked baseline holds one entry per layer.
struct Vars {
  std::vector<ad::Var> h;
  std::vector<ad::Var> c;
};

/// Enters a state as tape constants, which also cuts any gradient path.
Vars constant_state(ad::Tape& t, const TlstmConfig& cfg, const CellState& s);
CellState values(const ad::Tape& t, const TlstmConfig& cfg, const Vars& v);

/// x: [N, R]. Returns Hcat: [N] x (P+1)-grid x M.
ad::Var concat_input(ad::Tape& t, const ad::Bound& p, const TlstmConfig& cfg, ad::Var x, ad::Var h_prev);

Vars trnn_step(ad::Tape& t, const ad::Bound& p, const TlstmConfig& cfg, ad::Var x, const Vars& prev);
Vars tlstm_step_no_mem(ad::Tape& t, const ad::Bound& p, const TlstmConfig& cfg, ad::Var x, const Vars& prev);
Vars tlstm_step(ad::Tape& t, const ad::Bound& p, const TlstmConfig& cfg, ad::Var x, const Vars& prev);
/// All layers run on the same lstm.weight/lstm.bias block.
Vars slstm_step(ad::Tape& t, const ad::Bound& p, const TlstmConfig& cfg, ad::Var x, const Vars& prev);

/// Dispatches on cfg.variant.
Vars step(ad::Tape& t, const ad::Bound& p, const TlstmConfig& cfg, ad::Var x, const Vars& prev);

/// Unnormalised scores [N, S] read from the last grid location (the last
/// layer for sLSTM).
ad::Var output_logits(ad::Tape& t, const ad::Bound& p, const TlstmConfig& cfg, const Vars& state);
/// Softmax of output_logits.
ad::Var extract_output(ad::Tape& t, const ad::Bound& p, const TlstmConfig& cfg, const Vars& state);

}  // namespace cell
}  // namespace tlstm
