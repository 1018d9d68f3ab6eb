#pragma once

// Unrolling a cell over a sequence with the L-1 output delay.

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "tlstm/autodiff.hpp"
#include "tlstm/cells.hpp"
#include "tlstm/config.hpp"
#include "tlstm/parameters.hpp"

namespace tlstm {

/// Time-major batch. inputs: [T, N, R]; targets and mask are indexed
/// t * N + n. A mask weight of 0 excludes a position from the loss; `score`
/// picks the positions counted for accuracy and defaults to the mask.
struct SequenceBatch {
  Tensor inputs;
  std::vector<int> targets;
  std::vector<double> mask;
  std::vector<double> score;

  const std::vector<double>& score_mask() const { return score.empty() ? mask : score; }

  std::size_t steps() const { return inputs.dim(0); }
  std::size_t batch() const { return inputs.dim(1); }
  std::size_t input_size() const { return inputs.dim(2); }
  std::size_t masked_count() const;
  /// Throws DimensionError / ContractError on inconsistent fields.
  void validate(std::size_t output_size) const;
};

/// Per-step diagonal channel means of the memory tensor (hidden tensor for
/// tRNN, per-layer memory for sLSTM) of example 0. rows x columns.
struct Trace {
  std::size_t rows = 0;
  std::vector<std::vector<double>> columns;

  std::size_t steps() const { return columns.size(); }
  /// Min-max scaled copy with every value in [0, 1]. A constant trace maps to 0.
  Trace normalized() const;
  /// One line per row, comma-separated columns.
  void write_csv(std::ostream& os) const;
};

struct SequenceVars {
  std::vector<ad::Var> logits;  // one [N, S] node per timestep
  cell::Vars carry;             // state after the step that consumed x_T
  std::size_t cell_steps = 0;
  std::size_t layer_updates = 0;
  Trace trace;
};

/// Records a full unroll. Tensorised cells run T+L-1 steps, feeding zero
/// inputs after step T, and read y_t after step t+L-1; the stacked baseline
/// runs T steps of L layer updates each.
SequenceVars forward_sequence(ad::Tape& t, const ad::Bound& p, const TlstmConfig& cfg,
                              const SequenceBatch& batch, const CellState& carry_in, bool trace = false);

/// Mean NLL over masked positions. Throws ContractError for an empty mask.
ad::Var sequence_loss(ad::Tape& t, const SequenceVars& out, const SequenceBatch& batch);

/// Value-level result of a sequence pass.
struct SequenceResult {
  Tensor probabilities;  // [T, N, S]
  CellState carry;
  double loss = 0.0;  // mean masked NLL, 0 when nothing is masked in
  std::size_t cell_steps = 0;
  std::size_t layer_updates = 0;
  Trace trace;
};

SequenceResult run_sequence(const ParameterSet& params, const TlstmConfig& cfg, const SequenceBatch& batch,
                            const CellState& carry_in, bool trace = false);

struct LossAndGradients {
  double loss = 0.0;
  Gradients grads;
  CellState carry;
};
LossAndGradients sequence_gradients(const ParameterSet& params, const TlstmConfig& cfg,
                                    const SequenceBatch& batch, const CellState& carry_in);

/// probabilities: [T, N, S]. Mean over masked positions of -ln p(target).
double nll_loss(const Tensor& probabilities, std::span<const int> targets, std::span<const double> mask);

struct Tally {
  std::size_t correct = 0;
  std::size_t total = 0;
  double rate() const { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
};
/// Argmax hits over masked positions.
Tally accuracy(const Tensor& probabilities, std::span<const int> targets, std::span<const double> mask);

/// Value copy of a state for the next subsequence. Gradients never flow
/// through it because states enter a tape as constants.
CellState carry_state(const CellState& prev);

}  // namespace tlstm
