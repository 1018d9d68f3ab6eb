#include "tlstm/sequence.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace tlstm {

using ad::Tape;
using ad::Var;

std::size_t SequenceBatch::masked_count() const {
  return static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(), [](double w) { return w != 0.0; }));
}

void SequenceBatch::validate(std::size_t output_size) const {
  if (inputs.rank() != 3) throw DimensionError("sequence inputs must be [T, N, R], got " + to_string(inputs.shape()));
  const std::size_t positions = steps() * batch();
  if (targets.size() != positions || mask.size() != positions || score_mask().size() != positions)
    throw DimensionError("targets/mask need " + std::to_string(positions) + " entries");
  for (std::size_t i = 0; i < positions; ++i) {
    if (mask[i] < 0.0) throw ContractError("negative mask weight");
    if ((mask[i] != 0.0 || score_mask()[i] != 0.0) && (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= output_size))
      throw ContractError("target " + std::to_string(targets[i]) + " outside [0, " + std::to_string(output_size) + ")");
  }
}

Trace Trace::normalized() const {
  Trace out = *this;
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& col : columns)
    for (double v : col) lo = std::min(lo, v), hi = std::max(hi, v);
  for (auto& col : out.columns)
    for (double& v : col) v = hi > lo ? (v - lo) / (hi - lo) : 0.0;
  return out;
}

void Trace::write_csv(std::ostream& os) const {
  const auto old = os.precision(17);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t s = 0; s < columns.size(); ++s) os << (s ? "," : "") << columns[s][r];
    os << '\n';
  }
  os.precision(old);
}

namespace {

std::vector<double> trace_column(const TlstmConfig& cfg, const CellState& s) {
  const Tensor& src = cfg.has_memory() ? s.c : s.h;
  const std::size_t m = cfg.channels;
  std::vector<double> col;
  if (cfg.variant == Variant::slstm) {
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      double acc = 0.0;
      for (std::size_t i = 0; i < m; ++i) acc += src[l * m + i];
      col.push_back(acc / static_cast<double>(m));
    }
    return col;
  }
  // linear index of (i, i, ..., i) is i * (1 + P + P^2 + ...)
  std::size_t diag_stride = 0, pw = 1;
  for (std::size_t a = 0; a < cfg.grid_rank(); ++a) diag_stride += pw, pw *= cfg.tensor_size;
  for (std::size_t i = 0; i < cfg.tensor_size; ++i) {
    const std::size_t loc = i * diag_stride;
    double acc = 0.0;
    for (std::size_t k = 0; k < m; ++k) acc += src[loc * m + k];
    col.push_back(acc / static_cast<double>(m));
  }
  return col;
}

Var input_at(Tape& t, const SequenceBatch& batch, std::size_t step) {
  const std::size_t n = batch.batch(), r = batch.input_size();
  if (step >= batch.steps()) return t.constant(Tensor({n, r}));
  Tensor x({n, r});
  std::copy_n(&batch.inputs[step * n * r], n * r, x.raw());
  return t.constant(std::move(x));
}

}  // namespace

SequenceVars forward_sequence(Tape& t, const ad::Bound& p, const TlstmConfig& cfg, const SequenceBatch& batch,
                              const CellState& carry_in, bool trace) {
  cfg.validate();
  if (batch.inputs.rank() != 3 || batch.input_size() != cfg.input_size)
    throw DimensionError("sequence inputs " + to_string(batch.inputs.shape()) + " do not match input size " +
                         std::to_string(cfg.input_size));
  check_state(carry_in, cfg, batch.batch());
  const std::size_t steps = batch.steps();
  if (steps < 1) throw ContractError("sequence needs T >= 1");

  SequenceVars out;
  out.trace.rows = cfg.variant == Variant::slstm ? cfg.layers : cfg.tensor_size;
  cell::Vars state = cell::constant_state(t, cfg, carry_in);
  const bool stacked = cfg.variant == Variant::slstm;
  const std::size_t delay = stacked ? 0 : cfg.depth() - 1;
  for (std::size_t s = 0; s < steps + delay; ++s) {
    state = cell::step(t, p, cfg, input_at(t, batch, s), state);
    ++out.cell_steps;
    out.layer_updates += stacked ? cfg.layers : 1;
    if (s + 1 == steps) out.carry = state;
    if (s >= delay) out.logits.push_back(cell::output_logits(t, p, cfg, state));
    if (trace) out.trace.columns.push_back(trace_column(cfg, cell::values(t, cfg, state)));
  }
  return out;
}

Var sequence_loss(Tape& t, const SequenceVars& out, const SequenceBatch& batch) {
  double weight = 0.0;
  for (double w : batch.mask) weight += w;
  if (batch.masked_count() == 0) throw ContractError("loss over an empty mask");
  const std::size_t n = batch.batch();
  Var total;
  for (std::size_t s = 0; s < out.logits.size(); ++s) {
    std::span<const int> tg(batch.targets.data() + s * n, n);
    std::span<const double> mk(batch.mask.data() + s * n, n);
    if (std::all_of(mk.begin(), mk.end(), [](double w) { return w == 0.0; })) continue;
    Var term = ad::softmax_nll(t, out.logits[s], tg, mk);
    total = total.valid() ? ad::add(t, total, term) : term;
  }
  return ad::scale(t, total, 1.0 / weight);
}

SequenceResult run_sequence(const ParameterSet& params, const TlstmConfig& cfg, const SequenceBatch& batch,
                            const CellState& carry_in, bool trace) {
  cfg.validate();
  if (batch.inputs.rank() != 3 || batch.input_size() != cfg.input_size)
    throw DimensionError("sequence inputs " + to_string(batch.inputs.shape()) + " do not match input size " +
                         std::to_string(cfg.input_size));
  check_state(carry_in, cfg, batch.batch());
  const std::size_t steps = batch.steps(), n = batch.batch(), s_out = cfg.output_size;
  if (steps < 1) throw ContractError("sequence needs T >= 1");
  const bool stacked = cfg.variant == Variant::slstm;
  const std::size_t delay = stacked ? 0 : cfg.depth() - 1;

  // One short tape per step keeps memory flat for long sequences.
  SequenceResult r;
  r.probabilities = Tensor({steps, n, s_out});
  r.trace.rows = stacked ? cfg.layers : cfg.tensor_size;
  CellState state = carry_in;
  double nll = 0.0, weight = 0.0;
  for (std::size_t s = 0; s < steps + delay; ++s) {
    Tape t;
    ad::Bound p(t, params, false);
    cell::Vars next = cell::step(t, p, cfg, input_at(t, batch, s), cell::constant_state(t, cfg, state));
    state = cell::values(t, cfg, next);
    ++r.cell_steps;
    r.layer_updates += stacked ? cfg.layers : 1;
    if (s + 1 == steps) r.carry = state;
    if (s >= delay) {
      const Tensor& logits = t.value(cell::output_logits(t, p, cfg, next));
      Tensor probs = softmax_last_axis(logits);
      std::copy_n(probs.raw(), n * s_out, &r.probabilities[(s - delay) * n * s_out]);
      for (std::size_t e = 0; e < n; ++e) {
        const std::size_t pos = (s - delay) * n + e;
        if (batch.mask[pos] == 0.0) continue;
        const double* z = &logits[e * s_out];
        const double mx = *std::max_element(z, z + s_out);
        double acc = 0.0;
        for (std::size_t k = 0; k < s_out; ++k) acc += std::exp(z[k] - mx);
        nll += batch.mask[pos] * (mx + std::log(acc) - z[batch.targets[pos]]);
        weight += batch.mask[pos];
      }
    }
    if (trace) r.trace.columns.push_back(trace_column(cfg, state));
  }
  if (weight > 0.0) r.loss = nll / weight;
  return r;
}

LossAndGradients sequence_gradients(const ParameterSet& params, const TlstmConfig& cfg, const SequenceBatch& batch,
                                    const CellState& carry_in) {
  Tape t;
  ad::Bound p(t, params);
  SequenceVars vars = forward_sequence(t, p, cfg, batch, carry_in);
  Var loss = sequence_loss(t, vars, batch);
  t.backward(loss);
  return {t.value(loss)[0], p.gradients(), cell::values(t, cfg, vars.carry)};
}

double nll_loss(const Tensor& probabilities, std::span<const int> targets, std::span<const double> mask) {
  if (probabilities.rank() != 3) throw DimensionError("probabilities must be [T, N, S]");
  const std::size_t classes = probabilities.dim(2), positions = probabilities.size() / classes;
  if (targets.size() != positions || mask.size() != positions) throw DimensionError("targets/mask size mismatch");
  double total = 0.0, weight = 0.0;
  for (std::size_t i = 0; i < positions; ++i) {
    if (mask[i] == 0.0) continue;
    total -= mask[i] * std::log(probabilities[i * classes + static_cast<std::size_t>(targets[i])]);
    weight += mask[i];
  }
  if (weight == 0.0) throw ContractError("loss over an empty mask");
  return total / weight;
}

Tally accuracy(const Tensor& probabilities, std::span<const int> targets, std::span<const double> mask) {
  const std::size_t classes = probabilities.shape().back(), positions = probabilities.size() / classes;
  if (targets.size() != positions || mask.size() != positions) throw DimensionError("targets/mask size mismatch");
  Tally tally;
  for (std::size_t i = 0; i < positions; ++i) {
    if (mask[i] == 0.0) continue;
    const double* row = &probabilities[i * classes];
    const auto best = static_cast<int>(std::max_element(row, row + classes) - row);
    tally.correct += best == targets[i];
    ++tally.total;
  }
  return tally;
}

CellState carry_state(const CellState& prev) { return prev; }

}  // namespace tlstm
