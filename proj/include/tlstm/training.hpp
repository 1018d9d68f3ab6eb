#pragma once

// Training loop, evaluation, metrics stream and resumable state.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "tlstm/adam.hpp"
#include "tlstm/cells.hpp"
#include "tlstm/run_config.hpp"
#include "tlstm/sequence.hpp"

namespace tlstm {

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
  std::optional<double> bpc;
};

/// Batches and evaluation for one task. Training batches are pure functions
/// of (seed, iteration).
class Task {
 public:
  virtual ~Task() = default;
  virtual std::size_t input_size() const = 0;
  virtual std::size_t output_size() const = 0;
  /// Hidden state carries from one batch to the next (char-LM).
  virtual bool stateful() const { return false; }
  /// Iterations per pass over finite data; 0 for generated streams.
  virtual std::uint64_t iterations_per_epoch() const { return 0; }
  virtual SequenceBatch train_batch(std::uint64_t iteration) const = 0;
  virtual EvalResult evaluate(const ParameterSet& params, const TlstmConfig& cfg) const = 0;
  /// A single held-out example for trace export.
  virtual SequenceBatch example(std::uint64_t seed) const = 0;
};

std::unique_ptr<Task> make_task(const RunConfig& rc);

/// Generated algorithmic task (addition or memorization) for direct use.
std::unique_ptr<Task> make_algorithmic_task(const TaskSpec& spec, std::size_t batch_size, std::uint64_t seed);

struct MetricRecord {
  std::uint64_t iteration = 0;
  std::uint64_t samples_seen = 0;
  double loss = 0.0;  // mean training loss since the previous record
  double accuracy = 0.0;
  double eval_loss = 0.0;
  std::optional<double> bpc;
  std::optional<double> wall_ms_per_step;

  nlohmann::json to_json() const;
  static MetricRecord from_json(const nlohmann::json& j);
};

/// Everything needed to continue training bit-exactly.
struct TrainerState {
  ParameterSet params;
  AdamState adam;
  Rng rng;
  std::uint64_t iteration = 0;
  std::uint64_t samples_seen = 0;
  CellState carry;
  double loss_sum = 0.0;
  std::uint64_t loss_count = 0;
  double best_accuracy = -1.0;
  std::uint64_t evals_since_best = 0;
  bool finished = false;
  std::string stop_reason;
};

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

TrainerState initial_state(const RunConfig& rc);

void save_state(const std::filesystem::path& path, const RunConfig& rc, const TrainerState& s);
/// Throws CheckpointError if the stored model config differs from rc's.
TrainerState load_state(const std::filesystem::path& path, const RunConfig& rc);

struct TrainReport {
  std::vector<MetricRecord> metrics;
  TrainerState state;
};

/// Runs the protocol of rc until a stopping rule fires. Metrics go to
/// <output_dir>/metrics.jsonl, checkpoints to <output_dir>/checkpoint.bin.
/// With `resume`, continues from the checkpoint and drops metric lines
/// newer than it. Throws DivergenceError on a non-finite loss or gradient,
/// keeping the last checkpoint.
TrainReport train(const RunConfig& rc, bool resume = false);

/// Same loop without files: used by tests and the acceptance suite.
TrainReport train_in_memory(const RunConfig& rc, const Task& task, TrainerState state);

std::filesystem::path checkpoint_path(const RunConfig& rc);
std::filesystem::path metrics_path(const RunConfig& rc);

}  // namespace tlstm
