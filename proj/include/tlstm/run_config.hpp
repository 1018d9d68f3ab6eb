#pragma once

// JSON run description: model, task preset, optimizer, training protocol.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include "json.hpp"

#include "tlstm/adam.hpp"
#include "tlstm/config.hpp"

namespace tlstm {

/// Invalid run configuration. The message starts with the JSON path of the
/// offending field.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class TaskKind { addition, memorization, mnist, charlm };

struct TaskSpec {
  std::string preset;
  TaskKind kind = TaskKind::addition;
  std::size_t num_digits = 4;
  std::size_t num_symbols = 6;
  std::size_t vocab_size = 16;
  std::size_t test_size = 100;
  // sequential MNIST
  bool permuted = false;
  std::size_t image_size = 28;
  std::uint64_t permutation_seed = 0;
  // char-LM
  std::string corpus = "shakespeare.txt";
  std::size_t subseq_len = 50;
  double valid_fraction = 0.1;
  std::size_t eval_chars = 0;  // 0: the whole validation range
  /// Dataset root; filled from TLSTM_DATA_DIR (or "data") when not given.
  std::string data_dir;

  bool image() const { return kind == TaskKind::mnist; }
};

struct TrainingOptions {
  std::size_t batch_size = 15;
  std::uint64_t max_samples = 0;     // 0: no sample budget
  std::uint64_t max_iterations = 0;  // 0: no iteration budget
  std::size_t epochs = 0;            // char-LM / MNIST passes; 0: unbounded
  std::size_t eval_every = 1000;     // iterations
  std::size_t patience = 0;          // evaluations without improvement; 0 disables
  double target_accuracy = 2.0;      // stop once eval accuracy reaches it; > 1 never
  std::size_t checkpoint_every = 1;  // evaluations between checkpoints
  bool record_timing = false;
};

struct RunConfig {
  TlstmConfig model;
  std::optional<std::size_t> depth;  // consistency check only
  TaskSpec task;
  AdamConfig optimizer;
  TrainingOptions training;
  std::uint64_t seed = 1;
  std::string output_dir = "runs/default";
};

/// Task defaults for a named preset: addition-desk, addition-full,
/// memorization-desk, memorization-full, mnist, pmnist, mnist-8x8, charlm.
/// Throws ConfigError for unknown names.
void apply_preset(const std::string& name, TaskSpec& task, TrainingOptions& training);

/// Validates every field and rejects unknown keys at every level. The model's
/// input/output sizes and forget-gate bias are derived from the task.
RunConfig parse_run_config(const nlohmann::json& doc);
RunConfig load_run_config(const std::filesystem::path& path);

nlohmann::json to_json(const TlstmConfig& cfg);
TlstmConfig model_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& rc);

/// Input width R and class count S of a task.
std::size_t task_input_size(const TaskSpec& task, std::size_t corpus_vocab = 0);
std::size_t task_output_size(const TaskSpec& task, std::size_t corpus_vocab = 0);

}  // namespace tlstm
