// tlstm: train, evaluate, gradient-check, benchmark and trace tensorized LSTMs.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "tlstm/checkpoint.hpp"
#include "tlstm/config.hpp"
#include "tlstm/gradcheck.hpp"
#include "tlstm/run_config.hpp"
#include "tlstm/sequence.hpp"
#include "tlstm/training.hpp"

using namespace tlstm;

namespace {

int cmd_train(const std::string& config_path, bool resume) {
  RunConfig rc;
  try {
    rc = load_run_config(config_path);
  } catch (const std::invalid_argument& e) {
    std::cerr << "bad config: " << e.what() << '\n';
    return 1;
  }
  try {
    TrainReport r = train(rc, resume);
    const auto& last = r.metrics.empty() ? MetricRecord{} : r.metrics.back();
    std::cout << "done: " << r.state.stop_reason << ", iteration " << r.state.iteration << ", samples "
              << r.state.samples_seen << ", accuracy " << last.accuracy << ", eval_loss " << last.eval_loss;
    if (last.bpc) std::cout << ", bpc " << *last.bpc;
    std::cout << "\nmetrics: " << metrics_path(rc).string() << "\n";
    return 0;
  } catch (const DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << "\nlast checkpoint kept at " << checkpoint_path(rc).string() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

int cmd_eval(const std::string& config_path, const std::string& checkpoint) {
  try {
    RunConfig rc = load_run_config(config_path);
    TrainerState s = load_state(checkpoint.empty() ? checkpoint_path(rc) : std::filesystem::path(checkpoint), rc);
    auto task = make_task(rc);
    EvalResult ev = task->evaluate(s.params, rc.model);
    nlohmann::json j = {{"iteration", s.iteration}, {"eval_loss", ev.loss}, {"accuracy", ev.accuracy}};
    if (ev.bpc) j["bpc"] = *ev.bpc;
    std::cout << j.dump() << '\n';
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

struct GradFlags {
  std::optional<std::size_t> depth;
  std::size_t dims = 2, tensor_size = 2, channels = 3, kernel = 3, steps = 4, layers = 2;
  std::string variant = "tLSTM", norm = "none";
  std::uint64_t seed = 1;
};

int cmd_gradcheck(const GradFlags& f) {
  TlstmConfig cfg;
  try {
    cfg.variant = parse_variant(f.variant);
    cfg.norm = parse_norm(f.norm);
    cfg.dims = f.dims;
    cfg.tensor_size = f.tensor_size;
    cfg.channels = f.channels;
    cfg.kernel = f.kernel;
    cfg.layers = f.layers;
    cfg.input_size = 3;
    cfg.output_size = 4;
    cfg.validate();
    if (f.depth && *f.depth != cfg.depth()) {
      std::cerr << "--depth " << *f.depth << " is inconsistent with P=" << f.tensor_size << ", K=" << f.kernel
                << " (depth must be " << cfg.depth() << ")\n";
      return 1;
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid geometry: " << e.what() << '\n';
    return 1;
  }
  const double err = grad_check(cfg, f.steps, f.seed);
  const bool ok = err < 1e-4;
  std::printf("%s, max_rel_err=%.3e (%s D=%zu P=%zu M=%zu K=%zu L=%zu norm=%s T=%zu)\n", ok ? "PASS" : "FAIL", err,
              f.variant.c_str(), cfg.dims, cfg.tensor_size, cfg.channels, cfg.kernel, cfg.depth(), f.norm.c_str(),
              f.steps);
  return ok ? 0 : 1;
}

struct BenchFlags {
  std::string task = "addition-desk";
  std::vector<std::size_t> depths{1, 2, 3, 4};
  std::size_t channels = 32, batch = 15, iterations = 5;
  std::uint64_t seed = 1;
};

int cmd_bench(const BenchFlags& f) {
  RunConfig rc;
  try {
    apply_preset(f.task, rc.task, rc.training);
    if (rc.task.kind != TaskKind::addition && rc.task.kind != TaskKind::memorization)
      throw ConfigError("--task: bench supports the addition and memorization presets");
  } catch (const std::exception& e) {
    std::cerr << e.what() << '\n';
    return 1;
  }
  auto task = make_algorithmic_task(rc.task, f.batch, f.seed);
  std::printf("%-7s %3s %3s %6s %14s %14s %12s %10s\n", "model", "L", "P", "T", "cell_steps", "layer_updates",
              "ms_per_step", "params");
  for (const char* variant : {"tLSTM", "sLSTM"}) {
    for (std::size_t depth : f.depths) {
      TlstmConfig cfg;
      cfg.variant = parse_variant(variant);
      cfg.channels = f.channels;
      cfg.input_size = task->input_size();
      cfg.output_size = task->output_size();
      cfg.tensor_size = depth;  // K = 3 gives L = P
      cfg.layers = depth;
      ParameterSet params = make_initialized(cfg, f.seed);
      SequenceBatch batch = task->train_batch(0);
      std::size_t cell_steps = 0, updates = 0;
      const auto t0 = std::chrono::steady_clock::now();
      for (std::size_t i = 0; i < f.iterations; ++i) {
        ad::Tape t;
        ad::Bound p(t, params);
        SequenceVars out = forward_sequence(t, p, cfg, batch, zero_state(cfg, batch.batch()));
        t.backward(sequence_loss(t, out, batch));
        cell_steps = out.cell_steps;
        updates = out.layer_updates;
      }
      const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      std::printf("%-7s %3zu %3s %6zu %14zu %14zu %12.3f %10zu\n", variant, depth,
                  cfg.variant == Variant::slstm ? "-" : std::to_string(depth).c_str(), batch.steps(), cell_steps,
                  updates, ms / static_cast<double>(f.iterations * cell_steps), parameter_count(cfg));
    }
  }
  return 0;
}

int cmd_trace(const std::string& config_path, const std::string& checkpoint, std::uint64_t example_seed) {
  try {
    RunConfig rc = load_run_config(config_path);
    TrainerState s = load_state(checkpoint.empty() ? checkpoint_path(rc) : std::filesystem::path(checkpoint), rc);
    auto task = make_task(rc);
    SequenceBatch ex = task->example(example_seed);
    SequenceResult r = run_sequence(s.params, rc.model, ex, zero_state(rc.model, 1), true);
    std::filesystem::create_directories(rc.output_dir);
    const auto path = std::filesystem::path(rc.output_dir) / ("trace_" + std::to_string(example_seed) + ".csv");
    std::ofstream out(path);
    r.trace.normalized().write_csv(out);
    std::cout << path.string() << ": " << r.trace.rows << " rows x " << r.trace.steps() << " columns\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tensorized LSTM toolkit"};
  app.require_subcommand(1);

  std::string config, checkpoint;
  bool resume = false;
  auto* train = app.add_subcommand("train", "train a model from a JSON run config");
  train->add_option("config", config, "run config")->required()->check(CLI::ExistingFile);
  train->add_flag("--resume", resume, "continue from <output_dir>/checkpoint.bin");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the task's held-out data");
  eval->add_option("config", config, "run config")->required()->check(CLI::ExistingFile);
  eval->add_option("--checkpoint", checkpoint, "checkpoint (default <output_dir>/checkpoint.bin)");

  GradFlags gf;
  std::size_t depth_flag = 0;
  auto* grad = app.add_subcommand("gradcheck", "compare backward() with central differences");
  auto* depth_opt = grad->add_option("--depth,-L", depth_flag, "expected depth L (checked against P and K)");
  grad->add_option("--dims,-D", gf.dims, "tensor dimensionality D")->capture_default_str();
  grad->add_option("--tensor-size,-P", gf.tensor_size, "tensor size P")->capture_default_str();
  grad->add_option("--channels,-M", gf.channels, "channel size M")->capture_default_str();
  grad->add_option("--kernel,-K", gf.kernel, "kernel size K")->capture_default_str();
  grad->add_option("--variant", gf.variant, "tRNN, tLSTM_noM, tLSTM or sLSTM")->capture_default_str();
  grad->add_option("--norm", gf.norm, "none, LN or CN")->capture_default_str();
  grad->add_option("--layers", gf.layers, "sLSTM layer count")->capture_default_str();
  grad->add_option("--steps,-T", gf.steps, "sequence length")->capture_default_str();
  grad->add_option("--seed", gf.seed, "random seed")->capture_default_str();

  BenchFlags bf;
  auto* bench = app.add_subcommand("bench", "step counts and timing across depths");
  bench->add_option("--task", bf.task, "algorithmic preset")->capture_default_str();
  bench->add_option("--depths", bf.depths, "comma-separated depths")->delimiter(',');
  bench->add_option("--channels,-M", bf.channels, "channel size M")->capture_default_str();
  bench->add_option("--batch", bf.batch, "batch size")->capture_default_str();
  bench->add_option("--iterations", bf.iterations, "timed forward+backward passes")->capture_default_str();

  std::uint64_t example_seed = 0;
  auto* trace = app.add_subcommand("trace", "export diagonal memory-cell means as CSV");
  trace->add_option("config", config, "run config")->required()->check(CLI::ExistingFile);
  trace->add_option("--checkpoint", checkpoint, "checkpoint (default <output_dir>/checkpoint.bin)");
  trace->add_option("--example-seed", example_seed, "seed of the held-out example")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  if (*train) return cmd_train(config, resume);
  if (*eval) return cmd_eval(config, checkpoint);
  if (*grad) {
    if (*depth_opt) gf.depth = depth_flag;
    return cmd_gradcheck(gf);
  }
  if (*bench) return cmd_bench(bf);
  if (*trace) return cmd_trace(config, checkpoint, example_seed);
  return 1;
}
