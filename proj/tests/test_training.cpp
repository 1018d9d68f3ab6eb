#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "test_util.hpp"
#include "tlstm/adam.hpp"
#include "tlstm/checkpoint.hpp"
#include "tlstm/run_config.hpp"
#include "tlstm/training.hpp"

using namespace tlstm;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("tlstm_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  return p;
}

json small_run(const fs::path& out, double lr = 1e-3) {
  return {{"model", {{"variant", "tLSTM"}, {"D", 2}, {"P", 2}, {"M", 4}, {"K", 3}, {"norm", "CN"}}},
          {"task", {{"preset", "addition-desk"}, {"num_digits", 2}, {"test_size", 10}}},
          {"optimizer", {{"lr", lr}}},
          {"training", {{"batch_size", 3}, {"max_iterations", 8}, {"eval_every", 2}}},
          {"seed", 7},
          {"output_dir", out.string()}};
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(Adam, ZeroGradientLeavesParameters) {
  ParameterSet p;
  p.add("w", Tensor({3}, {1, -2, 3}));
  AdamState s = make_adam(p, {});
  s.m["w"].fill(0.5);
  s.v["w"].fill(0.25);
  const ParameterSet before = p;
  adam_step(p, p.zeros_like(), s);
  // with non-zero moments the update is not zero, so reset and check both
  ParameterSet q = before;
  AdamState fresh = make_adam(q, {});
  adam_step(q, q.zeros_like(), fresh);
  EXPECT_EQ(q, before);
  EXPECT_EQ(fresh.step, 1u);
  for (double v : s.m["w"].data()) EXPECT_DOUBLE_EQ(v, 0.45);
  for (double v : s.v["w"].data()) EXPECT_DOUBLE_EQ(v, 0.25 * 0.999);
}

TEST(Adam, ConstantGradientStepsApproachLearningRate) {
  ParameterSet p;
  p.add("w", Tensor({2}, {0.0, 0.0}));
  AdamState s = make_adam(p, {});
  Gradients g;
  g.add("w", Tensor({2}, {3.0, -0.02}));
  double prev0 = 0.0, prev1 = 0.0;
  for (int i = 0; i < 200; ++i) {
    adam_step(p, g, s);
    if (i == 199) {
      EXPECT_NEAR(p["w"][0] - prev0, -1e-3, 1e-9);
      EXPECT_NEAR(p["w"][1] - prev1, 1e-3, 1e-6);
    }
    prev0 = p["w"][0];
    prev1 = p["w"][1];
  }
}

TEST(Adam, MatchesScalarOracleOnQuadratic) {
  // f(w) = 0.5 * a * (w - c)^2
  const double a = 2.5, c = 0.7, lr = 0.05, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double w = -1.3, m = 0.0, v = 0.0;
  ParameterSet p;
  p.add("w", Tensor({1}, {w}));
  AdamState s = make_adam(p, {lr, b1, b2, eps, 0.0});
  for (int t = 1; t <= 10; ++t) {
    const double g = a * (w - c);
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    w -= lr * (m / (1 - std::pow(b1, t))) / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);
    Gradients grads;
    grads.add("w", Tensor({1}, {a * (p["w"][0] - c)}));
    adam_step(p, grads, s);
    EXPECT_NEAR(p["w"][0], w, 1e-12) << "step " << t;
  }
}

TEST(Adam, NonFiniteGradientNamesParameterAndLeavesState) {
  ParameterSet p;
  p.add("a", Tensor({2}, 1.0));
  p.add("hidden.weight", Tensor({3}, 1.0));
  AdamState s = make_adam(p, {});
  Gradients g = p.zeros_like();
  g["a"][0] = 0.5;
  g["hidden.weight"][2] = std::nan("");
  const ParameterSet before = p;
  const AdamState sb = s;
  try {
    adam_step(p, g, s);
    FAIL();
  } catch (const NonFiniteGradient& e) {
    EXPECT_EQ(e.parameter(), "hidden.weight");
    EXPECT_EQ(e.index(), 2u);
    EXPECT_NE(std::string(e.what()).find("hidden.weight"), std::string::npos);
  }
  EXPECT_EQ(p, before);
  EXPECT_EQ(s, sb);
}

TEST(Adam, ClipNormScalesGlobally) {
  ParameterSet p;
  p.add("w", Tensor({2}));
  AdamConfig cfg;
  cfg.clip_norm = 1.0;
  AdamState s = make_adam(p, cfg);
  Gradients g;
  g.add("w", Tensor({2}, {30.0, 40.0}));
  adam_step(p, g, s);
  EXPECT_NEAR(s.m["w"][0], 0.1 * 0.6, 1e-15);
  EXPECT_NEAR(s.m["w"][1], 0.1 * 0.8, 1e-15);
}

TEST(Adam, ConfigValidation) {
  AdamConfig c;
  c.beta1 = 1.0;
  EXPECT_ANY_THROW(c.validate());
  c = {};
  c.lr = -1;
  EXPECT_ANY_THROW(c.validate());
}

TEST(Training, ZeroLearningRateKeepsLossFlat) {
  RunConfig rc = parse_run_config(small_run(scratch("flat"), 0.0));
  rc.training.eval_every = 1;
  auto task = make_task(rc);
  TrainerState s0 = initial_state(rc);
  TrainReport r = train_in_memory(rc, *task, s0);
  ASSERT_EQ(r.metrics.size(), 8u);
  for (const auto& m : r.metrics) EXPECT_EQ(m.eval_loss, r.metrics[0].eval_loss);
  EXPECT_EQ(r.state.params, s0.params);
}

TEST(Training, SeededRerunIsBitIdentical) {
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  json ja = small_run(a), jb = small_run(b);
  train(parse_run_config(ja));
  train(parse_run_config(jb));
  EXPECT_EQ(read_file(a / "metrics.jsonl"), read_file(b / "metrics.jsonl"));
  EXPECT_FALSE(read_file(a / "metrics.jsonl").empty());
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Training, DifferentSeedsDiffer) {
  RunConfig r1 = parse_run_config(small_run(scratch("s1")));
  RunConfig r2 = r1;
  r2.seed = 8;
  auto t1 = make_task(r1), t2 = make_task(r2);
  EXPECT_NE(train_in_memory(r1, *t1, initial_state(r1)).state.params,
            train_in_memory(r2, *t2, initial_state(r2)).state.params);
}

TEST(Training, ResumeEqualsUninterruptedRun) {
  const fs::path whole = scratch("whole"), split = scratch("split");
  train(parse_run_config(small_run(whole)));

  json first = small_run(split);
  first["training"]["max_iterations"] = 4;
  train(parse_run_config(first));
  TrainReport resumed = train(parse_run_config(small_run(split)), true);

  EXPECT_EQ(read_file(whole / "metrics.jsonl"), read_file(split / "metrics.jsonl"));
  const CheckpointFile cw = load_checkpoint(whole / "checkpoint.bin");
  const CheckpointFile cs = load_checkpoint(split / "checkpoint.bin");
  EXPECT_EQ(cw.arrays, cs.arrays);
  EXPECT_EQ(cw.header.at("rng"), cs.header.at("rng"));
  EXPECT_EQ(resumed.state.iteration, 8u);
  fs::remove_all(whole);
  fs::remove_all(split);
}

TEST(Training, ResumeDropsMetricsNewerThanCheckpoint) {
  const fs::path dir = scratch("drop");
  RunConfig rc = parse_run_config(small_run(dir));
  train(rc);
  const std::string full = read_file(dir / "metrics.jsonl");
  // rewind the checkpoint to iteration 4 by re-saving an earlier state
  json first = small_run(dir);
  first["training"]["max_iterations"] = 4;
  RunConfig r4 = parse_run_config(first);
  auto task = make_task(r4);
  TrainReport partial = train_in_memory(r4, *task, initial_state(r4));
  save_state(checkpoint_path(rc), rc, partial.state);
  train(rc, true);
  EXPECT_EQ(read_file(dir / "metrics.jsonl"), full);
  fs::remove_all(dir);
}

TEST(Training, StopsAtTargetAccuracy) {
  RunConfig rc = parse_run_config(small_run(scratch("target")));
  rc.training.target_accuracy = 0.0;
  auto task = make_task(rc);
  TrainReport r = train_in_memory(rc, *task, initial_state(rc));
  EXPECT_EQ(r.metrics.size(), 1u);
  EXPECT_EQ(r.state.stop_reason, "target accuracy reached");
}

TEST(Training, PatienceStopsEarly) {
  RunConfig rc = parse_run_config(small_run(scratch("patience"), 0.0));
  rc.training.patience = 2;
  rc.training.max_iterations = 100;
  auto task = make_task(rc);
  TrainReport r = train_in_memory(rc, *task, initial_state(rc));
  EXPECT_EQ(r.metrics.size(), 3u);
  EXPECT_EQ(r.state.stop_reason, "early stopping");
}

TEST(Training, DivergenceIsReported) {
  RunConfig rc = parse_run_config(small_run(scratch("nan")));
  auto task = make_task(rc);
  TrainerState s = initial_state(rc);
  s.params["output.bias"][0] = std::nan("");
  EXPECT_THROW(train_in_memory(rc, *task, s), DivergenceError);
}

TEST(Training, MetricRecordRoundTrip) {
  MetricRecord m{12, 180, 0.5, 0.25, 0.75, 1.5, std::nullopt};
  json j = m.to_json();
  EXPECT_TRUE(j.at("wall_ms_per_step").is_null());
  MetricRecord back = MetricRecord::from_json(j);
  EXPECT_EQ(back.iteration, 12u);
  EXPECT_EQ(back.bpc, 1.5);
  EXPECT_EQ(back.eval_loss, 0.75);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const fs::path dir = scratch("ckpt");
  fs::create_directories(dir);
  Rng rng(3);
  CheckpointFile f;
  f.header = {{"note", "x"}, {"n", 3}};
  f.arrays.add("param/a", testing_util::random_tensor({2, 3}, rng, -1e300, 1e300));
  f.arrays.add("param/b", Tensor({1}, {-0.0}));
  f.arrays.add("tiny", Tensor({2}, {5e-324, std::nextafter(1.0, 2.0)}));
  save_checkpoint(dir / "c.bin", f);
  CheckpointFile g = load_checkpoint(dir / "c.bin");
  EXPECT_EQ(g.arrays, f.arrays);
  EXPECT_TRUE(std::signbit(g.arrays["param/b"][0]));
  EXPECT_EQ(g.header.at("note"), "x");
  fs::remove_all(dir);
}

TEST(Checkpoint, RejectsCorruptFiles) {
  const fs::path dir = scratch("corrupt");
  fs::create_directories(dir);
  std::ofstream(dir / "bad.bin") << "NOTACKPT";
  EXPECT_THROW(load_checkpoint(dir / "bad.bin"), CheckpointError);
  EXPECT_THROW(load_checkpoint(dir / "missing.bin"), CheckpointError);
  CheckpointFile f;
  f.arrays.add("x", Tensor({4}, 1.0));
  save_checkpoint(dir / "t.bin", f);
  const std::string bytes = read_file(dir / "t.bin");
  std::ofstream(dir / "trunc.bin", std::ios::binary) << bytes.substr(0, bytes.size() - 5);
  EXPECT_THROW(load_checkpoint(dir / "trunc.bin"), CheckpointError);
  fs::remove_all(dir);
}

TEST(Checkpoint, StateRoundTrip) {
  const fs::path dir = scratch("state");
  fs::create_directories(dir);
  RunConfig rc = parse_run_config(small_run(dir));
  auto task = make_task(rc);
  TrainerState s = train_in_memory(rc, *task, initial_state(rc)).state;
  save_state(dir / "s.bin", rc, s);
  TrainerState back = load_state(dir / "s.bin", rc);
  EXPECT_EQ(back.params, s.params);
  EXPECT_EQ(back.adam, s.adam);
  EXPECT_EQ(back.rng, s.rng);
  EXPECT_EQ(back.iteration, s.iteration);
  EXPECT_EQ(back.samples_seen, s.samples_seen);
  EXPECT_EQ(back.best_accuracy, s.best_accuracy);
  EXPECT_EQ(back.stop_reason, s.stop_reason);
  RunConfig other = rc;
  other.model.channels = 5;
  EXPECT_THROW(load_state(dir / "s.bin", other), CheckpointError);
  fs::remove_all(dir);
}

TEST(Initialization, ForgetBiasFollowsTask) {
  json j = small_run(scratch("fb"));
  EXPECT_EQ(parse_run_config(j).model.forget_bias, 1.0);
  TrainerState s = initial_state(parse_run_config(j));
  EXPECT_EQ(s.params["hidden.bias"][8], 1.0);
  EXPECT_EQ(s.params["hidden.bias"][7], 0.0);
}
