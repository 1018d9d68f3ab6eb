#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "tlstm/run_config.hpp"

using namespace tlstm;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json base() {
  return {{"model", {{"variant", "tLSTM"}, {"D", 2}, {"P", 2}, {"M", 4}, {"K", 3}, {"norm", "CN"}}},
          {"task", {{"preset", "addition-desk"}, {"num_digits", 2}, {"test_size", 5}}},
          {"training", {{"batch_size", 2}, {"max_iterations", 2}, {"eval_every", 1}}},
          {"seed", 3},
          {"output_dir", "unused"}};
}

std::string error_of(const json& j) {
  try {
    parse_run_config(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("tlstm_cli_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

struct CliResult {
  int code;
  std::string out;
};

CliResult cli(const std::string& args) {
  const std::string cmd = std::string(TLSTM_CLI) + " " + args + " 2>&1";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  std::string out;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) out.append(buf, n);
  const int status = ::pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

fs::path write_config(const fs::path& dir, json j) {
  j["output_dir"] = (dir / "out").string();
  std::ofstream(dir / "run.json") << j.dump(2);
  return dir / "run.json";
}

}  // namespace

TEST(RunConfig, ParsesAndDerivesTaskSizes) {
  RunConfig rc = parse_run_config(base());
  EXPECT_EQ(rc.model.input_size, 11u);
  EXPECT_EQ(rc.model.output_size, 11u);
  EXPECT_EQ(rc.model.forget_bias, 1.0);
  EXPECT_EQ(rc.model.norm, Norm::channel);
  EXPECT_EQ(rc.task.num_digits, 2u);
  EXPECT_EQ(rc.training.batch_size, 2u);
  EXPECT_EQ(rc.optimizer.lr, 1e-3);
}

TEST(RunConfig, UnknownKeysRejectedAtEveryLevel) {
  for (const char* path : {"/extra", "/model/extra", "/task/extra", "/training/extra", "/optimizer/extra"}) {
    json j = base();
    j["optimizer"] = json::object();
    j[json::json_pointer(path)] = 1;
    const std::string msg = error_of(j);
    EXPECT_FALSE(msg.empty()) << path;
    EXPECT_NE(msg.find("extra"), std::string::npos) << msg;
  }
}

TEST(RunConfig, MessagesStartWithFieldPath) {
  json j = base();
  j["model"]["variant"] = "GRU";
  EXPECT_EQ(error_of(j).rfind("model.variant", 0), 0u) << error_of(j);
  j = base();
  j["model"]["M"] = 0;
  EXPECT_EQ(error_of(j).rfind("model.M", 0), 0u) << error_of(j);
  j = base();
  j["training"]["batch_size"] = "many";
  EXPECT_EQ(error_of(j).rfind("training.batch_size", 0), 0u) << error_of(j);
}

TEST(RunConfig, DepthIsOnlyACheck) {
  json j = base();
  j["model"]["L"] = 2;
  EXPECT_EQ(parse_run_config(j).depth, 2u);
  j["model"]["L"] = 3;
  EXPECT_FALSE(error_of(j).empty());
}

TEST(RunConfig, PresetsAndUnknownPreset) {
  TaskSpec t;
  TrainingOptions o;
  apply_preset("memorization-desk", t, o);
  EXPECT_EQ(t.kind, TaskKind::memorization);
  EXPECT_EQ(t.num_symbols, 6u);
  EXPECT_EQ(t.vocab_size, 16u);
  apply_preset("pmnist", t, o);
  EXPECT_TRUE(t.permuted);
  EXPECT_EQ(o.batch_size, 50u);
  apply_preset("charlm", t, o);
  EXPECT_EQ(o.batch_size, 100u);
  EXPECT_EQ(t.subseq_len, 50u);
  EXPECT_THROW(apply_preset("imagenet", t, o), ConfigError);
}

TEST(RunConfig, ImageTasksUseForgetBiasFour) {
  json j = base();
  j["task"] = {{"preset", "mnist-8x8"}};
  RunConfig rc = parse_run_config(j);
  EXPECT_EQ(rc.model.forget_bias, 4.0);
  EXPECT_EQ(rc.model.input_size, 1u);
  EXPECT_EQ(rc.model.output_size, 10u);
}

TEST(RunConfig, JsonRoundTrip) {
  RunConfig rc = parse_run_config(base());
  json j = to_json(rc);
  RunConfig back = parse_run_config(j);
  EXPECT_EQ(back.model, rc.model);
  EXPECT_EQ(back.seed, rc.seed);
  EXPECT_EQ(model_from_json(to_json(rc.model)), rc.model);
}

TEST(Cli, TrainWritesMetricsAndReruns) {
  fs::path dir = scratch("train");
  const fs::path cfg = write_config(dir, base());
  CliResult r = cli("train " + cfg.string());
  ASSERT_EQ(r.code, 0) << r.out;
  const fs::path metrics = dir / "out" / "metrics.jsonl";
  ASSERT_TRUE(fs::exists(metrics));
  std::stringstream first;
  first << std::ifstream(metrics).rdbuf();
  ASSERT_EQ(cli("train " + cfg.string()).code, 0);
  std::stringstream second;
  second << std::ifstream(metrics).rdbuf();
  EXPECT_EQ(first.str(), second.str());
  EXPECT_FALSE(first.str().empty());

  CliResult ev = cli("eval " + cfg.string());
  EXPECT_EQ(ev.code, 0) << ev.out;
  EXPECT_NE(ev.out.find("accuracy"), std::string::npos);

  CliResult tr = cli("trace " + cfg.string() + " --example-seed 4");
  EXPECT_EQ(tr.code, 0) << tr.out;
  EXPECT_TRUE(fs::exists(dir / "out" / "trace_4.csv"));
  fs::remove_all(dir);
}

TEST(Cli, BadConfigExitsOne) {
  fs::path dir = scratch("bad");
  json j = base();
  j["model"]["variant"] = "GRU";
  CliResult r = cli("train " + write_config(dir, j).string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("model.variant"), std::string::npos) << r.out;
  EXPECT_EQ(cli("train " + (dir / "missing.json").string()).code, 1);
  fs::remove_all(dir);
}

TEST(Cli, DivergenceExitsTwo) {
  fs::path dir = scratch("diverge");
  json j = base();
  j["optimizer"] = {{"lr", 1e300}};
  CliResult r = cli("train " + write_config(dir, j).string());
  EXPECT_EQ(r.code, 2) << r.out;
  fs::remove_all(dir);
}

TEST(Cli, GradcheckCombinations) {
  for (const char* args : {"-D 2 -P 2 -M 3 -K 3 --variant tLSTM --norm CN",
                           "-D 3 -P 2 -M 3 -K 2 --variant tRNN --norm none",
                           "-D 2 -P 1 -M 3 --variant sLSTM --layers 2 --norm none"}) {
    CliResult r = cli(std::string("gradcheck ") + args + " -T 3");
    EXPECT_EQ(r.code, 0) << args << "\n" << r.out;
    EXPECT_EQ(r.out.rfind("PASS, max_rel_err=", 0), 0u) << r.out;
  }
}

TEST(Cli, GradcheckRejectsInconsistentDepth) {
  EXPECT_EQ(cli("gradcheck -D 2 -P 3 -K 3 -L 2").code, 1);
  EXPECT_EQ(cli("gradcheck -D 2 -P 3 -K 1").code, 1);
}

TEST(Cli, BenchParamsConstantAcrossDepth) {
  CliResult r = cli("bench --task addition-desk --depths 1,2 --channels 4 --batch 2 --iterations 1");
  ASSERT_EQ(r.code, 0) << r.out;
  std::istringstream in(r.out);
  std::string line;
  std::vector<std::string> tlstm_params;
  while (std::getline(in, line)) {
    std::istringstream row(line);
    std::vector<std::string> cols;
    for (std::string c; row >> c;) cols.push_back(c);
    if (cols.size() == 8 && cols[0] == "tLSTM") tlstm_params.push_back(cols[7]);
    if (cols.size() == 8 && cols[0] == "sLSTM") {
      EXPECT_EQ(std::stoul(cols[5]), std::stoul(cols[3]) * std::stoul(cols[1]));
    }
  }
  ASSERT_EQ(tlstm_params.size(), 2u) << r.out;
  EXPECT_EQ(tlstm_params[0], tlstm_params[1]);
}
