#include "tlstm/run_config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

#include "tlstm/tasks.hpp"

namespace tlstm {

using nlohmann::json;

namespace {

// Reads fields of one JSON object and remembers which keys were consumed so
// that leftovers can be rejected.
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j.is_object()) fail("", "expected an object");
  }

  [[noreturn]] void fail(const std::string& key, const std::string& why) const {
    throw ConfigError(where(key) + ": " + why);
  }
  std::string where(const std::string& key) const { return key.empty() ? path_ : path_ + "." + key; }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }
  const json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  template <class T>
  void read(const std::string& key, T& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) fail(key, "expected a boolean");
      out = v.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0))
        fail(key, "expected a non-negative integer");
      out = v.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) fail(key, "expected a number");
      out = v.get<T>();
    } else {
      if (!v.is_string()) fail(key, "expected a string");
      out = v.get<std::string>();
    }
  }

  void reject_unknown() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) fail(it.key(), "unknown key");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::string default_data_dir() {
  if (const char* env = std::getenv("TLSTM_DATA_DIR"); env && *env) return env;
  return "data";
}

}  // namespace

void apply_preset(const std::string& name, TaskSpec& task, TrainingOptions& training) {
  task = TaskSpec{};
  training = TrainingOptions{};
  task.preset = name;
  if (name == "addition-desk" || name == "addition-full") {
    task.kind = TaskKind::addition;
    task.num_digits = name == "addition-desk" ? 4 : 15;
    training.batch_size = 15;
    training.target_accuracy = 1.0;
  } else if (name == "memorization-desk" || name == "memorization-full") {
    task.kind = TaskKind::memorization;
    task.num_symbols = name == "memorization-desk" ? 6 : 20;
    task.vocab_size = name == "memorization-desk" ? 16 : 65;
    training.batch_size = 15;
    training.target_accuracy = 1.0;
  } else if (name == "mnist" || name == "pmnist" || name == "mnist-8x8") {
    task.kind = TaskKind::mnist;
    task.permuted = name == "pmnist";
    task.image_size = name == "mnist-8x8" ? 8 : 28;
    task.permutation_seed = PixelOrder::kPermutationSeed;
    training.batch_size = 50;
    training.patience = 10;
  } else if (name == "charlm") {
    task.kind = TaskKind::charlm;
    training.batch_size = 100;
    training.epochs = 50;
  } else {
    throw ConfigError("task.preset: unknown preset '" + name +
                      "' (addition-desk, addition-full, memorization-desk, memorization-full, mnist, pmnist, "
                      "mnist-8x8, charlm)");
  }
}

std::size_t task_input_size(const TaskSpec& task, std::size_t corpus_vocab) {
  switch (task.kind) {
    case TaskKind::addition: return addition_vocab().size();
    case TaskKind::memorization: return task.vocab_size;
    case TaskKind::mnist: return 1;
    case TaskKind::charlm: return corpus_vocab;
  }
  return 0;
}

std::size_t task_output_size(const TaskSpec& task, std::size_t corpus_vocab) {
  switch (task.kind) {
    case TaskKind::addition: return addition_vocab().size();
    case TaskKind::memorization: return task.vocab_size;
    case TaskKind::mnist: return 10;
    case TaskKind::charlm: return corpus_vocab;
  }
  return 0;
}

json to_json(const TlstmConfig& c) {
  return {{"variant", to_string(c.variant)}, {"D", c.dims},          {"P", c.tensor_size},
          {"M", c.channels},                 {"K", c.kernel},        {"norm", to_string(c.norm)},
          {"layers", c.layers},              {"R", c.input_size},    {"S", c.output_size},
          {"forget_bias", c.forget_bias}};
}

TlstmConfig model_from_json(const json& j) {
  TlstmConfig c;
  c.variant = parse_variant(j.at("variant").get<std::string>());
  c.dims = j.at("D").get<std::size_t>();
  c.tensor_size = j.at("P").get<std::size_t>();
  c.channels = j.at("M").get<std::size_t>();
  c.kernel = j.at("K").get<std::size_t>();
  c.norm = parse_norm(j.at("norm").get<std::string>());
  c.layers = j.at("layers").get<std::size_t>();
  c.input_size = j.at("R").get<std::size_t>();
  c.output_size = j.at("S").get<std::size_t>();
  c.forget_bias = j.at("forget_bias").get<double>();
  return c;
}

json to_json(const RunConfig& rc) {
  json model = {{"variant", to_string(rc.model.variant)}, {"D", rc.model.dims}, {"P", rc.model.tensor_size},
                {"M", rc.model.channels},                 {"K", rc.model.kernel}, {"norm", to_string(rc.model.norm)},
                {"layers", rc.model.layers}};
  if (rc.depth) model["L"] = *rc.depth;
  const TaskSpec& t = rc.task;
  json task = {{"preset", t.preset}};
  switch (t.kind) {
    case TaskKind::addition: task["num_digits"] = t.num_digits, task["test_size"] = t.test_size; break;
    case TaskKind::memorization:
      task["num_symbols"] = t.num_symbols, task["vocab_size"] = t.vocab_size, task["test_size"] = t.test_size;
      break;
    case TaskKind::mnist:
      task["image_size"] = t.image_size, task["permuted"] = t.permuted, task["permutation_seed"] = t.permutation_seed,
      task["data_dir"] = t.data_dir;
      break;
    case TaskKind::charlm:
      task["corpus"] = t.corpus, task["subseq_len"] = t.subseq_len, task["valid_fraction"] = t.valid_fraction,
      task["eval_chars"] = t.eval_chars, task["data_dir"] = t.data_dir;
      break;
  }
  const TrainingOptions& o = rc.training;
  return {{"model", model},
          {"task", task},
          {"optimizer",
           {{"lr", rc.optimizer.lr},
            {"beta1", rc.optimizer.beta1},
            {"beta2", rc.optimizer.beta2},
            {"eps", rc.optimizer.eps},
            {"clip_norm", rc.optimizer.clip_norm}}},
          {"training",
           {{"batch_size", o.batch_size},
            {"max_samples", o.max_samples},
            {"max_iterations", o.max_iterations},
            {"epochs", o.epochs},
            {"eval_every", o.eval_every},
            {"patience", o.patience},
            {"target_accuracy", o.target_accuracy},
            {"checkpoint_every", o.checkpoint_every},
            {"record_timing", o.record_timing}}},
          {"seed", rc.seed},
          {"output_dir", rc.output_dir}};
}

RunConfig parse_run_config(const json& doc) {
  RunConfig rc;
  Fields top(doc, "config");

  // task first: the model's R and S depend on it
  if (!top.has("task")) top.fail("task", "missing");
  {
    Fields f(top.raw("task"), "task");
    std::string preset;
    f.read("preset", preset);
    if (preset.empty()) f.fail("preset", "missing");
    apply_preset(preset, rc.task, rc.training);
    TaskSpec& t = rc.task;
    switch (t.kind) {
      case TaskKind::addition:
        f.read("num_digits", t.num_digits);
        f.read("test_size", t.test_size);
        if (t.num_digits < 1 || t.num_digits > 18) f.fail("num_digits", "must be in [1, 18]");
        break;
      case TaskKind::memorization:
        f.read("num_symbols", t.num_symbols);
        f.read("vocab_size", t.vocab_size);
        f.read("test_size", t.test_size);
        if (t.num_symbols < 1) f.fail("num_symbols", "must be >= 1");
        if (t.vocab_size < 2 || t.vocab_size > 65) f.fail("vocab_size", "must be in [2, 65]");
        break;
      case TaskKind::mnist:
        f.read("image_size", t.image_size);
        f.read("permuted", t.permuted);
        f.read("permutation_seed", t.permutation_seed);
        f.read("data_dir", t.data_dir);
        if (t.image_size < 1 || t.image_size > 28) f.fail("image_size", "must be in [1, 28]");
        break;
      case TaskKind::charlm:
        f.read("corpus", t.corpus);
        f.read("subseq_len", t.subseq_len);
        f.read("valid_fraction", t.valid_fraction);
        f.read("eval_chars", t.eval_chars);
        f.read("data_dir", t.data_dir);
        if (t.subseq_len < 1) f.fail("subseq_len", "must be >= 1");
        if (!(t.valid_fraction > 0.0 && t.valid_fraction < 1.0)) f.fail("valid_fraction", "must be in (0, 1)");
        break;
    }
    if ((t.kind == TaskKind::addition || t.kind == TaskKind::memorization) && t.test_size < 1)
      f.fail("test_size", "must be >= 1");
    f.reject_unknown();
    if (t.data_dir.empty()) t.data_dir = default_data_dir();
  }

  std::size_t corpus_vocab = 0;
  if (rc.task.kind == TaskKind::charlm) {
    const std::filesystem::path p = std::filesystem::path(rc.task.data_dir) / rc.task.corpus;
    try {
      corpus_vocab = CharCorpus::load(p).vocab_size();
    } catch (const std::exception& e) {
      throw ConfigError("task.corpus: " + std::string(e.what()));
    }
  }

  if (!top.has("model")) top.fail("model", "missing");
  {
    Fields f(top.raw("model"), "model");
    TlstmConfig& m = rc.model;
    std::string variant = "tLSTM", norm = "none";
    f.read("variant", variant);
    f.read("norm", norm);
    try {
      m.variant = parse_variant(variant);
    } catch (const std::invalid_argument& e) {
      f.fail("variant", e.what());
    }
    try {
      m.norm = parse_norm(norm);
    } catch (const std::invalid_argument& e) {
      f.fail("norm", e.what());
    }
    f.read("D", m.dims);
    f.read("P", m.tensor_size);
    f.read("M", m.channels);
    f.read("K", m.kernel);
    f.read("layers", m.layers);
    if (f.has("L")) {
      std::size_t l = 0;
      f.read("L", l);
      rc.depth = l;
    }
    f.reject_unknown();
    m.input_size = task_input_size(rc.task, corpus_vocab);
    m.output_size = task_output_size(rc.task, corpus_vocab);
    m.forget_bias = rc.task.image() ? 4.0 : 1.0;
    try {
      m.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError("model." + std::string(e.what()));
    }
    if (rc.depth && *rc.depth != m.depth())
      f.fail("L", "inconsistent with P and K: depth must be " + std::to_string(m.depth()));
  }

  if (top.has("optimizer")) {
    Fields f(top.raw("optimizer"), "optimizer");
    f.read("lr", rc.optimizer.lr);
    f.read("beta1", rc.optimizer.beta1);
    f.read("beta2", rc.optimizer.beta2);
    f.read("eps", rc.optimizer.eps);
    f.read("clip_norm", rc.optimizer.clip_norm);
    f.reject_unknown();
    try {
      rc.optimizer.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError("optimizer." + std::string(e.what()));
    }
  }

  if (top.has("training")) {
    Fields f(top.raw("training"), "training");
    TrainingOptions& o = rc.training;
    f.read("batch_size", o.batch_size);
    f.read("max_samples", o.max_samples);
    f.read("max_iterations", o.max_iterations);
    f.read("epochs", o.epochs);
    f.read("eval_every", o.eval_every);
    f.read("patience", o.patience);
    f.read("target_accuracy", o.target_accuracy);
    f.read("checkpoint_every", o.checkpoint_every);
    f.read("record_timing", o.record_timing);
    f.reject_unknown();
    if (o.batch_size < 1) f.fail("batch_size", "must be >= 1");
    if (o.eval_every < 1) f.fail("eval_every", "must be >= 1");
    if (o.checkpoint_every < 1) f.fail("checkpoint_every", "must be >= 1");
  }

  top.read("seed", rc.seed);
  top.read("output_dir", rc.output_dir);
  if (rc.output_dir.empty()) top.fail("output_dir", "must not be empty");
  top.reject_unknown();
  return rc;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: " + path.string() + ": " + e.what());
  }
  return parse_run_config(doc);
}

}  // namespace tlstm
