#include "tlstm/training.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <mutex>

#include "tlstm/checkpoint.hpp"
#include "tlstm/tasks.hpp"

namespace tlstm {

using nlohmann::json;

namespace {

constexpr std::uint64_t kTestStream = 0x7e57'0000'0000'0001ULL;

// Addition and memorization share everything but the example generator.
class AlgorithmicTask final : public Task {
 public:
  AlgorithmicTask(const TaskSpec& spec, std::size_t batch_size, std::uint64_t seed)
      : spec_(spec),
        vocab_(spec.kind == TaskKind::addition ? addition_vocab() : memorization_vocab(spec.vocab_size)),
        scored_(spec.kind == TaskKind::addition ? addition_scored(spec.num_digits)
                                                : memorization_scored(spec.num_symbols)),
        batch_size_(batch_size),
        seed_(seed) {
    std::vector<TextExample> test;
    for (std::size_t i = 0; i < spec.test_size; ++i) test.push_back(sample(mix_seed(seed ^ kTestStream, i)));
    test_ = encode_batch(test, vocab_, scored_);
  }

  std::size_t input_size() const override { return vocab_.size(); }
  std::size_t output_size() const override { return vocab_.size(); }

  SequenceBatch train_batch(std::uint64_t iteration) const override {
    std::vector<TextExample> ex;
    for (std::size_t e = 0; e < batch_size_; ++e) ex.push_back(sample(mix_seed(seed_, iteration * batch_size_ + e)));
    return encode_batch(ex, vocab_, scored_);
  }

  EvalResult evaluate(const ParameterSet& params, const TlstmConfig& cfg) const override {
    SequenceResult r = run_sequence(params, cfg, test_, zero_state(cfg, test_.batch()));
    return {r.loss, accuracy(r.probabilities, test_.targets, test_.score_mask()).rate(), std::nullopt};
  }

  SequenceBatch example(std::uint64_t seed) const override {
    return encode_batch({sample(mix_seed(seed, 0))}, vocab_, scored_);
  }

 private:
  TextExample sample(std::uint64_t s) const {
    Rng rng(s);
    return spec_.kind == TaskKind::addition ? sample_addition(spec_.num_digits, rng)
                                            : sample_memorization(spec_.num_symbols, vocab_, rng);
  }

  TaskSpec spec_;
  SymbolVocab vocab_;
  std::vector<bool> scored_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  SequenceBatch test_;
};

class CharLmTask final : public Task {
 public:
  CharLmTask(const TaskSpec& spec, std::size_t batch_size)
      : corpus_(CharCorpus::load(std::filesystem::path(spec.data_dir) / spec.corpus)),
        split_(static_cast<std::size_t>(static_cast<double>(corpus_.size()) * (1.0 - spec.valid_fraction))),
        train_(&corpus_.ids(), 0, split_, batch_size, spec.subseq_len),
        valid_(&corpus_.ids(), split_,
               spec.eval_chars ? std::min(corpus_.size(), split_ + spec.eval_chars) : corpus_.size(), batch_size,
               spec.subseq_len) {}

  std::size_t input_size() const override { return corpus_.vocab_size(); }
  std::size_t output_size() const override { return corpus_.vocab_size(); }
  bool stateful() const override { return true; }
  std::uint64_t iterations_per_epoch() const override { return train_.windows(); }

  SequenceBatch train_batch(std::uint64_t iteration) const override {
    return train_.window(iteration % train_.windows(), corpus_.vocab_size());
  }

  EvalResult evaluate(const ParameterSet& params, const TlstmConfig& cfg) const override {
    CellState carry;
    double loss = 0.0;
    Tally hits;
    for (std::size_t w = 0; w < valid_.windows(); ++w) {
      SequenceBatch b = valid_.window(w, corpus_.vocab_size());
      if (w == 0) carry = zero_state(cfg, b.batch());
      SequenceResult r = run_sequence(params, cfg, b, carry);
      carry = r.carry;
      loss += r.loss;
      Tally t = accuracy(r.probabilities, b.targets, b.mask);
      hits.correct += t.correct;
      hits.total += t.total;
    }
    loss /= static_cast<double>(valid_.windows());
    return {loss, hits.rate(), bits_per_char(loss)};
  }

  SequenceBatch example(std::uint64_t seed) const override {
    const std::size_t len = 50;
    Rng rng(seed);
    const std::size_t start = split_ + rng.below(corpus_.size() - split_ - len - 1);
    LaneStream one(&corpus_.ids(), start, start + len + 1, 1, len);
    return one.window(0, corpus_.vocab_size());
  }

 private:
  CharCorpus corpus_;
  std::size_t split_;
  LaneStream train_;
  LaneStream valid_;
};

class MnistTask final : public Task {
 public:
  MnistTask(const TaskSpec& spec, std::size_t batch_size, std::uint64_t seed) : batch_size_(batch_size), seed_(seed) {
    const std::filesystem::path dir = spec.data_dir;
    MnistSet all = load_mnist(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte");
    if (spec.image_size != all.rows) all = downsample(all, spec.image_size);
    const std::size_t pixels = all.rows * all.cols;
    order_ = spec.permuted ? PixelOrder::permuted(pixels, spec.permutation_seed) : PixelOrder::identity(pixels);
    const std::size_t n_train = std::min<std::size_t>(50000, all.images.size() * 5 / 6);
    data_ = std::move(all);
    n_train_ = n_train;
  }

  std::size_t input_size() const override { return 1; }
  std::size_t output_size() const override { return 10; }
  std::uint64_t iterations_per_epoch() const override { return n_train_ / batch_size_; }

  SequenceBatch train_batch(std::uint64_t iteration) const override {
    const std::uint64_t per_epoch = iterations_per_epoch();
    const std::uint64_t epoch = iteration / per_epoch;
    const std::vector<std::size_t>& perm = shuffle(epoch);
    const std::size_t first = (iteration % per_epoch) * batch_size_;
    return mnist_batch(data_, order_, std::vector<std::size_t>(perm.begin() + first, perm.begin() + first + batch_size_));
  }

  EvalResult evaluate(const ParameterSet& params, const TlstmConfig& cfg) const override {
    const std::size_t total = data_.images.size() - n_train_, chunk = 100;
    double loss = 0.0;
    Tally hits;
    for (std::size_t first = n_train_; first < data_.images.size(); first += chunk) {
      const std::size_t count = std::min(chunk, data_.images.size() - first);
      SequenceBatch b = mnist_batch(data_, order_, first, count);
      SequenceResult r = run_sequence(params, cfg, b, zero_state(cfg, count));
      loss += r.loss * static_cast<double>(count);
      Tally t = accuracy(r.probabilities, b.targets, b.mask);
      hits.correct += t.correct;
      hits.total += t.total;
    }
    return {loss / static_cast<double>(total), hits.rate(), std::nullopt};
  }

  SequenceBatch example(std::uint64_t seed) const override {
    Rng rng(seed);
    return mnist_batch(data_, order_, n_train_ + rng.below(data_.images.size() - n_train_), 1);
  }

 private:
  const std::vector<std::size_t>& shuffle(std::uint64_t epoch) const {
    std::lock_guard lock(mu_);
    if (cached_epoch_ != epoch || perm_.empty()) {
      perm_ = PixelOrder::permuted(n_train_, mix_seed(seed_, epoch)).order();
      cached_epoch_ = epoch;
    }
    return perm_;
  }

  std::size_t batch_size_;
  std::uint64_t seed_;
  MnistSet data_;
  std::size_t n_train_ = 0;
  PixelOrder order_ = PixelOrder::identity(1);
  mutable std::mutex mu_;
  mutable std::uint64_t cached_epoch_ = 0;
  mutable std::vector<std::size_t> perm_;
};

}  // namespace

std::unique_ptr<Task> make_algorithmic_task(const TaskSpec& spec, std::size_t batch_size, std::uint64_t seed) {
  if (spec.kind != TaskKind::addition && spec.kind != TaskKind::memorization)
    throw std::invalid_argument("not an algorithmic task");
  return std::make_unique<AlgorithmicTask>(spec, batch_size, seed);
}

std::unique_ptr<Task> make_task(const RunConfig& rc) {
  switch (rc.task.kind) {
    case TaskKind::addition:
    case TaskKind::memorization: return make_algorithmic_task(rc.task, rc.training.batch_size, rc.seed);
    case TaskKind::charlm: return std::make_unique<CharLmTask>(rc.task, rc.training.batch_size);
    case TaskKind::mnist: return std::make_unique<MnistTask>(rc.task, rc.training.batch_size, rc.seed);
  }
  throw std::invalid_argument("unknown task kind");
}

json MetricRecord::to_json() const {
  json j = {{"iteration", iteration}, {"samples_seen", samples_seen}, {"loss", loss},
            {"accuracy", accuracy},   {"eval_loss", eval_loss}};
  if (bpc) j["bpc"] = *bpc;
  j["wall_ms_per_step"] = wall_ms_per_step ? json(*wall_ms_per_step) : json(nullptr);
  return j;
}

MetricRecord MetricRecord::from_json(const json& j) {
  MetricRecord m;
  m.iteration = j.at("iteration").get<std::uint64_t>();
  m.samples_seen = j.at("samples_seen").get<std::uint64_t>();
  m.loss = j.at("loss").get<double>();
  m.accuracy = j.at("accuracy").get<double>();
  m.eval_loss = j.at("eval_loss").get<double>();
  if (j.contains("bpc")) m.bpc = j.at("bpc").get<double>();
  if (j.contains("wall_ms_per_step") && !j.at("wall_ms_per_step").is_null())
    m.wall_ms_per_step = j.at("wall_ms_per_step").get<double>();
  return m;
}

TrainerState initial_state(const RunConfig& rc) {
  TrainerState s;
  s.rng = Rng(rc.seed);
  s.params = make_parameters(rc.model);
  initialize(s.params, rc.model, s.rng);
  s.adam = make_adam(s.params, rc.optimizer);
  return s;
}

std::filesystem::path checkpoint_path(const RunConfig& rc) {
  return std::filesystem::path(rc.output_dir) / "checkpoint.bin";
}
std::filesystem::path metrics_path(const RunConfig& rc) {
  return std::filesystem::path(rc.output_dir) / "metrics.jsonl";
}

void save_state(const std::filesystem::path& path, const RunConfig& rc, const TrainerState& s) {
  CheckpointFile f;
  f.header = {{"model", to_json(rc.model)},
              {"optimizer", {{"lr", s.adam.config.lr},
                             {"beta1", s.adam.config.beta1},
                             {"beta2", s.adam.config.beta2},
                             {"eps", s.adam.config.eps},
                             {"clip_norm", s.adam.config.clip_norm}}},
              {"adam_step", s.adam.step},
              {"rng", s.rng.serialize()},
              {"iteration", s.iteration},
              {"samples_seen", s.samples_seen},
              {"loss_count", s.loss_count},
              {"evals_since_best", s.evals_since_best},
              {"finished", s.finished},
              {"stop_reason", s.stop_reason},
              {"run", to_json(rc)}};
  for (const auto& [name, t] : s.params) f.arrays.add("param/" + name, t);
  for (const auto& [name, t] : s.adam.m) f.arrays.add("adam.m/" + name, t);
  for (const auto& [name, t] : s.adam.v) f.arrays.add("adam.v/" + name, t);
  if (!s.carry.h.empty()) f.arrays.add("carry.h", s.carry.h);
  if (!s.carry.c.empty()) f.arrays.add("carry.c", s.carry.c);
  // doubles that must survive exactly travel as arrays, not JSON text
  f.arrays.add("scalar/loss_sum", Tensor::scalar(s.loss_sum));
  f.arrays.add("scalar/best_accuracy", Tensor::scalar(s.best_accuracy));
  save_checkpoint(path, f);
}

TrainerState load_state(const std::filesystem::path& path, const RunConfig& rc) {
  CheckpointFile f = load_checkpoint(path);
  const TlstmConfig stored = model_from_json(f.header.at("model"));
  if (!(stored == rc.model)) throw CheckpointError(path.string() + ": checkpoint model does not match the config");
  TrainerState s;
  s.params = make_parameters(rc.model);
  for (auto& [name, t] : s.params) {
    const Tensor& src = f.arrays["param/" + name];
    require_same_shape(t, src, "checkpoint parameter");
    t = src;
  }
  const json& o = f.header.at("optimizer");
  AdamConfig ac{o.at("lr").get<double>(), o.at("beta1").get<double>(), o.at("beta2").get<double>(),
                o.at("eps").get<double>(), o.at("clip_norm").get<double>()};
  s.adam = make_adam(s.params, ac);
  s.adam.step = f.header.at("adam_step").get<std::uint64_t>();
  for (auto& [name, t] : s.adam.m) t = f.arrays["adam.m/" + name];
  for (auto& [name, t] : s.adam.v) t = f.arrays["adam.v/" + name];
  s.rng.deserialize(f.header.at("rng").get<std::string>());
  s.iteration = f.header.at("iteration").get<std::uint64_t>();
  s.samples_seen = f.header.at("samples_seen").get<std::uint64_t>();
  s.loss_count = f.header.at("loss_count").get<std::uint64_t>();
  s.evals_since_best = f.header.at("evals_since_best").get<std::uint64_t>();
  s.finished = f.header.at("finished").get<bool>();
  s.stop_reason = f.header.at("stop_reason").get<std::string>();
  if (f.arrays.contains("carry.h")) s.carry.h = f.arrays["carry.h"];
  if (f.arrays.contains("carry.c")) s.carry.c = f.arrays["carry.c"];
  s.loss_sum = f.arrays["scalar/loss_sum"][0];
  s.best_accuracy = f.arrays["scalar/best_accuracy"][0];
  return s;
}

namespace {

struct Hooks {
  std::function<void(const MetricRecord&)> on_metric;
  std::function<void(const TrainerState&)> on_checkpoint;
};

void run_loop(const RunConfig& rc, const Task& task, TrainerState& s, std::vector<MetricRecord>& metrics,
              const Hooks& hooks) {
  const TlstmConfig& cfg = rc.model;
  const TrainingOptions& o = rc.training;
  if (task.input_size() != cfg.input_size || task.output_size() != cfg.output_size)
    throw DimensionError("task and model disagree on input/output size");
  const std::uint64_t per_epoch = task.iterations_per_epoch();
  double elapsed_ms = 0.0;
  std::uint64_t evals = s.iteration / o.eval_every;

  auto budget_hit = [&] {
    if (o.max_iterations && s.iteration >= o.max_iterations) return true;
    if (o.max_samples && s.samples_seen >= o.max_samples) return true;
    if (o.epochs && per_epoch && s.iteration >= o.epochs * per_epoch) return true;
    return false;
  };

  auto evaluate = [&] {
    EvalResult ev = task.evaluate(s.params, cfg);
    MetricRecord m;
    m.iteration = s.iteration;
    m.samples_seen = s.samples_seen;
    m.loss = s.loss_count ? s.loss_sum / static_cast<double>(s.loss_count) : 0.0;
    m.accuracy = ev.accuracy;
    m.eval_loss = ev.loss;
    m.bpc = ev.bpc;
    if (o.record_timing && s.loss_count) m.wall_ms_per_step = elapsed_ms / static_cast<double>(s.loss_count);
    s.loss_sum = 0.0;
    s.loss_count = 0;
    elapsed_ms = 0.0;
    metrics.push_back(m);
    if (hooks.on_metric) hooks.on_metric(m);
    ++evals;
    if (ev.accuracy >= o.target_accuracy) {
      s.finished = true;
      s.stop_reason = "target accuracy reached";
    }
    if (ev.accuracy > s.best_accuracy) {
      s.best_accuracy = ev.accuracy;
      s.evals_since_best = 0;
    } else {
      ++s.evals_since_best;
      if (o.patience && s.evals_since_best >= o.patience) {
        s.finished = true;
        s.stop_reason = "early stopping";
      }
    }
  };

  while (!s.finished) {
    if (budget_hit()) {
      if (s.loss_count > 0) evaluate();
      s.finished = true;
      if (s.stop_reason.empty()) s.stop_reason = "budget exhausted";
      break;
    }
    if (task.stateful() && per_epoch && s.iteration % per_epoch == 0) s.carry = CellState{};
    const auto t0 = std::chrono::steady_clock::now();
    SequenceBatch batch = task.train_batch(s.iteration);
    const CellState carry_in =
        task.stateful() && !s.carry.h.empty() ? s.carry : zero_state(cfg, batch.batch());
    LossAndGradients lg = sequence_gradients(s.params, cfg, batch, carry_in);
    if (!std::isfinite(lg.loss))
      throw DivergenceError("loss became non-finite at iteration " + std::to_string(s.iteration));
    try {
      adam_step(s.params, lg.grads, s.adam);
    } catch (const NonFiniteGradient& e) {
      throw DivergenceError(std::string(e.what()) + " at iteration " + std::to_string(s.iteration));
    }
    if (task.stateful()) s.carry = carry_state(lg.carry);
    s.loss_sum += lg.loss;
    ++s.loss_count;
    ++s.iteration;
    s.samples_seen += batch.batch();
    elapsed_ms += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

    if (s.iteration % o.eval_every == 0) {
      evaluate();
      if (s.finished || evals % o.checkpoint_every == 0)
        if (hooks.on_checkpoint) hooks.on_checkpoint(s);
    }
  }
  if (hooks.on_checkpoint) hooks.on_checkpoint(s);
}

}  // namespace

TrainReport train_in_memory(const RunConfig& rc, const Task& task, TrainerState state) {
  TrainReport r;
  r.state = std::move(state);
  run_loop(rc, task, r.state, r.metrics, {});
  return r;
}

TrainReport train(const RunConfig& rc, bool resume) {
  std::filesystem::create_directories(rc.output_dir);
  std::unique_ptr<Task> task = make_task(rc);
  TrainReport r;
  const auto ckpt = checkpoint_path(rc);
  const auto mpath = metrics_path(rc);
  if (resume) {
    r.state = load_state(ckpt, rc);
    // a run that only ran out of budget continues if rc grants more
    if (r.state.stop_reason == "budget exhausted") {
      r.state.finished = false;
      r.state.stop_reason.clear();
    }
    // keep the metric lines the checkpoint already accounts for
    std::vector<std::string> kept;
    std::ifstream in(mpath);
    for (std::string line; std::getline(in, line);) {
      if (line.empty()) continue;
      MetricRecord m = MetricRecord::from_json(json::parse(line));
      if (m.iteration > r.state.iteration) break;
      kept.push_back(line);
      r.metrics.push_back(m);
    }
    std::ofstream out(mpath, std::ios::trunc);
    for (const auto& line : kept) out << line << '\n';
  } else {
    r.state = initial_state(rc);
    std::ofstream(mpath, std::ios::trunc);
  }
  std::ofstream metrics_out(mpath, std::ios::app);
  Hooks hooks;
  hooks.on_metric = [&](const MetricRecord& m) {
    metrics_out << m.to_json().dump() << '\n';
    metrics_out.flush();
  };
  hooks.on_checkpoint = [&](const TrainerState& s) { save_state(ckpt, rc, s); };
  run_loop(rc, *task, r.state, r.metrics, hooks);
  return r;
}

}  // namespace tlstm
