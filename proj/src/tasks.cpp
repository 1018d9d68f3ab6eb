#include "tlstm/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>

namespace tlstm {

SymbolVocab::SymbolVocab(std::string symbols) : symbols_(std::move(symbols)) {
  lookup_.fill(-1);
  if (symbols_.empty() || symbols_[0] != pad) throw std::invalid_argument("vocab must start with '-'");
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    auto& slot = lookup_[static_cast<unsigned char>(symbols_[i])];
    if (slot != -1) throw std::invalid_argument(std::string("duplicate vocab symbol '") + symbols_[i] + "'");
    slot = static_cast<int>(i);
  }
}

int SymbolVocab::index(char symbol) const {
  const int i = lookup_[static_cast<unsigned char>(symbol)];
  if (i < 0) throw std::invalid_argument(std::string("symbol '") + symbol + "' not in vocabulary");
  return i;
}

char SymbolVocab::symbol(int index) const {
  if (index < 0 || static_cast<std::size_t>(index) >= symbols_.size())
    throw std::out_of_range("symbol index " + std::to_string(index));
  return symbols_[static_cast<std::size_t>(index)];
}

std::vector<int> SymbolVocab::encode(std::string_view text) const {
  std::vector<int> out;
  out.reserve(text.size());
  for (char c : text) out.push_back(index(c));
  return out;
}

std::string SymbolVocab::decode(const std::vector<int>& indices) const {
  std::string out;
  for (int i : indices) out.push_back(symbol(i));
  return out;
}

SymbolVocab addition_vocab() { return SymbolVocab("-0123456789"); }

SymbolVocab memorization_vocab(std::size_t vocab_size) {
  static const std::string payload = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789+*";
  if (vocab_size < 2 || vocab_size > payload.size() + 1)
    throw std::invalid_argument("memorization vocab_size must be in [2, " + std::to_string(payload.size() + 1) + "]");
  return SymbolVocab("-" + payload.substr(0, vocab_size - 1));
}

namespace {

std::uint64_t pow10(std::size_t n) {
  std::uint64_t v = 1;
  for (std::size_t i = 0; i < n; ++i) v *= 10;
  return v;
}

std::string padded(std::uint64_t v, std::size_t width, char fill) {
  std::string s = std::to_string(v);
  if (s.size() < width) s.insert(0, width - s.size(), fill);
  return s;
}

}  // namespace

TextExample addition_example(std::size_t num_digits, std::uint64_t a, std::uint64_t b) {
  if (num_digits < 1 || num_digits > 18) throw std::invalid_argument("num_digits must be in [1, 18]");
  const std::uint64_t limit = pow10(num_digits);
  if (a >= limit || b >= limit) throw std::invalid_argument("operand wider than num_digits");
  const std::size_t n = num_digits;
  TextExample ex;
  ex.input = "-" + padded(a, n, '0') + "-" + padded(b, n, '0') + "-" + std::string(n + 1, '-');
  ex.target = std::string(2 * (n + 1), '-') + padded(a + b, n + 1, '-') + "-";
  return ex;
}

TextExample sample_addition(std::size_t num_digits, Rng& rng) {
  const std::uint64_t limit = pow10(num_digits);
  const std::uint64_t a = rng.below(limit);
  const std::uint64_t b = rng.below(limit);
  return addition_example(num_digits, a, b);
}

std::vector<bool> addition_scored(std::size_t num_digits) {
  std::vector<bool> s(3 * num_digits + 4, false);
  for (std::size_t i = 2 * (num_digits + 1); i < 3 * num_digits + 3; ++i) s[i] = true;
  return s;
}

TextExample memorization_example(std::string_view payload) {
  const std::size_t n = payload.size();
  if (n < 1) throw std::invalid_argument("memorization needs at least one symbol");
  TextExample ex;
  ex.input = "-" + std::string(payload) + std::string(n + 1, '-');
  ex.target = std::string(n + 1, '-') + std::string(payload) + "-";
  return ex;
}

TextExample sample_memorization(std::size_t num_symbols, const SymbolVocab& vocab, Rng& rng) {
  if (vocab.size() < 2) throw std::invalid_argument("memorization vocab has no payload symbols");
  std::string payload;
  for (std::size_t i = 0; i < num_symbols; ++i)
    payload.push_back(vocab.symbol(static_cast<int>(1 + rng.below(vocab.size() - 1))));
  return memorization_example(payload);
}

std::vector<bool> memorization_scored(std::size_t num_symbols) {
  std::vector<bool> s(2 * num_symbols + 2, false);
  for (std::size_t i = num_symbols + 1; i < 2 * num_symbols + 1; ++i) s[i] = true;
  return s;
}

SequenceBatch encode_batch(const std::vector<TextExample>& examples, const SymbolVocab& vocab,
                           const std::vector<bool>& scored) {
  if (examples.empty()) throw std::invalid_argument("empty batch");
  const std::size_t steps = examples[0].input.size(), n = examples.size(), r = vocab.size();
  if (scored.size() != steps) throw DimensionError("scored mask length differs from sequence length");
  SequenceBatch b;
  b.inputs = Tensor({steps, n, r});
  b.targets.assign(steps * n, 0);
  b.mask.assign(steps * n, 1.0);
  b.score.assign(steps * n, 0.0);
  for (std::size_t e = 0; e < n; ++e) {
    const TextExample& ex = examples[e];
    if (ex.input.size() != steps || ex.target.size() != steps)
      throw DimensionError("examples in a batch must share one length");
    for (std::size_t t = 0; t < steps; ++t) {
      b.inputs[(t * n + e) * r + static_cast<std::size_t>(vocab.index(ex.input[t]))] = 1.0;
      b.targets[t * n + e] = vocab.index(ex.target[t]);
      b.score[t * n + e] = scored[t] ? 1.0 : 0.0;
    }
  }
  return b;
}

// ---- MNIST ----

namespace {

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t off) {
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
         std::uint32_t{b[off + 3]};
}

}  // namespace

MnistSet load_mnist(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const auto img = read_file(images);
  const auto lab = read_file(labels);
  if (img.size() < 16 || be32(img, 0) != 2051)
    throw DataError(images.string() + ": not an IDX image file (expected magic 2051)");
  if (lab.size() < 8 || be32(lab, 0) != 2049)
    throw DataError(labels.string() + ": not an IDX label file (expected magic 2049)");
  const std::size_t count = be32(img, 4), rows = be32(img, 8), cols = be32(img, 12);
  if (be32(lab, 4) != count) throw DataError("image and label counts differ");
  if (img.size() != 16 + count * rows * cols || lab.size() != 8 + count)
    throw DataError("IDX payload size does not match its header");
  MnistSet set;
  set.rows = rows;
  set.cols = cols;
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<double> pix(rows * cols);
    for (std::size_t k = 0; k < pix.size(); ++k) pix[k] = img[16 + i * rows * cols + k] / 255.0;
    set.images.push_back(std::move(pix));
    if (lab[8 + i] > 9) throw DataError("label out of range at index " + std::to_string(i));
    set.labels.push_back(lab[8 + i]);
  }
  return set;
}

namespace {

// Overlap of source cell [i, i + 1) with output cell o when n source cells
// map onto m output cells, measured in source units.
std::vector<std::vector<std::pair<std::size_t, double>>> area_weights(std::size_t n, std::size_t m) {
  std::vector<std::vector<std::pair<std::size_t, double>>> w(m);
  const double scale = static_cast<double>(n) / static_cast<double>(m);
  for (std::size_t o = 0; o < m; ++o) {
    const double lo = static_cast<double>(o) * scale, hi = lo + scale;
    for (std::size_t i = static_cast<std::size_t>(lo); i < n && static_cast<double>(i) < hi; ++i) {
      const double overlap = std::min(hi, i + 1.0) - std::max(lo, static_cast<double>(i));
      if (overlap > 0) w[o].emplace_back(i, overlap / scale);
    }
  }
  return w;
}

}  // namespace

MnistSet downsample(const MnistSet& set, std::size_t out) {
  if (out == 0 || out > set.rows || out > set.cols)
    throw std::invalid_argument("downsample size must be in [1, " + std::to_string(set.rows) + "]");
  const auto wr = area_weights(set.rows, out), wc = area_weights(set.cols, out);
  MnistSet r;
  r.rows = r.cols = out;
  r.labels = set.labels;
  for (const auto& im : set.images) {
    std::vector<double> small(out * out, 0.0);
    for (std::size_t y = 0; y < out; ++y)
      for (std::size_t x = 0; x < out; ++x) {
        double acc = 0.0;
        for (auto [sy, ay] : wr[y])
          for (auto [sx, ax] : wc[x]) acc += ay * ax * im[sy * set.cols + sx];
        small[y * out + x] = acc;
      }
    r.images.push_back(std::move(small));
  }
  return r;
}

PixelOrder PixelOrder::identity(std::size_t pixels) {
  PixelOrder o;
  o.order_.resize(pixels);
  std::iota(o.order_.begin(), o.order_.end(), 0);
  return o;
}

PixelOrder PixelOrder::permuted(std::size_t pixels, std::uint64_t seed) {
  PixelOrder o = identity(pixels);
  Rng rng(seed);
  for (std::size_t i = pixels; i > 1; --i) std::swap(o.order_[i - 1], o.order_[rng.below(i)]);
  return o;
}

bool PixelOrder::is_bijection() const {
  std::vector<bool> seen(order_.size(), false);
  for (std::size_t i : order_) {
    if (i >= order_.size() || seen[i]) return false;
    seen[i] = true;
  }
  return true;
}

SequenceBatch mnist_batch(const MnistSet& set, const PixelOrder& order, const std::vector<std::size_t>& indices) {
  const std::size_t steps = set.rows * set.cols, n = indices.size();
  if (order.order().size() != steps) throw DimensionError("pixel order length differs from image size");
  SequenceBatch b;
  b.inputs = Tensor({steps, n, 1});
  b.targets.assign(steps * n, 0);
  b.mask.assign(steps * n, 0.0);
  for (std::size_t e = 0; e < n; ++e) {
    const auto& im = set.images.at(indices[e]);
    for (std::size_t t = 0; t < steps; ++t) b.inputs[t * n + e] = im[order.order()[t]];
    b.targets[(steps - 1) * n + e] = set.labels[indices[e]];
    b.mask[(steps - 1) * n + e] = 1.0;
  }
  return b;
}

SequenceBatch mnist_batch(const MnistSet& set, const PixelOrder& order, std::size_t first, std::size_t count) {
  std::vector<std::size_t> idx(count);
  std::iota(idx.begin(), idx.end(), first);
  return mnist_batch(set, order, idx);
}

// ---- character-level LM ----

CharCorpus::CharCorpus(std::string text) {
  if (text.empty()) throw DataError("empty corpus");
  lookup_.fill(-1);
  std::array<bool, 256> present{};
  for (char c : text) present[static_cast<unsigned char>(c)] = true;
  for (int b = 0; b < 256; ++b)
    if (present[b]) {
      lookup_[b] = static_cast<int>(symbols_.size());
      symbols_.push_back(static_cast<unsigned char>(b));
    }
  ids_.reserve(text.size());
  for (char c : text) ids_.push_back(lookup_[static_cast<unsigned char>(c)]);
}

CharCorpus CharCorpus::load(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return CharCorpus(std::string(bytes.begin(), bytes.end()));
}

int CharCorpus::id(unsigned char byte) const {
  if (lookup_[byte] < 0) throw std::invalid_argument("byte not in corpus vocabulary");
  return lookup_[byte];
}

LaneStream::LaneStream(const std::vector<int>* ids, std::size_t begin, std::size_t end, std::size_t lanes,
                       std::size_t length)
    : ids_(ids), begin_(begin), lanes_(lanes), length_(length) {
  if (lanes == 0 || length == 0 || end <= begin || end > ids->size())
    throw std::invalid_argument("invalid lane stream geometry");
  lane_len_ = (end - begin) / lanes;
  // the last target of a window is one token past its inputs
  windows_ = lane_len_ > 0 ? (lane_len_ - 1) / length : 0;
  if (windows_ == 0) throw DataError("corpus range too short for " + std::to_string(lanes) + " lanes");
}

SequenceBatch LaneStream::window(std::size_t w, std::size_t vocab) const {
  if (w >= windows_) throw std::out_of_range("window index");
  SequenceBatch b;
  b.inputs = Tensor({length_, lanes_, vocab});
  b.targets.assign(length_ * lanes_, 0);
  b.mask.assign(length_ * lanes_, 1.0);
  for (std::size_t lane = 0; lane < lanes_; ++lane) {
    const std::size_t base = begin_ + lane * lane_len_ + w * length_;
    for (std::size_t t = 0; t < length_; ++t) {
      b.inputs[(t * lanes_ + lane) * vocab + static_cast<std::size_t>((*ids_)[base + t])] = 1.0;
      b.targets[t * lanes_ + lane] = (*ids_)[base + t + 1];
    }
  }
  return b;
}

double bits_per_char(double mean_nll) { return mean_nll / std::log(2.0); }

}  // namespace tlstm
