#pragma once

// Deterministic data for the addition, memorization, sequential MNIST and
// character-level language modelling tasks.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "tlstm/rng.hpp"
#include "tlstm/sequence.hpp"

namespace tlstm {

/// Ordered symbol set. Index 0 is always the pad/delimiter '-'.
class SymbolVocab {
 public:
  explicit SymbolVocab(std::string symbols);

  std::size_t size() const { return symbols_.size(); }
  int index(char symbol) const;
  char symbol(int index) const;
  std::vector<int> encode(std::string_view text) const;
  std::string decode(const std::vector<int>& indices) const;
  const std::string& symbols() const { return symbols_; }

  static constexpr char pad = '-';

 private:
  std::string symbols_;
  std::array<int, 256> lookup_{};
};

/// {'-', '0'..'9'}
SymbolVocab addition_vocab();
/// '-' followed by vocab_size - 1 payload symbols (at most 64).
SymbolVocab memorization_vocab(std::size_t vocab_size);

struct TextExample {
  std::string input;
  std::string target;
};

/// Operands are written zero-padded to num_digits; the sum is right-aligned
/// in a field of num_digits + 1 positions. Length 3 * num_digits + 4.
TextExample addition_example(std::size_t num_digits, std::uint64_t a, std::uint64_t b);
TextExample sample_addition(std::size_t num_digits, Rng& rng);
/// Positions scored for accuracy: the sum field.
std::vector<bool> addition_scored(std::size_t num_digits);

/// "-" + payload + "-" * (n + 1) against "-" * (n + 1) + payload + "-".
TextExample memorization_example(std::string_view payload);
TextExample sample_memorization(std::size_t num_symbols, const SymbolVocab& vocab, Rng& rng);
std::vector<bool> memorization_scored(std::size_t num_symbols);

/// One-hot time-major batch. The loss covers every position; `scored`
/// selects the accuracy positions.
SequenceBatch encode_batch(const std::vector<TextExample>& examples, const SymbolVocab& vocab,
                           const std::vector<bool>& scored);

// ---- MNIST ----

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MnistSet {
  std::size_t rows = 0, cols = 0;
  std::vector<std::vector<double>> images;  // intensities in [0, 1]
  std::vector<int> labels;
};

/// Reads an IDX image file (magic 2051) and label file (magic 2049).
MnistSet load_mnist(const std::filesystem::path& images, const std::filesystem::path& labels);
/// Area-averages every image down to out x out; cells straddling a boundary
/// contribute in proportion to their overlap.
MnistSet downsample(const MnistSet& set, std::size_t out);

/// Permutation of pixel indices; identity for scanline order.
class PixelOrder {
 public:
  static PixelOrder identity(std::size_t pixels);
  static PixelOrder permuted(std::size_t pixels, std::uint64_t seed);
  static constexpr std::uint64_t kPermutationSeed = 0x504d4e495354ULL;

  const std::vector<std::size_t>& order() const { return order_; }
  bool is_bijection() const;

 private:
  std::vector<std::size_t> order_;
};

/// Images [first, first + count) as a T = pixels batch, label at the last step.
SequenceBatch mnist_batch(const MnistSet& set, const PixelOrder& order, std::size_t first, std::size_t count);
SequenceBatch mnist_batch(const MnistSet& set, const PixelOrder& order, const std::vector<std::size_t>& indices);

// ---- character-level LM ----

class CharCorpus {
 public:
  /// Byte vocabulary of the text, sorted. Throws DataError for empty text.
  explicit CharCorpus(std::string text);
  static CharCorpus load(const std::filesystem::path& path);

  std::size_t vocab_size() const { return symbols_.size(); }
  const std::vector<int>& ids() const { return ids_; }
  std::size_t size() const { return ids_.size(); }
  int id(unsigned char byte) const;

 private:
  std::vector<unsigned char> symbols_;
  std::array<int, 256> lookup_{};
  std::vector<int> ids_;
};

/// Splits a token range into `lanes` contiguous streams consumed `length`
/// tokens at a time; lane state carries over between windows.
class LaneStream {
 public:
  LaneStream(const std::vector<int>* ids, std::size_t begin, std::size_t end, std::size_t lanes,
             std::size_t length);

  /// Windows available per pass.
  std::size_t windows() const { return windows_; }
  /// Window w of every lane: input token i predicts token i + 1.
  SequenceBatch window(std::size_t w, std::size_t vocab) const;

 private:
  const std::vector<int>* ids_;
  std::size_t begin_, lanes_, length_, lane_len_, windows_;
};

double bits_per_char(double mean_nll);

}  // namespace tlstm
