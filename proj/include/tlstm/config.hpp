#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "tlstm/parameters.hpp"
#include "tlstm/rng.hpp"

namespace tlstm {

/// Cell family. `tlstm_no_mem` drops the memory-cell convolution; `slstm` is
/// the stacked LSTM baseline with one parameter block shared by all layers.
enum class Variant { trnn, tlstm_no_mem, tlstm, slstm };
enum class Norm { none, layer, channel };

std::string_view to_string(Variant v);
std::string_view to_string(Norm n);
/// Accepts "tRNN", "tLSTM_noM", "tLSTM", "sLSTM". Throws std::invalid_argument.
Variant parse_variant(std::string_view s);
/// Accepts "none", "LN", "CN".
Norm parse_norm(std::string_view s);

/// Depth L = ceil(2P / (K - K mod 2)) that makes the output at t+L-1 see
/// exactly the inputs up to t. Throws std::invalid_argument for K < 2 or P < 1.
std::size_t depth_from(std::size_t tensor_size, std::size_t kernel_size);

struct TlstmConfig {
  std::size_t dims = 2;         // D: grid axes + channel axis
  std::size_t tensor_size = 1;  // P on every grid axis
  std::size_t channels = 1;     // M
  std::size_t kernel = 3;       // K on every grid axis; K = 2 means no feedback
  Variant variant = Variant::tlstm;
  Norm norm = Norm::none;
  std::size_t input_size = 1;   // R
  std::size_t output_size = 1;  // S
  std::size_t layers = 1;       // sLSTM only
  double forget_bias = 1.0;

  /// L: derived from (P, K) for tensorised cells, the layer count for sLSTM.
  std::size_t depth() const;
  std::size_t grid_rank() const { return dims - 1; }
  std::vector<std::size_t> grid_shape() const;
  std::vector<std::size_t> kernel_shape() const;
  std::size_t locations() const;
  /// <K>: number of taps in one kernel window.
  std::size_t kernel_volume() const;
  /// Output channels of the cross-layer convolution: M, 4M or 4M + <K>.
  std::size_t hidden_out_channels() const;
  bool has_memory() const { return variant != Variant::trnn; }

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;

  friend bool operator==(const TlstmConfig&, const TlstmConfig&) = default;
};

/// Closed-form parameter count for a configuration.
std::size_t parameter_count(const TlstmConfig& cfg);

/// All learnable tensors with their final shapes, zero-filled. Names:
/// input.weight/bias, hidden.weight/bias (or lstm.weight/bias for sLSTM),
/// output.weight/bias, norm.gain/bias.
ParameterSet make_parameters(const TlstmConfig& cfg);

/// Glorot-uniform weights, zero biases except the forget-gate slice which is
/// set to cfg.forget_bias, unit normalisation gains.
void initialize(ParameterSet& params, const TlstmConfig& cfg, Rng& rng);

ParameterSet make_initialized(const TlstmConfig& cfg, std::uint64_t seed);

}  // namespace tlstm
