#include "tlstm/config.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace tlstm {

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::trnn: return "tRNN";
    case Variant::tlstm_no_mem: return "tLSTM_noM";
    case Variant::tlstm: return "tLSTM";
    case Variant::slstm: return "sLSTM";
  }
  return "?";
}

std::string_view to_string(Norm n) {
  switch (n) {
    case Norm::none: return "none";
    case Norm::layer: return "LN";
    case Norm::channel: return "CN";
  }
  return "?";
}

Variant parse_variant(std::string_view s) {
  for (Variant v : {Variant::trnn, Variant::tlstm_no_mem, Variant::tlstm, Variant::slstm})
    if (to_string(v) == s) return v;
  throw std::invalid_argument("unknown variant '" + std::string(s) +
                              "' (expected tRNN, tLSTM_noM, tLSTM or sLSTM)");
}

Norm parse_norm(std::string_view s) {
  for (Norm n : {Norm::none, Norm::layer, Norm::channel})
    if (to_string(n) == s) return n;
  throw std::invalid_argument("unknown norm '" + std::string(s) + "' (expected none, LN or CN)");
}

std::size_t depth_from(std::size_t tensor_size, std::size_t kernel_size) {
  if (kernel_size < 2)
    throw std::invalid_argument("kernel size " + std::to_string(kernel_size) +
                                " has no reach below the centre; need K >= 2");
  if (tensor_size < 1) throw std::invalid_argument("tensor size must be >= 1");
  const std::size_t reach = kernel_size - kernel_size % 2;
  return (2 * tensor_size + reach - 1) / reach;
}

std::size_t TlstmConfig::depth() const {
  return variant == Variant::slstm ? layers : depth_from(tensor_size, kernel);
}

std::vector<std::size_t> TlstmConfig::grid_shape() const {
  return std::vector<std::size_t>(grid_rank(), tensor_size);
}

std::vector<std::size_t> TlstmConfig::kernel_shape() const {
  return std::vector<std::size_t>(grid_rank(), kernel);
}

std::size_t TlstmConfig::locations() const {
  std::size_t n = 1;
  for (std::size_t a = 0; a < grid_rank(); ++a) n *= tensor_size;
  return n;
}

std::size_t TlstmConfig::kernel_volume() const {
  std::size_t n = 1;
  for (std::size_t a = 0; a < grid_rank(); ++a) n *= kernel;
  return n;
}

std::size_t TlstmConfig::hidden_out_channels() const {
  switch (variant) {
    case Variant::trnn: return channels;
    case Variant::tlstm_no_mem: return 4 * channels;
    case Variant::tlstm: return 4 * channels + kernel_volume();
    case Variant::slstm: return 4 * channels;
  }
  return 0;
}

void TlstmConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument(field + ": " + why);
  };
  if (input_size < 1) fail("input_size", "must be >= 1");
  if (output_size < 1) fail("output_size", "must be >= 1");
  if (channels < 1) fail("M", "channel size must be >= 1");
  if (variant == Variant::slstm) {
    if (layers < 1) fail("layers", "sLSTM needs at least one layer");
    if (norm != Norm::none) fail("norm", "sLSTM baseline supports norm 'none' only");
    return;
  }
  if (dims < 2) fail("D", "tensor dimensionality must be >= 2");
  if (tensor_size < 1) fail("P", "tensor size must be >= 1");
  if (kernel < 2) fail("K", "kernel size must be >= 2");
}

std::size_t parameter_count(const TlstmConfig& cfg) {
  const std::size_t m = cfg.channels;
  std::size_t n = cfg.input_size * m + m + m * cfg.output_size + cfg.output_size;
  if (cfg.variant == Variant::slstm) return n + 2 * m * 4 * m + 4 * m;
  const std::size_t mo = cfg.hidden_out_channels();
  n += cfg.kernel_volume() * m * mo + mo;
  if (cfg.norm != Norm::none) n += 2 * cfg.locations() * m;
  return n;
}

ParameterSet make_parameters(const TlstmConfig& cfg) {
  cfg.validate();
  const std::size_t m = cfg.channels;
  ParameterSet p;
  p.add("input.weight", Tensor({cfg.input_size, m}));
  p.add("input.bias", Tensor({m}));
  if (cfg.variant == Variant::slstm) {
    p.add("lstm.weight", Tensor({2 * m, 4 * m}));
    p.add("lstm.bias", Tensor({4 * m}));
  } else {
    Shape w = cfg.kernel_shape();
    w.push_back(m);
    w.push_back(cfg.hidden_out_channels());
    p.add("hidden.weight", Tensor(w));
    p.add("hidden.bias", Tensor({cfg.hidden_out_channels()}));
  }
  p.add("output.weight", Tensor({m, cfg.output_size}));
  p.add("output.bias", Tensor({cfg.output_size}));
  if (cfg.variant != Variant::slstm && cfg.norm != Norm::none) {
    Shape g = cfg.grid_shape();
    g.push_back(m);
    p.add("norm.gain", Tensor(g, 1.0));
    p.add("norm.bias", Tensor(g));
  }
  return p;
}

namespace {

void glorot(Tensor& w, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : w.data()) v = rng.uniform(-limit, limit);
}

}  // namespace

void initialize(ParameterSet& params, const TlstmConfig& cfg, Rng& rng) {
  const std::size_t m = cfg.channels;
  glorot(params["input.weight"], cfg.input_size, m, rng);
  params["input.bias"].fill(0.0);
  Tensor* bias = nullptr;
  if (cfg.variant == Variant::slstm) {
    glorot(params["lstm.weight"], 2 * m, 4 * m, rng);
    bias = &params["lstm.bias"];
  } else {
    const std::size_t taps = cfg.kernel_volume();
    glorot(params["hidden.weight"], taps * m, taps * cfg.hidden_out_channels(), rng);
    bias = &params["hidden.bias"];
  }
  bias->fill(0.0);
  if (cfg.has_memory())
    for (std::size_t i = 2 * m; i < 3 * m; ++i) (*bias)[i] = cfg.forget_bias;
  glorot(params["output.weight"], m, cfg.output_size, rng);
  params["output.bias"].fill(0.0);
  if (params.contains("norm.gain")) {
    params["norm.gain"].fill(1.0);
    params["norm.bias"].fill(0.0);
  }
}

ParameterSet make_initialized(const TlstmConfig& cfg, std::uint64_t seed) {
  ParameterSet p = make_parameters(cfg);
  Rng rng(seed);
  initialize(p, cfg, rng);
  return p;
}

}  // namespace tlstm
