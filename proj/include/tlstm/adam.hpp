#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "tlstm/parameters.hpp"

namespace tlstm {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 0.0;  // global gradient-norm clip; 0 disables

  void validate() const;
  friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

struct AdamState {
  AdamConfig config;
  ParameterSet m;
  ParameterSet v;
  std::uint64_t step = 0;

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// Thrown before any update when a gradient entry is NaN or infinite.
class NonFiniteGradient : public std::runtime_error {
 public:
  NonFiniteGradient(std::string parameter, std::size_t index);
  const std::string& parameter() const { return parameter_; }
  std::size_t index() const { return index_; }

 private:
  std::string parameter_;
  std::size_t index_;
};

AdamState make_adam(const ParameterSet& params, const AdamConfig& config);

/// Bias-corrected Adam update in place. Parameters are untouched if any
/// gradient is non-finite.
void adam_step(ParameterSet& params, const Gradients& grads, AdamState& state);

}  // namespace tlstm
