#include "tlstm/adam.hpp"

#include <cmath>

#include "tlstm/tensor.hpp"

namespace tlstm {

void AdamConfig::validate() const {
  if (!(lr >= 0.0)) throw std::invalid_argument("lr: must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw std::invalid_argument("beta1: must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw std::invalid_argument("beta2: must be in [0, 1)");
  if (!(eps > 0.0)) throw std::invalid_argument("eps: must be > 0");
  if (!(clip_norm >= 0.0)) throw std::invalid_argument("clip_norm: must be >= 0");
}

NonFiniteGradient::NonFiniteGradient(std::string parameter, std::size_t index)
    : std::runtime_error("non-finite gradient in '" + parameter + "' at flat index " + std::to_string(index)),
      parameter_(std::move(parameter)),
      index_(index) {}

AdamState make_adam(const ParameterSet& params, const AdamConfig& config) {
  config.validate();
  return {config, params.zeros_like(), params.zeros_like(), 0};
}

void adam_step(ParameterSet& params, const Gradients& grads, AdamState& state) {
  if (grads.size() != params.size()) throw DimensionError("gradient set does not match parameters");
  double sq = 0.0;
  for (const auto& [name, g] : grads) {
    require_same_shape(params[name], g, "adam_step");
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!std::isfinite(g[i])) throw NonFiniteGradient(name, i);
      sq += g[i] * g[i];
    }
  }
  const AdamConfig& c = state.config;
  double factor = 1.0;
  if (c.clip_norm > 0.0 && std::sqrt(sq) > c.clip_norm) factor = c.clip_norm / std::sqrt(sq);

  ++state.step;
  const double k = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, k);
  const double bc2 = 1.0 - std::pow(c.beta2, k);
  for (auto& [name, p] : params) {
    const Tensor& g = grads[name];
    Tensor& m = state.m[name];
    Tensor& v = state.v[name];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i] * factor;
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * gi;
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi;
      p[i] -= c.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + c.eps);
    }
  }
}

}  // namespace tlstm
