#include "tlstm/gradcheck.hpp"

namespace tlstm {

GradCheckCase make_grad_check_case(const TlstmConfig& cfg, std::size_t steps, std::uint64_t seed,
                                   std::size_t batch) {
  GradCheckCase c;
  c.params = make_initialized(cfg, seed);
  Rng rng(mix_seed(seed, 1));
  // Wider weights keep the smallest gradients well above the noise of a
  // 1e-5 central difference (about 1e-11 absolute).
  for (auto& [name, t] : c.params) {
    const bool is_weight = name.ends_with(".weight");
    for (double& v : t.data()) v = is_weight ? 4.0 * v : v + rng.uniform(-0.5, 0.5);
  }
  c.batch.inputs = Tensor({steps, batch, cfg.input_size});
  for (double& v : c.batch.inputs.data()) v = rng.uniform(-1.0, 1.0);
  for (std::size_t i = 0; i < steps * batch; ++i) {
    c.batch.targets.push_back(static_cast<int>(rng.below(cfg.output_size)));
    c.batch.mask.push_back(1.0);
  }
  return c;
}

double grad_check(const TlstmConfig& cfg, std::size_t steps, std::uint64_t seed, double step) {
  GradCheckCase c = make_grad_check_case(cfg, steps, seed);
  const CellState zero = zero_state(cfg, c.batch.batch());
  const Gradients analytic = sequence_gradients(c.params, cfg, c.batch, zero).grads;
  const Gradients numeric = ad::finite_diff(
      [&](const ParameterSet& p) { return run_sequence(p, cfg, c.batch, zero).loss; }, c.params, step);
  return ad::max_relative_error(analytic, numeric);
}

}  // namespace tlstm
