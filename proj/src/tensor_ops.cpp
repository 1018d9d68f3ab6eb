#include "tlstm/tensor_ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace tlstm {

namespace {

Shape tail(const Shape& s, std::size_t count) { return Shape(s.end() - static_cast<long>(count), s.end()); }

}  // namespace

std::vector<std::size_t> CrossLayerKernel::kernel_extent() const {
  return Shape(weight.shape().begin(), weight.shape().end() - 2);
}
std::size_t CrossLayerKernel::in_channels() const { return weight.dim(weight.rank() - 2); }
std::size_t CrossLayerKernel::out_channels() const { return weight.dim(weight.rank() - 1); }

void CrossLayerKernel::validate() const {
  if (weight.rank() < 3)
    throw DimensionError("cross-layer kernel weight needs rank >= 3, got " + to_string(weight.shape()));
  if (bias.shape() != Shape{out_channels()})
    throw DimensionError("cross-layer bias " + to_string(bias.shape()) + " does not match weight " +
                         to_string(weight.shape()));
}

void DynamicKernelBank::validate_simplex(double tolerance) const {
  const std::size_t k = values.dim(values.rank() - 1);
  for (std::size_t s = 0; s < values.size(); s += k) {
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      if (values[s + i] < 0.0) throw ContractError("dynamic kernel bank has a negative entry");
      sum += values[s + i];
    }
    if (std::abs(sum - 1.0) > tolerance)
      throw ContractError("dynamic kernel slice sums to " + std::to_string(sum) + ", expected 1");
  }
}

CrossLayerPlan plan_cross_layer(const Shape& hcat, const Shape& weight, const Shape& bias) {
  if (weight.size() < 3)
    throw DimensionError("cross-layer kernel weight needs rank >= 3, got " + to_string(weight));
  const std::size_t grid_rank = weight.size() - 2;
  const std::size_t mi = weight[grid_rank], mo = weight[grid_rank + 1];
  if (bias != Shape{mo})
    throw DimensionError("cross-layer bias " + to_string(bias) + " vs weight " + to_string(weight));
  if (hcat.size() < grid_rank + 1 || hcat.back() != mi)
    throw DimensionError("cross-layer input " + to_string(hcat) + " does not match kernel " +
                         to_string(weight));
  kernels::ConvGeometry g;
  const std::size_t lead = hcat.size() - grid_rank - 1;
  for (std::size_t a = 0; a < grid_rank; ++a) {
    if (hcat[lead + a] < 2)
      throw DimensionError("concatenated grid extents must be >= 2, got " + to_string(hcat));
    g.grid.push_back(hcat[lead + a] - 1);
    g.kernel.push_back(weight[a]);
  }
  std::size_t batch = 1;
  for (std::size_t a = 0; a < lead; ++a) batch *= hcat[a];
  CrossLayerPlan plan;
  plan.dims = {batch, g.locations(), volume(tail(Shape(hcat.begin(), hcat.end() - 1), grid_rank)),
               g.taps(), mi, mo};
  plan.taps = kernels::cross_layer_taps(g);
  plan.out_shape = Shape(hcat.begin(), hcat.begin() + static_cast<long>(lead));
  for (auto p : g.grid) plan.out_shape.push_back(p);
  plan.out_shape.push_back(mo);
  return plan;
}

MemoryCellPlan plan_memory_cell(const Shape& c, const Shape& bank, const std::vector<std::size_t>& kernel) {
  const std::size_t grid_rank = kernel.size();
  if (grid_rank == 0 || c.size() < grid_rank + 1)
    throw DimensionError("memory cell " + to_string(c) + " incompatible with kernel rank " +
                         std::to_string(grid_rank));
  kernels::ConvGeometry g;
  g.kernel = kernel;
  const std::size_t lead = c.size() - grid_rank - 1;
  g.grid.assign(c.begin() + static_cast<long>(lead), c.end() - 1);
  Shape expected(c.begin(), c.end() - 1);
  expected.push_back(g.taps());
  if (bank != expected)
    throw DimensionError("kernel bank " + to_string(bank) + " does not match memory cell " +
                         to_string(c) + " (expected " + to_string(expected) + ")");
  std::size_t batch = 1;
  for (std::size_t a = 0; a < lead; ++a) batch *= c[a];
  return {{batch, g.locations(), g.taps(), c.back()}, kernels::memory_cell_taps(g)};
}

kernels::GroupNormDims plan_norm(const Shape& z, const Shape& gain, const Shape& bias, NormScope scope) {
  if (gain != bias)
    throw DimensionError("norm gain " + to_string(gain) + " and bias " + to_string(bias) + " differ");
  if (gain.size() > z.size() || !std::equal(gain.begin(), gain.end(), z.end() - static_cast<long>(gain.size())))
    throw DimensionError("norm gain " + to_string(gain) + " is not a suffix of input " + to_string(z));
  const std::size_t per_sample = volume(gain);
  const std::size_t batch = volume(z) / per_sample;
  if (scope == NormScope::channel) {
    const std::size_t m = z.back();
    return {batch, per_sample / m, m};
  }
  return {batch, 1, per_sample};
}

AffineDims plan_affine(const Shape& x, const Shape& weight, const Shape& bias) {
  if (weight.size() != 2 || x.back() != weight[0] || bias != Shape{weight[1]})
    throw DimensionError("affine: input " + to_string(x) + " incompatible with weight " +
                         to_string(weight) + " and bias " + to_string(bias));
  Shape out = x;
  out.back() = weight[1];
  return {volume(x) / x.back(), weight[0], weight[1], out};
}

Tensor affine(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  const auto d = plan_affine(x.shape(), weight.shape(), bias.shape());
  Tensor y(d.out_shape);
  kernels::parallel::affine_forward(d.rows, d.in, d.out, x.data(), weight.data(), bias.data(), y.data());
  return y;
}

Tensor elementwise(Activation op, const Tensor& z) {
  Tensor y(z.shape());
  if (op == Activation::tanh)
    for (std::size_t i = 0; i < z.size(); ++i) y[i] = std::tanh(z[i]);
  else
    for (std::size_t i = 0; i < z.size(); ++i) y[i] = 1.0 / (1.0 + std::exp(-z[i]));
  return y;
}

Tensor softmax_last_axis(const Tensor& z) {
  Tensor y(z.shape());
  const std::size_t k = z.shape().back();
  for (std::size_t s = 0; s < z.size(); s += k) {
    double mx = z[s];
    for (std::size_t i = 1; i < k; ++i) mx = std::max(mx, z[s + i]);
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) sum += (y[s + i] = std::exp(z[s + i] - mx));
    for (std::size_t i = 0; i < k; ++i) y[s + i] /= sum;
  }
  return y;
}

Tensor cross_layer_conv(const Tensor& hcat, const CrossLayerKernel& kernel) {
  kernel.validate();
  const auto plan = plan_cross_layer(hcat.shape(), kernel.weight.shape(), kernel.bias.shape());
  Tensor out(plan.out_shape);
  kernels::parallel::cross_layer_forward(plan.dims, plan.taps, hcat.data(), kernel.weight.data(),
                                         kernel.bias.data(), out.data());
  return out;
}

Tensor memory_cell_conv(const Tensor& c, const DynamicKernelBank& bank) {
  const auto plan = plan_memory_cell(c.shape(), bank.values.shape(), bank.kernel);
  Tensor out(c.shape());
  kernels::parallel::memory_cell_forward(plan.dims, plan.taps, c.data(), bank.values.data(), out.data());
  return out;
}

namespace {

Tensor normalise(const Tensor& z, const Tensor& gain, const Tensor& bias, NormScope scope) {
  const auto d = plan_norm(z.shape(), gain.shape(), bias.shape(), scope);
  Tensor out(z.shape()), normalized(z.shape());
  std::vector<double> inv_std(d.batch * d.groups);
  kernels::parallel::group_norm_forward(d, z.data(), gain.data(), bias.data(), out.data(),
                                        normalized.data(), inv_std);
  return out;
}

}  // namespace

Tensor channel_norm(const Tensor& z, const Tensor& gain, const Tensor& bias) {
  return normalise(z, gain, bias, NormScope::channel);
}

Tensor layer_norm(const Tensor& z, const Tensor& gain, const Tensor& bias) {
  return normalise(z, gain, bias, NormScope::layer);
}

}  // namespace tlstm
