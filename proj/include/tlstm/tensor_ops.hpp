#pragma once

#include <cstddef>
#include <vector>

#include "tlstm/kernels.hpp"
#include "tlstm/tensor.hpp"

namespace tlstm {

enum class Activation { tanh, sigmoid };

/// Shared kernel of the cross-layer convolution.
/// weight: K_1 x ... x K_{D-1} x M_in x M_out, bias: M_out.
struct CrossLayerKernel {
  Tensor weight;
  Tensor bias;

  std::vector<std::size_t> kernel_extent() const;
  std::size_t in_channels() const;
  std::size_t out_channels() const;
  void validate() const;
};

/// Per-location dynamic kernels for the memory-cell convolution.
/// values: [batch...] x P_1 x ... x P_{D-1} x <K>, each last-axis slice on the
/// probability simplex.
struct DynamicKernelBank {
  Tensor values;
  std::vector<std::size_t> kernel;

  /// Throws ContractError if any slice is negative or does not sum to 1.
  void validate_simplex(double tolerance = 1e-9) const;
};

// Shape plans shared by the value-level operations below and the recording
// operations in autodiff.hpp.

struct CrossLayerPlan {
  kernels::CrossLayerDims dims;
  std::vector<std::ptrdiff_t> taps;
  Shape out_shape;
};
CrossLayerPlan plan_cross_layer(const Shape& hcat, const Shape& weight, const Shape& bias);

struct MemoryCellPlan {
  kernels::MemoryCellDims dims;
  std::vector<std::size_t> taps;
};
MemoryCellPlan plan_memory_cell(const Shape& c, const Shape& bank,
                                const std::vector<std::size_t>& kernel);

enum class NormScope { channel, layer };
kernels::GroupNormDims plan_norm(const Shape& z, const Shape& gain, const Shape& bias,
                                 NormScope scope);

struct AffineDims {
  std::size_t rows, in, out;
  Shape out_shape;
};
AffineDims plan_affine(const Shape& x, const Shape& weight, const Shape& bias);

// Value-level operations. All are pure; leading axes beyond those named are
// treated as batch.

/// x[..., R] * weight[R, M] + bias[M].
Tensor affine(const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor elementwise(Activation op, const Tensor& z);

/// Numerically stable softmax over the last axis.
Tensor softmax_last_axis(const Tensor& z);

/// hcat: [batch...] x (P_1+1) x ... x (P_{D-1}+1) x M_in  ->  [batch...] x P-grid x M_out.
/// Window of output location p covers concatenated positions
/// p + k - radius(K) for k = 0..K-1 (index 0 is the input corner); positions
/// outside the concatenated grid read as zero.
Tensor cross_layer_conv(const Tensor& hcat, const CrossLayerKernel& kernel);

/// Convolves every channel of c with the location-specific kernel from the
/// bank, padding by replicating boundary values.
Tensor memory_cell_conv(const Tensor& c, const DynamicKernelBank& bank);

/// Per-location normalisation over the channel axis; gain and bias have the
/// P-grid x M shape of one sample.
Tensor channel_norm(const Tensor& z, const Tensor& gain, const Tensor& bias);

/// One mean/std per sample over every non-batch entry.
Tensor layer_norm(const Tensor& z, const Tensor& gain, const Tensor& bias);

}  // namespace tlstm
