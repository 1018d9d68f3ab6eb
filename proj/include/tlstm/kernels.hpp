#pragma once

// Raw numeric kernels behind the tensor operations and their adjoints.
//
// Two implementations share every signature: `serial` is the plain loop
// version kept as the reference for testing, `parallel` is the blocked
// OpenMP version used by the library. Every parallel kernel partitions work
// so that each output element is written by exactly one thread in a fixed
// summation order, which keeps results independent of the thread count.
//
// Backward kernels accumulate into their gradient outputs (+=).

#include <cstddef>
#include <span>
#include <vector>

namespace tlstm::kernels {

/// Number of window positions on the input side of the centre for kernel
/// size k: (k - k mod 2) / 2. The centre is ceiled for even k.
constexpr std::size_t kernel_radius(std::size_t k) { return (k - k % 2) / 2; }

/// Grid of output locations and the per-axis kernel extents.
struct ConvGeometry {
  std::vector<std::size_t> grid;    // P_1 .. P_{D-1}
  std::vector<std::size_t> kernel;  // K_1 .. K_{D-1}

  std::size_t locations() const;
  std::size_t taps() const;
};

/// For every output location o and tap t, the linear index into the
/// concatenated grid (extent P_d + 1 per axis, index 0 being the input
/// corner) read by the cross-layer convolution, or -1 where zero padding
/// applies. Layout [o * taps + t].
std::vector<std::ptrdiff_t> cross_layer_taps(const ConvGeometry& g);

/// Same for the memory-cell convolution: reads come from the P-grid itself
/// and out-of-range positions are clamped to the boundary (replication).
std::vector<std::size_t> memory_cell_taps(const ConvGeometry& g);

struct CrossLayerDims {
  std::size_t batch;
  std::size_t out_locations;
  std::size_t in_locations;
  std::size_t taps;
  std::size_t in_channels;
  std::size_t out_channels;
};

struct MemoryCellDims {
  std::size_t batch;
  std::size_t locations;
  std::size_t taps;
  std::size_t channels;
};

/// Normalisation over contiguous groups: `batch` samples, each holding
/// `groups` groups of `group_size` values. Gain and bias cover one sample
/// (groups * group_size values) and broadcast over the batch.
struct GroupNormDims {
  std::size_t batch;
  std::size_t groups;
  std::size_t group_size;
};

inline constexpr double kNormEpsilon = 1e-5;

#define TLSTM_KERNEL_DECLS                                                                    \
  void affine_forward(std::size_t rows, std::size_t in, std::size_t out,                      \
                      std::span<const double> x, std::span<const double> w,                   \
                      std::span<const double> b, std::span<double> y);                        \
  void affine_backward(std::size_t rows, std::size_t in, std::size_t out,                     \
                       std::span<const double> x, std::span<const double> w,                  \
                       std::span<const double> dy, std::span<double> dx,                      \
                       std::span<double> dw, std::span<double> db);                           \
  void cross_layer_forward(const CrossLayerDims& d, std::span<const std::ptrdiff_t> taps,     \
                           std::span<const double> in, std::span<const double> w,             \
                           std::span<const double> b, std::span<double> out);                 \
  void cross_layer_backward(const CrossLayerDims& d, std::span<const std::ptrdiff_t> taps,    \
                            std::span<const double> in, std::span<const double> w,            \
                            std::span<const double> dout, std::span<double> din,              \
                            std::span<double> dw, std::span<double> db);                      \
  void memory_cell_forward(const MemoryCellDims& d, std::span<const std::size_t> taps,        \
                           std::span<const double> c, std::span<const double> bank,           \
                           std::span<double> out);                                            \
  void memory_cell_backward(const MemoryCellDims& d, std::span<const std::size_t> taps,       \
                            std::span<const double> c, std::span<const double> bank,          \
                            std::span<const double> dout, std::span<double> dc,               \
                            std::span<double> dbank);                                         \
  void group_norm_forward(const GroupNormDims& d, std::span<const double> z,                  \
                          std::span<const double> gain, std::span<const double> bias,         \
                          std::span<double> out, std::span<double> normalized,                \
                          std::span<double> inv_std);                                         \
  void group_norm_backward(const GroupNormDims& d, std::span<const double> normalized,        \
                           std::span<const double> inv_std, std::span<const double> gain,     \
                           std::span<const double> dout, std::span<double> dz,                \
                           std::span<double> dgain, std::span<double> dbias);

namespace serial {
TLSTM_KERNEL_DECLS
}  // namespace serial

namespace parallel {
TLSTM_KERNEL_DECLS
}  // namespace parallel

#undef TLSTM_KERNEL_DECLS

/// Threads the parallel kernels will use (OpenMP's current setting).
int thread_count();

}  // namespace tlstm::kernels
