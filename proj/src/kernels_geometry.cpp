#include <algorithm>
#include <functional>
#include <numeric>
#include <stdexcept>

#include <omp.h>

#include "tlstm/kernels.hpp"

namespace tlstm::kernels {

std::size_t ConvGeometry::locations() const {
  return std::accumulate(grid.begin(), grid.end(), std::size_t{1}, std::multiplies<>());
}

std::size_t ConvGeometry::taps() const {
  return std::accumulate(kernel.begin(), kernel.end(), std::size_t{1}, std::multiplies<>());
}

namespace {

// Walks every (output location, tap) pair in row-major order and hands the
// per-axis input coordinate (output index + tap index - radius, relative to
// an input grid whose index 0 sits one step before output index 0 when
// `concat_offset` is 1) to `emit`.
template <typename Emit>
void for_each_tap(const ConvGeometry& g, std::ptrdiff_t concat_offset, Emit&& emit) {
  if (g.grid.size() != g.kernel.size() || g.grid.empty())
    throw std::invalid_argument("convolution grid and kernel ranks differ");
  for (auto k : g.kernel)
    if (k == 0) throw std::invalid_argument("kernel extents must be >= 1");
  const std::size_t rank = g.grid.size();
  const std::size_t locations = g.locations();
  const std::size_t taps = g.taps();
  std::vector<std::size_t> o_idx(rank), t_idx(rank);
  std::vector<std::ptrdiff_t> coord(rank);
  for (std::size_t o = 0; o < locations; ++o) {
    std::size_t rem = o;
    for (std::size_t a = rank; a-- > 0;) {
      o_idx[a] = rem % g.grid[a];
      rem /= g.grid[a];
    }
    for (std::size_t t = 0; t < taps; ++t) {
      rem = t;
      for (std::size_t a = rank; a-- > 0;) {
        t_idx[a] = rem % g.kernel[a];
        rem /= g.kernel[a];
      }
      for (std::size_t a = 0; a < rank; ++a)
        coord[a] = static_cast<std::ptrdiff_t>(o_idx[a] + t_idx[a]) + concat_offset -
                   static_cast<std::ptrdiff_t>(kernel_radius(g.kernel[a]));
      emit(o, t, coord);
    }
  }
}

}  // namespace

std::vector<std::ptrdiff_t> cross_layer_taps(const ConvGeometry& g) {
  std::vector<std::ptrdiff_t> table(g.locations() * g.taps());
  const std::size_t rank = g.grid.size();
  for_each_tap(g, 1, [&](std::size_t o, std::size_t t, const std::vector<std::ptrdiff_t>& c) {
    std::ptrdiff_t lin = 0;
    for (std::size_t a = 0; a < rank; ++a) {
      const auto extent = static_cast<std::ptrdiff_t>(g.grid[a] + 1);
      if (c[a] < 0 || c[a] >= extent) {
        lin = -1;
        break;
      }
      lin = lin * extent + c[a];
    }
    table[o * g.taps() + t] = lin;
  });
  return table;
}

std::vector<std::size_t> memory_cell_taps(const ConvGeometry& g) {
  std::vector<std::size_t> table(g.locations() * g.taps());
  const std::size_t rank = g.grid.size();
  for_each_tap(g, 0, [&](std::size_t o, std::size_t t, const std::vector<std::ptrdiff_t>& c) {
    std::size_t lin = 0;
    for (std::size_t a = 0; a < rank; ++a) {
      const auto extent = static_cast<std::ptrdiff_t>(g.grid[a]);
      lin = lin * g.grid[a] + static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(c[a], 0, extent - 1));
    }
    table[o * g.taps() + t] = lin;
  });
  return table;
}

int thread_count() { return omp_get_max_threads(); }

}  // namespace tlstm::kernels
