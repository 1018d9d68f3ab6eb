// Serial reference kernels against their OpenMP counterparts.
//
// Shapes: "desk" is the 3D P=3 M=32 model at batch 15; "wide" is a 2D P=6
// M=128 model at batch 32.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "tlstm/kernels.hpp"

namespace k = tlstm::kernels;

namespace {

struct Shape {
  std::size_t dims, p, m, batch;
};

constexpr Shape kShapes[] = {{3, 3, 32, 15}, {2, 6, 128, 32}};
constexpr std::size_t kKernel = 3;
constexpr std::size_t kGates = 5;

std::vector<double> filled(std::size_t n, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(gen);
  return v;
}

k::ConvGeometry geometry(const Shape& s) {
  return {std::vector<std::size_t>(s.dims - 1, s.p), std::vector<std::size_t>(s.dims - 1, kKernel)};
}

std::size_t padded_locations(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d = 1; d < s.dims; ++d) n *= s.p + 1;
  return n;
}

struct CrossLayer {
  k::CrossLayerDims d;
  std::vector<std::ptrdiff_t> taps;
  std::vector<double> in, w, b, out, din, dw, db;

  explicit CrossLayer(const Shape& s) {
    const k::ConvGeometry g = geometry(s);
    taps = k::cross_layer_taps(g);
    d = {s.batch, g.locations(), padded_locations(s), g.taps(), s.m, kGates * s.m};
    in = filled(d.batch * d.in_locations * d.in_channels, 1);
    w = filled(d.taps * d.in_channels * d.out_channels, 2);
    b = filled(d.out_channels, 3);
    out.assign(d.batch * d.out_locations * d.out_channels, 0.0);
    din.assign(in.size(), 0.0);
    dw.assign(w.size(), 0.0);
    db.assign(b.size(), 0.0);
  }
};

struct MemoryCell {
  k::MemoryCellDims d;
  std::vector<std::size_t> taps;
  std::vector<double> c, bank, out, dc, dbank;

  explicit MemoryCell(const Shape& s) {
    const k::ConvGeometry g = geometry(s);
    taps = k::memory_cell_taps(g);
    d = {s.batch, g.locations(), g.taps(), s.m};
    c = filled(d.batch * d.locations * d.channels, 4);
    bank = filled(d.batch * d.locations * d.taps, 5);
    out.assign(c.size(), 0.0);
    dc.assign(c.size(), 0.0);
    dbank.assign(bank.size(), 0.0);
  }
};

struct GroupNorm {
  k::GroupNormDims d;
  std::vector<double> z, gain, bias, out, normalized, inv_std, dz, dgain, dbias;

  explicit GroupNorm(const Shape& s) {
    std::size_t locations = 1;
    for (std::size_t a = 1; a < s.dims; ++a) locations *= s.p;
    d = {s.batch, locations, s.m};
    z = filled(d.batch * d.groups * d.group_size, 6);
    gain.assign(d.groups * d.group_size, 1.0);
    bias.assign(gain.size(), 0.0);
    out.assign(z.size(), 0.0);
    normalized.assign(z.size(), 0.0);
    inv_std.assign(d.batch * d.groups, 0.0);
    dz.assign(z.size(), 0.0);
    dgain.assign(gain.size(), 0.0);
    dbias.assign(gain.size(), 0.0);
  }
};

template <bool Parallel>
void cross_layer_forward(benchmark::State& st) {
  CrossLayer x(kShapes[st.range(0)]);
  for (auto _ : st) {
    if constexpr (Parallel)
      k::parallel::cross_layer_forward(x.d, x.taps, x.in, x.w, x.b, x.out);
    else
      k::serial::cross_layer_forward(x.d, x.taps, x.in, x.w, x.b, x.out);
    benchmark::DoNotOptimize(x.out.data());
  }
}

template <bool Parallel>
void cross_layer_backward(benchmark::State& st) {
  CrossLayer x(kShapes[st.range(0)]);
  const std::vector<double> dout = filled(x.out.size(), 7);
  for (auto _ : st) {
    if constexpr (Parallel)
      k::parallel::cross_layer_backward(x.d, x.taps, x.in, x.w, dout, x.din, x.dw, x.db);
    else
      k::serial::cross_layer_backward(x.d, x.taps, x.in, x.w, dout, x.din, x.dw, x.db);
    benchmark::DoNotOptimize(x.dw.data());
  }
}

template <bool Parallel>
void memory_cell_forward(benchmark::State& st) {
  MemoryCell x(kShapes[st.range(0)]);
  for (auto _ : st) {
    if constexpr (Parallel)
      k::parallel::memory_cell_forward(x.d, x.taps, x.c, x.bank, x.out);
    else
      k::serial::memory_cell_forward(x.d, x.taps, x.c, x.bank, x.out);
    benchmark::DoNotOptimize(x.out.data());
  }
}

template <bool Parallel>
void memory_cell_backward(benchmark::State& st) {
  MemoryCell x(kShapes[st.range(0)]);
  const std::vector<double> dout = filled(x.out.size(), 8);
  for (auto _ : st) {
    if constexpr (Parallel)
      k::parallel::memory_cell_backward(x.d, x.taps, x.c, x.bank, dout, x.dc, x.dbank);
    else
      k::serial::memory_cell_backward(x.d, x.taps, x.c, x.bank, dout, x.dc, x.dbank);
    benchmark::DoNotOptimize(x.dc.data());
  }
}

template <bool Parallel>
void channel_norm_forward(benchmark::State& st) {
  GroupNorm x(kShapes[st.range(0)]);
  for (auto _ : st) {
    if constexpr (Parallel)
      k::parallel::group_norm_forward(x.d, x.z, x.gain, x.bias, x.out, x.normalized, x.inv_std);
    else
      k::serial::group_norm_forward(x.d, x.z, x.gain, x.bias, x.out, x.normalized, x.inv_std);
    benchmark::DoNotOptimize(x.out.data());
  }
}

template <bool Parallel>
void channel_norm_backward(benchmark::State& st) {
  GroupNorm x(kShapes[st.range(0)]);
  k::serial::group_norm_forward(x.d, x.z, x.gain, x.bias, x.out, x.normalized, x.inv_std);
  const std::vector<double> dout = filled(x.out.size(), 9);
  for (auto _ : st) {
    if constexpr (Parallel)
      k::parallel::group_norm_backward(x.d, x.normalized, x.inv_std, x.gain, dout, x.dz, x.dgain, x.dbias);
    else
      k::serial::group_norm_backward(x.d, x.normalized, x.inv_std, x.gain, dout, x.dz, x.dgain, x.dbias);
    benchmark::DoNotOptimize(x.dz.data());
  }
}

void shapes(benchmark::internal::Benchmark* b) {
  b->ArgName("shape")->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);
}

}  // namespace

BENCHMARK(cross_layer_forward<false>)->Name("cross_layer_forward/serial")->Apply(shapes);
BENCHMARK(cross_layer_forward<true>)->Name("cross_layer_forward/parallel")->Apply(shapes);
BENCHMARK(cross_layer_backward<false>)->Name("cross_layer_backward/serial")->Apply(shapes);
BENCHMARK(cross_layer_backward<true>)->Name("cross_layer_backward/parallel")->Apply(shapes);
BENCHMARK(memory_cell_forward<false>)->Name("memory_cell_forward/serial")->Apply(shapes);
BENCHMARK(memory_cell_forward<true>)->Name("memory_cell_forward/parallel")->Apply(shapes);
BENCHMARK(memory_cell_backward<false>)->Name("memory_cell_backward/serial")->Apply(shapes);
BENCHMARK(memory_cell_backward<true>)->Name("memory_cell_backward/parallel")->Apply(shapes);
BENCHMARK(channel_norm_forward<false>)->Name("channel_norm_forward/serial")->Apply(shapes);
BENCHMARK(channel_norm_forward<true>)->Name("channel_norm_forward/parallel")->Apply(shapes);
BENCHMARK(channel_norm_backward<false>)->Name("channel_norm_backward/serial")->Apply(shapes);
BENCHMARK(channel_norm_backward<true>)->Name("channel_norm_backward/parallel")->Apply(shapes);

BENCHMARK_MAIN();
