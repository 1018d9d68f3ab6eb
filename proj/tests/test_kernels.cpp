#include <gtest/gtest.h>

#include <omp.h>

#include "oracle.hpp"
#include "test_util.hpp"
#include "tlstm/kernels.hpp"
#include "tlstm/tensor_ops.hpp"

using namespace tlstm;
using testing_util::random_simplex;
using testing_util::random_tensor;

namespace {

std::vector<double> rand_vec(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1, 1);
  return v;
}

// Kernel results must agree exactly: both versions fix the summation order.
void expect_same(const std::vector<double>& a, const std::vector<double>& b) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) ASSERT_NEAR(a[i], b[i], 1e-12) << i;
}

kernels::ConvGeometry random_geometry(Rng& rng) {
  const std::size_t rank = 1 + rng.below(3);
  kernels::ConvGeometry g;
  for (std::size_t a = 0; a < rank; ++a) {
    g.grid.push_back(1 + rng.below(4));
    g.kernel.push_back(2 + rng.below(3));
  }
  return g;
}

}  // namespace

TEST(Geometry, RadiusTable) {
  EXPECT_EQ(kernels::kernel_radius(2), 1u);
  EXPECT_EQ(kernels::kernel_radius(3), 1u);
  EXPECT_EQ(kernels::kernel_radius(4), 2u);
  EXPECT_EQ(kernels::kernel_radius(5), 2u);
}

TEST(Geometry, CrossLayerTapsOneAxis) {
  kernels::ConvGeometry g{{3}, {3}};
  // location p reads p, p+1, p+2 of the 4-long concatenated axis
  const auto taps = kernels::cross_layer_taps(g);
  const std::vector<std::ptrdiff_t> expect{0, 1, 2, 1, 2, 3, 2, 3, -1};
  EXPECT_EQ(taps, expect);
}

TEST(Geometry, MemoryTapsClamp) {
  kernels::ConvGeometry g{{3}, {3}};
  const std::vector<std::size_t> expect{0, 0, 1, 0, 1, 2, 1, 2, 2};
  EXPECT_EQ(kernels::memory_cell_taps(g), expect);
}

class SerialParallel : public ::testing::Test {
 protected:
  void SetUp() override { omp_set_num_threads(4); }
  void TearDown() override { omp_set_num_threads(1); }
  Rng rng{77};
};

TEST_F(SerialParallel, Affine) {
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t rows = 1 + rng.below(40), in = 1 + rng.below(20), out = 1 + rng.below(20);
    auto x = rand_vec(rows * in, rng), w = rand_vec(in * out, rng), b = rand_vec(out, rng);
    auto dy = rand_vec(rows * out, rng);
    std::vector<double> y1(rows * out), y2(rows * out);
    kernels::serial::affine_forward(rows, in, out, x, w, b, y1);
    kernels::parallel::affine_forward(rows, in, out, x, w, b, y2);
    expect_same(y1, y2);
    std::vector<double> dx1(rows * in), dx2(rows * in), dw1(in * out), dw2(in * out), db1(out), db2(out);
    kernels::serial::affine_backward(rows, in, out, x, w, dy, dx1, dw1, db1);
    kernels::parallel::affine_backward(rows, in, out, x, w, dy, dx2, dw2, db2);
    expect_same(dx1, dx2);
    expect_same(dw1, dw2);
    expect_same(db1, db2);
  }
}

TEST_F(SerialParallel, CrossLayer) {
  for (int trial = 0; trial < 30; ++trial) {
    const auto g = random_geometry(rng);
    const auto taps = kernels::cross_layer_taps(g);
    std::size_t in_locs = 1;
    for (auto p : g.grid) in_locs *= p + 1;
    kernels::CrossLayerDims d{1 + rng.below(4), g.locations(), in_locs, g.taps(), 1 + rng.below(5),
                              1 + rng.below(6)};
    auto in = rand_vec(d.batch * in_locs * d.in_channels, rng);
    auto w = rand_vec(d.taps * d.in_channels * d.out_channels, rng), b = rand_vec(d.out_channels, rng);
    const std::size_t nout = d.batch * d.out_locations * d.out_channels;
    std::vector<double> o1(nout), o2(nout);
    kernels::serial::cross_layer_forward(d, taps, in, w, b, o1);
    kernels::parallel::cross_layer_forward(d, taps, in, w, b, o2);
    expect_same(o1, o2);
    auto dout = rand_vec(nout, rng);
    std::vector<double> di1(in.size()), di2(in.size()), dw1(w.size()), dw2(w.size()), db1(b.size()), db2(b.size());
    kernels::serial::cross_layer_backward(d, taps, in, w, dout, di1, dw1, db1);
    kernels::parallel::cross_layer_backward(d, taps, in, w, dout, di2, dw2, db2);
    expect_same(di1, di2);
    expect_same(dw1, dw2);
    expect_same(db1, db2);
  }
}

TEST_F(SerialParallel, MemoryCell) {
  for (int trial = 0; trial < 30; ++trial) {
    const auto g = random_geometry(rng);
    const auto taps = kernels::memory_cell_taps(g);
    kernels::MemoryCellDims d{1 + rng.below(4), g.locations(), g.taps(), 1 + rng.below(6)};
    auto c = rand_vec(d.batch * d.locations * d.channels, rng);
    auto bank = rand_vec(d.batch * d.locations * d.taps, rng);
    std::vector<double> o1(c.size()), o2(c.size());
    kernels::serial::memory_cell_forward(d, taps, c, bank, o1);
    kernels::parallel::memory_cell_forward(d, taps, c, bank, o2);
    expect_same(o1, o2);
    auto dout = rand_vec(c.size(), rng);
    std::vector<double> dc1(c.size()), dc2(c.size()), db1(bank.size()), db2(bank.size());
    kernels::serial::memory_cell_backward(d, taps, c, bank, dout, dc1, db1);
    kernels::parallel::memory_cell_backward(d, taps, c, bank, dout, dc2, db2);
    expect_same(dc1, dc2);
    expect_same(db1, db2);
  }
}

TEST_F(SerialParallel, GroupNorm) {
  for (int trial = 0; trial < 30; ++trial) {
    kernels::GroupNormDims d{1 + rng.below(5), 1 + rng.below(9), 1 + rng.below(8)};
    const std::size_t n = d.batch * d.groups * d.group_size, per = d.groups * d.group_size;
    auto z = rand_vec(n, rng), gain = rand_vec(per, rng), bias = rand_vec(per, rng), dout = rand_vec(n, rng);
    std::vector<double> o1(n), o2(n), nz1(n), nz2(n), is1(d.batch * d.groups), is2(d.batch * d.groups);
    kernels::serial::group_norm_forward(d, z, gain, bias, o1, nz1, is1);
    kernels::parallel::group_norm_forward(d, z, gain, bias, o2, nz2, is2);
    expect_same(o1, o2);
    expect_same(nz1, nz2);
    expect_same(is1, is2);
    std::vector<double> dz1(n), dz2(n), dg1(per), dg2(per), dbi1(per), dbi2(per);
    kernels::serial::group_norm_backward(d, nz1, is1, gain, dout, dz1, dg1, dbi1);
    kernels::parallel::group_norm_backward(d, nz2, is2, gain, dout, dz2, dg2, dbi2);
    expect_same(dz1, dz2);
    expect_same(dg1, dg2);
    expect_same(dbi1, dbi2);
  }
}

TEST_F(SerialParallel, ThreadCountDoesNotChangeResults) {
  Tensor hcat = random_tensor({3, 4, 4, 5}, rng);
  CrossLayerKernel k{random_tensor({3, 3, 5, 7}, rng), random_tensor({7}, rng)};
  omp_set_num_threads(1);
  Tensor one = cross_layer_conv(hcat, k);
  omp_set_num_threads(3);
  Tensor three = cross_layer_conv(hcat, k);
  EXPECT_EQ(one, three);
}

// Random-instance equivalence against the naive loops, across ranks 1-3,
// kernel sizes 2-5 and batch sizes 1-3.
TEST(OracleEquivalence, ThousandRandomInstances) {
  Rng rng(2024);
  double worst_cross = 0.0, worst_mem = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t rank = 1 + rng.below(3), n = 1 + rng.below(3);
    Shape grid, kern;
    for (std::size_t a = 0; a < rank; ++a) {
      grid.push_back(1 + rng.below(rank == 3 ? 3 : 5));
      kern.push_back(2 + rng.below(4));
    }
    const std::size_t mi = 1 + rng.below(4), mo = 1 + rng.below(4), m = 1 + rng.below(4);
    Shape cat{n}, wshape = kern, cshape{n}, bshape{n};
    for (auto p : grid) cat.push_back(p + 1), cshape.push_back(p), bshape.push_back(p);
    cat.push_back(mi);
    cshape.push_back(m);
    bshape.push_back(oracle::count(kern));
    wshape.push_back(mi);
    wshape.push_back(mo);
    Tensor hcat = random_tensor(cat, rng), w = random_tensor(wshape, rng), b = random_tensor({mo}, rng);
    Tensor got = cross_layer_conv(hcat, {w, b});
    Tensor c = random_tensor(cshape, rng);
    DynamicKernelBank bank{random_simplex(bshape, rng), kern};
    Tensor got_mem = memory_cell_conv(c, bank);
    const std::size_t cat_per = hcat.size() / n, out_per = got.size() / n, c_per = c.size() / n,
                      b_per = bank.values.size() / n;
    for (std::size_t e = 0; e < n; ++e) {
      Shape one_cat(cat.begin() + 1, cat.end()), one_c(cshape.begin() + 1, cshape.end());
      Tensor h1(one_cat, std::vector<double>(hcat.raw() + e * cat_per, hcat.raw() + (e + 1) * cat_per));
      Tensor ref = oracle::cross_layer_conv(h1, grid, w, b);
      for (std::size_t i = 0; i < out_per; ++i)
        worst_cross = std::max(worst_cross, std::abs(ref[i] - got[e * out_per + i]));
      Tensor c1(one_c, std::vector<double>(c.raw() + e * c_per, c.raw() + (e + 1) * c_per));
      Tensor b1({oracle::count(grid), oracle::count(kern)},
                std::vector<double>(bank.values.raw() + e * b_per, bank.values.raw() + (e + 1) * b_per));
      Tensor ref_mem = oracle::memory_cell_conv(c1, grid, b1, kern);
      for (std::size_t i = 0; i < c_per; ++i)
        worst_mem = std::max(worst_mem, std::abs(ref_mem[i] - got_mem[e * c_per + i]));
    }
  }
  EXPECT_LT(worst_cross, 1e-12);
  EXPECT_LT(worst_mem, 1e-12);
}
