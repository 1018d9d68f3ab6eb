#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "test_util.hpp"
#include "tlstm/autodiff.hpp"

using namespace tlstm;
using testing_util::random_simplex;
using testing_util::random_tensor;

namespace {

using LossFn = std::function<ad::Var(ad::Tape&, const ad::Bound&)>;

double value_of(const ParameterSet& p, const LossFn& fn) {
  ad::Tape t;
  ad::Bound b(t, p, false);
  return t.value(fn(t, b))[0];
}

double op_error(const ParameterSet& p, const LossFn& fn) {
  const Gradients a = ad::backward(p, fn);
  const Gradients n = ad::finite_diff([&](const ParameterSet& q) { return value_of(q, fn); }, p, 1e-5);
  return ad::max_relative_error(a, n);
}

// Scalar probe: sum(out * w) with a fixed random w, so every output entry
// gets a distinct weight.
ad::Var probe(ad::Tape& t, ad::Var out, std::uint64_t seed) {
  Rng rng(seed);
  return ad::sum(t, ad::mul(t, out, t.constant(random_tensor(t.value(out).shape(), rng))));
}

}  // namespace

TEST(Backward, SumGivesOnes) {
  ParameterSet p;
  p.add("theta", Tensor({2, 3}, {1, -2, 3, 0.5, 7, -1}));
  Gradients g = ad::backward(p, [](ad::Tape& t, const ad::Bound& b) { return ad::sum(t, b["theta"]); });
  for (double v : g["theta"].data()) EXPECT_EQ(v, 1.0);
}

TEST(Backward, SumOfSquaresGivesTwiceTheta) {
  ParameterSet p;
  p.add("theta", Tensor({4}, {1, -2, 3, 0.25}));
  Gradients g = ad::backward(p, [](ad::Tape& t, const ad::Bound& b) {
    return ad::sum(t, ad::mul(t, b["theta"], b["theta"]));
  });
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(g["theta"][i], 2.0 * p["theta"][i]);
}

TEST(Backward, NonScalarLossIsContractError) {
  ad::Tape t;
  ad::Var v = t.leaf(Tensor({3}, 1.0));
  EXPECT_THROW(t.backward(ad::tanh(t, v)), ContractError);
}

TEST(Backward, UnusedParameterGetsZeroGradient) {
  ParameterSet p;
  p.add("used", Tensor({2}, 1.0));
  p.add("unused", Tensor({3}, 1.0));
  Gradients g = ad::backward(p, [](ad::Tape& t, const ad::Bound& b) { return ad::sum(t, b["used"]); });
  EXPECT_EQ(g["unused"], Tensor({3}));
}

TEST(Backward, RepeatedUseAccumulates) {
  ParameterSet p;
  p.add("x", Tensor({1}, {0.3}));
  Gradients g = ad::backward(p, [](ad::Tape& t, const ad::Bound& b) {
    ad::Var x = b["x"];
    return ad::sum(t, ad::add(t, ad::add(t, x, x), ad::scale(t, x, 5.0)));
  });
  EXPECT_EQ(g["x"][0], 7.0);
}

TEST(Backward, TopologicalOrder) {
  ad::Tape t;
  ad::Var a = t.leaf(Tensor({2}, 1.0));
  ad::Var b = ad::tanh(t, a);
  ad::Var c = ad::mul(t, a, b);
  for (ad::Var v : {b, c})
    for (std::size_t in : t.inputs(v)) EXPECT_LT(in, v.id);
}

TEST(Backward, GradientsAreFinite) {
  ParameterSet p;
  Rng rng(1);
  p.add("z", random_tensor({3, 4}, rng, -50, 50));
  Gradients g = ad::backward(p, [](ad::Tape& t, const ad::Bound& b) {
    return probe(t, ad::softmax(t, ad::sigmoid(t, b["z"])), 2);
  });
  EXPECT_TRUE(g["z"].all_finite());
}

TEST(FiniteDiff, LinearIsExact) {
  ParameterSet p;
  p.add("a", Tensor({3}, {0.1, 2.0, -3.0}));
  for (double step : {1e-3, 1e-5, 0.5}) {
    Gradients g = ad::finite_diff(
        [](const ParameterSet& q) { return 3.0 * q["a"][0] - 2.0 * q["a"][1] + 0.5 * q["a"][2]; }, p, step);
    EXPECT_NEAR(g["a"][0], 3.0, 1e-9);
    EXPECT_NEAR(g["a"][1], -2.0, 1e-9);
    EXPECT_NEAR(g["a"][2], 0.5, 1e-9);
  }
}

TEST(FiniteDiff, SineAtZero) {
  ParameterSet p;
  p.add("a", Tensor({1}));
  Gradients g = ad::finite_diff([](const ParameterSet& q) { return std::sin(q["a"][0]); }, p, 1e-5);
  EXPECT_NEAR(g["a"][0], 1.0, 1e-10);
}

TEST(FiniteDiff, DoesNotMutateTheta) {
  ParameterSet p;
  p.add("a", Tensor({2}, {1.0, 2.0}));
  const ParameterSet copy = p;
  ad::finite_diff([](const ParameterSet& q) { return q["a"][0] * q["a"][1]; }, p);
  EXPECT_EQ(p, copy);
}

TEST(MaxRelativeError, UsesFloor) {
  Gradients a, n;
  a.add("g", Tensor({2}, {1e-12, 1.0}));
  n.add("g", Tensor({2}, {0.0, 1.0}));
  EXPECT_NEAR(ad::max_relative_error(a, n), 1e-4, 1e-16);
}

// Single-op adjoints against central differences.

class OpCheck : public ::testing::Test {
 protected:
  Rng rng{99};
  void check(const ParameterSet& p, const LossFn& fn) { EXPECT_LT(op_error(p, fn), 1e-6); }
};

TEST_F(OpCheck, Elementwise) {
  ParameterSet p;
  p.add("a", random_tensor({2, 3}, rng, -2, 2));
  p.add("b", random_tensor({2, 3}, rng, -2, 2));
  check(p, [](ad::Tape& t, const ad::Bound& b) { return probe(t, ad::add(t, b["a"], b["b"]), 1); });
  check(p, [](ad::Tape& t, const ad::Bound& b) { return probe(t, ad::mul(t, b["a"], b["b"]), 2); });
  check(p, [](ad::Tape& t, const ad::Bound& b) { return probe(t, ad::scale(t, b["a"], -1.7), 3); });
  check(p, [](ad::Tape& t, const ad::Bound& b) { return probe(t, ad::tanh(t, b["a"]), 4); });
  check(p, [](ad::Tape& t, const ad::Bound& b) { return probe(t, ad::sigmoid(t, b["b"]), 5); });
  check(p, [](ad::Tape& t, const ad::Bound& b) { return probe(t, ad::softmax(t, b["a"]), 6); });
}

TEST_F(OpCheck, Structural) {
  ParameterSet p;
  p.add("a", random_tensor({2, 3, 5}, rng));
  p.add("b", random_tensor({2, 3, 2}, rng));
  check(p, [](ad::Tape& t, const ad::Bound& b) { return probe(t, ad::slice_channels(t, b["a"], 1, 3), 7); });
  check(p, [](ad::Tape& t, const ad::Bound& b) { return probe(t, ad::concat_channels(t, b["a"], b["b"]), 8); });
  check(p, [](ad::Tape& t, const ad::Bound& b) { return probe(t, ad::select_location(t, b["a"], 1, 2), 9); });
}

TEST_F(OpCheck, Affine) {
  ParameterSet p;
  p.add("x", random_tensor({3, 4}, rng));
  p.add("w", random_tensor({4, 2}, rng));
  p.add("b", random_tensor({2}, rng));
  check(p, [](ad::Tape& t, const ad::Bound& b) { return probe(t, ad::affine(t, b["x"], b["w"], b["b"]), 10); });
}

TEST_F(OpCheck, ConcatInput) {
  ParameterSet p;
  p.add("proj", random_tensor({2, 3}, rng));
  p.add("prev", random_tensor({2, 2, 3, 3}, rng));
  check(p, [](ad::Tape& t, const ad::Bound& b) { return probe(t, ad::concat_input(t, b["proj"], b["prev"], 2), 11); });
}

TEST_F(OpCheck, CrossLayerConv) {
  for (std::size_t k : {2u, 3u, 4u}) {
    ParameterSet p;
    p.add("h", random_tensor({2, 4, 3, 2}, rng));
    p.add("w", random_tensor({k, k, 2, 3}, rng));
    p.add("b", random_tensor({3}, rng));
    check(p, [](ad::Tape& t, const ad::Bound& b) { return probe(t, ad::cross_layer_conv(t, b["h"], b["w"], b["b"]), 12); });
  }
}

TEST_F(OpCheck, MemoryCellConvIncludingBank) {
  for (std::size_t k : {2u, 3u, 5u}) {
    ParameterSet p;
    p.add("c", random_tensor({2, 4, 2}, rng));
    p.add("q", random_tensor({2, 4, k}, rng));
    // through the softmax, the way the cell generates its kernels
    check(p, [k](ad::Tape& t, const ad::Bound& b) {
      return probe(t, ad::memory_cell_conv(t, b["c"], ad::softmax(t, b["q"]), {k}), 13);
    });
  }
}

TEST_F(OpCheck, MemoryCellConvReplicationAdjoint) {
  ParameterSet p;
  p.add("c", random_tensor({1, 2, 3, 2}, rng));
  p.add("bank", random_simplex({1, 2, 3, 9}, rng));
  check(p, [](ad::Tape& t, const ad::Bound& b) { return probe(t, ad::memory_cell_conv(t, b["c"], b["bank"], {3, 3}), 14); });
}

TEST_F(OpCheck, Norms) {
  ParameterSet p;
  p.add("z", random_tensor({2, 3, 4}, rng, -2, 2));
  p.add("g", random_tensor({3, 4}, rng, 0.5, 1.5));
  p.add("b", random_tensor({3, 4}, rng));
  check(p, [](ad::Tape& t, const ad::Bound& b) { return probe(t, ad::channel_norm(t, b["z"], b["g"], b["b"]), 15); });
  check(p, [](ad::Tape& t, const ad::Bound& b) { return probe(t, ad::layer_norm(t, b["z"], b["g"], b["b"]), 16); });
}

TEST_F(OpCheck, SoftmaxNll) {
  ParameterSet p;
  p.add("z", random_tensor({4, 5}, rng, -3, 3));
  const std::vector<int> targets{0, 4, 2, 2};
  const std::vector<double> weights{1.0, 0.0, 0.5, 2.0};
  check(p, [&](ad::Tape& t, const ad::Bound& b) { return ad::softmax_nll(t, b["z"], targets, weights); });
}

TEST(SoftmaxNll, ValueAndMaskedRows) {
  ad::Tape t;
  ad::Var z = t.leaf(Tensor({2, 3}, {1, 2, 3, 100, 0, 0}));
  const std::vector<int> targets{2, 1};
  const std::vector<double> weights{1.0, 0.0};
  ad::Var loss = ad::softmax_nll(t, z, targets, weights);
  EXPECT_NEAR(t.value(loss)[0], -std::log(0.66524095577482188953), 1e-12);
  t.backward(loss);
  for (std::size_t i = 3; i < 6; ++i) EXPECT_EQ(t.grad(z)[i], 0.0);
}

TEST(Accumulation, OrderIndependent) {
  Rng rng(5);
  ParameterSet p;
  p.add("x", random_tensor({3, 4}, rng));
  auto forward = [](bool reversed) {
    return [reversed](ad::Tape& t, const ad::Bound& b) {
      ad::Var x = b["x"];
      ad::Var u = ad::tanh(t, x), v = ad::sigmoid(t, x), w = ad::scale(t, x, 0.3);
      ad::Var s = reversed ? ad::add(t, w, ad::add(t, v, u)) : ad::add(t, ad::add(t, u, v), w);
      return probe(t, s, 3);
    };
  };
  Gradients a = ad::backward(p, forward(false)), b = ad::backward(p, forward(true));
  for (std::size_t i = 0; i < 12; ++i) EXPECT_NEAR(a["x"][i], b["x"][i], 1e-12);
}

TEST(KernelPath, GradientReachesKernelLogits) {
  Rng rng(8);
  ParameterSet p;
  p.add("c", random_tensor({1, 3, 2}, rng));
  p.add("q", random_tensor({1, 3, 3}, rng));
  Gradients g = ad::backward(p, [](ad::Tape& t, const ad::Bound& b) {
    return probe(t, ad::memory_cell_conv(t, b["c"], ad::softmax(t, b["q"]), {3}), 4);
  });
  EXPECT_GT(g["q"].max_abs(), 1e-6);
}

TEST(Bound, ConstantsRecordNoGradient) {
  ParameterSet p;
  p.add("a", Tensor({2}, 1.0));
  ad::Tape t;
  ad::Bound b(t, p, false);
  EXPECT_FALSE(t.requires_grad(b["a"]));
  EXPECT_FALSE(t.requires_grad(ad::tanh(t, b["a"])));
}
