#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "tlstm/rng.hpp"
#include "tlstm/tensor.hpp"

namespace testing_util {

inline tlstm::Tensor random_tensor(tlstm::Shape shape, tlstm::Rng& rng, double lo = -1.0, double hi = 1.0) {
  tlstm::Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

/// Rows of the last axis mapped through a softmax of random logits.
inline tlstm::Tensor random_simplex(tlstm::Shape shape, tlstm::Rng& rng, double spread = 3.0) {
  tlstm::Tensor t(std::move(shape));
  const std::size_t k = t.shape().back();
  for (std::size_t s = 0; s < t.size(); s += k) {
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) sum += (t[s + i] = std::exp(rng.uniform(-spread, spread)));
    for (std::size_t i = 0; i < k; ++i) t[s + i] /= sum;
  }
  return t;
}

inline double max_abs_diff(const tlstm::Tensor& a, const tlstm::Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline tlstm::Shape filled(std::size_t rank, std::size_t value) { return tlstm::Shape(rank, value); }

}  // namespace testing_util
