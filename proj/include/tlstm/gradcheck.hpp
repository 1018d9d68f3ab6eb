#pragma once

#include <cstddef>
#include <cstdint>

#include "tlstm/config.hpp"
#include "tlstm/sequence.hpp"

namespace tlstm {

struct GradCheckCase {
  ParameterSet params;
  SequenceBatch batch;
};

/// Random parameters (weights at four times the Glorot range, biases and
/// gains jittered away from their defaults), random real inputs and random
/// targets on every position.
GradCheckCase make_grad_check_case(const TlstmConfig& cfg, std::size_t steps, std::uint64_t seed,
                                   std::size_t batch = 2);

/// Max relative error between backward() and central differences of the
/// mean sequence NLL.
double grad_check(const TlstmConfig& cfg, std::size_t steps, std::uint64_t seed, double step = 1e-5);

}  // namespace tlstm
