// SPDX-License-Identifier: Apache-2.0
//
// nmbe: near-field mmWave beam estimation toolkit

#ifndef NMBE_ADAM_HPP
#define NMBE_ADAM_HPP

#include <cstdint>
#include <vector>

#include "nmbe/tensor.hpp"

namespace nmbe::gradcore {

/// Adam with bias correction; one first/second-moment accumulator per
/// parameter tensor.
struct AdamState {
  std::int64_t step = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<Tensor> m;
  std::vector<Tensor> v;

  static AdamState init(const std::vector<Tensor*>& params, double learning_rate);
};

/// One Adam update over matched (param, grad) lists. Shapes must agree with
/// the accumulators; throws config_error otherwise.
void adam_step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads,
               AdamState& state);

}  // namespace nmbe::gradcore

#endif  // NMBE_ADAM_HPP
