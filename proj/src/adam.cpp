// SPDX-License-Identifier: Apache-2.0
//
// nmbe: near-field mmWave beam estimation toolkit

#include "nmbe/adam.hpp"

#include <cmath>

namespace nmbe::gradcore {

AdamState AdamState::init(const std::vector<Tensor*>& params, double learning_rate) {
  AdamState s;
  s.learning_rate = learning_rate;
  s.m.reserve(params.size());
  s.v.reserve(params.size());
  for (const Tensor* p : params) {
    s.m.emplace_back(p->shape);
    s.v.emplace_back(p->shape);
  }
  return s;
}

void adam_step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads,
               AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw config_error("adam_step: parameter/gradient/state list sizes disagree");
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t t = 0; t < params.size(); ++t) {
    Tensor& p = *params[t];
    const Tensor& g = *grads[t];
    Tensor& m = state.m[t];
    Tensor& v = state.v[t];
    if (!p.same_shape(g) || !p.same_shape(m)) {
      throw config_error("adam_step: shape mismatch at parameter " + std::to_string(t) + ": " +
                         p.shape_str() + " vs grad " + g.shape_str());
    }
    parallel_for(p.numel(), [&](std::int64_t lo, std::int64_t hi) {
      for (std::int64_t i = lo; i < hi; ++i) {
        m.data[i] = state.beta1 * m.data[i] + (1.0 - state.beta1) * g.data[i];
        v.data[i] = state.beta2 * v.data[i] + (1.0 - state.beta2) * g.data[i] * g.data[i];
        const double mhat = m.data[i] / bc1;
        const double vhat = v.data[i] / bc2;
        p.data[i] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.eps);
      }
    });
  }
}

}  // namespace nmbe::gradcore
