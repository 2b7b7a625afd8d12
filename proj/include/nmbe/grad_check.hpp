// SPDX-License-Identifier: Apache-2.0
//
// nmbe: near-field mmWave beam estimation toolkit

#ifndef NMBE_GRAD_CHECK_HPP
#define NMBE_GRAD_CHECK_HPP

#include <functional>
#include <string>
#include <vector>

#include "nmbe/tape.hpp"

namespace nmbe::gradcore {

struct GradCheckReport {
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  std::int64_t coords_checked = 0;
  std::string worst;  // "tensor 2 coord 17: analytic=..., numeric=..."
  bool pass() const { return max_rel_error < tolerance; }
};

/// Builds the fragment on a fresh tape from the given leaf tensors and
/// returns the scalar output node. Leaves are registered in order via
/// Tape::input(, requires_grad=true).
using FragmentBuilder = std::function<NodeId(Tape&, const std::vector<NodeId>&)>;

/// Compares tape gradients of a scalar fragment against central finite
/// differences (step 1e-5 by default). When a tensor has more than
/// max_coords_per_tensor entries a random subset is probed (seeded, so the
/// report is reproducible). Relative error is |a-n| / max(1, |a|, |n|).
/// Throws usage_error if the fragment output is not scalar.
GradCheckReport grad_check(const FragmentBuilder& fragment, std::vector<Tensor> leaves,
                           double tolerance, double step = 1e-5,
                           std::int64_t max_coords_per_tensor = 200, std::uint64_t seed = 0);

}  // namespace nmbe::gradcore

#endif  // NMBE_GRAD_CHECK_HPP
