// SPDX-License-Identifier: Apache-2.0
//
// nmbe: near-field mmWave beam estimation toolkit

#include "nmbe/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "nmbe/rng.hpp"

namespace nmbe::gradcore {

namespace {

double eval_scalar(const FragmentBuilder& fragment, const std::vector<Tensor>& leaves) {
  Tape tape;
  std::vector<NodeId> ids;
  ids.reserve(leaves.size());
  for (const Tensor& t : leaves) ids.push_back(tape.input(t, /*requires_grad=*/false));
  const NodeId out = fragment(tape, ids);
  const Tensor& v = tape.value(out);
  if (v.numel() != 1) {
    throw usage_error("grad_check: fragment output must be scalar, got shape " + v.shape_str());
  }
  return v.data[0];
}

}  // namespace

GradCheckReport grad_check(const FragmentBuilder& fragment, std::vector<Tensor> leaves,
                           double tolerance, double step, std::int64_t max_coords_per_tensor,
                           std::uint64_t seed) {
  GradCheckReport report;
  report.tolerance = tolerance;

  // analytic gradients
  Tape tape;
  std::vector<NodeId> ids;
  ids.reserve(leaves.size());
  for (const Tensor& t : leaves) ids.push_back(tape.input(t, /*requires_grad=*/true));
  const NodeId out = fragment(tape, ids);
  if (tape.value(out).numel() != 1) {
    throw usage_error("grad_check: fragment output must be scalar, got shape " +
                      tape.value(out).shape_str());
  }
  tape.backward(out);

  Rng rng(seed, 0x67726164ULL);
  for (std::size_t t = 0; t < leaves.size(); ++t) {
    const bool has = tape.has_grad(ids[t]);
    const std::int64_t n = leaves[t].numel();
    std::vector<std::int64_t> coords;
    if (max_coords_per_tensor < 0 || n <= max_coords_per_tensor) {
      coords.resize(static_cast<std::size_t>(n));
      for (std::int64_t i = 0; i < n; ++i) coords[static_cast<std::size_t>(i)] = i;
    } else {
      coords.reserve(static_cast<std::size_t>(max_coords_per_tensor));
      for (std::int64_t i = 0; i < max_coords_per_tensor; ++i) {
        coords.push_back(static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(n))));
      }
    }
    for (std::int64_t c : coords) {
      const double saved = leaves[t].data[static_cast<std::size_t>(c)];
      leaves[t].data[static_cast<std::size_t>(c)] = saved + step;
      const double fp = eval_scalar(fragment, leaves);
      leaves[t].data[static_cast<std::size_t>(c)] = saved - step;
      const double fm = eval_scalar(fragment, leaves);
      leaves[t].data[static_cast<std::size_t>(c)] = saved;

      const double numeric = (fp - fm) / (2.0 * step);
      const double analytic = has ? tape.grad(ids[t]).data[static_cast<std::size_t>(c)] : 0.0;
      const double rel = std::abs(analytic - numeric) /
                         std::max({1.0, std::abs(analytic), std::abs(numeric)});
      report.coords_checked += 1;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        std::ostringstream os;
        os << "tensor " << t << " coord " << c << ": analytic=" << analytic
           << " numeric=" << numeric;
        report.worst = os.str();
      }
    }
  }
  return report;
}

}  // namespace nmbe::gradcore
