// SPDX-License-Identifier: Apache-2.0
//
// nmbe: near-field mmWave beam estimation toolkit

#ifndef NMBE_COMMON_HPP
#define NMBE_COMMON_HPP

#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace nmbe {

using cplx = std::complex<double>;
using cvec = std::vector<cplx>;

/// Invalid or inconsistent configuration (bad dimensions, unknown keys, ...).
class config_error : public std::runtime_error {
 public:
  explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

/// Physically impossible array/source geometry.
class geometry_error : public std::runtime_error {
 public:
  explicit geometry_error(const std::string& what) : std::runtime_error(what) {}
};

/// File format or serialization failure.
class io_error : public std::runtime_error {
 public:
  explicit io_error(const std::string& what) : std::runtime_error(what) {}
};

/// API misuse (e.g. backward from a non-scalar node).
class usage_error : public std::runtime_error {
 public:
  explicit usage_error(const std::string& what) : std::runtime_error(what) {}
};

inline double dbm_to_watts(double dbm) { return 1e-3 * std::pow(10.0, dbm / 10.0); }
inline double watts_to_dbm(double watts) { return 10.0 * std::log10(watts / 1e-3); }

/// Worker count for data-parallel loops: NMBE_THREADS if set, else hardware.
int worker_count();

/// Static-partition parallel loop over [0, n). Each index is handled by
/// exactly one worker, so results are independent of scheduling.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& body);

}  // namespace nmbe

#endif  // NMBE_COMMON_HPP
