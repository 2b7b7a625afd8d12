// SPDX-License-Identifier: Apache-2.0
//
// nmbe: near-field mmWave beam estimation toolkit

#ifndef NMBE_RNG_HPP
#define NMBE_RNG_HPP

#include <cmath>
#include <complex>
#include <cstdint>
#include <random>

namespace nmbe {

/// splitmix64 finalizer; used to derive independent per-sample seeds from
/// (master seed, index) so parallel generation is order-independent.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed ^ (index + 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// mt19937_64 with hand-rolled draws. The standard distributions are
/// implementation-defined, so streams would differ between standard
/// libraries; these draws are portable.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(mix_seed(seed, 0x6e6d6265ULL)) {}
  Rng(std::uint64_t seed, std::uint64_t stream) : gen_(mix_seed(seed, stream)) {}

  std::uint64_t bits() { return gen_(); }

  /// Uniform in [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n), n >= 1 (rejection sampling, unbiased).
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
      x = gen_();
    } while (x >= limit);
    return x % n;
  }

  /// Standard normal via Box-Muller (no cached spare; stream stays simple).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  /// Circularly-symmetric complex normal with E|z|^2 = variance.
  std::complex<double> complex_normal(double variance = 1.0) {
    const double s = std::sqrt(variance / 2.0);
    return {s * normal(), s * normal()};
  }

  /// Unit-modulus random phase.
  std::complex<double> unit_phase() {
    const double phi = uniform(0.0, 2.0 * M_PI);
    return {std::cos(phi), std::sin(phi)};
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace nmbe

#endif  // NMBE_RNG_HPP
