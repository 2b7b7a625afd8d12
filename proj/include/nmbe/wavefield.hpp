// SPDX-License-Identifier: Apache-2.0
//
// nmbe: near-field mmWave beam estimation toolkit

#ifndef NMBE_WAVEFIELD_HPP
#define NMBE_WAVEFIELD_HPP

#include <vector>

#include "nmbe/common.hpp"

namespace nmbe::wavefield {

inline constexpr double kSpeedOfLight = 299792458.0;  // m/s

/// Uniform linear array with half-wavelength element spacing.
struct ArrayConfig {
  int antennas = 1;          // M
  double carrier_hz = 0.0;   // f_c
  double bandwidth_hz = 0.0; // W (must be < f_c)
  int subcarriers = 1;       // K
  double spacing_m = 0.0;    // d = lambda_c / 2

  static ArrayConfig make(int antennas, double carrier_hz, double bandwidth_hz, int subcarriers);

  double wavelength_m() const { return kSpeedOfLight / carrier_hz; }
  double aperture_m() const { return (antennas - 1) * spacing_m; }
  /// 2 D^2 / lambda: boundary between spherical- and planar-wave modelling.
  double rayleigh_distance_m() const;
};

/// Channel-model conventions. The defaults follow the frequency-domain
/// derivation; the `literal_*` switches reproduce printed variants that are
/// internally inconsistent (kept selectable for comparison runs).
struct ChannelOptions {
  /// Per-path delay phase: exp(-j 2 pi f tau) at the evaluation frequency
  /// (kSubcarrier) or frozen at the carrier (kCarrier).
  enum class PhaseCarrier { kSubcarrier, kCarrier };
  PhaseCarrier phase_carrier = PhaseCarrier::kSubcarrier;

  /// Element-to-source distance: law of cosines
  /// r^(m) = sqrt(r^2 + sigma^2 d^2 - 2 r theta sigma d). The literal variant
  /// flips the sign of the sigma^2 d^2 term, which makes the radicand
  /// negative for broadside geometry.
  bool literal_element_distance = false;

  /// Steering phase scale at absolute frequency f: default f / f_c (unity at
  /// the carrier, matching the far-field limit); the literal variant applies
  /// 1 + f / f_c, doubling the phase at the carrier.
  bool literal_squint_factor = false;
};

enum class Band { kSub6, kMmwave };

/// One propagation path: gain, delay, sine of arrival angle, and distance
/// from the array centre to the source or last scatterer (far-field paths
/// leave the distance unused).
struct Path {
  cplx gain;
  double delay_s = 0.0;
  double sin_angle = 0.0;    // in [-1, 1]
  double distance_m = 0.0;   // > 0 for near-field paths
};

struct PathSet {
  Band band = Band::kMmwave;
  std::vector<Path> paths;
};

/// Antenna index offsets sigma_m = (2m - M + 1) / 2 for m = 0..M-1.
std::vector<double> antenna_offsets(int antennas);

/// Near-field per-element phase in wavelengths: (r - r^(m)) / lambda with
/// r^(m) from the law of cosines. Throws geometry_error when the radicand
/// is not positive.
double near_field_phase(double distance_m, double sin_angle, double sigma_m, double spacing_m,
                        double wavelength_m, const ChannelOptions& options = {});

/// Spherical-wave steering vector evaluated at absolute frequency f_hz;
/// entries have unit modulus.
cvec near_steering_vector(double sin_angle, double distance_m, double f_hz,
                          const ArrayConfig& config, const ChannelOptions& options = {});

/// Planar-wave steering vector, frequency-flat; leading entry is 1.
cvec far_steering_vector(double sin_angle, const ArrayConfig& config);

/// Centered uniform grid: f_k = f_c - W/2 + (k - 1/2) W / K, k = 1..K.
std::vector<double> subcarrier_frequencies(const ArrayConfig& config);

/// Wideband near-field channel at absolute frequency f (uplink orientation).
cvec mmwave_uplink_channel(const PathSet& paths, double f_hz, const ArrayConfig& config,
                           const ChannelOptions& options = {});

/// Downlink channel on subcarrier k (0-based): transpose of the uplink
/// channel at f_k, i.e. the same coefficients.
cvec mmwave_downlink_channel(const PathSet& paths, int k, const ArrayConfig& config,
                             const ChannelOptions& options = {});

/// Far-field sub-6 GHz uplink channel on subcarrier k_bar (0-based); the
/// steering vector is frequency-flat, only delay phases vary per subcarrier.
cvec sub6_uplink_channel(const PathSet& paths, int k_bar, const ArrayConfig& config,
                         const ChannelOptions& options = {});

/// Normalized beamforming gain: |D h| / max|D h| with D rows the far-field
/// steering vectors at grid angles (2m - M + 1) / M. Throws on a zero input.
std::vector<double> beam_pattern(const cvec& h, const ArrayConfig& config);

}  // namespace nmbe::wavefield

#endif  // NMBE_WAVEFIELD_HPP
