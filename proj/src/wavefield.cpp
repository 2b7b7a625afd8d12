// SPDX-License-Identifier: Apache-2.0
//
// nmbe: near-field mmWave beam estimation toolkit

#include "nmbe/wavefield.hpp"

#include <algorithm>
#include <cmath>

namespace nmbe::wavefield {

namespace {
constexpr double kTwoPi = 2.0 * M_PI;

void require_band(const PathSet& paths, Band band, const char* who) {
  if (paths.band != band) throw config_error(std::string(who) + ": wrong band tag");
  if (paths.paths.empty()) throw config_error(std::string(who) + ": empty path set");
}
}  // namespace

ArrayConfig ArrayConfig::make(int antennas, double carrier_hz, double bandwidth_hz,
                              int subcarriers) {
  if (antennas < 1) throw config_error("array: antenna count must be >= 1");
  if (carrier_hz <= 0.0) throw config_error("array: carrier frequency must be positive");
  if (subcarriers < 1) throw config_error("array: subcarrier count must be >= 1");
  if (bandwidth_hz < 0.0 || bandwidth_hz >= carrier_hz) {
    throw config_error("array: bandwidth must satisfy 0 <= W < f_c");
  }
  ArrayConfig c;
  c.antennas = antennas;
  c.carrier_hz = carrier_hz;
  c.bandwidth_hz = bandwidth_hz;
  c.subcarriers = subcarriers;
  c.spacing_m = 0.5 * kSpeedOfLight / carrier_hz;
  return c;
}

double ArrayConfig::rayleigh_distance_m() const {
  const double d = aperture_m();
  return 2.0 * d * d / wavelength_m();
}

std::vector<double> antenna_offsets(int antennas) {
  if (antennas < 1) throw config_error("antenna_offsets: antenna count must be >= 1");
  std::vector<double> sigma(static_cast<std::size_t>(antennas));
  for (int m = 0; m < antennas; ++m) {
    sigma[static_cast<std::size_t>(m)] = (2.0 * m - antennas + 1.0) / 2.0;
  }
  return sigma;
}

double near_field_phase(double distance_m, double sin_angle, double sigma_m, double spacing_m,
                        double wavelength_m, const ChannelOptions& options) {
  const double sd = sigma_m * spacing_m;
  const double quad = options.literal_element_distance ? -sd * sd : sd * sd;
  const double radicand = distance_m * distance_m + quad - 2.0 * distance_m * sin_angle * sd;
  if (radicand <= 0.0) {
    throw geometry_error("near_field_phase: source at r=" + std::to_string(distance_m) +
                         " m lies inside the array aperture (radicand " +
                         std::to_string(radicand) + ")");
  }
  const double r_m = std::sqrt(radicand);
  return (distance_m - r_m) / wavelength_m;
}

cvec near_steering_vector(double sin_angle, double distance_m, double f_hz,
                          const ArrayConfig& config, const ChannelOptions& options) {
  // Steering phase 2 pi (f / f_c) phi_m, phi_m in wavelengths. The scale
  // f / f_c at absolute frequency equals 1 + f_bb / f_c in the baseband
  // convention, so it is unity at the carrier and the vector converges to
  // the planar-wave form as r grows.
  const double scale = options.literal_squint_factor ? (1.0 + f_hz / config.carrier_hz)
                                                     : (f_hz / config.carrier_hz);
  const double lambda = config.wavelength_m();
  const auto sigma = antenna_offsets(config.antennas);
  cvec b(static_cast<std::size_t>(config.antennas));
  for (int m = 0; m < config.antennas; ++m) {
    const double phi = near_field_phase(distance_m, sin_angle, sigma[static_cast<std::size_t>(m)],
                                        config.spacing_m, lambda, options);
    const double arg = -kTwoPi * scale * phi;
    b[static_cast<std::size_t>(m)] = {std::cos(arg), std::sin(arg)};
  }
  return b;
}

cvec far_steering_vector(double sin_angle, const ArrayConfig& config) {
  if (std::abs(sin_angle) > 1.0) throw config_error("far_steering_vector: |sin(angle)| > 1");
  const double step = -kTwoPi * config.spacing_m / config.wavelength_m() * sin_angle;
  cvec a(static_cast<std::size_t>(config.antennas));
  for (int m = 0; m < config.antennas; ++m) {
    const double arg = step * m;
    a[static_cast<std::size_t>(m)] = {std::cos(arg), std::sin(arg)};
  }
  return a;
}

std::vector<double> subcarrier_frequencies(const ArrayConfig& config) {
  std::vector<double> f(static_cast<std::size_t>(config.subcarriers));
  const double k0 = config.carrier_hz - config.bandwidth_hz / 2.0;
  const double df = config.bandwidth_hz / config.subcarriers;
  for (int k = 0; k < config.subcarriers; ++k) {
    f[static_cast<std::size_t>(k)] = k0 + (k + 0.5) * df;
  }
  return f;
}

cvec mmwave_uplink_channel(const PathSet& paths, double f_hz, const ArrayConfig& config,
                           const ChannelOptions& options) {
  require_band(paths, Band::kMmwave, "mmwave_uplink_channel");
  cvec h(static_cast<std::size_t>(config.antennas), cplx(0.0, 0.0));
  for (const Path& p : paths.paths) {
    // equivalent gain beta~ = beta exp(-j 2 pi f_c tau), then the delay
    // phase at the evaluation frequency (or frozen at f_c when configured)
    const double fc_arg = -kTwoPi * config.carrier_hz * p.delay_s;
    const double delay_f =
        options.phase_carrier == ChannelOptions::PhaseCarrier::kSubcarrier ? f_hz
                                                                           : config.carrier_hz;
    const double f_arg = -kTwoPi * delay_f * p.delay_s;
    const cplx coeff = p.gain * cplx(std::cos(fc_arg), std::sin(fc_arg)) *
                       cplx(std::cos(f_arg), std::sin(f_arg));
    const cvec b = near_steering_vector(p.sin_angle, p.distance_m, f_hz, config, options);
    for (std::size_t m = 0; m < h.size(); ++m) h[m] += coeff * b[m];
  }
  return h;
}

cvec mmwave_downlink_channel(const PathSet& paths, int k, const ArrayConfig& config,
                             const ChannelOptions& options) {
  if (k < 0 || k >= config.subcarriers) {
    throw config_error("mmwave_downlink_channel: subcarrier " + std::to_string(k) +
                       " out of range [0," + std::to_string(config.subcarriers) + ")");
  }
  const auto freqs = subcarrier_frequencies(config);
  // TDD reciprocity: the downlink row vector carries the same coefficients.
  return mmwave_uplink_channel(paths, freqs[static_cast<std::size_t>(k)], config, options);
}

cvec sub6_uplink_channel(const PathSet& paths, int k_bar, const ArrayConfig& config,
                         const ChannelOptions& options) {
  require_band(paths, Band::kSub6, "sub6_uplink_channel");
  if (k_bar < 0 || k_bar >= config.subcarriers) {
    throw config_error("sub6_uplink_channel: subcarrier " + std::to_string(k_bar) +
                       " out of range [0," + std::to_string(config.subcarriers) + ")");
  }
  const auto freqs = subcarrier_frequencies(config);
  const double f = freqs[static_cast<std::size_t>(k_bar)];
  cvec h(static_cast<std::size_t>(config.antennas), cplx(0.0, 0.0));
  for (const Path& p : paths.paths) {
    const double fc_arg = -kTwoPi * config.carrier_hz * p.delay_s;
    const double delay_f =
        options.phase_carrier == ChannelOptions::PhaseCarrier::kSubcarrier ? f
                                                                           : config.carrier_hz;
    const double f_arg = -kTwoPi * delay_f * p.delay_s;
    const cplx coeff = p.gain * cplx(std::cos(fc_arg), std::sin(fc_arg)) *
                       cplx(std::cos(f_arg), std::sin(f_arg));
    const cvec a = far_steering_vector(p.sin_angle, config);
    for (std::size_t m = 0; m < h.size(); ++m) h[m] += coeff * a[m];
  }
  return h;
}

std::vector<double> beam_pattern(const cvec& h, const ArrayConfig& config) {
  if (static_cast<int>(h.size()) != config.antennas) {
    throw config_error("beam_pattern: channel length does not match antenna count");
  }
  double norm = 0.0;
  for (const cplx& v : h) norm += std::norm(v);
  if (norm <= 0.0) throw config_error("beam_pattern: zero channel vector");

  const int m_count = config.antennas;
  std::vector<double> gains(static_cast<std::size_t>(m_count));
  double peak = 0.0;
  for (int m = 0; m < m_count; ++m) {
    const double angle = (2.0 * m - m_count + 1.0) / m_count;
    const cvec row = far_steering_vector(angle, config);
    cplx acc(0.0, 0.0);
    for (std::size_t i = 0; i < h.size(); ++i) acc += row[i] * h[i];
    gains[static_cast<std::size_t>(m)] = std::abs(acc);
    peak = std::max(peak, gains[static_cast<std::size_t>(m)]);
  }
  for (double& g : gains) g /= peak;
  return gains;
}

}  // namespace nmbe::wavefield
