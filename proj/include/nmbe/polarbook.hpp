// SPDX-License-Identifier: Apache-2.0
//
// nmbe: near-field mmWave beam estimation toolkit

#ifndef NMBE_POLARBOOK_HPP
#define NMBE_POLARBOOK_HPP

#include <string>
#include <vector>

#include "nmbe/wavefield.hpp"

namespace nmbe::polarbook {

struct CodebookConfig {
  int angle_count = 0;      // equals the array antenna count
  int ring_count = 0;       // S distance rings
  double min_distance_m = 0.0;
  wavefield::ArrayConfig array;
  wavefield::ChannelOptions options;
};

/// (angle, ring) address of a codeword, 0-based. Flat order is ring-major:
/// flat = ring * angle_count + angle.
struct CodewordIndex {
  int angle = 0;
  int ring = 0;

  bool operator==(const CodewordIndex&) const = default;
};

/// Polar grid of transmit precoding vectors: one unit-norm codeword per
/// (angle, ring) pair, per-element modulus 1/sqrt(M), built at the carrier
/// frequency. Immutable after construction.
class Codebook {
 public:
  Codebook(CodebookConfig config, std::vector<double> angle_grid, std::vector<double> ring_radii,
           std::vector<cvec> words);

  const CodebookConfig& config() const { return config_; }
  int size() const { return static_cast<int>(words_.size()); }
  int angle_count() const { return config_.angle_count; }
  int ring_count() const { return config_.ring_count; }

  const std::vector<double>& angle_grid() const { return angle_grid_; }
  const std::vector<double>& ring_radii() const { return ring_radii_; }

  const cvec& word(int flat) const;
  const cvec& word(CodewordIndex idx) const { return word(flat_index(idx)); }

  int flat_index(CodewordIndex idx) const;
  CodewordIndex unflatten(int flat) const;

 private:
  CodebookConfig config_;
  std::vector<double> angle_grid_;
  std::vector<double> ring_radii_;
  std::vector<cvec> words_;
};

/// Uniform sine-domain angles psi_m = (2m - M - 1) / M, m = 1..M.
std::vector<double> sample_angles(int angle_count);

/// Inverse-distance uniform rings 1/r_s = (s/S)(1/r_min): r_s = r_min S / s,
/// s = 1..S; the first ring is the farthest.
std::vector<double> sample_distances(int ring_count, double min_distance_m);

Codebook build_codebook(const CodebookConfig& config);

/// JSON manifest + raw interleaved little-endian complex128 table, row order
/// = flat index.
void write_codebook(const Codebook& book, const std::string& dir);
Codebook read_codebook(const std::string& dir);

}  // namespace nmbe::polarbook

#endif  // NMBE_POLARBOOK_HPP
