// SPDX-License-Identifier: Apache-2.0
//
// nmbe: near-field mmWave beam estimation toolkit

#include "nmbe/polarbook.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "nmbe/binio.hpp"

namespace nmbe::polarbook {

Codebook::Codebook(CodebookConfig config, std::vector<double> angle_grid,
                   std::vector<double> ring_radii, std::vector<cvec> words)
    : config_(std::move(config)),
      angle_grid_(std::move(angle_grid)),
      ring_radii_(std::move(ring_radii)),
      words_(std::move(words)) {}

const cvec& Codebook::word(int flat) const {
  if (flat < 0 || flat >= size()) {
    throw usage_error("codebook: flat index " + std::to_string(flat) + " out of range [0," +
                      std::to_string(size()) + ")");
  }
  return words_[static_cast<std::size_t>(flat)];
}

int Codebook::flat_index(CodewordIndex idx) const {
  if (idx.angle < 0 || idx.angle >= config_.angle_count || idx.ring < 0 ||
      idx.ring >= config_.ring_count) {
    throw usage_error("codebook: index (angle=" + std::to_string(idx.angle) +
                      ", ring=" + std::to_string(idx.ring) + ") out of range");
  }
  return idx.ring * config_.angle_count + idx.angle;
}

CodewordIndex Codebook::unflatten(int flat) const {
  if (flat < 0 || flat >= size()) {
    throw usage_error("codebook: flat index " + std::to_string(flat) + " out of range [0," +
                      std::to_string(size()) + ")");
  }
  return CodewordIndex{flat % config_.angle_count, flat / config_.angle_count};
}

std::vector<double> sample_angles(int angle_count) {
  if (angle_count < 1) throw config_error("sample_angles: angle count must be >= 1");
  std::vector<double> psi(static_cast<std::size_t>(angle_count));
  for (int m = 1; m <= angle_count; ++m) {
    psi[static_cast<std::size_t>(m - 1)] = (2.0 * m - angle_count - 1.0) / angle_count;
  }
  return psi;
}

std::vector<double> sample_distances(int ring_count, double min_distance_m) {
  if (ring_count < 1) throw config_error("sample_distances: ring count must be >= 1");
  if (min_distance_m <= 0.0) throw config_error("sample_distances: minimum distance must be > 0");
  std::vector<double> r(static_cast<std::size_t>(ring_count));
  for (int s = 1; s <= ring_count; ++s) {
    r[static_cast<std::size_t>(s - 1)] = min_distance_m * ring_count / s;
  }
  return r;
}

Codebook build_codebook(const CodebookConfig& config) {
  if (config.angle_count != config.array.antennas) {
    throw config_error("codebook: angle count " + std::to_string(config.angle_count) +
                       " must equal the antenna count " + std::to_string(config.array.antennas));
  }
  if (config.min_distance_m >= config.array.rayleigh_distance_m()) {
    throw config_error("codebook: minimum ring distance must lie inside the Rayleigh distance");
  }
  const auto angles = sample_angles(config.angle_count);
  const auto radii = sample_distances(config.ring_count, config.min_distance_m);
  const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(config.array.antennas));

  std::vector<cvec> words;
  words.reserve(static_cast<std::size_t>(config.angle_count) * config.ring_count);
  for (int s = 0; s < config.ring_count; ++s) {
    for (int m = 0; m < config.angle_count; ++m) {
      // Precoding weights are the conjugate of the arrival steering response
      // so a matched source combines coherently across the array.
      cvec b = wavefield::near_steering_vector(angles[static_cast<std::size_t>(m)],
                                               radii[static_cast<std::size_t>(s)],
                                               config.array.carrier_hz, config.array,
                                               config.options);
      for (cplx& v : b) v = std::conj(v) * inv_sqrt_m;
      words.push_back(std::move(b));
    }
  }
  return Codebook(config, angles, radii, std::move(words));
}

void write_codebook(const Codebook& book, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const auto& cfg = book.config();
  nlohmann::json manifest;
  manifest["format_version"] = 1;
  manifest["angle_count"] = cfg.angle_count;
  manifest["ring_count"] = cfg.ring_count;
  manifest["min_distance_m"] = cfg.min_distance_m;
  manifest["array"] = {{"antennas", cfg.array.antennas},
                       {"carrier_hz", cfg.array.carrier_hz},
                       {"bandwidth_hz", cfg.array.bandwidth_hz},
                       {"subcarriers", cfg.array.subcarriers}};
  manifest["angle_grid"] = book.angle_grid();
  manifest["ring_radii"] = book.ring_radii();

  std::ofstream mf(dir + "/manifest.json");
  if (!mf) throw io_error("cannot write " + dir + "/manifest.json");
  mf << manifest.dump(2) << "\n";

  cvec flat;
  flat.reserve(static_cast<std::size_t>(book.size()) * cfg.array.antennas);
  for (int i = 0; i < book.size(); ++i) {
    const cvec& w = book.word(i);
    flat.insert(flat.end(), w.begin(), w.end());
  }
  binio::write_c128(dir + "/codewords.c128", flat);
}

Codebook read_codebook(const std::string& dir) {
  std::ifstream mf(dir + "/manifest.json");
  if (!mf) throw io_error("cannot open " + dir + "/manifest.json");
  nlohmann::json manifest;
  try {
    mf >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw io_error("malformed codebook manifest in " + dir + ": " + e.what());
  }
  if (manifest.value("format_version", -1) != 1) {
    throw io_error("codebook format version mismatch in " + dir);
  }
  CodebookConfig cfg;
  cfg.angle_count = manifest.at("angle_count").get<int>();
  cfg.ring_count = manifest.at("ring_count").get<int>();
  cfg.min_distance_m = manifest.at("min_distance_m").get<double>();
  const auto& arr = manifest.at("array");
  cfg.array = wavefield::ArrayConfig::make(arr.at("antennas").get<int>(),
                                           arr.at("carrier_hz").get<double>(),
                                           arr.at("bandwidth_hz").get<double>(),
                                           arr.at("subcarriers").get<int>());
  const auto angles = manifest.at("angle_grid").get<std::vector<double>>();
  const auto radii = manifest.at("ring_radii").get<std::vector<double>>();

  const std::int64_t total =
      static_cast<std::int64_t>(cfg.angle_count) * cfg.ring_count * cfg.array.antennas;
  const auto flat = binio::read_c128(dir + "/codewords.c128", total);
  std::vector<cvec> words(static_cast<std::size_t>(cfg.angle_count) * cfg.ring_count);
  for (std::size_t i = 0; i < words.size(); ++i) {
    words[i].assign(flat.begin() + static_cast<std::int64_t>(i) * cfg.array.antennas,
                    flat.begin() + static_cast<std::int64_t>(i + 1) * cfg.array.antennas);
  }
  return Codebook(cfg, angles, radii, std::move(words));
}

}  // namespace nmbe::polarbook
