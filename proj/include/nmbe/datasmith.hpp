// SPDX-License-Identifier: Apache-2.0
//
// nmbe: near-field mmWave beam estimation toolkit

#ifndef NMBE_DATASMITH_HPP
#define NMBE_DATASMITH_HPP

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nmbe/airlink.hpp"
#include "nmbe/polarbook.hpp"
#include "nmbe/wavefield.hpp"

namespace nmbe::datasmith {

/// Synthetic shared-scatterer scene: a user cluster dropped in a sector,
/// plus scatterers every user sees. Both bands' paths derive from the same
/// coordinates, which is what couples sub-6 pilots to mmWave beam indices.
struct SceneConfig {
  int users = 4;
  double sector_r_lo_m = 2.0;
  double sector_r_hi_m = 10.0;
  double sector_sin_lo = -0.8;
  double sector_sin_hi = 0.8;
  double cluster_radius_m = 2.0;
  int scatterer_count = 3;
  double los_probability = 1.0;
  double nlos_extra_loss_db = 10.0;
  /// > 0: scatterer reflection coefficients get a complex-normal factor of
  /// this scale (per scatterer per band); 0: unit-modulus reflection phase.
  double nlos_fading_scale = 1.0;
  /// Sub-6 BS position offset along the array axis (mmWave BS at origin).
  double bs_offset_m = 0.0;

  wavefield::ArrayConfig mmwave;
  wavefield::ArrayConfig sub6;
  wavefield::ChannelOptions options;

  void validate() const;
};

nlohmann::json scene_config_to_json(const SceneConfig& c);
SceneConfig scene_config_from_json(const nlohmann::json& j);

struct Scene {
  std::uint64_t seed = 0;
  std::vector<std::array<double, 2>> user_pos;       // (x, y), metres
  std::vector<std::array<double, 2>> scatterer_pos;
  std::vector<wavefield::PathSet> mmwave_paths;      // per user
  std::vector<wavefield::PathSet> sub6_paths;        // per user
};

/// Deterministic in (config, seed). Path gains are geometric (free-space
/// magnitude, propagation phase carried by the delay terms); randomness
/// enters through positions, per-scene oscillator phases, per-scatterer
/// reflection coefficients, and per-user LoS blockage.
Scene generate_scene(const SceneConfig& config, std::uint64_t seed);

/// Noisy uplink pilots y_u[k_bar] (length M_bar) for all users; pilot symbol
/// is the constant sqrt(P). Noise is CN(0, sigma^2 I), deterministic in
/// noise_seed.
std::vector<std::vector<cvec>> receive_sub6_pilots(const Scene& scene, const SceneConfig& config,
                                                   double uplink_power_w, double noise_power_w,
                                                   std::uint64_t noise_seed);

/// K_bar x 2 x M_bar real stacking of one user's pilots, divided by the
/// RMS of its entries (stored so the raw signal can be reconstructed).
struct PilotImage {
  int subcarriers = 0;  // K_bar
  int antennas = 0;     // M_bar
  double rms = 1.0;
  std::vector<double> data;  // [k][re/im][m]

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
};

PilotImage preprocess(const std::vector<cvec>& pilots_per_subcarrier);

/// Noiseless mmWave downlink channels for every user and subcarrier.
airlink::UserChannels build_downlink_channels(const Scene& scene, const SceneConfig& config);

/// Oracle labels: exhaustive search per user on noiseless downlink channels.
std::vector<polarbook::CodewordIndex> label_scene(const airlink::UserChannels& channels,
                                                  const polarbook::Codebook& book);

struct SampleRecord {
  std::uint64_t scene_seed = 0;
  std::vector<PilotImage> images;                  // one per user
  std::vector<polarbook::CodewordIndex> labels;    // one per user
  airlink::UserChannels channels;                  // U x K downlink vectors
};

struct DatasetConfig {
  SceneConfig scene;
  polarbook::CodebookConfig codebook;
  double uplink_power_dbm = -10.0;
  double uplink_noise_dbm = -81.0;
  int samples = 20000;
  double train_fraction = 0.95;
  std::uint64_t seed = 1;

  void validate() const;
};

nlohmann::json dataset_config_to_json(const DatasetConfig& c);
DatasetConfig dataset_config_from_json(const nlohmann::json& j);

/// One record; per-sample seed is mix_seed(config.seed, index). Channels are
/// float32-quantized before labeling so stored data reproduces the labels.
SampleRecord generate_record(const DatasetConfig& config, const polarbook::Codebook& book,
                             int index);

/// Directory layout: manifest.json, pilots.f32, channels.c64, labels.json.
void write_dataset(const std::vector<SampleRecord>& records, const DatasetConfig& config,
                   const std::string& dir);

/// Streaming generator for large datasets: parallel per-chunk generation,
/// writes strictly in index order. Returns the label histogram entropy in
/// bits (reported by the CLI).
double generate_dataset(const DatasetConfig& config, const std::string& dir,
                        const std::function<void(int, int)>& progress = {});

/// Loaded dataset; pilot images and labels live in memory, channels are
/// read on demand from channels.c64.
class Dataset {
 public:
  static Dataset open(const std::string& dir);

  const DatasetConfig& config() const { return config_; }
  int samples() const { return samples_; }
  int users() const { return users_; }
  int train_count() const { return train_count_; }
  int val_count() const { return samples_ - train_count_; }
  int pilot_subcarriers() const { return pilot_k_; }
  int pilot_antennas() const { return pilot_m_; }
  std::int64_t image_numel() const { return static_cast<std::int64_t>(pilot_k_) * 2 * pilot_m_; }

  /// Pointer to the (sample, user) image, image_numel() floats.
  const float* image(int sample, int user) const;
  polarbook::CodewordIndex label(int sample, int user) const;
  double image_rms(int sample, int user) const;
  std::uint64_t scene_seed(int sample) const;

  /// Reads the sample's U x K downlink channel block from disk.
  airlink::UserChannels channels_for(int sample) const;

  const nlohmann::json& manifest() const { return manifest_; }

 private:
  nlohmann::json manifest_;
  DatasetConfig config_;
  int samples_ = 0, users_ = 0, train_count_ = 0;
  int pilot_k_ = 0, pilot_m_ = 0, mm_k_ = 0, mm_m_ = 0;
  std::vector<float> pilots_;
  std::vector<polarbook::CodewordIndex> labels_;
  std::vector<double> rms_;
  std::vector<std::uint64_t> seeds_;
  std::string channels_path_;
};

}  // namespace nmbe::datasmith

#endif  // NMBE_DATASMITH_HPP
