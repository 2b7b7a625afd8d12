// SPDX-License-Identifier: Apache-2.0
//
// nmbe: near-field mmWave beam estimation toolkit

#include "nmbe/datasmith.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "nmbe/binio.hpp"
#include "nmbe/rng.hpp"

namespace nmbe::datasmith {

namespace {

constexpr int kDatasetFormatVersion = 1;
constexpr double kMinSegmentM = 0.01;  // guards against coincident points

double hypot2(double dx, double dy) { return std::sqrt(dx * dx + dy * dy); }

/// Free-space amplitude lambda / (4 pi L); propagation phase lives in the
/// delay term of the channel model.
double pathloss_amplitude(double wavelength_m, double length_m) {
  return wavelength_m / (4.0 * M_PI * std::max(length_m, kMinSegmentM));
}

struct BandGeometry {
  std::array<double, 2> bs;
  double wavelength;
};

wavefield::Path make_los_path(const std::array<double, 2>& user, const BandGeometry& g,
                              cplx oscillator) {
  const double dx = user[0] - g.bs[0];
  const double dy = user[1] - g.bs[1];
  const double r = std::max(hypot2(dx, dy), kMinSegmentM);
  wavefield::Path p;
  p.gain = pathloss_amplitude(g.wavelength, r) * oscillator;
  p.delay_s = r / wavefield::kSpeedOfLight;
  p.sin_angle = dx / r;
  p.distance_m = r;
  return p;
}

wavefield::Path make_scatter_path(const std::array<double, 2>& user,
                                  const std::array<double, 2>& scat, const BandGeometry& g,
                                  cplx reflection, cplx oscillator) {
  const double hop1 = std::max(hypot2(user[0] - scat[0], user[1] - scat[1]), kMinSegmentM);
  const double sx = scat[0] - g.bs[0];
  const double sy = scat[1] - g.bs[1];
  const double hop2 = std::max(hypot2(sx, sy), kMinSegmentM);
  wavefield::Path p;
  p.gain = pathloss_amplitude(g.wavelength, hop1 + hop2) * reflection * oscillator;
  p.delay_s = (hop1 + hop2) / wavefield::kSpeedOfLight;
  p.sin_angle = sx / hop2;
  p.distance_m = hop2;  // distance to the last scatterer before the BS
  return p;
}

nlohmann::json array_to_json(const wavefield::ArrayConfig& a) {
  return {{"antennas", a.antennas},
          {"carrier_hz", a.carrier_hz},
          {"bandwidth_hz", a.bandwidth_hz},
          {"subcarriers", a.subcarriers}};
}

wavefield::ArrayConfig array_from_json(const nlohmann::json& j) {
  return wavefield::ArrayConfig::make(j.at("antennas").get<int>(), j.at("carrier_hz").get<double>(),
                                      j.at("bandwidth_hz").get<double>(),
                                      j.at("subcarriers").get<int>());
}

}  // namespace

void SceneConfig::validate() const {
  if (users < 1) throw config_error("scene.users must be >= 1");
  if (sector_r_lo_m <= 0.0 || sector_r_hi_m < sector_r_lo_m) {
    throw config_error("scene sector radii must satisfy 0 < r_lo <= r_hi");
  }
  if (sector_sin_lo < -1.0 || sector_sin_hi > 1.0 || sector_sin_lo > sector_sin_hi) {
    throw config_error("scene sector sine range must lie in [-1, 1]");
  }
  if (cluster_radius_m < 0.0) throw config_error("scene.cluster_radius_m must be >= 0");
  if (scatterer_count < 0) throw config_error("scene.scatterer_count must be >= 0");
  if (los_probability < 0.0 || los_probability > 1.0) {
    throw config_error("scene.los_probability must lie in [0, 1]");
  }
  if (sector_r_hi_m > mmwave.rayleigh_distance_m()) {
    throw config_error("scene sector reaches beyond the mmWave Rayleigh distance (" +
                       std::to_string(mmwave.rayleigh_distance_m()) + " m): users must be near-field");
  }
}

nlohmann::json scene_config_to_json(const SceneConfig& c) {
  return {{"users", c.users},
          {"sector_r_lo_m", c.sector_r_lo_m},
          {"sector_r_hi_m", c.sector_r_hi_m},
          {"sector_sin_lo", c.sector_sin_lo},
          {"sector_sin_hi", c.sector_sin_hi},
          {"cluster_radius_m", c.cluster_radius_m},
          {"scatterer_count", c.scatterer_count},
          {"los_probability", c.los_probability},
          {"nlos_extra_loss_db", c.nlos_extra_loss_db},
          {"nlos_fading_scale", c.nlos_fading_scale},
          {"bs_offset_m", c.bs_offset_m},
          {"mmwave", array_to_json(c.mmwave)},
          {"sub6", array_to_json(c.sub6)},
          {"options",
           {{"phase_carrier",
             c.options.phase_carrier == wavefield::ChannelOptions::PhaseCarrier::kSubcarrier ? "f"
                                                                                             : "fc"},
            {"literal_element_distance", c.options.literal_element_distance},
            {"literal_squint_factor", c.options.literal_squint_factor}}}};
}

SceneConfig scene_config_from_json(const nlohmann::json& j) {
  SceneConfig c;
  c.users = j.at("users").get<int>();
  c.sector_r_lo_m = j.at("sector_r_lo_m").get<double>();
  c.sector_r_hi_m = j.at("sector_r_hi_m").get<double>();
  c.sector_sin_lo = j.at("sector_sin_lo").get<double>();
  c.sector_sin_hi = j.at("sector_sin_hi").get<double>();
  c.cluster_radius_m = j.at("cluster_radius_m").get<double>();
  c.scatterer_count = j.at("scatterer_count").get<int>();
  c.los_probability = j.at("los_probability").get<double>();
  c.nlos_extra_loss_db = j.at("nlos_extra_loss_db").get<double>();
  c.nlos_fading_scale = j.at("nlos_fading_scale").get<double>();
  c.bs_offset_m = j.at("bs_offset_m").get<double>();
  c.mmwave = array_from_json(j.at("mmwave"));
  c.sub6 = array_from_json(j.at("sub6"));
  const auto& o = j.at("options");
  c.options.phase_carrier = o.at("phase_carrier").get<std::string>() == "fc"
                                ? wavefield::ChannelOptions::PhaseCarrier::kCarrier
                                : wavefield::ChannelOptions::PhaseCarrier::kSubcarrier;
  c.options.literal_element_distance = o.at("literal_element_distance").get<bool>();
  c.options.literal_squint_factor = o.at("literal_squint_factor").get<bool>();
  c.validate();
  return c;
}

Scene generate_scene(const SceneConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  Scene scene;
  scene.seed = seed;

  // cluster centre uniform in the sector (radius x sine product measure)
  const double rc = rng.uniform(config.sector_r_lo_m, config.sector_r_hi_m);
  const double sc = rng.uniform(config.sector_sin_lo, config.sector_sin_hi);
  const std::array<double, 2> centre = {rc * sc, rc * std::sqrt(1.0 - sc * sc)};

  scene.user_pos.resize(static_cast<std::size_t>(config.users));
  for (auto& pos : scene.user_pos) {
    const double rad = config.cluster_radius_m * std::sqrt(rng.uniform());
    const double ang = rng.uniform(0.0, 2.0 * M_PI);
    pos = {centre[0] + rad * std::cos(ang), centre[1] + rad * std::sin(ang)};
    // keep users inside the drop annulus and in front of the array
    double r = hypot2(pos[0], pos[1]);
    if (r < kMinSegmentM) {
      pos = {0.0, config.sector_r_lo_m};
      r = config.sector_r_lo_m;
    }
    const double clamped = std::clamp(r, config.sector_r_lo_m, config.sector_r_hi_m);
    pos[0] *= clamped / r;
    pos[1] *= clamped / r;
    if (std::abs(pos[0]) > 0.999 * clamped) {
      pos[0] = std::copysign(0.999 * clamped, pos[0]);
      pos[1] = std::sqrt(clamped * clamped - pos[0] * pos[0]);
    } else if (pos[1] < 0.0) {
      pos[1] = -pos[1];
    }
  }

  scene.scatterer_pos.resize(static_cast<std::size_t>(config.scatterer_count));
  for (auto& pos : scene.scatterer_pos) {
    const double r = rng.uniform(config.sector_r_lo_m, config.sector_r_hi_m);
    const double s = rng.uniform(config.sector_sin_lo, config.sector_sin_hi);
    pos = {r * s, r * std::sqrt(1.0 - s * s)};
  }

  // per-scene oscillator phases and per-scatterer reflection coefficients
  // are shared across users, so co-located users see identical channels
  const cplx osc_mm = rng.unit_phase();
  const cplx osc_sub = rng.unit_phase();
  const double refl_amp = std::pow(10.0, -config.nlos_extra_loss_db / 20.0);
  std::vector<cplx> refl_mm(scene.scatterer_pos.size()), refl_sub(scene.scatterer_pos.size());
  for (std::size_t s = 0; s < scene.scatterer_pos.size(); ++s) {
    if (config.nlos_fading_scale > 0.0) {
      refl_mm[s] = refl_amp * config.nlos_fading_scale * rng.complex_normal();
      refl_sub[s] = refl_amp * config.nlos_fading_scale * rng.complex_normal();
    } else {
      refl_mm[s] = refl_amp * rng.unit_phase();
      refl_sub[s] = refl_amp * rng.unit_phase();
    }
  }

  const BandGeometry geo_mm{{0.0, 0.0}, config.mmwave.wavelength_m()};
  const BandGeometry geo_sub{{config.bs_offset_m, 0.0}, config.sub6.wavelength_m()};

  scene.mmwave_paths.resize(scene.user_pos.size());
  scene.sub6_paths.resize(scene.user_pos.size());
  for (std::size_t u = 0; u < scene.user_pos.size(); ++u) {
    // one blockage draw per user, shared by both bands (same geometry)
    bool los = rng.uniform() < config.los_probability;
    if (!los && config.scatterer_count == 0) los = true;  // guarantee L >= 1

    wavefield::PathSet mm{wavefield::Band::kMmwave, {}};
    wavefield::PathSet sub{wavefield::Band::kSub6, {}};
    if (los) {
      mm.paths.push_back(make_los_path(scene.user_pos[u], geo_mm, osc_mm));
      sub.paths.push_back(make_los_path(scene.user_pos[u], geo_sub, osc_sub));
    }
    for (std::size_t s = 0; s < scene.scatterer_pos.size(); ++s) {
      mm.paths.push_back(
          make_scatter_path(scene.user_pos[u], scene.scatterer_pos[s], geo_mm, refl_mm[s], osc_mm));
      sub.paths.push_back(make_scatter_path(scene.user_pos[u], scene.scatterer_pos[s], geo_sub,
                                            refl_sub[s], osc_sub));
    }
    scene.mmwave_paths[u] = std::move(mm);
    scene.sub6_paths[u] = std::move(sub);
  }
  return scene;
}

std::vector<std::vector<cvec>> receive_sub6_pilots(const Scene& scene, const SceneConfig& config,
                                                   double uplink_power_w, double noise_power_w,
                                                   std::uint64_t noise_seed) {
  const double symbol = std::sqrt(uplink_power_w);
  Rng noise(noise_seed, 0x6e6f6973ULL);
  std::vector<std::vector<cvec>> pilots(scene.sub6_paths.size());
  for (std::size_t u = 0; u < scene.sub6_paths.size(); ++u) {
    pilots[u].resize(static_cast<std::size_t>(config.sub6.subcarriers));
    for (int k = 0; k < config.sub6.subcarriers; ++k) {
      cvec y = wavefield::sub6_uplink_channel(scene.sub6_paths[u], k, config.sub6, config.options);
      for (cplx& v : y) {
        v *= symbol;
        if (noise_power_w > 0.0) v += noise.complex_normal(noise_power_w);
      }
      pilots[u][static_cast<std::size_t>(k)] = std::move(y);
    }
  }
  return pilots;
}

PilotImage preprocess(const std::vector<cvec>& pilots_per_subcarrier) {
  if (pilots_per_subcarrier.empty() || pilots_per_subcarrier[0].empty()) {
    throw config_error("preprocess: empty pilot list");
  }
  PilotImage img;
  img.subcarriers = static_cast<int>(pilots_per_subcarrier.size());
  img.antennas = static_cast<int>(pilots_per_subcarrier[0].size());
  img.data.resize(static_cast<std::size_t>(img.subcarriers) * 2 * img.antennas);

  double sum_sq = 0.0;
  for (int k = 0; k < img.subcarriers; ++k) {
    const cvec& y = pilots_per_subcarrier[static_cast<std::size_t>(k)];
    if (static_cast<int>(y.size()) != img.antennas) {
      throw config_error("preprocess: ragged pilot vectors");
    }
    double* re = img.data.data() + static_cast<std::size_t>(k) * 2 * img.antennas;
    double* im = re + img.antennas;
    for (int m = 0; m < img.antennas; ++m) {
      re[m] = y[static_cast<std::size_t>(m)].real();
      im[m] = y[static_cast<std::size_t>(m)].imag();
      sum_sq += re[m] * re[m] + im[m] * im[m];
    }
  }
  img.rms = std::sqrt(sum_sq / static_cast<double>(img.data.size()));
  if (img.rms <= 0.0) img.rms = 1.0;
  for (double& v : img.data) v /= img.rms;
  return img;
}

airlink::UserChannels build_downlink_channels(const Scene& scene, const SceneConfig& config) {
  airlink::UserChannels ch;
  ch.h.resize(scene.mmwave_paths.size());
  for (std::size_t u = 0; u < scene.mmwave_paths.size(); ++u) {
    ch.h[u].resize(static_cast<std::size_t>(config.mmwave.subcarriers));
    for (int k = 0; k < config.mmwave.subcarriers; ++k) {
      ch.h[u][static_cast<std::size_t>(k)] =
          wavefield::mmwave_downlink_channel(scene.mmwave_paths[u], k, config.mmwave, config.options);
    }
  }
  return ch;
}

std::vector<polarbook::CodewordIndex> label_scene(const airlink::UserChannels& channels,
                                                  const polarbook::Codebook& book) {
  std::vector<polarbook::CodewordIndex> labels;
  labels.reserve(channels.h.size());
  for (const auto& per_user : channels.h) {
    labels.push_back(airlink::exhaustive_search(per_user, book).first);
  }
  return labels;
}

void DatasetConfig::validate() const {
  scene.validate();
  if (samples < 1) throw config_error("dataset.samples must be >= 1");
  if (train_fraction <= 0.0 || train_fraction > 1.0) {
    throw config_error("dataset.train_fraction must lie in (0, 1]");
  }
  if (scene.sector_r_lo_m < codebook.min_distance_m) {
    throw config_error("scene sector starts at " + std::to_string(scene.sector_r_lo_m) +
                       " m, inside the codebook minimum distance " +
                       std::to_string(codebook.min_distance_m) + " m");
  }
}

nlohmann::json dataset_config_to_json(const DatasetConfig& c) {
  return {{"scene", scene_config_to_json(c.scene)},
          {"codebook",
           {{"angle_count", c.codebook.angle_count},
            {"ring_count", c.codebook.ring_count},
            {"min_distance_m", c.codebook.min_distance_m}}},
          {"uplink_power_dbm", c.uplink_power_dbm},
          {"uplink_noise_dbm", c.uplink_noise_dbm},
          {"samples", c.samples},
          {"train_fraction", c.train_fraction},
          {"seed", c.seed}};
}

DatasetConfig dataset_config_from_json(const nlohmann::json& j) {
  DatasetConfig c;
  c.scene = scene_config_from_json(j.at("scene"));
  const auto& cb = j.at("codebook");
  c.codebook.angle_count = cb.at("angle_count").get<int>();
  c.codebook.ring_count = cb.at("ring_count").get<int>();
  c.codebook.min_distance_m = cb.at("min_distance_m").get<double>();
  c.codebook.array = c.scene.mmwave;
  c.codebook.options = c.scene.options;
  c.uplink_power_dbm = j.at("uplink_power_dbm").get<double>();
  c.uplink_noise_dbm = j.at("uplink_noise_dbm").get<double>();
  c.samples = j.at("samples").get<int>();
  c.train_fraction = j.at("train_fraction").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.validate();
  return c;
}

namespace {

airlink::UserChannels quantize_channels(const airlink::UserChannels& ch) {
  airlink::UserChannels out = ch;
  for (auto& user : out.h) {
    for (auto& vec : user) {
      for (cplx& v : vec) {
        v = {static_cast<double>(static_cast<float>(v.real())),
             static_cast<double>(static_cast<float>(v.imag()))};
      }
    }
  }
  return out;
}

}  // namespace

SampleRecord generate_record(const DatasetConfig& config, const polarbook::Codebook& book,
                             int index) {
  const std::uint64_t scene_seed = mix_seed(config.seed, static_cast<std::uint64_t>(index));
  const Scene scene = generate_scene(config.scene, scene_seed);

  SampleRecord rec;
  rec.scene_seed = scene_seed;
  const auto pilots =
      receive_sub6_pilots(scene, config.scene, dbm_to_watts(config.uplink_power_dbm),
                          dbm_to_watts(config.uplink_noise_dbm), mix_seed(scene_seed, 0x70696c6fULL));
  rec.images.reserve(pilots.size());
  for (const auto& per_user : pilots) rec.images.push_back(preprocess(per_user));

  // float32 quantization first, so stored channels reproduce the labels
  rec.channels = quantize_channels(build_downlink_channels(scene, config.scene));
  rec.labels = label_scene(rec.channels, book);
  return rec;
}

namespace {

struct DatasetWriter {
  std::ofstream pilots;
  std::ofstream channels;
  nlohmann::json label_rows = nlohmann::json::array();
  std::map<int, std::int64_t> label_histogram;

  DatasetWriter(const std::string& dir)
      : pilots(dir + "/pilots.f32", std::ios::binary | std::ios::trunc),
        channels(dir + "/channels.c64", std::ios::binary | std::ios::trunc) {
    if (!pilots || !channels) throw io_error("cannot create dataset files in " + dir);
  }

  void append(const SampleRecord& rec, int angle_count) {
    std::vector<float> fimg;
    for (const auto& img : rec.images) {
      fimg.resize(img.data.size());
      for (std::size_t i = 0; i < img.data.size(); ++i) fimg[i] = static_cast<float>(img.data[i]);
      pilots.write(reinterpret_cast<const char*>(fimg.data()),
                   static_cast<std::streamsize>(fimg.size() * sizeof(float)));
    }
    std::vector<float> fch;
    for (const auto& user : rec.channels.h) {
      for (const auto& vec : user) {
        fch.resize(vec.size() * 2);
        for (std::size_t i = 0; i < vec.size(); ++i) {
          fch[2 * i] = static_cast<float>(vec[i].real());
          fch[2 * i + 1] = static_cast<float>(vec[i].imag());
        }
        channels.write(reinterpret_cast<const char*>(fch.data()),
                       static_cast<std::streamsize>(fch.size() * sizeof(float)));
      }
    }
    nlohmann::json row;
    row["seed"] = rec.scene_seed;
    nlohmann::json angles = nlohmann::json::array(), rings = nlohmann::json::array(),
                   rms = nlohmann::json::array();
    for (std::size_t u = 0; u < rec.labels.size(); ++u) {
      angles.push_back(rec.labels[u].angle);
      rings.push_back(rec.labels[u].ring);
      rms.push_back(rec.images[u].rms);
      label_histogram[rec.labels[u].ring * angle_count + rec.labels[u].angle] += 1;
    }
    row["angle"] = angles;
    row["ring"] = rings;
    row["rms"] = rms;
    label_rows.push_back(std::move(row));
  }

  double histogram_entropy_bits(std::int64_t total) const {
    double h = 0.0;
    for (const auto& [idx, count] : label_histogram) {
      const double p = static_cast<double>(count) / static_cast<double>(total);
      h -= p * std::log2(p);
    }
    return h;
  }
};

void write_manifest(const DatasetConfig& config, const std::string& dir) {
  nlohmann::json manifest;
  manifest["format_version"] = kDatasetFormatVersion;
  manifest["config"] = dataset_config_to_json(config);
  manifest["samples"] = config.samples;
  manifest["users"] = config.scene.users;
  manifest["train_count"] = static_cast<int>(config.samples * config.train_fraction);
  manifest["pilot_subcarriers"] = config.scene.sub6.subcarriers;
  manifest["pilot_antennas"] = config.scene.sub6.antennas;
  manifest["mm_subcarriers"] = config.scene.mmwave.subcarriers;
  manifest["mm_antennas"] = config.scene.mmwave.antennas;
  manifest["pilot_normalization"] = "per_image_rms";
  manifest["endianness"] = "little";
  std::ofstream mf(dir + "/manifest.json");
  if (!mf) throw io_error("cannot write " + dir + "/manifest.json");
  mf << manifest.dump(2) << "\n";
}

}  // namespace

void write_dataset(const std::vector<SampleRecord>& records, const DatasetConfig& config,
                   const std::string& dir) {
  if (static_cast<int>(records.size()) != config.samples) {
    throw config_error("write_dataset: record count " + std::to_string(records.size()) +
                       " does not match configured sample count " + std::to_string(config.samples));
  }
  std::filesystem::create_directories(dir);
  write_manifest(config, dir);
  DatasetWriter writer(dir);
  for (const auto& rec : records) writer.append(rec, config.codebook.angle_count);
  std::ofstream lf(dir + "/labels.json");
  if (!lf) throw io_error("cannot write " + dir + "/labels.json");
  lf << writer.label_rows.dump() << "\n";
}

double generate_dataset(const DatasetConfig& config, const std::string& dir,
                        const std::function<void(int, int)>& progress) {
  config.validate();
  std::filesystem::create_directories(dir);
  const polarbook::Codebook book = polarbook::build_codebook(
      polarbook::CodebookConfig{config.codebook.angle_count, config.codebook.ring_count,
                                config.codebook.min_distance_m, config.scene.mmwave,
                                config.scene.options});
  write_manifest(config, dir);
  DatasetWriter writer(dir);

  const int chunk = 256;
  std::vector<SampleRecord> buffer;
  for (int base = 0; base < config.samples; base += chunk) {
    const int n = std::min(chunk, config.samples - base);
    buffer.assign(static_cast<std::size_t>(n), SampleRecord{});
    parallel_for(n, [&](std::int64_t lo, std::int64_t hi) {
      for (std::int64_t i = lo; i < hi; ++i) {
        buffer[static_cast<std::size_t>(i)] = generate_record(config, book, base + static_cast<int>(i));
      }
    });
    for (const auto& rec : buffer) writer.append(rec, config.codebook.angle_count);
    if (progress) progress(base + n, config.samples);
  }
  std::ofstream lf(dir + "/labels.json");
  if (!lf) throw io_error("cannot write " + dir + "/labels.json");
  lf << writer.label_rows.dump() << "\n";
  return writer.histogram_entropy_bits(static_cast<std::int64_t>(config.samples) * config.scene.users);
}

Dataset Dataset::open(const std::string& dir) {
  Dataset ds;
  std::ifstream mf(dir + "/manifest.json");
  if (!mf) throw io_error("cannot open " + dir + "/manifest.json");
  try {
    mf >> ds.manifest_;
  } catch (const nlohmann::json::exception& e) {
    throw io_error("malformed dataset manifest in " + dir + ": " + e.what());
  }
  if (ds.manifest_.value("format_version", -1) != kDatasetFormatVersion) {
    throw io_error("dataset format version mismatch in " + dir);
  }
  ds.config_ = dataset_config_from_json(ds.manifest_.at("config"));
  ds.samples_ = ds.manifest_.at("samples").get<int>();
  ds.users_ = ds.manifest_.at("users").get<int>();
  ds.train_count_ = ds.manifest_.at("train_count").get<int>();
  ds.pilot_k_ = ds.manifest_.at("pilot_subcarriers").get<int>();
  ds.pilot_m_ = ds.manifest_.at("pilot_antennas").get<int>();
  ds.mm_k_ = ds.manifest_.at("mm_subcarriers").get<int>();
  ds.mm_m_ = ds.manifest_.at("mm_antennas").get<int>();
  if (ds.samples_ != ds.config_.samples) {
    throw io_error("dataset manifest sample count disagrees with embedded config");
  }

  const std::int64_t image_elems = static_cast<std::int64_t>(ds.pilot_k_) * 2 * ds.pilot_m_;
  ds.pilots_ = binio::read_f32(dir + "/pilots.f32",
                               static_cast<std::int64_t>(ds.samples_) * ds.users_ * image_elems);
  ds.channels_path_ = dir + "/channels.c64";
  const std::int64_t expect_ch =
      static_cast<std::int64_t>(ds.samples_) * ds.users_ * ds.mm_k_ * ds.mm_m_;
  if (binio::file_size_bytes(ds.channels_path_) != expect_ch * 8) {
    throw io_error("channels.c64 size mismatch: expected " + std::to_string(expect_ch) +
                   " complex64 values");
  }

  std::ifstream lf(dir + "/labels.json");
  if (!lf) throw io_error("cannot open " + dir + "/labels.json");
  nlohmann::json labels;
  try {
    lf >> labels;
  } catch (const nlohmann::json::exception& e) {
    throw io_error("malformed labels.json in " + dir + ": " + e.what());
  }
  if (static_cast<int>(labels.size()) != ds.samples_) {
    throw io_error("labels.json row count " + std::to_string(labels.size()) +
                   " does not match sample count " + std::to_string(ds.samples_));
  }
  ds.labels_.resize(static_cast<std::size_t>(ds.samples_) * ds.users_);
  ds.rms_.resize(ds.labels_.size());
  ds.seeds_.resize(static_cast<std::size_t>(ds.samples_));
  for (int s = 0; s < ds.samples_; ++s) {
    const auto& row = labels[static_cast<std::size_t>(s)];
    ds.seeds_[static_cast<std::size_t>(s)] = row.at("seed").get<std::uint64_t>();
    const auto& angles = row.at("angle");
    const auto& rings = row.at("ring");
    const auto& rms = row.at("rms");
    if (static_cast<int>(angles.size()) != ds.users_) {
      throw io_error("labels.json row " + std::to_string(s) + " has wrong user count");
    }
    for (int u = 0; u < ds.users_; ++u) {
      auto& lab = ds.labels_[static_cast<std::size_t>(s) * ds.users_ + u];
      lab.angle = angles[static_cast<std::size_t>(u)].get<int>();
      lab.ring = rings[static_cast<std::size_t>(u)].get<int>();
      ds.rms_[static_cast<std::size_t>(s) * ds.users_ + u] = rms[static_cast<std::size_t>(u)].get<double>();
    }
  }
  return ds;
}

const float* Dataset::image(int sample, int user) const {
  return pilots_.data() +
         (static_cast<std::int64_t>(sample) * users_ + user) * image_numel();
}

polarbook::CodewordIndex Dataset::label(int sample, int user) const {
  return labels_[static_cast<std::size_t>(sample) * users_ + user];
}

double Dataset::image_rms(int sample, int user) const {
  return rms_[static_cast<std::size_t>(sample) * users_ + user];
}

std::uint64_t Dataset::scene_seed(int sample) const {
  return seeds_[static_cast<std::size_t>(sample)];
}

airlink::UserChannels Dataset::channels_for(int sample) const {
  const std::int64_t per_user = static_cast<std::int64_t>(mm_k_) * mm_m_;
  const std::int64_t base = static_cast<std::int64_t>(sample) * users_ * per_user;
  airlink::UserChannels ch;
  ch.h.resize(static_cast<std::size_t>(users_));
  for (int u = 0; u < users_; ++u) {
    const auto block = binio::read_c64_slice(channels_path_, base + u * per_user, per_user);
    ch.h[static_cast<std::size_t>(u)].resize(static_cast<std::size_t>(mm_k_));
    for (int k = 0; k < mm_k_; ++k) {
      ch.h[static_cast<std::size_t>(u)][static_cast<std::size_t>(k)].assign(
          block.begin() + static_cast<std::int64_t>(k) * mm_m_,
          block.begin() + static_cast<std::int64_t>(k + 1) * mm_m_);
    }
  }
  return ch;
}

}  // namespace nmbe::datasmith
