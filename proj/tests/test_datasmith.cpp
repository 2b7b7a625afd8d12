// SPDX-License-Identifier: Apache-2.0
//
// nmbe: near-field mmWave beam estimation toolkit

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "nmbe/datasmith.hpp"
#include "nmbe/rng.hpp"

using namespace nmbe;
using namespace nmbe::datasmith;

namespace {

SceneConfig tiny_scene() {
  SceneConfig c;
  c.users = 3;
  // the 32-element 30 GHz array has a 4.8 m Rayleigh distance
  c.sector_r_lo_m = 1.0;
  c.sector_r_hi_m = 4.0;
  c.cluster_radius_m = 0.8;
  c.scatterer_count = 2;
  c.mmwave = wavefield::ArrayConfig::make(32, 30e9, 10e6, 4);
  c.sub6 = wavefield::ArrayConfig::make(8, 5.5e9, 10e6, 4);
  return c;
}

DatasetConfig tiny_dataset(int samples = 6) {
  DatasetConfig c;
  c.scene = tiny_scene();
  c.codebook.angle_count = 32;
  c.codebook.ring_count = 3;
  c.codebook.min_distance_m = 1.0;
  c.codebook.array = c.scene.mmwave;
  c.samples = samples;
  c.train_fraction = 0.5;
  c.seed = 42;
  return c;
}

bool paths_equal(const wavefield::PathSet& a, const wavefield::PathSet& b) {
  if (a.paths.size() != b.paths.size()) return false;
  for (std::size_t i = 0; i < a.paths.size(); ++i) {
    if (a.paths[i].gain != b.paths[i].gain || a.paths[i].delay_s != b.paths[i].delay_s ||
        a.paths[i].sin_angle != b.paths[i].sin_angle ||
        a.paths[i].distance_m != b.paths[i].distance_m) {
      return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("scene generation is deterministic in the seed") {
  const SceneConfig cfg = tiny_scene();
  const Scene a = generate_scene(cfg, 7);
  const Scene b = generate_scene(cfg, 7);
  CHECK(a.user_pos == b.user_pos);
  CHECK(a.scatterer_pos == b.scatterer_pos);
  for (std::size_t u = 0; u < a.mmwave_paths.size(); ++u) {
    CHECK(paths_equal(a.mmwave_paths[u], b.mmwave_paths[u]));
    CHECK(paths_equal(a.sub6_paths[u], b.sub6_paths[u]));
  }
  const Scene c = generate_scene(cfg, 8);
  CHECK(a.user_pos != c.user_pos);
}

TEST_CASE("zero cluster radius co-locates users with identical path sets") {
  SceneConfig cfg = tiny_scene();
  cfg.cluster_radius_m = 0.0;
  cfg.los_probability = 1.0;
  const Scene scene = generate_scene(cfg, 11);
  for (int u = 1; u < cfg.users; ++u) {
    CHECK(scene.user_pos[static_cast<std::size_t>(u)] == scene.user_pos[0]);
    CHECK(paths_equal(scene.mmwave_paths[static_cast<std::size_t>(u)], scene.mmwave_paths[0]));
    CHECK(paths_equal(scene.sub6_paths[static_cast<std::size_t>(u)], scene.sub6_paths[0]));
  }
}

TEST_CASE("scatterer path angle matches the coordinate oracle") {
  SceneConfig cfg = tiny_scene();
  cfg.los_probability = 1.0;
  const Scene scene = generate_scene(cfg, 13);
  for (std::size_t u = 0; u < scene.user_pos.size(); ++u) {
    const auto& paths = scene.mmwave_paths[u].paths;
    REQUIRE(paths.size() == 1 + scene.scatterer_pos.size());
    // LoS first
    const auto& user = scene.user_pos[u];
    const double r = std::hypot(user[0], user[1]);
    CHECK(paths[0].sin_angle == doctest::Approx(user[0] / r).epsilon(1e-12));
    CHECK(paths[0].distance_m == doctest::Approx(r).epsilon(1e-12));
    for (std::size_t s = 0; s < scene.scatterer_pos.size(); ++s) {
      const auto& sc = scene.scatterer_pos[s];
      const double rs = std::hypot(sc[0], sc[1]);
      CHECK(paths[1 + s].sin_angle == doctest::Approx(sc[0] / rs).epsilon(1e-12));
      const double total = rs + std::hypot(user[0] - sc[0], user[1] - sc[1]);
      CHECK(paths[1 + s].delay_s == doctest::Approx(total / wavefield::kSpeedOfLight));
    }
  }
}

TEST_CASE("users stay inside the drop annulus") {
  SceneConfig cfg = tiny_scene();
  cfg.cluster_radius_m = 50.0;  // far larger than the sector
  const Scene scene = generate_scene(cfg, 17);
  for (const auto& pos : scene.user_pos) {
    const double r = std::hypot(pos[0], pos[1]);
    CHECK(r >= cfg.sector_r_lo_m - 1e-9);
    CHECK(r <= cfg.sector_r_hi_m + 1e-9);
    CHECK(pos[1] >= 0.0);
  }
}

TEST_CASE("noiseless pilots equal the channel times the pilot symbol") {
  const SceneConfig cfg = tiny_scene();
  const Scene scene = generate_scene(cfg, 19);
  const double p_w = 2.25;
  const auto pilots = receive_sub6_pilots(scene, cfg, p_w, 0.0, 123);
  for (int u = 0; u < cfg.users; ++u) {
    for (int k = 0; k < cfg.sub6.subcarriers; ++k) {
      const cvec h = wavefield::sub6_uplink_channel(scene.sub6_paths[static_cast<std::size_t>(u)],
                                                    k, cfg.sub6, cfg.options);
      for (std::size_t m = 0; m < h.size(); ++m) {
        CHECK(std::abs(pilots[static_cast<std::size_t>(u)][static_cast<std::size_t>(k)][m] -
                       h[m] * std::sqrt(p_w)) < 1e-12);
      }
    }
  }
}

TEST_CASE("noise energy matches its variance over many draws") {
  SceneConfig cfg = tiny_scene();
  cfg.users = 1;
  cfg.scatterer_count = 0;
  const Scene scene = generate_scene(cfg, 23);
  const double sigma2 = 3.7e-9;
  // E||y - h z||^2 = M_bar sigma^2 per (user, subcarrier)
  double acc = 0.0;
  int count = 0;
  const auto clean = receive_sub6_pilots(scene, cfg, 1.0, 0.0, 0);
  for (int draw = 0; draw < 2500; ++draw) {
    const auto noisy = receive_sub6_pilots(scene, cfg, 1.0, sigma2, 1000 + draw);
    for (int k = 0; k < cfg.sub6.subcarriers; ++k) {
      for (int m = 0; m < cfg.sub6.antennas; ++m) {
        acc += std::norm(noisy[0][static_cast<std::size_t>(k)][static_cast<std::size_t>(m)] -
                         clean[0][static_cast<std::size_t>(k)][static_cast<std::size_t>(m)]);
      }
      count += 1;
    }
  }
  const double mean_energy = acc / count;
  CHECK(mean_energy == doctest::Approx(cfg.sub6.antennas * sigma2).epsilon(0.03));
}

TEST_CASE("preprocess: stacking, zero imaginary plane, rms round-trip") {
  {
    const PilotImage img = preprocess({{cplx(1.0, 2.0)}});
    REQUIRE(img.data.size() == 2);
    CHECK(img.data[0] * img.rms == doctest::Approx(1.0));
    CHECK(img.data[1] * img.rms == doctest::Approx(2.0));
  }
  {
    const PilotImage img = preprocess({{cplx(3.0, 0.0), cplx(-1.0, 0.0)}});
    CHECK(img.data[2] == 0.0);  // imaginary row all zeros
    CHECK(img.data[3] == 0.0);
  }
  {
    Rng rng(29);
    std::vector<cvec> pilots(3, cvec(5));
    for (auto& k : pilots) {
      for (auto& v : k) v = rng.complex_normal(1e-8);
    }
    const PilotImage img = preprocess(pilots);
    // reconstruct up to the stored rms scalar
    for (int k = 0; k < 3; ++k) {
      for (int m = 0; m < 5; ++m) {
        const double re = img.data[static_cast<std::size_t>((k * 2 + 0) * 5 + m)] * img.rms;
        const double im = img.data[static_cast<std::size_t>((k * 2 + 1) * 5 + m)] * img.rms;
        CHECK(re == doctest::Approx(pilots[static_cast<std::size_t>(k)][static_cast<std::size_t>(m)].real()).epsilon(1e-12));
        CHECK(im == doctest::Approx(pilots[static_cast<std::size_t>(k)][static_cast<std::size_t>(m)].imag()).epsilon(1e-12));
      }
    }
    // unit RMS after normalization
    double ss = 0.0;
    for (double v : img.data) ss += v * v;
    CHECK(std::sqrt(ss / static_cast<double>(img.data.size())) == doctest::Approx(1.0));
  }
}

TEST_CASE("labels: on-grid user, noise independence, restored reproducibility") {
  const DatasetConfig cfg = tiny_dataset();
  const auto book = polarbook::build_codebook(cfg.codebook);

  // a record's labels depend only on the mmWave side
  const SampleRecord rec = generate_record(cfg, book, 0);
  const auto relabeled = label_scene(rec.channels, book);
  REQUIRE(relabeled.size() == rec.labels.size());
  for (std::size_t u = 0; u < relabeled.size(); ++u) {
    CHECK(relabeled[u].angle == rec.labels[u].angle);
    CHECK(relabeled[u].ring == rec.labels[u].ring);
  }
}

TEST_CASE("dataset write/read round-trip preserves float32 images exactly") {
  const DatasetConfig cfg = tiny_dataset();
  const auto book = polarbook::build_codebook(cfg.codebook);
  std::vector<SampleRecord> records;
  for (int i = 0; i < cfg.samples; ++i) records.push_back(generate_record(cfg, book, i));

  const std::string dir = "dataset_test_dir";
  write_dataset(records, cfg, dir);
  const Dataset ds = Dataset::open(dir);
  CHECK(ds.samples() == cfg.samples);
  CHECK(ds.users() == cfg.scene.users);
  CHECK(ds.train_count() == 3);

  for (int s = 0; s < cfg.samples; ++s) {
    CHECK(ds.scene_seed(s) == records[static_cast<std::size_t>(s)].scene_seed);
    for (int u = 0; u < ds.users(); ++u) {
      const auto& img = records[static_cast<std::size_t>(s)].images[static_cast<std::size_t>(u)];
      const float* stored = ds.image(s, u);
      for (std::int64_t i = 0; i < ds.image_numel(); ++i) {
        CHECK(stored[i] == static_cast<float>(img.data[static_cast<std::size_t>(i)]));
      }
      CHECK(ds.image_rms(s, u) == img.rms);
      CHECK(ds.label(s, u).angle == records[static_cast<std::size_t>(s)].labels[static_cast<std::size_t>(u)].angle);
    }
    // channels round-trip bit-exactly (they were quantized before writing)
    const auto ch = ds.channels_for(s);
    for (int u = 0; u < ds.users(); ++u) {
      for (int k = 0; k < cfg.scene.mmwave.subcarriers; ++k) {
        const auto& a = ch.h[static_cast<std::size_t>(u)][static_cast<std::size_t>(k)];
        const auto& b = records[static_cast<std::size_t>(s)].channels.h[static_cast<std::size_t>(u)][static_cast<std::size_t>(k)];
        for (std::size_t m = 0; m < a.size(); ++m) CHECK(a[m] == b[m]);
      }
    }
    // stored channels reproduce stored labels
    const auto relabeled = label_scene(ds.channels_for(s), book);
    for (int u = 0; u < ds.users(); ++u) {
      CHECK(relabeled[static_cast<std::size_t>(u)].angle == ds.label(s, u).angle);
      CHECK(relabeled[static_cast<std::size_t>(u)].ring == ds.label(s, u).ring);
    }
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("dataset loader rejects corrupted inputs naming the field") {
  const DatasetConfig cfg = tiny_dataset(3);
  const auto book = polarbook::build_codebook(cfg.codebook);
  std::vector<SampleRecord> records;
  for (int i = 0; i < cfg.samples; ++i) records.push_back(generate_record(cfg, book, i));
  const std::string dir = "dataset_corrupt_dir";
  write_dataset(records, cfg, dir);

  // truncate the pilot file
  {
    const auto size = std::filesystem::file_size(dir + "/pilots.f32");
    std::filesystem::resize_file(dir + "/pilots.f32", size - 8);
    CHECK_THROWS_WITH_AS(Dataset::open(dir), doctest::Contains("pilots"), io_error);
    std::filesystem::resize_file(dir + "/pilots.f32", size);  // zero-pads back
  }
  // manifest count mismatch
  {
    std::ifstream in(dir + "/manifest.json");
    nlohmann::json manifest;
    in >> manifest;
    in.close();
    manifest["samples"] = 99;
    std::ofstream out(dir + "/manifest.json");
    out << manifest.dump();
    out.close();
    CHECK_THROWS_AS(Dataset::open(dir), io_error);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("streamed generation matches per-record generation") {
  const DatasetConfig cfg = tiny_dataset(5);
  const std::string dir = "dataset_stream_dir";
  generate_dataset(cfg, dir);
  const Dataset ds = Dataset::open(dir);
  const auto book = polarbook::build_codebook(cfg.codebook);
  for (int s = 0; s < cfg.samples; ++s) {
    const SampleRecord rec = generate_record(cfg, book, s);
    CHECK(ds.scene_seed(s) == rec.scene_seed);
    for (int u = 0; u < ds.users(); ++u) {
      CHECK(ds.label(s, u).angle == rec.labels[static_cast<std::size_t>(u)].angle);
      CHECK(ds.label(s, u).ring == rec.labels[static_cast<std::size_t>(u)].ring);
      const float* img = ds.image(s, u);
      for (std::int64_t i = 0; i < ds.image_numel(); ++i) {
        CHECK(img[i] == static_cast<float>(rec.images[static_cast<std::size_t>(u)].data[static_cast<std::size_t>(i)]));
      }
    }
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("config validation catches far-field users and bad split") {
  DatasetConfig cfg = tiny_dataset();
  cfg.scene.sector_r_hi_m = 2.0 * cfg.scene.mmwave.rayleigh_distance_m();
  CHECK_THROWS_AS(cfg.validate(), config_error);

  cfg = tiny_dataset();
  cfg.scene.sector_r_lo_m = 0.5;  // below the codebook minimum ring
  CHECK_THROWS_AS(cfg.validate(), config_error);
}

TEST_CASE("sub-6 congruence: pattern angle tracks the mmWave oracle angle") {
  // LoS-dominant scenes: the sub-6 beam-pattern argmax (mirrored, since the
  // pattern correlates with the conjugate beam) must sit within
  // ceil(M / M_bar) codebook bins of the oracle angle for >= 90% of users.
  SceneConfig scfg = tiny_scene();
  scfg.nlos_extra_loss_db = 20.0;
  DatasetConfig cfg = tiny_dataset();
  cfg.scene = scfg;
  const auto book = polarbook::build_codebook(cfg.codebook);
  const int m_count = cfg.scene.mmwave.antennas;
  const int m_bar = cfg.scene.sub6.antennas;
  const int tol_bins = (m_count + m_bar - 1) / m_bar;

  int ok = 0, total = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const Scene scene = generate_scene(cfg.scene, 1000 + trial);
    const auto channels = build_downlink_channels(scene, cfg.scene);
    const auto labels = label_scene(channels, book);
    for (int u = 0; u < cfg.scene.users; ++u) {
      const cvec h = wavefield::sub6_uplink_channel(scene.sub6_paths[static_cast<std::size_t>(u)],
                                                    0, cfg.scene.sub6, cfg.scene.options);
      const auto pattern = wavefield::beam_pattern(h, cfg.scene.sub6);
      int argmax = 0;
      for (std::size_t i = 0; i < pattern.size(); ++i) {
        if (pattern[i] > pattern[static_cast<std::size_t>(argmax)]) argmax = static_cast<int>(i);
      }
      const double pattern_angle = -(2.0 * argmax - m_bar + 1.0) / m_bar;  // mirrored
      // nearest codebook angle bin
      int nearest = 0;
      double best = 1e9;
      for (int m = 0; m < m_count; ++m) {
        const double diff = std::abs(book.angle_grid()[static_cast<std::size_t>(m)] - pattern_angle);
        if (diff < best) {
          best = diff;
          nearest = m;
        }
      }
      ok += std::abs(nearest - labels[static_cast<std::size_t>(u)].angle) <= tol_bins;
      total += 1;
    }
  }
  CHECK(static_cast<double>(ok) / total >= 0.9);
}

TEST_CASE("co-located users have nearly parallel pilot images before noise") {
  SceneConfig cfg = tiny_scene();
  cfg.cluster_radius_m = 0.0;
  const Scene scene = generate_scene(cfg, 31);
  const auto pilots = receive_sub6_pilots(scene, cfg, 1.0, 0.0, 0);
  std::vector<PilotImage> images;
  for (const auto& per_user : pilots) images.push_back(preprocess(per_user));
  for (std::size_t a = 0; a < images.size(); ++a) {
    for (std::size_t b = a + 1; b < images.size(); ++b) {
      double dot = 0.0, na = 0.0, nb = 0.0;
      for (std::size_t i = 0; i < images[a].data.size(); ++i) {
        dot += images[a].data[i] * images[b].data[i];
        na += images[a].data[i] * images[a].data[i];
        nb += images[b].data[i] * images[b].data[i];
      }
      CHECK(dot / std::sqrt(na * nb) > 0.99);
    }
  }
}

TEST_CASE("adjacent subcarrier layers correlate above the random baseline") {
  SceneConfig cfg = tiny_scene();
  double adjacent = 0.0;
  int pairs = 0;
  for (int trial = 0; trial < 30; ++trial) {
    const Scene scene = generate_scene(cfg, 500 + trial);
    const auto pilots = receive_sub6_pilots(scene, cfg, 1.0, 0.0, 0);
    for (int u = 0; u < cfg.users; ++u) {
      for (int k = 0; k + 1 < cfg.sub6.subcarriers; ++k) {
        const cvec& a = pilots[static_cast<std::size_t>(u)][static_cast<std::size_t>(k)];
        const cvec& b = pilots[static_cast<std::size_t>(u)][static_cast<std::size_t>(k + 1)];
        cplx dot(0.0, 0.0);
        double na = 0.0, nb = 0.0;
        for (std::size_t m = 0; m < a.size(); ++m) {
          dot += a[m] * std::conj(b[m]);
          na += std::norm(a[m]);
          nb += std::norm(b[m]);
        }
        adjacent += std::abs(dot) / std::sqrt(na * nb);
        pairs += 1;
      }
    }
  }
  adjacent /= pairs;
  // random complex vectors of this length correlate around 1/sqrt(M_bar)
  const double random_baseline = 1.0 / std::sqrt(static_cast<double>(cfg.sub6.antennas));
  CHECK(adjacent > random_baseline);
}
