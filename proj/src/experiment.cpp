// SPDX-License-Identifier: Apache-2.0
//
// nmbe: near-field mmWave beam estimation toolkit

#include "nmbe/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <numeric>
#include <set>
#include <sstream>
#include <tuple>

#include "nmbe/rng.hpp"

namespace nmbe::bench {

using datasmith::Dataset;
using gradcore::Tensor;
using polarbook::CodewordIndex;

ExperimentConfig desk_preset() {
  ExperimentConfig c;
  c.dataset.scene.users = 4;
  c.dataset.scene.sector_r_lo_m = 2.0;
  c.dataset.scene.sector_r_hi_m = 10.0;
  c.dataset.scene.sector_sin_lo = -0.8;
  c.dataset.scene.sector_sin_hi = 0.8;
  c.dataset.scene.cluster_radius_m = 2.0;
  c.dataset.scene.scatterer_count = 3;
  c.dataset.scene.los_probability = 1.0;
  c.dataset.scene.nlos_extra_loss_db = 10.0;
  c.dataset.scene.nlos_fading_scale = 1.0;
  c.dataset.scene.bs_offset_m = 0.0;
  c.dataset.scene.mmwave = wavefield::ArrayConfig::make(64, 30e9, 10e6, 16);
  c.dataset.scene.sub6 = wavefield::ArrayConfig::make(16, 5.5e9, 10e6, 8);
  c.dataset.codebook.angle_count = 64;
  c.dataset.codebook.ring_count = 4;
  c.dataset.codebook.min_distance_m = 2.0;
  c.dataset.codebook.array = c.dataset.scene.mmwave;
  c.dataset.uplink_power_dbm = -10.0;
  c.dataset.uplink_noise_dbm = -81.0;
  c.dataset.samples = 20000;
  c.dataset.train_fraction = 0.95;
  c.dataset.seed = 1;
  return c;
}

ExperimentConfig paper_preset() {
  ExperimentConfig c = desk_preset();
  c.dataset.scene.mmwave = wavefield::ArrayConfig::make(256, 30e9, 10e6, 128);
  c.dataset.scene.sub6 = wavefield::ArrayConfig::make(32, 5.5e9, 10e6, 32);
  c.dataset.codebook.angle_count = 256;
  c.dataset.codebook.ring_count = 5;
  // 0.05 x Rayleigh distance of the 256-element array
  c.dataset.codebook.min_distance_m = 0.05 * c.dataset.scene.mmwave.rayleigh_distance_m();
  c.dataset.codebook.array = c.dataset.scene.mmwave;
  c.dataset.scene.sector_r_lo_m = c.dataset.codebook.min_distance_m;
  c.dataset.scene.sector_r_hi_m = 0.25 * c.dataset.scene.mmwave.rayleigh_distance_m();
  c.dataset.scene.cluster_radius_m = 2.0;
  c.training.batch_scenes = 800;
  return c;
}

namespace {

void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key())) {
      throw config_error("unknown config key '" + where + it.key() + "'");
    }
  }
}

template <typename T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

wavefield::ArrayConfig parse_array(const nlohmann::json& j, const wavefield::ArrayConfig& base,
                                   const std::string& where) {
  check_keys(j, {"antennas", "carrier_hz", "bandwidth_hz", "subcarriers"}, where);
  int antennas = base.antennas;
  double carrier = base.carrier_hz, bw = base.bandwidth_hz;
  int k = base.subcarriers;
  maybe(j, "antennas", antennas);
  maybe(j, "carrier_hz", carrier);
  maybe(j, "bandwidth_hz", bw);
  maybe(j, "subcarriers", k);
  return wavefield::ArrayConfig::make(antennas, carrier, bw, k);
}

}  // namespace

nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  const auto& sc = c.dataset.scene;
  j["scene"] = {{"users", sc.users},
                {"sector_r_lo_m", sc.sector_r_lo_m},
                {"sector_r_hi_m", sc.sector_r_hi_m},
                {"sector_sin_lo", sc.sector_sin_lo},
                {"sector_sin_hi", sc.sector_sin_hi},
                {"cluster_radius_m", sc.cluster_radius_m},
                {"scatterer_count", sc.scatterer_count},
                {"los_probability", sc.los_probability},
                {"nlos_extra_loss_db", sc.nlos_extra_loss_db},
                {"nlos_fading_scale", sc.nlos_fading_scale},
                {"bs_offset_m", sc.bs_offset_m}};
  j["mmwave"] = {{"antennas", sc.mmwave.antennas},
                 {"carrier_hz", sc.mmwave.carrier_hz},
                 {"bandwidth_hz", sc.mmwave.bandwidth_hz},
                 {"subcarriers", sc.mmwave.subcarriers}};
  j["sub6"] = {{"antennas", sc.sub6.antennas},
               {"carrier_hz", sc.sub6.carrier_hz},
               {"bandwidth_hz", sc.sub6.bandwidth_hz},
               {"subcarriers", sc.sub6.subcarriers}};
  j["options"] = {
      {"phase_carrier",
       sc.options.phase_carrier == wavefield::ChannelOptions::PhaseCarrier::kCarrier ? "fc" : "f"},
      {"literal_element_distance", sc.options.literal_element_distance},
      {"literal_squint_factor", sc.options.literal_squint_factor}};
  j["codebook"] = {{"ring_count", c.dataset.codebook.ring_count},
                   {"min_distance_m", c.dataset.codebook.min_distance_m}};
  j["power"] = {{"uplink_dbm", c.dataset.uplink_power_dbm},
                {"uplink_noise_dbm", c.dataset.uplink_noise_dbm},
                {"downlink_dbm", c.power.downlink_dbm},
                {"downlink_noise_dbm", c.power.downlink_noise_dbm}};
  j["dataset"] = {{"samples", c.dataset.samples}, {"train_fraction", c.dataset.train_fraction}};
  j["training"] = {{"epochs", c.training.epochs},
                   {"batch_scenes", c.training.batch_scenes},
                   {"learning_rate", c.training.learning_rate},
                   {"plateau_epochs", c.training.plateau_epochs},
                   {"min_improvement", c.training.min_improvement}};
  j["overhead"] = {{"slot_ms", c.overhead.slot_ms}, {"session_s", c.overhead.session_s}};
  j["sweep"] = {{"axis", c.sweep.axis}, {"values", c.sweep.values}, {"schemes", c.sweep.schemes}};
  j["literal_interference"] = c.literal_interference;
  j["seed"] = c.dataset.seed;
  return j;
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
  check_keys(j,
             {"preset", "scene", "mmwave", "sub6", "codebook", "power", "dataset", "training",
              "overhead", "sweep", "options", "literal_interference", "seed"},
             "");
  ExperimentConfig c = desk_preset();
  if (j.contains("preset")) {
    const std::string p = j.at("preset").get<std::string>();
    if (p == "desk") {
      c = desk_preset();
    } else if (p == "paper") {
      c = paper_preset();
    } else {
      throw config_error("unknown preset '" + p + "' (use desk or paper)");
    }
  }
  if (j.contains("mmwave")) {
    c.dataset.scene.mmwave = parse_array(j["mmwave"], c.dataset.scene.mmwave, "mmwave.");
    c.dataset.codebook.angle_count = c.dataset.scene.mmwave.antennas;
  }
  if (j.contains("sub6")) {
    c.dataset.scene.sub6 = parse_array(j["sub6"], c.dataset.scene.sub6, "sub6.");
  }
  if (j.contains("scene")) {
    const auto& s = j["scene"];
    check_keys(s,
               {"users", "sector_r_lo_m", "sector_r_hi_m", "sector_sin_lo", "sector_sin_hi",
                "cluster_radius_m", "scatterer_count", "los_probability", "nlos_extra_loss_db",
                "nlos_fading_scale", "bs_offset_m"},
               "scene.");
    maybe(s, "users", c.dataset.scene.users);
    maybe(s, "sector_r_lo_m", c.dataset.scene.sector_r_lo_m);
    maybe(s, "sector_r_hi_m", c.dataset.scene.sector_r_hi_m);
    maybe(s, "sector_sin_lo", c.dataset.scene.sector_sin_lo);
    maybe(s, "sector_sin_hi", c.dataset.scene.sector_sin_hi);
    maybe(s, "cluster_radius_m", c.dataset.scene.cluster_radius_m);
    maybe(s, "scatterer_count", c.dataset.scene.scatterer_count);
    maybe(s, "los_probability", c.dataset.scene.los_probability);
    maybe(s, "nlos_extra_loss_db", c.dataset.scene.nlos_extra_loss_db);
    maybe(s, "nlos_fading_scale", c.dataset.scene.nlos_fading_scale);
    maybe(s, "bs_offset_m", c.dataset.scene.bs_offset_m);
  }
  if (j.contains("codebook")) {
    const auto& cb = j["codebook"];
    check_keys(cb, {"ring_count", "min_distance_m"}, "codebook.");
    maybe(cb, "ring_count", c.dataset.codebook.ring_count);
    maybe(cb, "min_distance_m", c.dataset.codebook.min_distance_m);
  }
  if (j.contains("power")) {
    const auto& p = j["power"];
    check_keys(p, {"uplink_dbm", "uplink_noise_dbm", "downlink_dbm", "downlink_noise_dbm"},
               "power.");
    maybe(p, "uplink_dbm", c.dataset.uplink_power_dbm);
    maybe(p, "uplink_noise_dbm", c.dataset.uplink_noise_dbm);
    maybe(p, "downlink_dbm", c.power.downlink_dbm);
    maybe(p, "downlink_noise_dbm", c.power.downlink_noise_dbm);
  }
  if (j.contains("dataset")) {
    const auto& d = j["dataset"];
    check_keys(d, {"samples", "train_fraction"}, "dataset.");
    maybe(d, "samples", c.dataset.samples);
    maybe(d, "train_fraction", c.dataset.train_fraction);
  }
  if (j.contains("training")) {
    const auto& t = j["training"];
    check_keys(t, {"epochs", "batch_scenes", "learning_rate", "plateau_epochs", "min_improvement"},
               "training.");
    maybe(t, "epochs", c.training.epochs);
    maybe(t, "batch_scenes", c.training.batch_scenes);
    maybe(t, "learning_rate", c.training.learning_rate);
    maybe(t, "plateau_epochs", c.training.plateau_epochs);
    maybe(t, "min_improvement", c.training.min_improvement);
  }
  if (j.contains("overhead")) {
    const auto& o = j["overhead"];
    check_keys(o, {"slot_ms", "session_s"}, "overhead.");
    maybe(o, "slot_ms", c.overhead.slot_ms);
    maybe(o, "session_s", c.overhead.session_s);
  }
  if (j.contains("options")) {
    const auto& o = j["options"];
    check_keys(o, {"phase_carrier", "literal_element_distance", "literal_squint_factor"},
               "options.");
    if (o.contains("phase_carrier")) {
      const std::string pc = o.at("phase_carrier").get<std::string>();
      if (pc != "f" && pc != "fc") throw config_error("options.phase_carrier must be 'f' or 'fc'");
      c.dataset.scene.options.phase_carrier =
          pc == "fc" ? wavefield::ChannelOptions::PhaseCarrier::kCarrier
                     : wavefield::ChannelOptions::PhaseCarrier::kSubcarrier;
    }
    maybe(o, "literal_element_distance", c.dataset.scene.options.literal_element_distance);
    maybe(o, "literal_squint_factor", c.dataset.scene.options.literal_squint_factor);
  }
  if (j.contains("sweep")) {
    const auto& s = j["sweep"];
    check_keys(s, {"axis", "values", "schemes"}, "sweep.");
    maybe(s, "axis", c.sweep.axis);
    maybe(s, "values", c.sweep.values);
    maybe(s, "schemes", c.sweep.schemes);
    const std::set<std::string> axes = {"uplink_power_dbm", "downlink_power_dbm", "sub6_antennas",
                                        "bs_offset_m"};
    if (!axes.count(c.sweep.axis)) throw config_error("sweep.axis '" + c.sweep.axis + "' unknown");
    const std::set<std::string> schemes = {"proposed", "exhaustive", "fcnn", "cnn"};
    for (const auto& sch : c.sweep.schemes) {
      if (!schemes.count(sch)) throw config_error("sweep.schemes entry '" + sch + "' unknown");
    }
  }
  maybe(j, "literal_interference", c.literal_interference);
  std::uint64_t seed = c.dataset.seed;
  maybe(j, "seed", seed);
  c.dataset.seed = seed;
  c.training.seed = seed;

  c.dataset.codebook.angle_count = c.dataset.scene.mmwave.antennas;
  c.dataset.codebook.array = c.dataset.scene.mmwave;
  c.dataset.codebook.options = c.dataset.scene.options;
  c.dataset.validate();
  return c;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw config_error("malformed JSON in " + path + ": " + e.what());
  }
  return config_from_json(j);
}

std::string config_hash(const nlohmann::json& j) {
  const std::string dump = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : dump) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

std::string sweep_csv_header() { return "axis,axis_value," + airlink::rate_csv_header(); }

std::string sweep_csv_row(const SweepRow& r) {
  std::ostringstream os;
  os.precision(17);
  os << r.axis << "," << r.axis_value << "," << r.scheme << "," << r.uplink_dbm << ","
     << r.downlink_dbm << "," << r.r_sum << "," << r.r_eff << "," << r.acc << "," << r.acc_angle
     << "," << r.acc_dist;
  return os.str();
}

namespace {

struct LoadedNets {
  std::unique_ptr<nmbenet::BeamNet> angle, dist, fcnn, cnn;
};

LoadedNets load_nets(const SweepSettings& sweep, const CheckpointPaths& ck) {
  LoadedNets nets;
  const bool want_proposed =
      std::count(sweep.schemes.begin(), sweep.schemes.end(), "proposed") > 0;
  const bool want_fcnn = std::count(sweep.schemes.begin(), sweep.schemes.end(), "fcnn") > 0;
  const bool want_cnn = std::count(sweep.schemes.begin(), sweep.schemes.end(), "cnn") > 0;
  if (want_proposed) {
    if (ck.angle.empty() || ck.dist.empty()) {
      throw io_error("proposed scheme requires angle and distance checkpoints");
    }
    nets.angle = std::make_unique<nmbenet::BeamNet>(nmbenet::BeamNet::load(ck.angle));
    nets.dist = std::make_unique<nmbenet::BeamNet>(nmbenet::BeamNet::load(ck.dist));
  }
  if (want_fcnn) {
    if (ck.fcnn.empty()) throw io_error("fcnn scheme requires a checkpoint");
    nets.fcnn = std::make_unique<nmbenet::BeamNet>(nmbenet::BeamNet::load(ck.fcnn));
  }
  if (want_cnn) {
    if (ck.cnn.empty()) throw io_error("cnn scheme requires a checkpoint");
    nets.cnn = std::make_unique<nmbenet::BeamNet>(nmbenet::BeamNet::load(ck.cnn));
  }
  return nets;
}

/// Pilot images for the eval split, either stored or re-synthesized at a
/// given uplink power / BS offset with per-axis-value noise seeds.
Tensor eval_images(const Dataset& ds, const ExperimentConfig& cfg, int first, int count,
                   bool redraw, double uplink_dbm, double bs_offset_m, std::uint64_t salt) {
  if (!redraw) return nmbenet::batch_images(ds, first, count);
  datasmith::SceneConfig scene_cfg = cfg.dataset.scene;
  scene_cfg.bs_offset_m = bs_offset_m;
  const double p_w = dbm_to_watts(uplink_dbm);
  const double n_w = dbm_to_watts(cfg.dataset.uplink_noise_dbm);
  const int users = ds.users();
  Tensor batch({count * users, ds.pilot_subcarriers(), 2, ds.pilot_antennas()});
  const std::int64_t elems = ds.image_numel();
  parallel_for(count, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t s = lo; s < hi; ++s) {
      const std::uint64_t seed = ds.scene_seed(first + static_cast<int>(s));
      const datasmith::Scene scene = datasmith::generate_scene(scene_cfg, seed);
      const auto pilots =
          datasmith::receive_sub6_pilots(scene, scene_cfg, p_w, n_w, mix_seed(seed, salt));
      for (int u = 0; u < users; ++u) {
        const datasmith::PilotImage img = datasmith::preprocess(pilots[static_cast<std::size_t>(u)]);
        std::copy(img.data.begin(), img.data.end(),
                  batch.data.begin() + (s * users + u) * elems);
      }
    }
  });
  return batch;
}

}  // namespace

std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg, const Dataset& ds,
                                const CheckpointPaths& checkpoints) {
  const auto book = polarbook::build_codebook(cfg.dataset.codebook);
  LoadedNets nets = load_nets(cfg.sweep, checkpoints);

  const int users = ds.users();
  const int first_eval = ds.train_count();
  const int eval_count = ds.val_count();
  if (eval_count < 1) throw config_error("sweep: dataset has no validation split");

  // preload the eval split's channels (read once, shared by all points)
  std::vector<airlink::UserChannels> channels(static_cast<std::size_t>(eval_count));
  for (int s = 0; s < eval_count; ++s) channels[static_cast<std::size_t>(s)] = ds.channels_for(first_eval + s);

  std::vector<CodewordIndex> truth;
  truth.reserve(static_cast<std::size_t>(eval_count) * users);
  for (int s = 0; s < eval_count; ++s) {
    for (int u = 0; u < users; ++u) truth.push_back(ds.label(first_eval + s, u));
  }

  const double slot_s = cfg.overhead.slot_ms * 1e-3;
  const std::int64_t exhaustive_slots = static_cast<std::int64_t>(book.size());

  std::vector<SweepRow> rows;
  for (std::size_t vi = 0; vi < cfg.sweep.values.size(); ++vi) {
    const double value = cfg.sweep.values[vi];
    const bool uplink_axis = cfg.sweep.axis == "uplink_power_dbm";
    const bool downlink_axis = cfg.sweep.axis == "downlink_power_dbm";
    const bool offset_axis = cfg.sweep.axis == "bs_offset_m";
    const double uplink_dbm = uplink_axis ? value : cfg.dataset.uplink_power_dbm;
    const double downlink_dbm = downlink_axis ? value : cfg.power.downlink_dbm;
    const double bs_offset = offset_axis ? value : cfg.dataset.scene.bs_offset_m;
    const bool redraw = uplink_axis || offset_axis;

    airlink::PowerConfig power;
    power.downlink_power_w = dbm_to_watts(downlink_dbm);
    power.downlink_noise_w = dbm_to_watts(cfg.power.downlink_noise_dbm);
    power.literal_interference = cfg.literal_interference;

    // predictions per learned scheme, in eval-chunk batches
    std::map<std::string, std::vector<CodewordIndex>> selections;
    for (const auto& scheme : cfg.sweep.schemes) {
      selections[scheme] = {};
      selections[scheme].reserve(static_cast<std::size_t>(eval_count) * users);
    }
    const int chunk = std::max(1, 2048 / std::max(1, users));
    for (int base = 0; base < eval_count; base += chunk) {
      const int n = std::min(chunk, eval_count - base);
      Tensor images;
      const bool need_images = nets.angle || nets.fcnn || nets.cnn;
      if (need_images) {
        images = eval_images(ds, cfg, first_eval + base, n, redraw, uplink_dbm, bs_offset,
                             0x53574550ULL + vi);
      }
      for (const auto& scheme : cfg.sweep.schemes) {
        auto& out = selections[scheme];
        if (scheme == "exhaustive") {
          for (int s = 0; s < n; ++s) {
            for (int u = 0; u < users; ++u) out.push_back(ds.label(first_eval + base + s, u));
          }
        } else if (scheme == "proposed") {
          const auto pred = nmbenet::predict_pair(*nets.angle, *nets.dist, images, users);
          out.insert(out.end(), pred.begin(), pred.end());
        } else if (scheme == "fcnn") {
          const auto pred = nmbenet::predict_joint(*nets.fcnn, images, users, book.angle_count());
          out.insert(out.end(), pred.begin(), pred.end());
        } else if (scheme == "cnn") {
          const auto pred = nmbenet::predict_joint(*nets.cnn, images, users, book.angle_count());
          out.insert(out.end(), pred.begin(), pred.end());
        }
      }
    }

    for (const auto& scheme : cfg.sweep.schemes) {
      const auto& sel = selections[scheme];
      const auto acc = airlink::estimation_accuracy(sel, truth);
      const std::int64_t slots = scheme == "exhaustive" ? exhaustive_slots : 0;

      std::vector<double> r_sum_per_scene(static_cast<std::size_t>(eval_count));
      parallel_for(eval_count, [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t s = lo; s < hi; ++s) {
          std::vector<int> flat(static_cast<std::size_t>(users));
          for (int u = 0; u < users; ++u) {
            flat[static_cast<std::size_t>(u)] =
                book.flat_index(sel[static_cast<std::size_t>(s) * users + u]);
          }
          const auto rep = airlink::evaluate_selection(channels[static_cast<std::size_t>(s)], flat,
                                                       book, power, slots, slot_s,
                                                       cfg.overhead.session_s);
          r_sum_per_scene[static_cast<std::size_t>(s)] = rep.sum_rate;
        }
      });
      double mean_r_sum = 0.0;
      for (double v : r_sum_per_scene) mean_r_sum += v;
      mean_r_sum /= static_cast<double>(eval_count);

      SweepRow row;
      row.axis = cfg.sweep.axis;
      row.axis_value = value;
      row.scheme = scheme;
      row.uplink_dbm = uplink_dbm;
      row.downlink_dbm = downlink_dbm;
      row.r_sum = mean_r_sum;
      row.r_eff = airlink::effective_rate(mean_r_sum, slots, slot_s, cfg.overhead.session_s);
      row.acc = acc.overall;
      row.acc_angle = acc.angle;
      row.acc_dist = acc.distance;
      rows.push_back(row);
    }
  }
  return rows;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw usage_error("spearman: need two equal-length series of length >= 2");
  }
  const auto ranks = [](const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(n);
    std::size_t i = 0;
    while (i < n) {
      std::size_t j = i;
      while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= static_cast<double>(rx.size());
  my /= static_cast<double>(ry.size());
  double num = 0.0, dx = 0.0, dy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    num += (rx[i] - mx) * (ry[i] - my);
    dx += (rx[i] - mx) * (rx[i] - mx);
    dy += (ry[i] - my) * (ry[i] - my);
  }
  if (dx == 0.0 || dy == 0.0) return 0.0;
  return num / std::sqrt(dx * dy);
}

std::vector<SweepRow> read_sweep_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open sweep CSV: " + path);
  std::string line;
  if (!std::getline(in, line)) throw io_error("empty sweep CSV: " + path);
  if (line != sweep_csv_header()) {
    throw io_error("sweep CSV header drift in " + path + ": got '" + line + "'");
  }
  std::vector<SweepRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (fields.size() != 10) {
      throw io_error("sweep CSV row " + std::to_string(line_no) + " in " + path + " has " +
                     std::to_string(fields.size()) + " fields, expected 10");
    }
    try {
      SweepRow r;
      r.axis = fields[0];
      r.axis_value = std::stod(fields[1]);
      r.scheme = fields[2];
      r.uplink_dbm = std::stod(fields[3]);
      r.downlink_dbm = std::stod(fields[4]);
      r.r_sum = std::stod(fields[5]);
      r.r_eff = std::stod(fields[6]);
      r.acc = std::stod(fields[7]);
      r.acc_angle = std::stod(fields[8]);
      r.acc_dist = std::stod(fields[9]);
      rows.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw io_error("sweep CSV row " + std::to_string(line_no) + " in " + path +
                     " is malformed: " + e.what());
    }
  }
  if (rows.empty()) throw io_error("sweep CSV has no data rows: " + path);
  return rows;
}

namespace {

struct Agg {
  std::vector<double> values;
  double mean() const {
    double m = 0.0;
    for (double v : values) m += v;
    return m / static_cast<double>(values.size());
  }
  double stddev() const {
    if (values.size() < 2) return 0.0;
    const double m = mean();
    double s = 0.0;
    for (double v : values) s += (v - m) * (v - m);
    return std::sqrt(s / static_cast<double>(values.size() - 1));
  }
};

}  // namespace

void write_report(const std::vector<std::vector<SweepRow>>& sweeps, const std::string& out_dir) {
  if (sweeps.empty()) throw io_error("report: no sweep inputs");
  std::filesystem::create_directories(out_dir);

  // (axis, value, scheme, metric) -> values across input sweeps
  using Key = std::tuple<std::string, double, std::string>;
  std::map<Key, std::map<std::string, Agg>> table;
  std::set<std::string> axes;
  for (const auto& sweep : sweeps) {
    for (const auto& r : sweep) {
      axes.insert(r.axis);
      auto& cell = table[{r.axis, r.axis_value, r.scheme}];
      cell["acc"].values.push_back(r.acc);
      cell["acc_angle"].values.push_back(r.acc_angle);
      cell["acc_dist"].values.push_back(r.acc_dist);
      cell["r_sum"].values.push_back(r.r_sum);
      cell["r_eff"].values.push_back(r.r_eff);
    }
  }

  std::ofstream md(out_dir + "/summary.md");
  if (!md) throw io_error("report: cannot write " + out_dir + "/summary.md");
  md << "# Sweep report\n\n";
  md << "Inputs: " << sweeps.size() << " sweep file(s).\n\n";

  for (const auto& axis : axes) {
    std::set<double> values;
    std::set<std::string> schemes;
    for (const auto& [key, cell] : table) {
      if (std::get<0>(key) != axis) continue;
      values.insert(std::get<1>(key));
      schemes.insert(std::get<2>(key));
    }
    for (const std::string metric : {"acc", "acc_angle", "acc_dist", "r_sum", "r_eff"}) {
      std::ofstream fig(out_dir + "/fig_" + axis + "_" + metric + ".csv");
      if (!fig) throw io_error("report: cannot write figure data for " + axis);
      fig << "axis_value";
      for (const auto& s : schemes) fig << "," << s << "_mean," << s << "_std";
      fig << "\n";
      fig.precision(12);
      for (double v : values) {
        fig << v;
        for (const auto& s : schemes) {
          auto it = table.find({axis, v, s});
          if (it == table.end() || !it->second.count(metric)) {
            fig << ",,";
          } else {
            fig << "," << it->second.at(metric).mean() << "," << it->second.at(metric).stddev();
          }
        }
        fig << "\n";
      }
    }

    md << "## Axis: " << axis << "\n\n";
    md << "| value | scheme | acc | acc_angle | acc_dist | r_sum | r_eff |\n";
    md << "|---|---|---|---|---|---|---|\n";
    md.precision(6);
    for (double v : values) {
      for (const auto& s : schemes) {
        auto it = table.find({axis, v, s});
        if (it == table.end()) continue;
        const auto& cell = it->second;
        md << "| " << v << " | " << s << " | " << cell.at("acc").mean() << " | "
           << cell.at("acc_angle").mean() << " | " << cell.at("acc_dist").mean() << " | "
           << cell.at("r_sum").mean() << " | " << cell.at("r_eff").mean() << " |\n";
      }
    }
    md << "\n";

    // qualitative trend checklist
    md << "### Trend checks\n\n";
    for (const auto& s : schemes) {
      std::vector<double> xs, accs;
      for (double v : values) {
        auto it = table.find({axis, v, s});
        if (it == table.end()) continue;
        xs.push_back(v);
        accs.push_back(it->second.at("acc").mean());
      }
      if (xs.size() >= 2) {
        md << "- " << s << ": spearman(acc vs " << axis << ") = " << spearman(xs, accs) << "\n";
      }
    }
    if (schemes.count("proposed") && schemes.count("exhaustive")) {
      bool eff_win = true, sum_bound = true;
      for (double v : values) {
        auto itp = table.find({axis, v, "proposed"});
        auto ite = table.find({axis, v, "exhaustive"});
        if (itp == table.end() || ite == table.end()) continue;
        eff_win = eff_win && itp->second.at("r_eff").mean() > ite->second.at("r_eff").mean();
        sum_bound = sum_bound && ite->second.at("r_sum").mean() >= itp->second.at("r_sum").mean();
      }
      md << "- effective rate: proposed > exhaustive at every point: " << (eff_win ? "yes" : "no")
         << "\n";
      md << "- sum rate: exhaustive >= proposed at every point: " << (sum_bound ? "yes" : "no")
         << "\n";
    }
    for (const char* base : {"fcnn", "cnn"}) {
      if (schemes.count("proposed") && schemes.count(base)) {
        double margin = 0.0;
        int n = 0;
        for (double v : values) {
          auto itp = table.find({axis, v, "proposed"});
          auto itb = table.find({axis, v, std::string(base)});
          if (itp == table.end() || itb == table.end()) continue;
          margin += itp->second.at("acc").mean() - itb->second.at("acc").mean();
          n += 1;
        }
        if (n > 0) {
          md << "- mean accuracy margin proposed - " << base << ": " << margin / n << "\n";
        }
      }
    }
    md << "\n";
  }
}

}  // namespace nmbe::bench
