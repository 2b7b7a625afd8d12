// SPDX-License-Identifier: Apache-2.0
//
// nmbe: near-field mmWave beam estimation toolkit

#ifndef NMBE_EXPERIMENT_HPP
#define NMBE_EXPERIMENT_HPP

#include <string>
#include <vector>

#include <json.hpp>

#include "nmbe/datasmith.hpp"
#include "nmbe/nmbenet.hpp"

namespace nmbe::bench {

struct PowerSettings {
  double downlink_dbm = 2.0;
  double downlink_noise_dbm = -81.0;
};

struct OverheadSettings {
  double slot_ms = 0.1;    // per pilot symbol
  double session_s = 0.2;  // T_t
};

struct SweepSettings {
  std::string axis = "uplink_power_dbm";  // | downlink_power_dbm | sub6_antennas | bs_offset_m
  std::vector<double> values = {-20.0, -15.0, -10.0, -5.0, 0.0};
  std::vector<std::string> schemes = {"proposed", "exhaustive", "fcnn", "cnn"};
};

struct ExperimentConfig {
  datasmith::DatasetConfig dataset;  // scene, codebook, uplink power, sizes, seed
  PowerSettings power;
  OverheadSettings overhead;
  nmbenet::TrainingConfig training;
  SweepSettings sweep;
  bool literal_interference = false;
};

/// M=64, S=4, M_bar=16, K_bar=8, K=16, U=4, 20k scenes.
ExperimentConfig desk_preset();
/// Table-scale: M=256, S=5, M_bar=32, K_bar=32, K=128.
ExperimentConfig paper_preset();

nlohmann::json config_to_json(const ExperimentConfig& c);
/// Strict parse: starts from the named preset (default "desk"), overrides
/// with present keys, rejects unknown keys with a field-naming config_error.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config_file(const std::string& path);

/// FNV-1a over the canonical JSON dump; identifies runs in provenance rows.
std::string config_hash(const nlohmann::json& j);

/// Per-(scheme, axis value) evaluation over the validation split.
struct SweepRow {
  std::string axis;
  double axis_value = 0.0;
  std::string scheme;
  double uplink_dbm = 0.0;
  double downlink_dbm = 0.0;
  double r_sum = 0.0;   // mean over evaluated scenes
  double r_eff = 0.0;
  double acc = 0.0;
  double acc_angle = 0.0;
  double acc_dist = 0.0;
};

std::string sweep_csv_header();
std::string sweep_csv_row(const SweepRow& row);

struct CheckpointPaths {
  std::string angle;
  std::string dist;
  std::string fcnn;  // optional, empty when unused
  std::string cnn;
};

/// Runs the configured sweep. Checkpoints are loaded per scheme; schemes
/// without a checkpoint path raise io_error. Rows come out in (value,
/// scheme) order, deterministic.
std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg, const datasmith::Dataset& ds,
                                const CheckpointPaths& checkpoints);

/// Spearman rank correlation (average ranks for ties).
double spearman(const std::vector<double>& x, const std::vector<double>& y);

/// Parses a sweep CSV (schema above); throws io_error on drift.
std::vector<SweepRow> read_sweep_csv(const std::string& path);

/// Figure data + markdown summary from one or more sweep CSVs; multi-seed
/// inputs are merged as mean +/- stddev per (scheme, axis value).
void write_report(const std::vector<std::vector<SweepRow>>& sweeps, const std::string& out_dir);

}  // namespace nmbe::bench

#endif  // NMBE_EXPERIMENT_HPP
