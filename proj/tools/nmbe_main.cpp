// SPDX-License-Identifier: Apache-2.0
//
// nmbe: near-field mmWave beam estimation toolkit
//
// Command-line front end: dataset generation, training, evaluation sweeps,
// and report rendering. Exit codes: 0 ok, 2 bad configuration, 3 missing
// artifact, 4 malformed data.

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "nmbe/experiment.hpp"

namespace fs = std::filesystem;
using namespace nmbe;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitMissing = 3;
constexpr int kExitData = 4;

void echo_config(const bench::ExperimentConfig& cfg, const std::string& out_dir) {
  fs::create_directories(out_dir);
  std::ofstream out(out_dir + "/config.json");
  if (!out) throw io_error("cannot write config echo to " + out_dir);
  nlohmann::json j = bench::config_to_json(cfg);
  j["config_hash"] = bench::config_hash(bench::config_to_json(cfg));
  out << j.dump(2) << "\n";
}

bench::ExperimentConfig load_with_seed(const std::string& config_path, std::uint64_t seed,
                                       bool seed_set) {
  bench::ExperimentConfig cfg = bench::load_config_file(config_path);
  if (seed_set) {
    cfg.dataset.seed = seed;
    cfg.training.seed = seed;
  }
  return cfg;
}

void write_history(const std::vector<nmbenet::EpochRow>& history, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write history CSV: " + path);
  out << nmbenet::history_csv_header() << "\n";
  for (const auto& row : history) out << nmbenet::history_csv_row(row) << "\n";
}

int cmd_gen_dataset(const std::string& config_path, const std::string& out_dir, std::uint64_t seed,
                    bool seed_set) {
  const bench::ExperimentConfig cfg = load_with_seed(config_path, seed, seed_set);
  echo_config(cfg, out_dir);
  const auto t0 = std::chrono::steady_clock::now();
  const double entropy = datasmith::generate_dataset(cfg.dataset, out_dir, [](int done, int total) {
    if (done % 2048 == 0 || done == total) {
      std::cout << "\rgenerated " << done << "/" << total << std::flush;
    }
  });
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << "\rdataset:  " << cfg.dataset.samples << " samples x " << cfg.dataset.scene.users
            << " users -> " << out_dir << "\n"
            << "labels:   histogram entropy " << entropy << " bits (max "
            << std::log2(static_cast<double>(cfg.dataset.codebook.angle_count) *
                         cfg.dataset.codebook.ring_count)
            << ")\n"
            << "elapsed:  " << secs << " s\n";
  return kExitOk;
}

bool checkpoint_complete(const std::string& dir) { return fs::exists(dir + "/manifest.json"); }

int cmd_train(const std::string& config_path, const std::string& dataset_dir,
              const std::string& out_dir, std::uint64_t seed, bool seed_set, bool baselines,
              bool resume) {
  const bench::ExperimentConfig cfg = load_with_seed(config_path, seed, seed_set);
  if (!fs::exists(dataset_dir + "/manifest.json")) {
    std::cerr << "error: dataset not found at " << dataset_dir << "\n";
    return kExitMissing;
  }
  const datasmith::Dataset ds = datasmith::Dataset::open(dataset_dir);
  echo_config(cfg, out_dir);

  nlohmann::json meta;
  meta["config_hash"] = bench::config_hash(bench::config_to_json(cfg));
  meta["seed"] = cfg.training.seed;

  if (resume && checkpoint_complete(out_dir + "/angle")) {
    // completed runs are idempotent; a mismatched architecture is refused
    nmbenet::Architecture probe;
    probe.kind = nmbenet::ModelKind::kNmbe;
    probe.pilot_subcarriers = ds.pilot_subcarriers();
    probe.pilot_antennas = ds.pilot_antennas();
    probe.num_classes = ds.config().codebook.angle_count;
    try {
      nmbenet::BeamNet::load(out_dir + "/angle", probe.hash());
    } catch (const io_error& e) {
      std::cerr << "error: refusing resume: " << e.what() << "\n";
      return kExitConfig;
    }
    std::cout << "checkpoints already complete in " << out_dir << "\n";
    return kExitOk;
  }

  const auto t0 = std::chrono::steady_clock::now();
  nmbenet::PairTrainResult pair = nmbenet::train_pair(ds, cfg.training);
  pair.angle.save(out_dir + "/angle", nullptr, meta);
  pair.dist.save(out_dir + "/dist", nullptr, meta);
  write_history(pair.history, out_dir + "/history.csv");
  std::cout << "trained dual networks: final val acc overall = "
            << pair.history.back().val_acc_overall << " (angle " << pair.history.back().val_acc_angle
            << ", distance " << pair.history.back().val_acc_dist << ")\n";

  if (baselines) {
    nmbenet::SingleTrainResult fcnn = nmbenet::train_single(ds, cfg.training, nmbenet::ModelKind::kFcnn);
    fcnn.net.save(out_dir + "/fcnn", nullptr, meta);
    write_history(fcnn.history, out_dir + "/history_fcnn.csv");
    std::cout << "trained fcnn baseline:  final val acc = " << fcnn.history.back().val_acc_overall
              << "\n";
    nmbenet::SingleTrainResult cnn = nmbenet::train_single(ds, cfg.training, nmbenet::ModelKind::kCnn);
    cnn.net.save(out_dir + "/cnn", nullptr, meta);
    write_history(cnn.history, out_dir + "/history_cnn.csv");
    std::cout << "trained cnn baseline:   final val acc = " << cnn.history.back().val_acc_overall
              << "\n";
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << "elapsed: " << secs << " s\n";
  return kExitOk;
}

bench::CheckpointPaths resolve_checkpoints(const std::string& dir,
                                           const std::vector<std::string>& schemes) {
  bench::CheckpointPaths ck;
  auto want = [&](const char* s) {
    return std::find(schemes.begin(), schemes.end(), s) != schemes.end();
  };
  if (want("proposed")) {
    ck.angle = dir + "/angle";
    ck.dist = dir + "/dist";
  }
  if (want("fcnn")) ck.fcnn = dir + "/fcnn";
  if (want("cnn")) ck.cnn = dir + "/cnn";
  for (const std::string& p : {ck.angle, ck.dist, ck.fcnn, ck.cnn}) {
    if (!p.empty() && !checkpoint_complete(p)) {
      throw io_error("checkpoint missing: " + p);
    }
  }
  return ck;
}

void write_sweep_csv(const std::vector<bench::SweepRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write sweep CSV: " + path);
  out << bench::sweep_csv_header() << "\n";
  for (const auto& row : rows) out << bench::sweep_csv_row(row) << "\n";
}

int cmd_sweep(const std::string& config_path, const std::string& dataset_dir,
              const std::string& checkpoint_dir, const std::string& out_dir, std::uint64_t seed,
              bool seed_set, bool retrain_per_point) {
  bench::ExperimentConfig cfg = load_with_seed(config_path, seed, seed_set);
  echo_config(cfg, out_dir);

  std::vector<bench::SweepRow> rows;
  if (cfg.sweep.axis == "sub6_antennas") {
    // architecture changes per point: per-value dataset and checkpoint dirs
    for (double value : cfg.sweep.values) {
      const std::string sub = "/m" + std::to_string(static_cast<int>(value));
      bench::ExperimentConfig point = cfg;
      point.dataset.scene.sub6 = wavefield::ArrayConfig::make(
          static_cast<int>(value), cfg.dataset.scene.sub6.carrier_hz,
          cfg.dataset.scene.sub6.bandwidth_hz, cfg.dataset.scene.sub6.subcarriers);
      point.sweep.values = {value};
      if (!fs::exists(dataset_dir + sub + "/manifest.json")) {
        std::cerr << "error: dataset not found at " << dataset_dir + sub << "\n";
        return kExitMissing;
      }
      const datasmith::Dataset ds = datasmith::Dataset::open(dataset_dir + sub);
      const auto ck = resolve_checkpoints(checkpoint_dir + sub, point.sweep.schemes);
      const auto part = bench::run_sweep(point, ds, ck);
      rows.insert(rows.end(), part.begin(), part.end());
    }
  } else if (retrain_per_point && cfg.sweep.axis == "uplink_power_dbm") {
    for (double value : cfg.sweep.values) {
      bench::ExperimentConfig point = cfg;
      point.dataset.uplink_power_dbm = value;
      point.sweep.values = {value};
      const std::string pdir = out_dir + "/retrain_" + std::to_string(value);
      if (!fs::exists(pdir + "/dataset/manifest.json")) {
        datasmith::generate_dataset(point.dataset, pdir + "/dataset");
      }
      const datasmith::Dataset ds = datasmith::Dataset::open(pdir + "/dataset");
      nlohmann::json meta;
      meta["config_hash"] = bench::config_hash(bench::config_to_json(point));
      if (!checkpoint_complete(pdir + "/angle")) {
        nmbenet::PairTrainResult pair = nmbenet::train_pair(ds, point.training);
        pair.angle.save(pdir + "/angle", nullptr, meta);
        pair.dist.save(pdir + "/dist", nullptr, meta);
        write_history(pair.history, pdir + "/history.csv");
      }
      auto want = [&](const char* s) {
        return std::find(point.sweep.schemes.begin(), point.sweep.schemes.end(), s) !=
               point.sweep.schemes.end();
      };
      if (want("fcnn") && !checkpoint_complete(pdir + "/fcnn")) {
        nmbenet::train_single(ds, point.training, nmbenet::ModelKind::kFcnn)
            .net.save(pdir + "/fcnn", nullptr, meta);
      }
      if (want("cnn") && !checkpoint_complete(pdir + "/cnn")) {
        nmbenet::train_single(ds, point.training, nmbenet::ModelKind::kCnn)
            .net.save(pdir + "/cnn", nullptr, meta);
      }
      const auto ck = resolve_checkpoints(pdir, point.sweep.schemes);
      const auto part = bench::run_sweep(point, ds, ck);
      rows.insert(rows.end(), part.begin(), part.end());
    }
  } else {
    if (!fs::exists(dataset_dir + "/manifest.json")) {
      std::cerr << "error: dataset not found at " << dataset_dir << "\n";
      return kExitMissing;
    }
    const datasmith::Dataset ds = datasmith::Dataset::open(dataset_dir);
    const auto ck = resolve_checkpoints(checkpoint_dir, cfg.sweep.schemes);
    rows = bench::run_sweep(cfg, ds, ck);
  }

  write_sweep_csv(rows, out_dir + "/sweep.csv");
  std::cout << "sweep: " << rows.size() << " rows (" << cfg.sweep.values.size() << " values x "
            << cfg.sweep.schemes.size() << " schemes) -> " << out_dir << "/sweep.csv\n";
  return kExitOk;
}

int cmd_report(const std::vector<std::string>& csv_paths, const std::string& out_dir) {
  std::vector<std::vector<bench::SweepRow>> sweeps;
  for (const auto& path : csv_paths) {
    sweeps.push_back(bench::read_sweep_csv(path));
  }
  bench::write_report(sweeps, out_dir);
  std::cout << "report -> " << out_dir << "/summary.md\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"near-field mmWave beam training bench"};
  app.require_subcommand(1);

  std::string config_path, dataset_dir, checkpoint_dir, out_dir = "out";
  std::uint64_t seed = 0;
  bool baselines = false, resume = false, retrain = false;
  std::vector<std::string> csv_paths;

  auto* gen = app.add_subcommand("gen-dataset", "generate a dataset directory");
  gen->add_option("--config", config_path, "experiment config JSON")->required();
  gen->add_option("--out", out_dir, "output directory");
  auto* gen_seed = gen->add_option("--seed", seed, "master seed override");

  auto* train = app.add_subcommand("train", "train the dual networks (and baselines)");
  train->add_option("--config", config_path, "experiment config JSON")->required();
  train->add_option("--dataset", dataset_dir, "dataset directory")->required();
  train->add_option("--out", out_dir, "output directory");
  auto* train_seed = train->add_option("--seed", seed, "training seed override");
  train->add_flag("--baselines", baselines, "also train the fcnn/cnn baselines");
  train->add_flag("--resume", resume, "accept completed checkpoints (refuses arch mismatch)");

  auto* sweep = app.add_subcommand("sweep", "evaluate schemes over the configured axis");
  sweep->add_option("--config", config_path, "experiment config JSON")->required();
  sweep->add_option("--dataset", dataset_dir, "dataset directory")->required();
  sweep->add_option("--checkpoints", checkpoint_dir, "checkpoint directory")->required();
  sweep->add_option("--out", out_dir, "output directory");
  auto* sweep_seed = sweep->add_option("--seed", seed, "seed override");
  sweep->add_flag("--retrain-per-point", retrain, "retrain at each uplink power value");

  auto* report = app.add_subcommand("report", "render figure data + summary from sweep CSVs");
  report->add_option("csvs", csv_paths, "sweep CSV files")->required();
  report->add_option("--out", out_dir, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_dataset(config_path, out_dir, seed, !gen_seed->empty());
    if (train->parsed()) {
      return cmd_train(config_path, dataset_dir, out_dir, seed, !train_seed->empty(), baselines,
                       resume);
    }
    if (sweep->parsed()) {
      return cmd_sweep(config_path, dataset_dir, checkpoint_dir, out_dir, seed,
                       !sweep_seed->empty(), retrain);
    }
    if (report->parsed()) return cmd_report(csv_paths, out_dir);
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const io_error& e) {
    std::cerr << "artifact error: " << e.what() << "\n";
    return report->parsed() ? kExitData : kExitMissing;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitOk;
}
