// SPDX-License-Identifier: Apache-2.0
//
// nmbe: near-field mmWave beam estimation toolkit

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "nmbe/experiment.hpp"

using namespace nmbe;
using namespace nmbe::bench;

TEST_CASE("presets: desk matches the advertised sizes") {
  const ExperimentConfig desk = desk_preset();
  CHECK(desk.dataset.scene.mmwave.antennas == 64);
  CHECK(desk.dataset.codebook.ring_count == 4);
  CHECK(desk.dataset.scene.sub6.antennas == 16);
  CHECK(desk.dataset.scene.sub6.subcarriers == 8);
  CHECK(desk.dataset.scene.mmwave.subcarriers == 16);
  CHECK(desk.dataset.scene.users == 4);
  CHECK(desk.dataset.samples == 20000);
  CHECK(desk.training.epochs == 50);
  CHECK(desk.training.learning_rate == doctest::Approx(0.006));

  const ExperimentConfig paper = paper_preset();
  CHECK(paper.dataset.scene.mmwave.antennas == 256);
  CHECK(paper.dataset.codebook.ring_count == 5);
  CHECK(paper.dataset.codebook.angle_count * paper.dataset.codebook.ring_count == 1280);
}

TEST_CASE("config parse: overrides, defaults, round-trip") {
  nlohmann::json j;
  j["preset"] = "desk";
  j["scene"]["users"] = 2;
  j["dataset"]["samples"] = 128;
  j["training"]["epochs"] = 3;
  j["seed"] = 9;
  const ExperimentConfig cfg = config_from_json(j);
  CHECK(cfg.dataset.scene.users == 2);
  CHECK(cfg.dataset.samples == 128);
  CHECK(cfg.training.epochs == 3);
  CHECK(cfg.dataset.seed == 9);
  CHECK(cfg.training.seed == 9);

  // echoed config reparses to the same canonical dump
  const nlohmann::json echo = config_to_json(cfg);
  const ExperimentConfig cfg2 = config_from_json(echo);
  CHECK(config_to_json(cfg2).dump() == echo.dump());
  CHECK(config_hash(echo) == config_hash(config_to_json(cfg2)));
}

TEST_CASE("config parse rejects unknown keys with the field name") {
  nlohmann::json j;
  j["trainnig"] = nlohmann::json::object();
  CHECK_THROWS_WITH_AS(config_from_json(j), doctest::Contains("trainnig"), config_error);

  nlohmann::json k;
  k["training"]["epochz"] = 3;
  CHECK_THROWS_WITH_AS(config_from_json(k), doctest::Contains("training.epochz"), config_error);

  nlohmann::json m;
  m["sweep"]["axis"] = "humidity";
  CHECK_THROWS_WITH_AS(config_from_json(m), doctest::Contains("humidity"), config_error);
}

TEST_CASE("spearman: monotone, anti-monotone, ties") {
  CHECK(spearman({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
  CHECK(spearman({1, 2, 3, 4}, {9, 7, 5, 3}) == doctest::Approx(-1.0));
  CHECK(spearman({1, 2, 3, 4}, {1, 1, 2, 2}) > 0.0);
  CHECK_THROWS_AS(spearman({1.0}, {2.0}), usage_error);
}

TEST_CASE("sweep CSV round-trip and drift rejection") {
  std::vector<SweepRow> rows;
  SweepRow r;
  r.axis = "uplink_power_dbm";
  r.axis_value = -10.0;
  r.scheme = "proposed";
  r.uplink_dbm = -10.0;
  r.downlink_dbm = 2.0;
  r.r_sum = 12.5;
  r.r_eff = 12.5;
  r.acc = 0.31;
  r.acc_angle = 0.4;
  r.acc_dist = 0.7;
  rows.push_back(r);
  r.scheme = "exhaustive";
  r.acc = 1.0;
  rows.push_back(r);

  const std::string path = "sweep_test.csv";
  {
    std::ofstream out(path);
    out << sweep_csv_header() << "\n";
    for (const auto& row : rows) out << sweep_csv_row(row) << "\n";
  }
  const auto parsed = read_sweep_csv(path);
  REQUIRE(parsed.size() == 2);
  CHECK(parsed[0].scheme == "proposed");
  CHECK(parsed[0].acc == doctest::Approx(0.31));
  CHECK(parsed[1].acc == doctest::Approx(1.0));

  {
    std::ofstream out(path);
    out << "scheme,oops\n1,2\n";
  }
  CHECK_THROWS_AS(read_sweep_csv(path), io_error);
  std::filesystem::remove(path);
}

TEST_CASE("report renders figure data and summary") {
  std::vector<SweepRow> sweep;
  for (double v : {-20.0, -10.0, 0.0}) {
    for (const std::string scheme : {"proposed", "exhaustive"}) {
      SweepRow r;
      r.axis = "uplink_power_dbm";
      r.axis_value = v;
      r.scheme = scheme;
      r.uplink_dbm = v;
      r.downlink_dbm = 2.0;
      r.acc = scheme == "exhaustive" ? 1.0 : 0.5 + 0.01 * v;
      r.acc_angle = r.acc;
      r.acc_dist = r.acc;
      r.r_sum = scheme == "exhaustive" ? 20.0 : 19.0;
      r.r_eff = scheme == "exhaustive" ? 17.4 : 19.0;
      sweep.push_back(r);
    }
  }
  const std::string dir = "report_test_dir";
  write_report({sweep, sweep}, dir);  // two seeds -> stddev path exercised
  CHECK(std::filesystem::exists(dir + "/summary.md"));
  CHECK(std::filesystem::exists(dir + "/fig_uplink_power_dbm_acc.csv"));
  std::ifstream md(dir + "/summary.md");
  std::string text((std::istreambuf_iterator<char>(md)), std::istreambuf_iterator<char>());
  CHECK(text.find("proposed > exhaustive at every point: yes") != std::string::npos);
  std::filesystem::remove_all(dir);

  CHECK_THROWS_AS(write_report({}, dir), io_error);
}
