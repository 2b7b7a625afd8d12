// SPDX-License-Identifier: Apache-2.0
//
// nmbe: near-field mmWave beam estimation toolkit

#ifndef NMBE_AIRLINK_HPP
#define NMBE_AIRLINK_HPP

#include <string>
#include <utility>
#include <vector>

#include "nmbe/polarbook.hpp"

namespace nmbe::airlink {

using polarbook::Codebook;
using polarbook::CodewordIndex;

/// Per-user, per-subcarrier downlink channel row vectors: h[u][k] has length
/// M and multiplies precoders from the left.
struct UserChannels {
  std::vector<std::vector<cvec>> h;

  int users() const { return static_cast<int>(h.size()); }
  int subcarriers() const { return h.empty() ? 0 : static_cast<int>(h[0].size()); }
  int antennas() const;
  void validate() const;  // throws config_error on ragged shapes
};

/// Analog codebook columns + per-subcarrier digital matrices.
struct HybridPrecoder {
  // f_rf: column-major M x U (column u = user u's codeword)
  std::vector<cvec> f_rf_cols;
  // f_bb[k]: U x U, f_bb[k][u] is user u's column
  std::vector<std::vector<cvec>> f_bb;
  std::vector<bool> regularized;  // per subcarrier: Tikhonov fallback used
};

struct PowerConfig {
  double downlink_power_w = 0.0;  // per-subcarrier P_dl
  double downlink_noise_w = 0.0;  // sigma^2_dl
  /// Literal-interference variant evaluates |h_i F f_i| instead of the
  /// standard |h_u F f_i| in the denominator.
  bool literal_interference = false;
};

struct RateReport {
  std::vector<std::vector<double>> per_user_rate;  // [u][k], bits/s/Hz
  double sum_rate = 0.0;                           // averaged per subcarrier
  double effective_rate = 0.0;
  std::int64_t pilot_slots = 0;
  double accuracy = 0.0;
  double accuracy_angle = 0.0;
  double accuracy_distance = 0.0;
};

/// Sum beamforming gain over subcarriers: sum_k |h[k] . f|.
double beam_gain(const std::vector<cvec>& h_per_k, const cvec& codeword);

/// Argmax of beam_gain over the codebook; ties resolved by lowest flat index.
std::pair<CodewordIndex, double> exhaustive_search(const std::vector<cvec>& h_per_k,
                                                   const Codebook& book);

/// Column u = codebook word of user u's selection (duplicates allowed).
std::vector<cvec> assemble_analog(const std::vector<int>& flat_selection, const Codebook& book);

struct ZfResult {
  std::vector<cvec> columns;  // U columns of length U
  bool regularized = false;
};

/// Pseudo-inverse of the U x U equivalent channel (rows h_eq[u] = h_u F_RF),
/// Tikhonov-regularized when the condition number exceeds 1e12. Columns are
/// NOT yet power-normalized; normalization needs F_RF (see build_precoder).
ZfResult zf_digital(const std::vector<cvec>& h_eq_rows);

/// Full precoder for given selections: analog columns + per-subcarrier ZF
/// with columns scaled so ||F_RF f_u_bb||_F = 1.
HybridPrecoder build_precoder(const UserChannels& channels, const std::vector<int>& flat_selection,
                              const Codebook& book);

double user_rate(const UserChannels& channels, const HybridPrecoder& precoder,
                 const PowerConfig& power, int u, int k);

/// R_sum = (sum_u sum_k R_u[k]) / K.
double sum_rate_avg(const std::vector<std::vector<double>>& per_user_rate);

/// R_eff = (1 - T_p / T_t) R_sum with T_p = pilot_slots * slot_duration.
/// Throws config_error when the pilot time exceeds the session.
double effective_rate(double sum_rate, std::int64_t pilot_slots, double slot_duration_s,
                      double session_duration_s);

struct AccuracyReport {
  double overall = 0.0;
  double angle = 0.0;
  double distance = 0.0;
};

AccuracyReport estimation_accuracy(const std::vector<CodewordIndex>& predicted,
                                   const std::vector<CodewordIndex>& truth);

/// All rates for one scene under the given selections.
RateReport evaluate_selection(const UserChannels& channels, const std::vector<int>& flat_selection,
                              const Codebook& book, const PowerConfig& power,
                              std::int64_t pilot_slots, double slot_duration_s,
                              double session_duration_s);

/// CSV row schema shared by sweep outputs and reports.
std::string rate_csv_header();
std::string rate_csv_row(const std::string& scheme, double uplink_dbm, double downlink_dbm,
                         const RateReport& report);

}  // namespace nmbe::airlink

#endif  // NMBE_AIRLINK_HPP
