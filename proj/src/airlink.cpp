// SPDX-License-Identifier: Apache-2.0
//
// nmbe: near-field mmWave beam estimation toolkit

#include "nmbe/airlink.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <sstream>

namespace nmbe::airlink {

namespace {

using Eigen::MatrixXcd;
using Eigen::VectorXcd;

MatrixXcd rows_to_matrix(const std::vector<cvec>& rows) {
  const int n = static_cast<int>(rows.size());
  const int m = static_cast<int>(rows[0].size());
  MatrixXcd a(n, m);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) a(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  return a;
}

cplx row_dot(const cvec& row, const cvec& col) {
  cplx acc(0.0, 0.0);
  for (std::size_t i = 0; i < row.size(); ++i) acc += row[i] * col[i];
  return acc;
}

/// h (1 x M) * F_RF (M x U) -> 1 x U
cvec row_times_analog(const cvec& h, const std::vector<cvec>& f_rf_cols) {
  cvec out(f_rf_cols.size());
  for (std::size_t u = 0; u < f_rf_cols.size(); ++u) out[u] = row_dot(h, f_rf_cols[u]);
  return out;
}

}  // namespace

int UserChannels::antennas() const {
  return (h.empty() || h[0].empty()) ? 0 : static_cast<int>(h[0][0].size());
}

void UserChannels::validate() const {
  if (h.empty()) throw config_error("user channels: no users");
  const std::size_t k = h[0].size();
  const std::size_t m = k == 0 ? 0 : h[0][0].size();
  if (k == 0 || m == 0) throw config_error("user channels: empty subcarrier list");
  for (const auto& user : h) {
    if (user.size() != k) throw config_error("user channels: ragged subcarrier count");
    for (const auto& vec : user) {
      if (vec.size() != m) throw config_error("user channels: ragged antenna count");
    }
  }
}

double beam_gain(const std::vector<cvec>& h_per_k, const cvec& codeword) {
  double g = 0.0;
  for (const cvec& h : h_per_k) {
    if (h.size() != codeword.size()) {
      throw config_error("beam_gain: channel length " + std::to_string(h.size()) +
                         " != codeword length " + std::to_string(codeword.size()));
    }
    g += std::abs(row_dot(h, codeword));
  }
  return g;
}

std::pair<CodewordIndex, double> exhaustive_search(const std::vector<cvec>& h_per_k,
                                                   const Codebook& book) {
  if (book.size() == 0) throw config_error("exhaustive_search: empty codebook");
  int best = 0;
  double best_gain = -1.0;
  for (int i = 0; i < book.size(); ++i) {
    const double g = beam_gain(h_per_k, book.word(i));
    if (g > best_gain) {  // strict: ties keep the lowest flat index
      best_gain = g;
      best = i;
    }
  }
  return {book.unflatten(best), best_gain};
}

std::vector<cvec> assemble_analog(const std::vector<int>& flat_selection, const Codebook& book) {
  std::vector<cvec> cols;
  cols.reserve(flat_selection.size());
  for (int flat : flat_selection) cols.push_back(book.word(flat));
  return cols;
}

ZfResult zf_digital(const std::vector<cvec>& h_eq_rows) {
  const int u = static_cast<int>(h_eq_rows.size());
  for (const auto& r : h_eq_rows) {
    if (static_cast<int>(r.size()) != u) {
      throw config_error("zf_digital: equivalent channel must be square (U x U)");
    }
  }
  const MatrixXcd h_eq = rows_to_matrix(h_eq_rows);

  Eigen::JacobiSVD<MatrixXcd> svd(h_eq);
  const auto& sv = svd.singularValues();
  const double cond = sv(sv.size() - 1) > 0.0 ? sv(0) / sv(sv.size() - 1)
                                              : std::numeric_limits<double>::infinity();

  ZfResult result;
  MatrixXcd f_bb;
  if (cond > 1e12 || !std::isfinite(cond)) {
    // Tikhonov fallback: H^H (H H^H + (1e-9 tr(H H^H) / U) I)^-1
    result.regularized = true;
    const MatrixXcd gram = h_eq * h_eq.adjoint();
    const double lambda = 1e-9 * gram.trace().real() / u;
    MatrixXcd reg = gram;
    reg.diagonal().array() += lambda;
    f_bb = h_eq.adjoint() * reg.inverse();
  } else {
    f_bb = h_eq.completeOrthogonalDecomposition().pseudoInverse();
  }

  result.columns.assign(static_cast<std::size_t>(u), cvec(static_cast<std::size_t>(u)));
  for (int c = 0; c < u; ++c) {
    for (int r = 0; r < u; ++r) result.columns[static_cast<std::size_t>(c)][static_cast<std::size_t>(r)] = f_bb(r, c);
  }
  return result;
}

HybridPrecoder build_precoder(const UserChannels& channels, const std::vector<int>& flat_selection,
                              const Codebook& book) {
  channels.validate();
  const int users = channels.users();
  if (static_cast<int>(flat_selection.size()) != users) {
    throw config_error("build_precoder: one codeword selection per user required");
  }
  HybridPrecoder p;
  p.f_rf_cols = assemble_analog(flat_selection, book);

  const int k_count = channels.subcarriers();
  p.f_bb.resize(static_cast<std::size_t>(k_count));
  p.regularized.resize(static_cast<std::size_t>(k_count));
  for (int k = 0; k < k_count; ++k) {
    std::vector<cvec> h_eq(static_cast<std::size_t>(users));
    for (int u = 0; u < users; ++u) {
      h_eq[static_cast<std::size_t>(u)] =
          row_times_analog(channels.h[static_cast<std::size_t>(u)][static_cast<std::size_t>(k)], p.f_rf_cols);
    }
    ZfResult zf = zf_digital(h_eq);
    // power constraint: ||F_RF f_u_bb||_F = 1 per user and subcarrier
    for (int u = 0; u < users; ++u) {
      cvec& col = zf.columns[static_cast<std::size_t>(u)];
      double norm_sq = 0.0;
      const int m = static_cast<int>(p.f_rf_cols[0].size());
      for (int row = 0; row < m; ++row) {
        cplx acc(0.0, 0.0);
        for (int j = 0; j < users; ++j) {
          acc += p.f_rf_cols[static_cast<std::size_t>(j)][static_cast<std::size_t>(row)] * col[static_cast<std::size_t>(j)];
        }
        norm_sq += std::norm(acc);
      }
      const double scale = norm_sq > 0.0 ? 1.0 / std::sqrt(norm_sq) : 0.0;
      for (cplx& v : col) v *= scale;
    }
    p.f_bb[static_cast<std::size_t>(k)] = std::move(zf.columns);
    p.regularized[static_cast<std::size_t>(k)] = zf.regularized;
  }
  return p;
}

double user_rate(const UserChannels& channels, const HybridPrecoder& precoder,
                 const PowerConfig& power, int u, int k) {
  const int users = channels.users();
  const double p_share = power.downlink_power_w / users;
  const cvec& h_u = channels.h[static_cast<std::size_t>(u)][static_cast<std::size_t>(k)];
  const cvec h_u_rf = row_times_analog(h_u, precoder.f_rf_cols);
  const auto& f_bb_k = precoder.f_bb[static_cast<std::size_t>(k)];

  const double signal = p_share * std::norm(row_dot(h_u_rf, f_bb_k[static_cast<std::size_t>(u)]));
  double interference = 0.0;
  for (int i = 0; i < users; ++i) {
    if (i == u) continue;
    if (power.literal_interference) {
      const cvec h_i_rf =
          row_times_analog(channels.h[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)], precoder.f_rf_cols);
      interference += p_share * std::norm(row_dot(h_i_rf, f_bb_k[static_cast<std::size_t>(i)]));
    } else {
      interference += p_share * std::norm(row_dot(h_u_rf, f_bb_k[static_cast<std::size_t>(i)]));
    }
  }
  return std::log2(1.0 + signal / (interference + power.downlink_noise_w));
}

double sum_rate_avg(const std::vector<std::vector<double>>& per_user_rate) {
  if (per_user_rate.empty()) return 0.0;
  double total = 0.0;
  const double k_count = static_cast<double>(per_user_rate[0].size());
  for (const auto& user : per_user_rate) {
    for (double r : user) total += r;
  }
  return k_count > 0.0 ? total / k_count : 0.0;
}

double effective_rate(double sum_rate, std::int64_t pilot_slots, double slot_duration_s,
                      double session_duration_s) {
  const double t_p = static_cast<double>(pilot_slots) * slot_duration_s;
  if (t_p > session_duration_s) {
    throw config_error("effective_rate: pilot time " + std::to_string(t_p) +
                       " s exceeds session duration " + std::to_string(session_duration_s) + " s");
  }
  return (1.0 - t_p / session_duration_s) * sum_rate;
}

AccuracyReport estimation_accuracy(const std::vector<CodewordIndex>& predicted,
                                   const std::vector<CodewordIndex>& truth) {
  if (predicted.size() != truth.size()) {
    throw config_error("estimation_accuracy: prediction/truth lists differ in length");
  }
  AccuracyReport rep;
  if (predicted.empty()) return rep;
  int both = 0, angle = 0, dist = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const bool a = predicted[i].angle == truth[i].angle;
    const bool d = predicted[i].ring == truth[i].ring;
    angle += a;
    dist += d;
    both += a && d;
  }
  const double n = static_cast<double>(predicted.size());
  rep.overall = both / n;
  rep.angle = angle / n;
  rep.distance = dist / n;
  return rep;
}

RateReport evaluate_selection(const UserChannels& channels, const std::vector<int>& flat_selection,
                              const Codebook& book, const PowerConfig& power,
                              std::int64_t pilot_slots, double slot_duration_s,
                              double session_duration_s) {
  const HybridPrecoder precoder = build_precoder(channels, flat_selection, book);
  RateReport rep;
  rep.pilot_slots = pilot_slots;
  rep.per_user_rate.assign(static_cast<std::size_t>(channels.users()),
                           std::vector<double>(static_cast<std::size_t>(channels.subcarriers())));
  for (int u = 0; u < channels.users(); ++u) {
    for (int k = 0; k < channels.subcarriers(); ++k) {
      rep.per_user_rate[static_cast<std::size_t>(u)][static_cast<std::size_t>(k)] =
          user_rate(channels, precoder, power, u, k);
    }
  }
  rep.sum_rate = sum_rate_avg(rep.per_user_rate);
  rep.effective_rate = effective_rate(rep.sum_rate, pilot_slots, slot_duration_s, session_duration_s);
  return rep;
}

std::string rate_csv_header() {
  return "scheme,uplink_power_dbm,downlink_power_dbm,r_sum,r_eff,acc,acc_angle,acc_dist";
}

std::string rate_csv_row(const std::string& scheme, double uplink_dbm, double downlink_dbm,
                         const RateReport& report) {
  std::ostringstream os;
  os.precision(17);
  os << scheme << "," << uplink_dbm << "," << downlink_dbm << "," << report.sum_rate << ","
     << report.effective_rate << "," << report.accuracy << "," << report.accuracy_angle << ","
     << report.accuracy_distance;
  return os.str();
}

}  // namespace nmbe::airlink
