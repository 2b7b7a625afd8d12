// SPDX-License-Identifier: Apache-2.0
//
// nmbe: near-field mmWave beam estimation toolkit

#ifndef NMBE_NMBENET_HPP
#define NMBE_NMBENET_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "nmbe/checkpoint.hpp"
#include "nmbe/datasmith.hpp"
#include "nmbe/tape.hpp"

namespace nmbe::nmbenet {

/// kNmbe: conv trunk + graph feature updating + classification head, one
/// instance per target (angle or distance). kFcnn / kCnn: per-user baselines
/// with a joint (angle x ring)-way head.
enum class ModelKind { kNmbe, kFcnn, kCnn };

std::string model_kind_name(ModelKind kind);

struct Architecture {
  ModelKind kind = ModelKind::kNmbe;
  int pilot_subcarriers = 0;  // conv input channels
  int pilot_antennas = 0;
  int conv1_channels = 64;
  int conv2_channels = 256;
  int gnn_width = 512;
  int head_width = 128;
  int fcnn_hidden1 = 1024;
  int fcnn_hidden2 = 512;
  int cnn_hidden = 512;
  int num_classes = 0;

  /// Flattened conv feature length: conv2_channels * 2 * pilot_antennas.
  int feature_length() const { return conv2_channels * 2 * pilot_antennas; }
  std::string hash() const;
};

/// One network instance: parameters, running statistics, graph builder.
class BeamNet {
 public:
  BeamNet(const Architecture& arch, std::uint64_t init_seed);

  const Architecture& arch() const { return arch_; }
  gradcore::ParamSet& set() { return set_; }
  std::vector<gradcore::Tensor*> param_ptrs() { return set_.param_ptrs(); }

  /// Builds the forward graph. images: [N, K_bar, 2, M_bar] with N a
  /// multiple of group_size; returns the logits node [N, num_classes].
  /// Train mode updates this net's running statistics.
  gradcore::NodeId forward(gradcore::Tape& tape, gradcore::NodeId images, int group_size,
                           gradcore::BatchNormMode mode);

  /// Inference probabilities [N, num_classes] (frozen statistics).
  gradcore::Tensor predict_probs(const gradcore::Tensor& images, int group_size);

  void save(const std::string& dir, const gradcore::AdamState* opt,
            const nlohmann::json& extra_meta) const;
  /// Throws io_error when the stored architecture hash mismatches `expect`
  /// (pass empty to accept any).
  static BeamNet load(const std::string& dir, const std::string& expect_hash = "",
                      gradcore::AdamState* opt_out = nullptr, nlohmann::json* meta_out = nullptr);

 private:
  BeamNet() = default;

  Architecture arch_;
  gradcore::ParamSet set_;
  std::vector<gradcore::BnStats> bn_;
};

/// Elementwise product of the two head distributions laid out ring-major:
/// fused[ring * M + angle] = p_angle[angle] * p_dist[ring].
std::vector<double> fuse(const std::vector<double>& p_angle, const std::vector<double>& p_dist);

/// Joint argmax over a fused distribution; ties -> lowest flat index.
polarbook::CodewordIndex select(const std::vector<double>& fused, int angle_count);

/// Argmax selection from the two heads directly (equal to `select` on the
/// fused vector, by factorization).
polarbook::CodewordIndex select_heads(const std::vector<double>& p_angle,
                                      const std::vector<double>& p_dist);

struct TrainingConfig {
  int epochs = 50;
  int batch_scenes = 64;
  double learning_rate = 0.006;
  int plateau_epochs = 2;
  double min_improvement = 1e-4;
  std::uint64_t seed = 1;
};

struct EpochRow {
  int epoch = 0;
  double train_loss_angle = 0.0;  // per-scene loss, summed over users
  double train_loss_dist = 0.0;
  double val_acc_angle = 0.0;
  double val_acc_dist = 0.0;
  double val_acc_overall = 0.0;
  double learning_rate = 0.0;
};

std::string history_csv_header();
std::string history_csv_row(const EpochRow& row);

struct PairTrainResult {
  BeamNet angle;
  BeamNet dist;
  std::vector<EpochRow> history;
};

/// Trains the angle and distance networks (independently, on parallel
/// threads) with a shared shuffle order and a shared plateau-halved learning
/// rate driven by overall validation accuracy. Deterministic in (dataset,
/// config). Throws on NaN loss.
PairTrainResult train_pair(const datasmith::Dataset& ds, const TrainingConfig& cfg);

struct SingleTrainResult {
  BeamNet net;
  std::vector<EpochRow> history;  // angle columns carry the joint metrics
};

/// Trains one per-user baseline (kFcnn or kCnn) with joint flat labels.
SingleTrainResult train_single(const datasmith::Dataset& ds, const TrainingConfig& cfg,
                               ModelKind kind);

/// Batched dual-head prediction for `scenes` scenes of `users` users each.
/// images: [scenes*users, K_bar, 2, M_bar].
std::vector<polarbook::CodewordIndex> predict_pair(BeamNet& angle, BeamNet& dist,
                                                   const gradcore::Tensor& images, int users);

/// Batched joint-head baseline prediction; flat classes are ring-major over
/// the given angle count.
std::vector<polarbook::CodewordIndex> predict_joint(BeamNet& net, const gradcore::Tensor& images,
                                                    int users, int angle_count);

/// Copies (sample, user) images of [first, first+count) into a batch tensor.
gradcore::Tensor batch_images(const datasmith::Dataset& ds, int first_sample, int count);

}  // namespace nmbe::nmbenet

#endif  // NMBE_NMBENET_HPP
