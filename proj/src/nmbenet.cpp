// SPDX-License-Identifier: Apache-2.0
//
// nmbe: near-field mmWave beam estimation toolkit

#include "nmbe/nmbenet.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <thread>

#include "nmbe/adam.hpp"
#include "nmbe/rng.hpp"

namespace nmbe::nmbenet {

using gradcore::BatchNormMode;
using gradcore::BnStats;
using gradcore::NodeId;
using gradcore::Tape;
using gradcore::Tensor;

std::string model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::kNmbe: return "nmbe";
    case ModelKind::kFcnn: return "fcnn";
    case ModelKind::kCnn: return "cnn";
  }
  return "?";
}

std::string Architecture::hash() const {
  std::ostringstream os;
  os << model_kind_name(kind) << ":k" << pilot_subcarriers << ":m" << pilot_antennas << ":c"
     << conv1_channels << "-" << conv2_channels << ":g" << gnn_width << ":h" << head_width << ":f"
     << fcnn_hidden1 << "-" << fcnn_hidden2 << ":ch" << cnn_hidden << ":out" << num_classes;
  return os.str();
}

namespace {

Tensor init_uniform(std::vector<int> shape, std::int64_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& v : t.data) v = rng.uniform(-bound, bound);
  return t;
}

struct LayerSizes {
  // (name, weight shape, fan_in) for dense layers; conv handled separately
  std::vector<std::tuple<std::string, std::vector<int>, std::int64_t>> dense;
  bool has_conv = false;
  int bn_count = 0;
};

}  // namespace

BeamNet::BeamNet(const Architecture& arch, std::uint64_t init_seed) : arch_(arch) {
  if (arch.pilot_subcarriers < 1 || arch.pilot_antennas < 1 || arch.num_classes < 1) {
    throw config_error("beamnet: architecture dimensions must be positive");
  }
  Rng rng(init_seed, 0x696e6974ULL);
  auto add_param = [&](const std::string& name, Tensor t) {
    set_.params.push_back({name, std::move(t)});
  };
  auto add_conv = [&](const std::string& name, int co, int ci, int kh, int kw) {
    const std::int64_t fan = static_cast<std::int64_t>(ci) * kh * kw;
    add_param(name + ".w", init_uniform({co, ci, kh, kw}, fan, rng));
    add_param(name + ".b", init_uniform({co}, fan, rng));
  };
  auto add_dense = [&](const std::string& name, int fo, int fi) {
    add_param(name + ".w", init_uniform({fo, fi}, fi, rng));
    add_param(name + ".b", init_uniform({fo}, fi, rng));
  };
  auto add_bn = [&](const std::string& name, int features) {
    add_param(name + ".gamma", Tensor::full({features}, 1.0));
    add_param(name + ".beta", Tensor({features}));
    bn_.push_back(BnStats::fresh(features));
  };

  const int feat = arch_.feature_length();
  switch (arch_.kind) {
    case ModelKind::kNmbe:
      add_conv("conv1", arch_.conv1_channels, arch_.pilot_subcarriers, 1, 3);
      add_bn("bn1", arch_.conv1_channels);
      add_conv("conv2", arch_.conv2_channels, arch_.conv1_channels, 1, 3);
      add_bn("bn2", arch_.conv2_channels);
      add_dense("gnn1", arch_.gnn_width, 2 * feat);
      add_bn("bn3", arch_.gnn_width);
      add_dense("gnn2", arch_.gnn_width, 2 * arch_.gnn_width);
      add_bn("bn4", arch_.gnn_width);
      add_dense("head1", arch_.head_width, arch_.gnn_width);
      add_bn("bn5", arch_.head_width);
      add_dense("out", arch_.num_classes, arch_.head_width);
      break;
    case ModelKind::kFcnn: {
      const int flat = arch_.pilot_subcarriers * 2 * arch_.pilot_antennas;
      add_dense("fc1", arch_.fcnn_hidden1, flat);
      add_bn("bn1", arch_.fcnn_hidden1);
      add_dense("fc2", arch_.fcnn_hidden2, arch_.fcnn_hidden1);
      add_bn("bn2", arch_.fcnn_hidden2);
      add_dense("out", arch_.num_classes, arch_.fcnn_hidden2);
      break;
    }
    case ModelKind::kCnn:
      add_conv("conv1", arch_.conv1_channels, arch_.pilot_subcarriers, 1, 3);
      add_bn("bn1", arch_.conv1_channels);
      add_conv("conv2", arch_.conv2_channels, arch_.conv1_channels, 1, 3);
      add_bn("bn2", arch_.conv2_channels);
      add_dense("fc1", arch_.cnn_hidden, feat);
      add_bn("bn3", arch_.cnn_hidden);
      add_dense("out", arch_.num_classes, arch_.cnn_hidden);
      break;
  }
}

NodeId BeamNet::forward(Tape& tape, NodeId images, int group_size, BatchNormMode mode) {
  const Tensor& img = tape.value(images);
  if (img.rank() != 4 || img.shape[1] != arch_.pilot_subcarriers || img.shape[2] != 2 ||
      img.shape[3] != arch_.pilot_antennas) {
    throw config_error("beamnet: image batch must be [N," + std::to_string(arch_.pilot_subcarriers) +
                       ",2," + std::to_string(arch_.pilot_antennas) + "], got " + img.shape_str());
  }
  const int n = img.shape[0];

  int pi = 0;  // parameter cursor (fixed construction order)
  int bi = 0;  // batchnorm cursor
  std::vector<NodeId> param_nodes;
  param_nodes.reserve(set_.params.size());
  for (const auto& np : set_.params) param_nodes.push_back(tape.input(np.value, true));
  auto P = [&](int i) { return param_nodes[static_cast<std::size_t>(i)]; };

  auto conv_block = [&](NodeId x) {
    NodeId c = tape.conv2d(x, P(pi), P(pi + 1), gradcore::Padding::kSame);
    pi += 2;
    NodeId r = tape.relu(c);
    NodeId b = tape.batchnorm(r, P(pi), P(pi + 1), mode, &bn_[static_cast<std::size_t>(bi)]);
    pi += 2;
    bi += 1;
    return b;
  };
  auto dense_relu_bn = [&](NodeId x) {
    NodeId d = tape.dense(x, P(pi), P(pi + 1));
    pi += 2;
    NodeId r = tape.relu(d);
    NodeId b = tape.batchnorm(r, P(pi), P(pi + 1), mode, &bn_[static_cast<std::size_t>(bi)]);
    pi += 2;
    bi += 1;
    return b;
  };
  auto dense_out = [&](NodeId x) {
    NodeId d = tape.dense(x, P(pi), P(pi + 1));
    pi += 2;
    return d;
  };

  switch (arch_.kind) {
    case ModelKind::kNmbe: {
      NodeId x = conv_block(images);
      x = conv_block(x);
      x = tape.reshape(x, {n, arch_.feature_length()});
      for (int layer = 0; layer < 2; ++layer) {
        NodeId agg = tape.neighbor_mean(x, group_size);
        NodeId comb = tape.concat(x, agg);
        x = dense_relu_bn(comb);
      }
      x = dense_relu_bn(x);
      return dense_out(x);
    }
    case ModelKind::kFcnn: {
      NodeId x = tape.reshape(images, {n, arch_.pilot_subcarriers * 2 * arch_.pilot_antennas});
      x = dense_relu_bn(x);
      x = dense_relu_bn(x);
      return dense_out(x);
    }
    case ModelKind::kCnn: {
      NodeId x = conv_block(images);
      x = conv_block(x);
      x = tape.reshape(x, {n, arch_.feature_length()});
      x = dense_relu_bn(x);
      return dense_out(x);
    }
  }
  throw usage_error("beamnet: unknown model kind");
}

Tensor BeamNet::predict_probs(const Tensor& images, int group_size) {
  Tape tape;
  NodeId in = tape.input(images, /*requires_grad=*/false);
  NodeId logits = forward(tape, in, group_size, BatchNormMode::kInfer);
  NodeId probs = tape.softmax(logits);
  return tape.value(probs);
}

void BeamNet::save(const std::string& dir, const gradcore::AdamState* opt,
                   const nlohmann::json& extra_meta) const {
  gradcore::ParamSet out = set_;
  out.buffers.clear();
  for (std::size_t i = 0; i < bn_.size(); ++i) {
    const std::string base = "bn" + std::to_string(i + 1);
    out.buffers.push_back({base + ".mean", Tensor({static_cast<int>(bn_[i].mean.size())}, bn_[i].mean)});
    out.buffers.push_back({base + ".var", Tensor({static_cast<int>(bn_[i].var.size())}, bn_[i].var)});
  }
  nlohmann::json meta = extra_meta;
  meta["arch_hash"] = arch_.hash();
  meta["arch"] = {{"kind", model_kind_name(arch_.kind)},
                  {"pilot_subcarriers", arch_.pilot_subcarriers},
                  {"pilot_antennas", arch_.pilot_antennas},
                  {"conv1_channels", arch_.conv1_channels},
                  {"conv2_channels", arch_.conv2_channels},
                  {"gnn_width", arch_.gnn_width},
                  {"head_width", arch_.head_width},
                  {"fcnn_hidden1", arch_.fcnn_hidden1},
                  {"fcnn_hidden2", arch_.fcnn_hidden2},
                  {"cnn_hidden", arch_.cnn_hidden},
                  {"num_classes", arch_.num_classes}};
  gradcore::save_checkpoint(dir, out, opt, meta);
}

BeamNet BeamNet::load(const std::string& dir, const std::string& expect_hash,
                      gradcore::AdamState* opt_out, nlohmann::json* meta_out) {
  gradcore::Checkpoint ck = gradcore::load_checkpoint(dir);
  const auto& aj = ck.meta.at("arch");
  Architecture arch;
  const std::string kind = aj.at("kind").get<std::string>();
  arch.kind = kind == "nmbe" ? ModelKind::kNmbe : (kind == "fcnn" ? ModelKind::kFcnn : ModelKind::kCnn);
  arch.pilot_subcarriers = aj.at("pilot_subcarriers").get<int>();
  arch.pilot_antennas = aj.at("pilot_antennas").get<int>();
  arch.conv1_channels = aj.at("conv1_channels").get<int>();
  arch.conv2_channels = aj.at("conv2_channels").get<int>();
  arch.gnn_width = aj.at("gnn_width").get<int>();
  arch.head_width = aj.at("head_width").get<int>();
  arch.fcnn_hidden1 = aj.at("fcnn_hidden1").get<int>();
  arch.fcnn_hidden2 = aj.at("fcnn_hidden2").get<int>();
  arch.cnn_hidden = aj.at("cnn_hidden").get<int>();
  arch.num_classes = aj.at("num_classes").get<int>();
  if (!expect_hash.empty() && arch.hash() != expect_hash) {
    throw io_error("checkpoint architecture '" + arch.hash() + "' does not match expected '" +
                   expect_hash + "'");
  }

  BeamNet net(arch, /*init_seed=*/0);
  if (ck.set.params.size() != net.set_.params.size()) {
    throw io_error("checkpoint parameter count mismatch for " + dir);
  }
  for (std::size_t i = 0; i < net.set_.params.size(); ++i) {
    if (ck.set.params[i].name != net.set_.params[i].name ||
        ck.set.params[i].value.shape != net.set_.params[i].value.shape) {
      throw io_error("checkpoint entry '" + ck.set.params[i].name + "' does not match architecture");
    }
    net.set_.params[i].value = std::move(ck.set.params[i].value);
  }
  if (ck.set.buffers.size() != 2 * net.bn_.size()) {
    throw io_error("checkpoint running-statistic count mismatch for " + dir);
  }
  for (std::size_t i = 0; i < net.bn_.size(); ++i) {
    net.bn_[i].mean = ck.set.buffers[2 * i].value.data;
    net.bn_[i].var = ck.set.buffers[2 * i + 1].value.data;
  }
  if (opt_out != nullptr && ck.opt.has_value()) *opt_out = std::move(*ck.opt);
  if (meta_out != nullptr) *meta_out = ck.meta;
  return net;
}

std::vector<double> fuse(const std::vector<double>& p_angle, const std::vector<double>& p_dist) {
  std::vector<double> out(p_angle.size() * p_dist.size());
  for (std::size_t s = 0; s < p_dist.size(); ++s) {
    for (std::size_t m = 0; m < p_angle.size(); ++m) {
      out[s * p_angle.size() + m] = p_dist[s] * p_angle[m];
    }
  }
  return out;
}

polarbook::CodewordIndex select(const std::vector<double>& fused, int angle_count) {
  if (fused.empty() || angle_count < 1 || fused.size() % static_cast<std::size_t>(angle_count) != 0) {
    throw usage_error("select: fused length must be a positive multiple of the angle count");
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < fused.size(); ++i) {
    if (fused[i] > fused[best]) best = i;
  }
  return {static_cast<int>(best) % angle_count, static_cast<int>(best) / angle_count};
}

polarbook::CodewordIndex select_heads(const std::vector<double>& p_angle,
                                      const std::vector<double>& p_dist) {
  const auto argmax = [](const std::vector<double>& v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
      if (v[i] > v[best]) best = i;
    }
    return static_cast<int>(best);
  };
  return {argmax(p_angle), argmax(p_dist)};
}

std::string history_csv_header() {
  return "epoch,train_loss_angle,train_loss_dist,val_acc_angle,val_acc_dist,val_acc_overall,lr";
}

std::string history_csv_row(const EpochRow& row) {
  std::ostringstream os;
  os.precision(17);
  os << row.epoch << "," << row.train_loss_angle << "," << row.train_loss_dist << ","
     << row.val_acc_angle << "," << row.val_acc_dist << "," << row.val_acc_overall << ","
     << row.learning_rate;
  return os.str();
}

Tensor batch_images(const datasmith::Dataset& ds, int first_sample, int count) {
  const int users = ds.users();
  const std::int64_t elems = ds.image_numel();
  Tensor t({count * users, ds.pilot_subcarriers(), 2, ds.pilot_antennas()});
  for (int s = 0; s < count; ++s) {
    for (int u = 0; u < users; ++u) {
      const float* src = ds.image(first_sample + s, u);
      double* dst = t.data.data() + (static_cast<std::int64_t>(s) * users + u) * elems;
      for (std::int64_t i = 0; i < elems; ++i) dst[i] = static_cast<double>(src[i]);
    }
  }
  return t;
}

namespace {

Tensor gather_images(const datasmith::Dataset& ds, const std::vector<int>& scenes) {
  const int users = ds.users();
  const std::int64_t elems = ds.image_numel();
  Tensor t({static_cast<int>(scenes.size()) * users, ds.pilot_subcarriers(), 2,
            ds.pilot_antennas()});
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    for (int u = 0; u < users; ++u) {
      const float* src = ds.image(scenes[s], u);
      double* dst = t.data.data() + (static_cast<std::int64_t>(s) * users + u) * elems;
      for (std::int64_t i = 0; i < elems; ++i) dst[i] = static_cast<double>(src[i]);
    }
  }
  return t;
}

enum class Target { kAngle, kDist, kJoint };

std::vector<int> gather_labels(const datasmith::Dataset& ds, const std::vector<int>& scenes,
                               Target target, int angle_count) {
  std::vector<int> labels;
  labels.reserve(scenes.size() * static_cast<std::size_t>(ds.users()));
  for (int scene : scenes) {
    for (int u = 0; u < ds.users(); ++u) {
      const auto lab = ds.label(scene, u);
      switch (target) {
        case Target::kAngle: labels.push_back(lab.angle); break;
        case Target::kDist: labels.push_back(lab.ring); break;
        case Target::kJoint: labels.push_back(lab.ring * angle_count + lab.angle); break;
      }
    }
  }
  return labels;
}

/// One optimization step over a scene batch; returns the batch loss
/// (per-scene mean of user-summed cross-entropy).
double train_step(BeamNet& net, gradcore::AdamState& adam, const Tensor& images,
                  const std::vector<int>& labels, int users, int batch_scenes) {
  Tape tape;
  const NodeId in = tape.input(images, /*requires_grad=*/false);
  const NodeId logits = net.forward(tape, in, users, BatchNormMode::kTrain);
  const NodeId loss =
      tape.softmax_cross_entropy(logits, labels, 1.0 / static_cast<double>(batch_scenes));
  const double loss_value = tape.value(loss).data[0];
  if (!std::isfinite(loss_value)) {
    throw std::runtime_error("training diverged: non-finite loss");
  }
  tape.backward(loss);

  // parameter nodes were registered first, in set order
  std::vector<Tensor*> params = net.param_ptrs();
  std::vector<const Tensor*> grads(params.size());
  std::vector<Tensor> zero_grads;
  zero_grads.reserve(params.size());
  for (std::size_t i = 1; i <= params.size(); ++i) {
    const NodeId pid = static_cast<NodeId>(i);  // node 0 is the image input
    if (tape.has_grad(pid)) {
      grads[i - 1] = &tape.grad(pid);
    } else {
      zero_grads.emplace_back(params[i - 1]->shape);
      grads[i - 1] = &zero_grads.back();
    }
  }
  gradcore::adam_step(params, grads, adam);
  return loss_value;
}

struct EvalCounts {
  std::int64_t angle_ok = 0, dist_ok = 0, both_ok = 0, total = 0;
};

}  // namespace

std::vector<polarbook::CodewordIndex> predict_pair(BeamNet& angle, BeamNet& dist,
                                                   const Tensor& images, int users) {
  const Tensor pa = angle.predict_probs(images, users);
  const Tensor pd = dist.predict_probs(images, users);
  const int n = images.shape[0];
  const int m = angle.arch().num_classes;
  const int s_count = dist.arch().num_classes;
  std::vector<polarbook::CodewordIndex> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    std::vector<double> va(pa.data.begin() + static_cast<std::int64_t>(i) * m,
                           pa.data.begin() + static_cast<std::int64_t>(i + 1) * m);
    std::vector<double> vd(pd.data.begin() + static_cast<std::int64_t>(i) * s_count,
                           pd.data.begin() + static_cast<std::int64_t>(i + 1) * s_count);
    out[static_cast<std::size_t>(i)] = select_heads(va, vd);
  }
  return out;
}

std::vector<polarbook::CodewordIndex> predict_joint(BeamNet& net, const Tensor& images, int users,
                                                    int angle_count) {
  const Tensor p = net.predict_probs(images, users);
  const int n = images.shape[0];
  const int classes = net.arch().num_classes;
  std::vector<polarbook::CodewordIndex> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double* row = p.data.data() + static_cast<std::int64_t>(i) * classes;
    int best = 0;
    for (int c = 1; c < classes; ++c) {
      if (row[c] > row[best]) best = c;
    }
    out[static_cast<std::size_t>(i)] = {best % angle_count, best / angle_count};
  }
  return out;
}

namespace {

/// Validation accuracies for the dual-head model, evaluated in chunks.
EvalCounts validate_pair(BeamNet& angle, BeamNet& dist, const datasmith::Dataset& ds) {
  EvalCounts counts;
  const int users = ds.users();
  const int chunk = std::max(1, 4096 / std::max(1, users));
  for (int first = ds.train_count(); first < ds.samples(); first += chunk) {
    const int n = std::min(chunk, ds.samples() - first);
    const Tensor images = batch_images(ds, first, n);
    const auto pred = predict_pair(angle, dist, images, users);
    for (int s = 0; s < n; ++s) {
      for (int u = 0; u < users; ++u) {
        const auto truth = ds.label(first + s, u);
        const auto& p = pred[static_cast<std::size_t>(s) * users + u];
        const bool a = p.angle == truth.angle;
        const bool d = p.ring == truth.ring;
        counts.angle_ok += a;
        counts.dist_ok += d;
        counts.both_ok += a && d;
        counts.total += 1;
      }
    }
  }
  return counts;
}

EvalCounts validate_joint(BeamNet& net, const datasmith::Dataset& ds, int angle_count) {
  EvalCounts counts;
  const int users = ds.users();
  const int chunk = std::max(1, 4096 / std::max(1, users));
  for (int first = ds.train_count(); first < ds.samples(); first += chunk) {
    const int n = std::min(chunk, ds.samples() - first);
    const Tensor images = batch_images(ds, first, n);
    const auto pred = predict_joint(net, images, users, angle_count);
    for (int s = 0; s < n; ++s) {
      for (int u = 0; u < users; ++u) {
        const auto truth = ds.label(first + s, u);
        const auto& p = pred[static_cast<std::size_t>(s) * users + u];
        const bool a = p.angle == truth.angle;
        const bool d = p.ring == truth.ring;
        counts.angle_ok += a;
        counts.dist_ok += d;
        counts.both_ok += a && d;
        counts.total += 1;
      }
    }
  }
  return counts;
}

}  // namespace

PairTrainResult train_pair(const datasmith::Dataset& ds, const TrainingConfig& cfg) {
  if (ds.train_count() < 1) throw config_error("train: empty training split");
  const int users = ds.users();

  Architecture arch_a;
  arch_a.kind = ModelKind::kNmbe;
  arch_a.pilot_subcarriers = ds.pilot_subcarriers();
  arch_a.pilot_antennas = ds.pilot_antennas();
  arch_a.num_classes = ds.config().codebook.angle_count;
  Architecture arch_d = arch_a;
  arch_d.num_classes = ds.config().codebook.ring_count;

  PairTrainResult result{BeamNet(arch_a, mix_seed(cfg.seed, 0xa11ULL)),
                         BeamNet(arch_d, mix_seed(cfg.seed, 0xd15ULL)),
                         {}};
  gradcore::AdamState adam_a = gradcore::AdamState::init(result.angle.param_ptrs(), cfg.learning_rate);
  gradcore::AdamState adam_d = gradcore::AdamState::init(result.dist.param_ptrs(), cfg.learning_rate);

  std::vector<int> order(static_cast<std::size_t>(ds.train_count()));
  double best_val = -1.0;
  int since_improve = 0;
  double lr = cfg.learning_rate;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    Rng shuffle_rng(cfg.seed, 0x5350000ULL + static_cast<std::uint64_t>(epoch));
    shuffle_rng.shuffle(order);

    double loss_a = 0.0, loss_d = 0.0;
    for (std::size_t base = 0; base < order.size(); base += static_cast<std::size_t>(cfg.batch_scenes)) {
      const std::size_t n = std::min<std::size_t>(cfg.batch_scenes, order.size() - base);
      const std::vector<int> scenes(order.begin() + static_cast<std::int64_t>(base),
                                    order.begin() + static_cast<std::int64_t>(base + n));
      const Tensor images = gather_images(ds, scenes);
      const auto labels_a = gather_labels(ds, scenes, Target::kAngle, arch_a.num_classes);
      const auto labels_d = gather_labels(ds, scenes, Target::kDist, arch_a.num_classes);

      // the two networks are independent; run their steps concurrently
      double batch_loss_a = 0.0, batch_loss_d = 0.0;
      std::exception_ptr err_a, err_d;
      std::thread ta([&] {
        try {
          batch_loss_a = train_step(result.angle, adam_a, images, labels_a, users,
                                    static_cast<int>(n));
        } catch (...) {
          err_a = std::current_exception();
        }
      });
      try {
        batch_loss_d = train_step(result.dist, adam_d, images, labels_d, users,
                                  static_cast<int>(n));
      } catch (...) {
        err_d = std::current_exception();
      }
      ta.join();
      if (err_a) std::rethrow_exception(err_a);
      if (err_d) std::rethrow_exception(err_d);

      loss_a += batch_loss_a * static_cast<double>(n);
      loss_d += batch_loss_d * static_cast<double>(n);
    }

    const EvalCounts counts = validate_pair(result.angle, result.dist, ds);
    EpochRow row;
    row.epoch = epoch + 1;
    row.train_loss_angle = loss_a / static_cast<double>(order.size());
    row.train_loss_dist = loss_d / static_cast<double>(order.size());
    const double tot = std::max<std::int64_t>(1, counts.total);
    row.val_acc_angle = counts.angle_ok / tot;
    row.val_acc_dist = counts.dist_ok / tot;
    row.val_acc_overall = counts.both_ok / tot;
    row.learning_rate = lr;
    result.history.push_back(row);

    // plateau rule on overall validation accuracy
    if (row.val_acc_overall >= best_val + cfg.min_improvement) {
      best_val = row.val_acc_overall;
      since_improve = 0;
    } else {
      since_improve += 1;
      if (since_improve >= cfg.plateau_epochs) {
        lr *= 0.5;
        adam_a.learning_rate = lr;
        adam_d.learning_rate = lr;
        since_improve = 0;
      }
    }
  }
  return result;
}

SingleTrainResult train_single(const datasmith::Dataset& ds, const TrainingConfig& cfg,
                               ModelKind kind) {
  if (kind == ModelKind::kNmbe) throw usage_error("train_single is for the per-user baselines");
  if (ds.train_count() < 1) throw config_error("train: empty training split");
  const int users = ds.users();
  const int angle_count = ds.config().codebook.angle_count;

  Architecture arch;
  arch.kind = kind;
  arch.pilot_subcarriers = ds.pilot_subcarriers();
  arch.pilot_antennas = ds.pilot_antennas();
  arch.num_classes = angle_count * ds.config().codebook.ring_count;

  SingleTrainResult result{BeamNet(arch, mix_seed(cfg.seed, 0xbead5ULL)), {}};
  gradcore::AdamState adam = gradcore::AdamState::init(result.net.param_ptrs(), cfg.learning_rate);

  std::vector<int> order(static_cast<std::size_t>(ds.train_count()));
  double best_val = -1.0;
  int since_improve = 0;
  double lr = cfg.learning_rate;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    Rng shuffle_rng(cfg.seed, 0x5350000ULL + static_cast<std::uint64_t>(epoch));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    for (std::size_t base = 0; base < order.size(); base += static_cast<std::size_t>(cfg.batch_scenes)) {
      const std::size_t n = std::min<std::size_t>(cfg.batch_scenes, order.size() - base);
      const std::vector<int> scenes(order.begin() + static_cast<std::int64_t>(base),
                                    order.begin() + static_cast<std::int64_t>(base + n));
      const Tensor images = gather_images(ds, scenes);
      const auto labels = gather_labels(ds, scenes, Target::kJoint, angle_count);
      loss_sum += train_step(result.net, adam, images, labels, users, static_cast<int>(n)) *
                  static_cast<double>(n);
    }

    const EvalCounts counts = validate_joint(result.net, ds, angle_count);
    EpochRow row;
    row.epoch = epoch + 1;
    row.train_loss_angle = loss_sum / static_cast<double>(order.size());
    row.train_loss_dist = 0.0;
    const double tot = std::max<std::int64_t>(1, counts.total);
    row.val_acc_angle = counts.angle_ok / tot;
    row.val_acc_dist = counts.dist_ok / tot;
    row.val_acc_overall = counts.both_ok / tot;
    row.learning_rate = lr;
    result.history.push_back(row);

    if (row.val_acc_overall >= best_val + cfg.min_improvement) {
      best_val = row.val_acc_overall;
      since_improve = 0;
    } else {
      since_improve += 1;
      if (since_improve >= cfg.plateau_epochs) {
        lr *= 0.5;
        adam.learning_rate = lr;
        since_improve = 0;
      }
    }
  }
  return result;
}

}  // namespace nmbe::nmbenet
