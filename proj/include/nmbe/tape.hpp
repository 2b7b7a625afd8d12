// SPDX-License-Identifier: Apache-2.0
//
// nmbe: near-field mmWave beam estimation toolkit

#ifndef NMBE_TAPE_HPP
#define NMBE_TAPE_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "nmbe/tensor.hpp"

namespace nmbe::gradcore {

using NodeId = std::int32_t;

enum class Padding { kSame, kValid };
enum class BatchNormMode { kTrain, kInfer };

/// Per-feature running statistics owned by the caller (one per BN layer).
struct BnStats {
  std::vector<double> mean;
  std::vector<double> var;

  static BnStats fresh(int features) {
    return BnStats{std::vector<double>(features, 0.0), std::vector<double>(features, 1.0)};
  }
};

/// Reverse-mode tape over a DAG of tensor ops. Nodes are appended in
/// topological order by construction; backward() visits them in reverse
/// insertion order. Single-threaded per tape.
class Tape {
 public:
  /// Leaf node. requires_grad=false skips gradient accumulation into it.
  NodeId input(Tensor value, bool requires_grad = true);

  /// Leaf node that references caller-owned storage instead of copying it.
  /// The tensor must stay alive and unchanged for the tape's lifetime.
  NodeId input_ref(const Tensor& external, bool requires_grad = true);

  /// Cross-correlation, stride 1. x: [N,Ci,H,W] or [Ci,H,W]; w: [Co,Ci,kh,kw];
  /// b: [Co]. kSame zero-pads to preserve H,W.
  NodeId conv2d(NodeId x, NodeId w, NodeId b, Padding padding = Padding::kSame);

  /// Affine map. x: [N,Fi] or [Fi]; w: [Fo,Fi]; b: [Fo].
  NodeId dense(NodeId x, NodeId w, NodeId b);

  NodeId relu(NodeId x);

  NodeId add(NodeId a, NodeId b);

  /// Normalizes per axis-1 feature over all other axes ([N,F] over N,
  /// [N,C,H,W] over N×H×W). In train mode batch statistics are used and
  /// `running`, when non-null, is updated in place with the given momentum;
  /// in infer mode `running` must be non-null and is read frozen.
  NodeId batchnorm(NodeId x, NodeId gamma, NodeId beta, BatchNormMode mode, BnStats* running,
                   double momentum = 0.1, double eps = 1e-5);

  /// Per-group mean of the other rows: x is [N,F] with N = scenes*group_size;
  /// row u gets mean over the other group members (zeros when group_size==1).
  /// Summation runs in value-sorted order so the result is bit-identical
  /// under any permutation of rows within a group.
  NodeId neighbor_mean(NodeId x, int group_size);

  /// Concatenate along the last axis (leading axes must match).
  NodeId concat(NodeId a, NodeId b);

  NodeId reshape(NodeId x, std::vector<int> new_shape);

  /// Row-wise numerically stable softmax over the last axis of [N,C] or [C].
  NodeId softmax(NodeId x);

  /// Scalar loss: scale * sum_n -log10 p[n, labels[n]]. Saved probabilities
  /// are readable via saved_probs(). Gradient w.r.t. logits is
  /// scale * (p - onehot) / ln(10).
  NodeId softmax_cross_entropy(NodeId logits, std::vector<int> labels, double scale = 1.0);

  const Tensor& value(NodeId id) const;
  const Tensor& saved_probs(NodeId xent_id) const;

  /// Reverse pass from a scalar node; throws usage_error otherwise.
  void backward(NodeId root);

  bool has_grad(NodeId id) const;
  const Tensor& grad(NodeId id) const;

  int size() const { return static_cast<int>(nodes_.size()); }

 private:
  enum class Op {
    kInput,
    kConv2d,
    kDense,
    kRelu,
    kAdd,
    kBatchNorm,
    kNeighborMean,
    kConcat,
    kReshape,
    kSoftmax,
    kSoftmaxXent,
  };

  struct BnSaved {
    BatchNormMode mode = BatchNormMode::kTrain;
    double eps = 1e-5;
    std::vector<double> mean;    // statistics used in the forward pass
    std::vector<double> invstd;
  };

  struct XentSaved {
    Tensor probs;
    std::vector<int> labels;
    double scale = 1.0;
  };

  struct Node {
    Op op = Op::kInput;
    std::array<NodeId, 3> in = {-1, -1, -1};
    Tensor value;
    const Tensor* ext = nullptr;  // set for input_ref leaves
    Tensor grad_;
    bool needs_grad = false;
    bool has_grad = false;
    // op-specific saved state
    int pad_h = 0, pad_w = 0;          // conv
    int group = 1;                     // neighbor_mean
    std::int64_t split = 0;            // concat: elements of `a` per row
    std::optional<BnSaved> bn;
    std::optional<XentSaved> xent;

    const Tensor& val() const { return ext != nullptr ? *ext : value; }
  };

  NodeId push(Node n);
  Node& at(NodeId id);
  const Node& at(NodeId id) const;
  const Tensor& val(NodeId id) const { return at(id).val(); }
  void accumulate(NodeId id, const Tensor& contribution);
  Tensor& grad_buffer(NodeId id);

  void backward_conv2d(Node& n);
  void backward_dense(Node& n);
  void backward_batchnorm(Node& n);
  void backward_softmax_xent(Node& n);

  std::vector<Node> nodes_;
};

}  // namespace nmbe::gradcore

#endif  // NMBE_TAPE_HPP
