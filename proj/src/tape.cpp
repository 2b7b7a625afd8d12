// SPDX-License-Identifier: Apache-2.0
//
// nmbe: near-field mmWave beam estimation toolkit

#include "nmbe/tape.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace nmbe::gradcore {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

constexpr double kLn10 = 2.302585092994045684;

struct ConvDims {
  int n = 1, ci = 0, h = 0, w = 0;
  int co = 0, kh = 0, kw = 0;
  int ph = 0, pw = 0;  // leading pad (trailing pad is k-1-lead for kSame)
  int ph_hi = 0, pw_hi = 0;
  int ho = 0, wo = 0;
  bool batched = true;
  std::int64_t cols() const { return static_cast<std::int64_t>(n) * ho * wo; }
  std::int64_t kernel_rows() const { return static_cast<std::int64_t>(ci) * kh * kw; }
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, const Tensor& b, Padding padding) {
  ConvDims d;
  if (x.rank() == 4) {
    d.n = x.shape[0];
    d.ci = x.shape[1];
    d.h = x.shape[2];
    d.w = x.shape[3];
  } else if (x.rank() == 3) {
    d.batched = false;
    d.ci = x.shape[0];
    d.h = x.shape[1];
    d.w = x.shape[2];
  } else {
    throw config_error("conv2d: input must be [N,Ci,H,W] or [Ci,H,W], got " + x.shape_str());
  }
  if (w.rank() != 4) throw config_error("conv2d: kernels must be [Co,Ci,kh,kw], got " + w.shape_str());
  d.co = w.shape[0];
  d.kh = w.shape[2];
  d.kw = w.shape[3];
  if (w.shape[1] != d.ci) {
    throw config_error("conv2d: input channel count " + std::to_string(d.ci) +
                       " does not match kernel channel count " + std::to_string(w.shape[1]));
  }
  if (b.rank() != 1 || b.shape[0] != d.co) {
    throw config_error("conv2d: bias must be [" + std::to_string(d.co) + "], got " + b.shape_str());
  }
  if (padding == Padding::kSame) {
    d.ph = (d.kh - 1) / 2;
    d.ph_hi = d.kh - 1 - d.ph;
    d.pw = (d.kw - 1) / 2;
    d.pw_hi = d.kw - 1 - d.pw;
    d.ho = d.h;
    d.wo = d.w;
  } else {
    d.ho = d.h - d.kh + 1;
    d.wo = d.w - d.kw + 1;
  }
  if (d.kh > d.h + d.ph + d.ph_hi) {
    throw config_error("conv2d: kernel height " + std::to_string(d.kh) +
                       " exceeds padded input height " + std::to_string(d.h + d.ph + d.ph_hi));
  }
  if (d.kw > d.w + d.pw + d.pw_hi) {
    throw config_error("conv2d: kernel width " + std::to_string(d.kw) +
                       " exceeds padded input width " + std::to_string(d.w + d.pw + d.pw_hi));
  }
  return d;
}

// col(kidx, (n*ho+y)*wo+x) = x[n, ci, y+dy-ph, x+dx-pw] with zero fill.
RowMat im2col(const Tensor& x, const ConvDims& d) {
  RowMat col(d.kernel_rows(), d.cols());
  const double* src = x.data.data();
  const std::int64_t in_plane = static_cast<std::int64_t>(d.h) * d.w;
  const std::int64_t in_sample = static_cast<std::int64_t>(d.ci) * in_plane;
  parallel_for(d.kernel_rows(), [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t kidx = lo; kidx < hi; ++kidx) {
      const int ci = static_cast<int>(kidx / (d.kh * d.kw));
      const int dy = static_cast<int>(kidx / d.kw % d.kh);
      const int dx = static_cast<int>(kidx % d.kw);
      double* dst = col.data() + kidx * d.cols();
      for (int n = 0; n < d.n; ++n) {
        for (int y = 0; y < d.ho; ++y) {
          const int sy = y + dy - d.ph;
          double* out_row = dst + (static_cast<std::int64_t>(n) * d.ho + y) * d.wo;
          if (sy < 0 || sy >= d.h) {
            std::fill(out_row, out_row + d.wo, 0.0);
            continue;
          }
          const double* in_row = src + n * in_sample + ci * in_plane + static_cast<std::int64_t>(sy) * d.w;
          for (int xo = 0; xo < d.wo; ++xo) {
            const int sx = xo + dx - d.pw;
            out_row[xo] = (sx >= 0 && sx < d.w) ? in_row[sx] : 0.0;
          }
        }
      }
    }
  });
  return col;
}

void col2im_accumulate(const RowMat& col, const ConvDims& d, Tensor& gx) {
  double* dst = gx.data.data();
  const std::int64_t in_plane = static_cast<std::int64_t>(d.h) * d.w;
  const std::int64_t in_sample = static_cast<std::int64_t>(d.ci) * in_plane;
  for (int ci = 0; ci < d.ci; ++ci) {
    for (int dy = 0; dy < d.kh; ++dy) {
      for (int dx = 0; dx < d.kw; ++dx) {
        const std::int64_t kidx = (static_cast<std::int64_t>(ci) * d.kh + dy) * d.kw + dx;
        const double* src_row = col.data() + kidx * d.cols();
        for (int n = 0; n < d.n; ++n) {
          for (int y = 0; y < d.ho; ++y) {
            const int sy = y + dy - d.ph;
            if (sy < 0 || sy >= d.h) continue;
            const double* in_row = src_row + (static_cast<std::int64_t>(n) * d.ho + y) * d.wo;
            double* out_row = dst + n * in_sample + ci * in_plane + static_cast<std::int64_t>(sy) * d.w;
            for (int xo = 0; xo < d.wo; ++xo) {
              const int sx = xo + dx - d.pw;
              if (sx >= 0 && sx < d.w) out_row[sx] += in_row[xo];
            }
          }
        }
      }
    }
  }
}

struct DenseDims {
  int n = 1, fi = 0, fo = 0;
  bool batched = true;
};

DenseDims dense_dims(const Tensor& x, const Tensor& w, const Tensor& b) {
  DenseDims d;
  if (x.rank() == 2) {
    d.n = x.shape[0];
    d.fi = x.shape[1];
  } else if (x.rank() == 1) {
    d.batched = false;
    d.fi = x.shape[0];
  } else {
    throw config_error("dense: input must be [N,Fi] or [Fi], got " + x.shape_str());
  }
  if (w.rank() != 2) throw config_error("dense: weight must be [Fo,Fi], got " + w.shape_str());
  d.fo = w.shape[0];
  if (w.shape[1] != d.fi) {
    throw config_error("dense: input width " + std::to_string(d.fi) +
                       " does not match weight input width " + std::to_string(w.shape[1]));
  }
  if (b.rank() != 1 || b.shape[0] != d.fo) {
    throw config_error("dense: bias must be [" + std::to_string(d.fo) + "], got " + b.shape_str());
  }
  return d;
}

struct BnDims {
  int features = 0;
  std::int64_t outer = 1, inner = 1;
  std::int64_t count() const { return outer * inner; }
};

BnDims bn_dims(const Tensor& x) {
  if (x.rank() < 2) throw config_error("batchnorm: input needs a batch axis, got " + x.shape_str());
  BnDims d;
  d.outer = x.shape[0];
  d.features = x.shape[1];
  for (int a = 2; a < x.rank(); ++a) d.inner *= x.shape[a];
  return d;
}

}  // namespace

NodeId Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

Tape::Node& Tape::at(NodeId id) {
  if (id < 0 || id >= static_cast<NodeId>(nodes_.size())) throw usage_error("bad node id");
  return nodes_[static_cast<std::size_t>(id)];
}

const Tape::Node& Tape::at(NodeId id) const {
  if (id < 0 || id >= static_cast<NodeId>(nodes_.size())) throw usage_error("bad node id");
  return nodes_[static_cast<std::size_t>(id)];
}

const Tensor& Tape::value(NodeId id) const { return at(id).val(); }

const Tensor& Tape::saved_probs(NodeId id) const {
  const Node& n = at(id);
  if (!n.xent) throw usage_error("saved_probs: node is not a softmax_cross_entropy node");
  return n.xent->probs;
}

bool Tape::has_grad(NodeId id) const { return at(id).has_grad; }

const Tensor& Tape::grad(NodeId id) const {
  const Node& n = at(id);
  if (!n.has_grad) throw usage_error("no gradient recorded for node " + std::to_string(id));
  return n.grad_;
}

Tensor& Tape::grad_buffer(NodeId id) {
  Node& n = at(id);
  if (!n.has_grad) {
    n.grad_ = Tensor(n.val().shape);
    n.has_grad = true;
  }
  return n.grad_;
}

void Tape::accumulate(NodeId id, const Tensor& contribution) {
  Node& n = at(id);
  if (!n.needs_grad) return;
  Tensor& g = grad_buffer(id);
  for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += contribution.data[i];
}

NodeId Tape::input(Tensor value, bool requires_grad) {
  Node n;
  n.op = Op::kInput;
  n.value = std::move(value);
  n.needs_grad = requires_grad;
  return push(std::move(n));
}

NodeId Tape::input_ref(const Tensor& external, bool requires_grad) {
  Node n;
  n.op = Op::kInput;
  n.ext = &external;
  n.needs_grad = requires_grad;
  return push(std::move(n));
}

NodeId Tape::conv2d(NodeId x, NodeId w, NodeId b, Padding padding) {
  const Tensor& xv = val(x);
  const Tensor& wv = val(w);
  const Tensor& bv = val(b);
  const ConvDims d = conv_dims(xv, wv, bv, padding);

  const RowMat col = im2col(xv, d);
  CMapMat wmat(wv.data.data(), d.co, d.kernel_rows());
  RowMat out_mat(d.co, d.cols());
  out_mat.noalias() = wmat * col;

  Tensor out(d.batched ? std::vector<int>{d.n, d.co, d.ho, d.wo}
                       : std::vector<int>{d.co, d.ho, d.wo});
  const std::int64_t plane = static_cast<std::int64_t>(d.ho) * d.wo;
  parallel_for(static_cast<std::int64_t>(d.n) * d.co, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t nc = lo; nc < hi; ++nc) {
      const std::int64_t n = nc / d.co, co = nc % d.co;
      const double bias = bv.data[static_cast<std::size_t>(co)];
      const double* src = out_mat.data() + co * d.cols() + n * plane;
      double* dst = out.data.data() + nc * plane;
      for (std::int64_t i = 0; i < plane; ++i) dst[i] = src[i] + bias;
    }
  });

  Node n;
  n.op = Op::kConv2d;
  n.in = {x, w, b};
  n.value = std::move(out);
  n.needs_grad = at(x).needs_grad || at(w).needs_grad || at(b).needs_grad;
  n.pad_h = (padding == Padding::kSame) ? 1 : 0;  // stores the padding mode
  return push(std::move(n));
}

void Tape::backward_conv2d(Node& n) {
  const Tensor& xv = at(n.in[0]).val();
  const Tensor& wv = at(n.in[1]).val();
  const Tensor& bv = at(n.in[2]).val();
  const Padding padding = n.pad_h ? Padding::kSame : Padding::kValid;
  const ConvDims d = conv_dims(xv, wv, bv, padding);

  // gather upstream grad into [Co, N*Ho*Wo] layout
  RowMat gy(d.co, d.cols());
  const std::int64_t plane = static_cast<std::int64_t>(d.ho) * d.wo;
  parallel_for(static_cast<std::int64_t>(d.n) * d.co, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t nc = lo; nc < hi; ++nc) {
      const std::int64_t nn = nc / d.co, co = nc % d.co;
      const double* src = n.grad_.data.data() + nc * plane;
      double* dst = gy.data() + co * d.cols() + nn * plane;
      std::copy(src, src + plane, dst);
    }
  });

  if (at(n.in[2]).needs_grad) {
    Tensor& gb = grad_buffer(n.in[2]);
    for (int co = 0; co < d.co; ++co) {
      double s = 0.0;
      const double* row = gy.data() + co * d.cols();
      for (std::int64_t i = 0; i < d.cols(); ++i) s += row[i];
      gb.data[static_cast<std::size_t>(co)] += s;
    }
  }

  const bool need_x = at(n.in[0]).needs_grad;
  const bool need_w = at(n.in[1]).needs_grad;
  if (!need_x && !need_w) return;

  const RowMat col = im2col(xv, d);
  if (need_w) {
    Tensor& gw = grad_buffer(n.in[1]);
    MapMat gwm(gw.data.data(), d.co, d.kernel_rows());
    gwm.noalias() += gy * col.transpose();
  }
  if (need_x) {
    RowMat gcol(d.kernel_rows(), d.cols());
    CMapMat wmat(wv.data.data(), d.co, d.kernel_rows());
    gcol.noalias() = wmat.transpose() * gy;
    col2im_accumulate(gcol, d, grad_buffer(n.in[0]));
  }
}

NodeId Tape::dense(NodeId x, NodeId w, NodeId b) {
  const Tensor& xv = val(x);
  const Tensor& wv = val(w);
  const Tensor& bv = val(b);
  const DenseDims d = dense_dims(xv, wv, bv);

  Tensor out(d.batched ? std::vector<int>{d.n, d.fo} : std::vector<int>{d.fo});
  CMapMat xm(xv.data.data(), d.n, d.fi);
  CMapMat wm(wv.data.data(), d.fo, d.fi);
  MapMat ym(out.data.data(), d.n, d.fo);
  ym.noalias() = xm * wm.transpose();
  ym.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bv.data.data(), d.fo);

  Node n;
  n.op = Op::kDense;
  n.in = {x, w, b};
  n.value = std::move(out);
  n.needs_grad = at(x).needs_grad || at(w).needs_grad || at(b).needs_grad;
  return push(std::move(n));
}

void Tape::backward_dense(Node& n) {
  const Tensor& xv = at(n.in[0]).val();
  const Tensor& wv = at(n.in[1]).val();
  const DenseDims d = dense_dims(xv, wv, at(n.in[2]).val());
  CMapMat gy(n.grad_.data.data(), d.n, d.fo);
  CMapMat xm(xv.data.data(), d.n, d.fi);
  CMapMat wm(wv.data.data(), d.fo, d.fi);

  if (at(n.in[0]).needs_grad) {
    MapMat gx(grad_buffer(n.in[0]).data.data(), d.n, d.fi);
    gx.noalias() += gy * wm;
  }
  if (at(n.in[1]).needs_grad) {
    MapMat gw(grad_buffer(n.in[1]).data.data(), d.fo, d.fi);
    gw.noalias() += gy.transpose() * xm;
  }
  if (at(n.in[2]).needs_grad) {
    Eigen::Map<Eigen::RowVectorXd> gb(grad_buffer(n.in[2]).data.data(), d.fo);
    gb += gy.colwise().sum();
  }
}

NodeId Tape::relu(NodeId x) {
  const Tensor& xv = val(x);
  Tensor out(xv.shape);
  parallel_for(xv.numel(), [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t i = lo; i < hi; ++i) out.data[i] = xv.data[i] > 0.0 ? xv.data[i] : 0.0;
  });
  Node n;
  n.op = Op::kRelu;
  n.in = {x, -1, -1};
  n.value = std::move(out);
  n.needs_grad = at(x).needs_grad;
  return push(std::move(n));
}

NodeId Tape::add(NodeId a, NodeId b) {
  const Tensor& av = val(a);
  const Tensor& bv = val(b);
  if (!av.same_shape(bv)) {
    throw config_error("add: shape mismatch " + av.shape_str() + " vs " + bv.shape_str());
  }
  Tensor out(av.shape);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = av.data[i] + bv.data[i];
  Node n;
  n.op = Op::kAdd;
  n.in = {a, b, -1};
  n.value = std::move(out);
  n.needs_grad = at(a).needs_grad || at(b).needs_grad;
  return push(std::move(n));
}

NodeId Tape::batchnorm(NodeId x, NodeId gamma, NodeId beta, BatchNormMode mode, BnStats* running,
                       double momentum, double eps) {
  const Tensor& xv = val(x);
  const BnDims d = bn_dims(xv);
  const Tensor& gv = val(gamma);
  const Tensor& bv = val(beta);
  if (gv.rank() != 1 || gv.shape[0] != d.features || bv.rank() != 1 || bv.shape[0] != d.features) {
    throw config_error("batchnorm: gamma/beta must be [" + std::to_string(d.features) + "]");
  }
  if (mode == BatchNormMode::kInfer && running == nullptr) {
    throw usage_error("batchnorm: infer mode requires running statistics");
  }

  BnSaved saved;
  saved.mode = mode;
  saved.eps = eps;
  saved.mean.resize(static_cast<std::size_t>(d.features));
  saved.invstd.resize(static_cast<std::size_t>(d.features));

  if (mode == BatchNormMode::kTrain) {
    // biased batch statistics; running stats updated with the same estimator.
    // accumulation runs in memory order (samples outer) with per-feature
    // accumulators, two sequential passes over the data
    std::vector<double> sum(static_cast<std::size_t>(d.features), 0.0);
    std::vector<double> sum_sq(static_cast<std::size_t>(d.features), 0.0);
    for (std::int64_t o = 0; o < d.outer; ++o) {
      const double* base = xv.data.data() + o * d.features * d.inner;
      for (int c = 0; c < d.features; ++c) {
        const double* p = base + static_cast<std::int64_t>(c) * d.inner;
        double s = 0.0, ss = 0.0;
        for (std::int64_t i = 0; i < d.inner; ++i) {
          s += p[i];
          ss += p[i] * p[i];
        }
        sum[static_cast<std::size_t>(c)] += s;
        sum_sq[static_cast<std::size_t>(c)] += ss;
      }
    }
    const double inv_count = 1.0 / static_cast<double>(d.count());
    for (int c = 0; c < d.features; ++c) {
      const double mu = sum[static_cast<std::size_t>(c)] * inv_count;
      const double var = std::max(0.0, sum_sq[static_cast<std::size_t>(c)] * inv_count - mu * mu);
      saved.mean[static_cast<std::size_t>(c)] = mu;
      saved.invstd[static_cast<std::size_t>(c)] = 1.0 / std::sqrt(var + eps);
      if (running != nullptr) {
        if (static_cast<int>(running->mean.size()) != d.features) {
          throw config_error("batchnorm: running stats hold " +
                             std::to_string(running->mean.size()) + " features, input has " +
                             std::to_string(d.features));
        }
        running->mean[static_cast<std::size_t>(c)] =
            (1.0 - momentum) * running->mean[static_cast<std::size_t>(c)] + momentum * mu;
        running->var[static_cast<std::size_t>(c)] =
            (1.0 - momentum) * running->var[static_cast<std::size_t>(c)] + momentum * var;
      }
    }
  } else {
    for (int c = 0; c < d.features; ++c) {
      saved.mean[static_cast<std::size_t>(c)] = running->mean[static_cast<std::size_t>(c)];
      saved.invstd[static_cast<std::size_t>(c)] =
          1.0 / std::sqrt(running->var[static_cast<std::size_t>(c)] + eps);
    }
  }

  Tensor out(xv.shape);
  parallel_for(d.outer, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t o = lo; o < hi; ++o) {
      const double* src = xv.data.data() + o * d.features * d.inner;
      double* dst = out.data.data() + o * d.features * d.inner;
      for (int c = 0; c < d.features; ++c) {
        const double mu = saved.mean[static_cast<std::size_t>(c)];
        const double a = gv.data[static_cast<std::size_t>(c)] * saved.invstd[static_cast<std::size_t>(c)];
        const double sh = bv.data[static_cast<std::size_t>(c)];
        const double* ps = src + static_cast<std::int64_t>(c) * d.inner;
        double* pd = dst + static_cast<std::int64_t>(c) * d.inner;
        for (std::int64_t i = 0; i < d.inner; ++i) pd[i] = a * (ps[i] - mu) + sh;
      }
    }
  });

  Node n;
  n.op = Op::kBatchNorm;
  n.in = {x, gamma, beta};
  n.value = std::move(out);
  n.needs_grad = at(x).needs_grad || at(gamma).needs_grad || at(beta).needs_grad;
  n.bn = std::move(saved);
  return push(std::move(n));
}

void Tape::backward_batchnorm(Node& n) {
  const Tensor& xv = at(n.in[0]).val();
  const BnDims d = bn_dims(xv);
  const BnSaved& s = *n.bn;
  const Tensor& gv = at(n.in[1]).val();
  const Tensor& gy = n.grad_;

  const bool need_x = at(n.in[0]).needs_grad;
  const bool need_g = at(n.in[1]).needs_grad;
  const bool need_b = at(n.in[2]).needs_grad;

  // one sequential pass for both reductions
  std::vector<double> sum_gy(static_cast<std::size_t>(d.features), 0.0);
  std::vector<double> sum_gy_xhat(static_cast<std::size_t>(d.features), 0.0);
  for (std::int64_t o = 0; o < d.outer; ++o) {
    const double* bx = xv.data.data() + o * d.features * d.inner;
    const double* bg = gy.data.data() + o * d.features * d.inner;
    for (int c = 0; c < d.features; ++c) {
      const double mu = s.mean[static_cast<std::size_t>(c)];
      const double istd = s.invstd[static_cast<std::size_t>(c)];
      const double* px = bx + static_cast<std::int64_t>(c) * d.inner;
      const double* pg = bg + static_cast<std::int64_t>(c) * d.inner;
      double sg = 0.0, sgx = 0.0;
      for (std::int64_t i = 0; i < d.inner; ++i) {
        sg += pg[i];
        sgx += pg[i] * (px[i] - mu) * istd;
      }
      sum_gy[static_cast<std::size_t>(c)] += sg;
      sum_gy_xhat[static_cast<std::size_t>(c)] += sgx;
    }
  }

  if (need_b) {
    Tensor& gb = grad_buffer(n.in[2]);
    for (int c = 0; c < d.features; ++c) gb.data[static_cast<std::size_t>(c)] += sum_gy[static_cast<std::size_t>(c)];
  }
  if (need_g) {
    Tensor& gg = grad_buffer(n.in[1]);
    for (int c = 0; c < d.features; ++c) gg.data[static_cast<std::size_t>(c)] += sum_gy_xhat[static_cast<std::size_t>(c)];
  }
  if (!need_x) return;

  Tensor& gx = grad_buffer(n.in[0]);
  const double inv_count = 1.0 / static_cast<double>(d.count());
  parallel_for(d.outer, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t o = lo; o < hi; ++o) {
      const double* bx = xv.data.data() + o * d.features * d.inner;
      const double* bg = gy.data.data() + o * d.features * d.inner;
      double* bd = gx.data.data() + o * d.features * d.inner;
      for (int c = 0; c < d.features; ++c) {
        const double mu = s.mean[static_cast<std::size_t>(c)];
        const double istd = s.invstd[static_cast<std::size_t>(c)];
        const double a = gv.data[static_cast<std::size_t>(c)] * istd;
        const double* px = bx + static_cast<std::int64_t>(c) * d.inner;
        const double* pg = bg + static_cast<std::int64_t>(c) * d.inner;
        double* pd = bd + static_cast<std::int64_t>(c) * d.inner;
        if (s.mode == BatchNormMode::kTrain) {
          const double mg = sum_gy[static_cast<std::size_t>(c)] * inv_count;
          const double mgx = sum_gy_xhat[static_cast<std::size_t>(c)] * inv_count;
          for (std::int64_t i = 0; i < d.inner; ++i) {
            const double xhat = (px[i] - mu) * istd;
            pd[i] += a * (pg[i] - mg - xhat * mgx);
          }
        } else {
          for (std::int64_t i = 0; i < d.inner; ++i) pd[i] += a * pg[i];
        }
      }
    }
  });
}

NodeId Tape::neighbor_mean(NodeId x, int group_size) {
  const Tensor& xv = val(x);
  if (xv.rank() != 2) throw config_error("neighbor_mean: input must be [N,F], got " + xv.shape_str());
  if (group_size < 1) throw config_error("neighbor_mean: group size must be >= 1");
  const int rows = xv.shape[0];
  const int feats = xv.shape[1];
  if (rows % group_size != 0) {
    throw config_error("neighbor_mean: row count " + std::to_string(rows) +
                       " is not a multiple of group size " + std::to_string(group_size));
  }
  Tensor out(xv.shape);  // zeros; group_size == 1 keeps them
  if (group_size > 1) {
    const int scenes = rows / group_size;
    const double scale = 1.0 / static_cast<double>(group_size - 1);
    const int u = group_size;
    constexpr int kTile = 512;  // feature tile kept cache-resident
    parallel_for(scenes, [&](std::int64_t lo, std::int64_t hi) {
      std::vector<double> tile(static_cast<std::size_t>(u) * kTile);
      std::vector<std::pair<double, int>> vals(static_cast<std::size_t>(u));
      for (std::int64_t sc = lo; sc < hi; ++sc) {
        const double* base = xv.data.data() + sc * u * feats;
        double* dst = out.data.data() + sc * u * feats;
        for (int f0 = 0; f0 < feats; f0 += kTile) {
          const int width = std::min(kTile, feats - f0);
          for (int i = 0; i < u; ++i) {
            std::copy(base + i * feats + f0, base + i * feats + f0 + width,
                      tile.data() + static_cast<std::size_t>(i) * kTile);
          }
          for (int f = 0; f < width; ++f) {
            for (int i = 0; i < u; ++i) {
              vals[static_cast<std::size_t>(i)] = {tile[static_cast<std::size_t>(i) * kTile + f], i};
            }
            // value-sorted summation: bit-identical under row permutations
            std::sort(vals.begin(), vals.end(),
                      [](const auto& a, const auto& b) { return a.first < b.first; });
            for (int skip = 0; skip < u; ++skip) {
              double acc = 0.0;
              for (int i = 0; i < u; ++i) {
                if (vals[static_cast<std::size_t>(i)].second != skip) {
                  acc += vals[static_cast<std::size_t>(i)].first;
                }
              }
              dst[skip * feats + f0 + f] = acc * scale;
            }
          }
        }
      }
    });
  }
  Node n;
  n.op = Op::kNeighborMean;
  n.in = {x, -1, -1};
  n.value = std::move(out);
  n.needs_grad = at(x).needs_grad;
  n.group = group_size;
  return push(std::move(n));
}

NodeId Tape::concat(NodeId a, NodeId b) {
  const Tensor& av = val(a);
  const Tensor& bv = val(b);
  if (av.rank() != bv.rank()) {
    throw config_error("concat: rank mismatch " + av.shape_str() + " vs " + bv.shape_str());
  }
  for (int i = 0; i + 1 < av.rank(); ++i) {
    if (av.shape[i] != bv.shape[i]) {
      throw config_error("concat: leading axes differ: " + av.shape_str() + " vs " + bv.shape_str());
    }
  }
  std::vector<int> os = av.shape;
  os.back() += bv.shape.back();
  Tensor out(os);
  const std::int64_t fa = av.shape.back(), fb = bv.shape.back();
  const std::int64_t rows = av.numel() / fa;
  parallel_for(rows, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t r = lo; r < hi; ++r) {
      std::copy(av.data.begin() + r * fa, av.data.begin() + (r + 1) * fa,
                out.data.begin() + r * (fa + fb));
      std::copy(bv.data.begin() + r * fb, bv.data.begin() + (r + 1) * fb,
                out.data.begin() + r * (fa + fb) + fa);
    }
  });
  Node n;
  n.op = Op::kConcat;
  n.in = {a, b, -1};
  n.value = std::move(out);
  n.needs_grad = at(a).needs_grad || at(b).needs_grad;
  n.split = fa;
  return push(std::move(n));
}

NodeId Tape::reshape(NodeId x, std::vector<int> new_shape) {
  const Tensor& xv = val(x);
  if (shape_numel(new_shape) != xv.numel()) {
    throw config_error("reshape: cannot view " + xv.shape_str() + " as " + shape_str(new_shape));
  }
  Node n;
  n.op = Op::kReshape;
  n.in = {x, -1, -1};
  n.value = Tensor(std::move(new_shape), xv.data);
  n.needs_grad = at(x).needs_grad;
  return push(std::move(n));
}

NodeId Tape::softmax(NodeId x) {
  const Tensor& xv = val(x);
  const int c = xv.shape.back();
  const std::int64_t rows = xv.numel() / c;
  Tensor out(xv.shape);
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* src = xv.data.data() + r * c;
    double* dst = out.data.data() + r * c;
    double mx = src[0];
    for (int i = 1; i < c; ++i) mx = std::max(mx, src[i]);
    double sum = 0.0;
    for (int i = 0; i < c; ++i) {
      dst[i] = std::exp(src[i] - mx);
      sum += dst[i];
    }
    for (int i = 0; i < c; ++i) dst[i] /= sum;
  }
  Node n;
  n.op = Op::kSoftmax;
  n.in = {x, -1, -1};
  n.value = std::move(out);
  n.needs_grad = at(x).needs_grad;
  return push(std::move(n));
}

NodeId Tape::softmax_cross_entropy(NodeId logits, std::vector<int> labels, double scale) {
  const Tensor& xv = val(logits);
  const int c = xv.shape.back();
  const std::int64_t rows = xv.numel() / c;
  if (c < 1) throw config_error("softmax_cross_entropy: need at least one class");
  if (static_cast<std::int64_t>(labels.size()) != rows) {
    throw config_error("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                       std::to_string(rows) + " rows");
  }
  XentSaved saved;
  saved.labels = labels;
  saved.scale = scale;
  saved.probs = Tensor(xv.shape);

  double loss = 0.0;
  for (std::int64_t r = 0; r < rows; ++r) {
    const int label = labels[static_cast<std::size_t>(r)];
    if (label < 0 || label >= c) {
      throw config_error("softmax_cross_entropy: label " + std::to_string(label) +
                         " out of range for " + std::to_string(c) + " classes");
    }
    const double* src = xv.data.data() + r * c;
    double* p = saved.probs.data.data() + r * c;
    double mx = src[0];
    for (int i = 1; i < c; ++i) mx = std::max(mx, src[i]);
    double sum = 0.0;
    for (int i = 0; i < c; ++i) {
      p[i] = std::exp(src[i] - mx);
      sum += p[i];
    }
    for (int i = 0; i < c; ++i) p[i] /= sum;
    // -log10 p = -((z - mx) - ln(sum)) / ln(10)
    loss -= (src[label] - mx - std::log(sum)) / kLn10;
  }

  Node n;
  n.op = Op::kSoftmaxXent;
  n.in = {logits, -1, -1};
  n.value = Tensor::scalar(scale * loss);
  n.needs_grad = at(logits).needs_grad;
  n.xent = std::move(saved);
  return push(std::move(n));
}

void Tape::backward_softmax_xent(Node& n) {
  if (!at(n.in[0]).needs_grad) return;
  const XentSaved& s = *n.xent;
  const double g = n.grad_.data[0] * s.scale / kLn10;
  Tensor& gx = grad_buffer(n.in[0]);
  const int c = s.probs.shape.back();
  const std::int64_t rows = s.probs.numel() / c;
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* p = s.probs.data.data() + r * c;
    double* dst = gx.data.data() + r * c;
    for (int i = 0; i < c; ++i) dst[i] += g * p[i];
    dst[s.labels[static_cast<std::size_t>(r)]] -= g;
  }
}

void Tape::backward(NodeId root) {
  Node& r = at(root);
  if (r.val().numel() != 1) {
    throw usage_error("backward: root must be scalar, got shape " + r.val().shape_str());
  }
  for (auto& n : nodes_) {
    n.has_grad = false;
    n.grad_ = Tensor();
  }
  r.grad_ = Tensor(r.val().shape, {1.0});
  r.has_grad = true;

  for (NodeId id = root; id >= 0; --id) {
    Node& n = at(id);
    if (!n.has_grad || !n.needs_grad) continue;
    switch (n.op) {
      case Op::kInput:
        break;
      case Op::kConv2d:
        backward_conv2d(n);
        break;
      case Op::kDense:
        backward_dense(n);
        break;
      case Op::kRelu: {
        if (!at(n.in[0]).needs_grad) break;
        const Tensor& xv = at(n.in[0]).val();
        Tensor& gx = grad_buffer(n.in[0]);
        const Tensor& gy = n.grad_;
        parallel_for(xv.numel(), [&](std::int64_t lo, std::int64_t hi) {
          for (std::int64_t i = lo; i < hi; ++i) {
            if (xv.data[i] > 0.0) gx.data[i] += gy.data[i];
          }
        });
        break;
      }
      case Op::kAdd: {
        for (int k = 0; k < 2; ++k) {
          if (!at(n.in[k]).needs_grad) continue;
          Tensor& g = grad_buffer(n.in[k]);
          for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += n.grad_.data[i];
        }
        break;
      }
      case Op::kBatchNorm:
        backward_batchnorm(n);
        break;
      case Op::kNeighborMean: {
        if (!at(n.in[0]).needs_grad || n.group == 1) break;
        const int u = n.group;
        const int feats = n.value.shape[1];
        const std::int64_t scenes = n.value.shape[0] / u;
        const double scale = 1.0 / static_cast<double>(u - 1);
        Tensor& gx = grad_buffer(n.in[0]);
        const Tensor& gy = n.grad_;
        parallel_for(scenes, [&](std::int64_t lo, std::int64_t hi) {
          std::vector<double> total(static_cast<std::size_t>(feats));
          for (std::int64_t s = lo; s < hi; ++s) {
            const double* gbase = gy.data.data() + s * u * feats;
            double* dbase = gx.data.data() + s * u * feats;
            std::fill(total.begin(), total.end(), 0.0);
            for (int i = 0; i < u; ++i) {
              const double* row = gbase + static_cast<std::int64_t>(i) * feats;
              for (int f = 0; f < feats; ++f) total[static_cast<std::size_t>(f)] += row[f];
            }
            for (int i = 0; i < u; ++i) {
              const double* row = gbase + static_cast<std::int64_t>(i) * feats;
              double* drow = dbase + static_cast<std::int64_t>(i) * feats;
              for (int f = 0; f < feats; ++f) {
                drow[f] += (total[static_cast<std::size_t>(f)] - row[f]) * scale;
              }
            }
          }
        });
        break;
      }
      case Op::kConcat: {
        const std::int64_t fa = n.split;
        const std::int64_t fo = n.value.shape.back();
        const std::int64_t fb = fo - fa;
        const std::int64_t rows = n.value.numel() / fo;
        for (int k = 0; k < 2; ++k) {
          if (!at(n.in[k]).needs_grad) continue;
          Tensor& g = grad_buffer(n.in[k]);
          const std::int64_t width = (k == 0) ? fa : fb;
          const std::int64_t off = (k == 0) ? 0 : fa;
          parallel_for(rows, [&](std::int64_t lo, std::int64_t hi) {
            for (std::int64_t r = lo; r < hi; ++r) {
              const double* src = n.grad_.data.data() + r * fo + off;
              double* dst = g.data.data() + r * width;
              for (std::int64_t i = 0; i < width; ++i) dst[i] += src[i];
            }
          });
        }
        break;
      }
      case Op::kReshape: {
        if (!at(n.in[0]).needs_grad) break;
        Tensor& g = grad_buffer(n.in[0]);
        for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += n.grad_.data[i];
        break;
      }
      case Op::kSoftmax: {
        if (!at(n.in[0]).needs_grad) break;
        const Tensor& p = n.value;
        const Tensor& gy = n.grad_;
        Tensor& gx = grad_buffer(n.in[0]);
        const int c = p.shape.back();
        const std::int64_t rows = p.numel() / c;
        for (std::int64_t r = 0; r < rows; ++r) {
          const double* pr = p.data.data() + r * c;
          const double* gr = gy.data.data() + r * c;
          double dot = 0.0;
          for (int i = 0; i < c; ++i) dot += pr[i] * gr[i];
          double* dst = gx.data.data() + r * c;
          for (int i = 0; i < c; ++i) dst[i] += pr[i] * (gr[i] - dot);
        }
        break;
      }
      case Op::kSoftmaxXent:
        backward_softmax_xent(n);
        break;
    }
  }
}

}  // namespace nmbe::gradcore
