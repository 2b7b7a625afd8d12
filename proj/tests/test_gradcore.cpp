// SPDX-License-Identifier: Apache-2.0
//
// nmbe: near-field mmWave beam estimation toolkit

#include <doctest.h>

#include <cmath>

#include "nmbe/adam.hpp"
#include "nmbe/checkpoint.hpp"
#include "nmbe/grad_check.hpp"
#include "nmbe/rng.hpp"
#include "nmbe/tape.hpp"

using namespace nmbe;
using namespace nmbe::gradcore;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data) v = scale * rng.normal();
  return t;
}

}  // namespace

TEST_CASE("conv2d scalar multiply-add") {
  Tape tape;
  const NodeId x = tape.input(Tensor({1, 1, 1}, {2.0}));
  const NodeId w = tape.input(Tensor({1, 1, 1, 1}, {3.0}));
  const NodeId b = tape.input(Tensor({1}, {1.0}));
  const NodeId y = tape.conv2d(x, w, b, Padding::kSame);
  CHECK(tape.value(y).data[0] == doctest::Approx(7.0));
}

TEST_CASE("conv2d identity kernel under same padding") {
  Rng rng(7);
  Tensor img = random_tensor({3, 4, 5}, rng);
  // single 1 at the centre of a 3x3 kernel, one input->output channel map
  Tensor w({3, 3, 3, 3});
  for (int c = 0; c < 3; ++c) w.at({c, c, 1, 1}) = 1.0;
  Tape tape;
  const NodeId y =
      tape.conv2d(tape.input(img), tape.input(w), tape.input(Tensor({3})), Padding::kSame);
  const Tensor& out = tape.value(y);
  REQUIRE(out.shape == img.shape);
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    CHECK(out.data[i] == doctest::Approx(img.data[i]));
  }
}

TEST_CASE("conv2d valid padding shrinks and matches direct computation") {
  Rng rng(9);
  Tensor img = random_tensor({1, 2, 3, 4}, rng);
  Tensor w = random_tensor({2, 2, 2, 2}, rng);
  Tensor b = random_tensor({2}, rng);
  Tape tape;
  const NodeId y = tape.conv2d(tape.input(img), tape.input(w), tape.input(b), Padding::kValid);
  const Tensor& out = tape.value(y);
  REQUIRE(out.shape == std::vector<int>{1, 2, 2, 3});
  for (int co = 0; co < 2; ++co) {
    for (int oy = 0; oy < 2; ++oy) {
      for (int ox = 0; ox < 3; ++ox) {
        double acc = b.at({co});
        for (int ci = 0; ci < 2; ++ci) {
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              acc += img.at({0, ci, oy + dy, ox + dx}) * w.at({co, ci, dy, dx});
            }
          }
        }
        CHECK(out.at({0, co, oy, ox}) == doctest::Approx(acc));
      }
    }
  }
}

TEST_CASE("conv2d rejects channel mismatch naming the dimension") {
  Tape tape;
  const NodeId x = tape.input(Tensor({3, 2, 2}));
  const NodeId w = tape.input(Tensor({1, 4, 1, 1}));
  const NodeId b = tape.input(Tensor({1}));
  CHECK_THROWS_WITH_AS(tape.conv2d(x, w, b), doctest::Contains("channel count"), config_error);
}

TEST_CASE("conv2d backward matches finite differences") {
  Rng rng(21);
  Tensor img = random_tensor({2, 3, 4}, rng);
  Tensor w = random_tensor({3, 2, 2, 1}, rng);  // kernel 2x1, 2->3 channels
  Tensor b = random_tensor({3}, rng);
  const auto fragment = [](Tape& t, const std::vector<NodeId>& in) {
    const NodeId conv = t.conv2d(in[0], in[1], in[2], Padding::kSame);
    const NodeId flat = t.reshape(conv, {1, static_cast<int>(t.value(conv).numel())});
    return t.softmax_cross_entropy(flat, {0});
  };
  const auto report = grad_check(fragment, {img, w, b}, 1e-6, 1e-5, -1, 3);
  CHECK(report.pass());
  CHECK(report.max_rel_error < 1e-6);
}

TEST_CASE("dense identity and hand arithmetic") {
  Tape tape;
  {
    Tensor w({2, 2}, {1.0, 0.0, 0.0, 1.0});
    const NodeId y = tape.dense(tape.input(Tensor({2}, {3.0, 4.0})), tape.input(w),
                                tape.input(Tensor({2})));
    CHECK(tape.value(y).data[0] == doctest::Approx(3.0));
    CHECK(tape.value(y).data[1] == doctest::Approx(4.0));
  }
  {
    const NodeId y = tape.dense(tape.input(Tensor({2}, {3.0, 4.0})),
                                tape.input(Tensor({1, 2}, {1.0, 2.0})),
                                tape.input(Tensor({1}, {0.0})));
    CHECK(tape.value(y).data[0] == doctest::Approx(11.0));
  }
}

TEST_CASE("dense gradients match finite differences (8->5)") {
  Rng rng(33);
  Tensor x = random_tensor({8}, rng);
  Tensor w = random_tensor({5, 8}, rng, 0.5);
  Tensor b = random_tensor({5}, rng, 0.1);
  const auto fragment = [](Tape& t, const std::vector<NodeId>& in) {
    const NodeId d = t.dense(in[0], in[1], in[2]);
    const NodeId flat = t.reshape(d, {1, 5});
    return t.softmax_cross_entropy(flat, {2});
  };
  const auto report = grad_check(fragment, {x, w, b}, 1e-6, 1e-5, -1, 5);
  CHECK(report.max_rel_error < 1e-6);
}

TEST_CASE("relu basics") {
  Tape tape;
  const NodeId y = tape.relu(tape.input(Tensor({3}, {-1.0, 0.0, 2.0})));
  CHECK(tape.value(y).data == std::vector<double>{0.0, 0.0, 2.0});
}

TEST_CASE("batchnorm of constant batch is zero") {
  Tape tape;
  Tensor x({4, 3});
  for (double& v : x.data) v = 5.0;
  const NodeId y = tape.batchnorm(tape.input(x), tape.input(Tensor::full({3}, 1.0)),
                                  tape.input(Tensor({3})), BatchNormMode::kTrain, nullptr);
  for (double v : tape.value(y).data) CHECK(v == doctest::Approx(0.0));
}

TEST_CASE("batchnorm single-row batch survives zero variance") {
  Tape tape;
  const NodeId y = tape.batchnorm(tape.input(Tensor({1, 2}, {3.0, -4.0})),
                                  tape.input(Tensor::full({2}, 1.0)), tape.input(Tensor({2})),
                                  BatchNormMode::kTrain, nullptr);
  for (double v : tape.value(y).data) CHECK(std::isfinite(v));
}

TEST_CASE("batchnorm backward matches finite differences on random 4x3 batch") {
  Rng rng(44);
  Tensor x = random_tensor({4, 3}, rng);
  Tensor gamma = random_tensor({3}, rng, 0.3);
  for (double& g : gamma.data) g += 1.0;
  Tensor beta = random_tensor({3}, rng, 0.2);
  const auto fragment = [](Tape& t, const std::vector<NodeId>& in) {
    const NodeId bn = t.batchnorm(in[0], in[1], in[2], BatchNormMode::kTrain, nullptr);
    return t.softmax_cross_entropy(t.reshape(bn, {1, 12}), {5});
  };
  const auto report = grad_check(fragment, {x, gamma, beta}, 1e-5, 1e-5, -1, 6);
  CHECK(report.max_rel_error < 1e-5);
}

TEST_CASE("batchnorm running statistics and inference mode") {
  Tensor x({2, 1}, {1.0, 3.0});
  BnStats stats = BnStats::fresh(1);
  Tape tape;
  tape.batchnorm(tape.input(x), tape.input(Tensor::full({1}, 1.0)), tape.input(Tensor({1})),
                 BatchNormMode::kTrain, &stats, 0.1, 1e-5);
  // batch mean 2, biased variance 1; momentum 0.1 from fresh (0, 1)
  CHECK(stats.mean[0] == doctest::Approx(0.2));
  CHECK(stats.var[0] == doctest::Approx(1.0));

  Tape infer;
  const NodeId y = infer.batchnorm(infer.input(x), infer.input(Tensor::full({1}, 1.0)),
                                   infer.input(Tensor({1})), BatchNormMode::kInfer, &stats);
  CHECK(infer.value(y).data[0] ==
        doctest::Approx((1.0 - 0.2) / std::sqrt(1.0 + 1e-5)).epsilon(1e-9));
}

TEST_CASE("softmax cross entropy examples") {
  {
    Tape tape;
    const NodeId loss = tape.softmax_cross_entropy(tape.input(Tensor({2}, {0.0, 0.0})), {0});
    const Tensor& p = tape.saved_probs(loss);
    CHECK(p.data[0] == doctest::Approx(0.5));
    CHECK(p.data[1] == doctest::Approx(0.5));
    CHECK(tape.value(loss).data[0] == doctest::Approx(0.30103).epsilon(1e-5));
  }
  {
    // extreme logits stay finite (max subtraction)
    Tape tape;
    const NodeId loss = tape.softmax_cross_entropy(tape.input(Tensor({2}, {1000.0, 0.0})), {0});
    CHECK(tape.value(loss).data[0] == doctest::Approx(0.0));
    CHECK(tape.saved_probs(loss).data[0] == doctest::Approx(1.0));
  }
}

TEST_CASE("softmax cross entropy gradient vs finite differences (7 classes)") {
  Rng rng(55);
  Tensor logits = random_tensor({7}, rng, 2.0);
  const auto fragment = [](Tape& t, const std::vector<NodeId>& in) {
    return t.softmax_cross_entropy(t.reshape(in[0], {1, 7}), {3});
  };
  const auto report = grad_check(fragment, {logits}, 1e-6, 1e-5, -1, 7);
  CHECK(report.max_rel_error < 1e-6);
}

TEST_CASE("softmax probabilities sum to one and lie in range") {
  Rng rng(66);
  Tensor logits = random_tensor({5, 9}, rng, 3.0);
  Tape tape;
  const Tensor& p = tape.value(tape.softmax(tape.input(logits)));
  for (int r = 0; r < 5; ++r) {
    double sum = 0.0;
    for (int c = 0; c < 9; ++c) {
      const double v = p.at({r, c});
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      sum += v;
    }
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("neighbor mean: hand case, singleton group, permutation stability") {
  Tensor x({3, 2}, {1.0, 10.0, 2.0, 20.0, 4.0, 40.0});
  Tape tape;
  const Tensor& y = tape.value(tape.neighbor_mean(tape.input(x), 3));
  CHECK(y.at({0, 0}) == doctest::Approx(3.0));
  CHECK(y.at({0, 1}) == doctest::Approx(30.0));
  CHECK(y.at({1, 0}) == doctest::Approx(2.5));
  CHECK(y.at({2, 1}) == doctest::Approx(15.0));

  Tape single;
  const Tensor& z = single.value(single.neighbor_mean(single.input(Tensor({2, 4})), 1));
  for (double v : z.data) CHECK(v == 0.0);

  // bit-exact under row permutation within the group
  Rng rng(77);
  Tensor a = random_tensor({4, 8}, rng);
  Tensor b({4, 8});
  const int perm[4] = {2, 0, 3, 1};
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 8; ++c) b.at({perm[r], c}) = a.at({r, c});
  }
  Tape ta, tb;
  const Tensor& ya = ta.value(ta.neighbor_mean(ta.input(a), 4));
  const Tensor& yb = tb.value(tb.neighbor_mean(tb.input(b), 4));
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 8; ++c) {
      CHECK(ya.at({r, c}) == yb.at({perm[r], c}));  // exact, no tolerance
    }
  }
}

TEST_CASE("tape backward over a diamond DAG sums path contributions") {
  Tape tape;
  const NodeId x = tape.input(Tensor({1}, {2.0}));
  const NodeId a = tape.relu(x);
  const NodeId b = tape.relu(x);
  const NodeId y = tape.add(a, b);
  tape.backward(y);
  CHECK(tape.grad(x).data[0] == doctest::Approx(2.0));
}

TEST_CASE("backward requires scalar root") {
  Tape tape;
  const NodeId x = tape.input(Tensor({3}, {1.0, 2.0, 3.0}));
  CHECK_THROWS_AS(tape.backward(x), usage_error);
}

TEST_CASE("forward pass is pure: repeated evaluation is bit-identical") {
  Rng rng(88);
  Tensor x = random_tensor({4, 6}, rng);
  Tensor w = random_tensor({3, 6}, rng);
  Tensor b = random_tensor({3}, rng);
  auto run = [&] {
    Tape t;
    const NodeId d = t.dense(t.input(x), t.input(w), t.input(b));
    const NodeId r = t.relu(d);
    const NodeId bn = t.batchnorm(r, t.input(Tensor::full({3}, 1.0)), t.input(Tensor({3})),
                                  BatchNormMode::kTrain, nullptr);
    return t.value(bn).data;
  };
  CHECK(run() == run());
}

TEST_CASE("adam: zero gradient leaves fresh parameters unchanged") {
  Tensor p({3}, {1.0, -2.0, 3.0});
  AdamState st = AdamState::init({&p}, 0.1);
  Tensor g({3});
  adam_step({&p}, {&g}, st);
  CHECK(p.data == std::vector<double>{1.0, -2.0, 3.0});
}

TEST_CASE("adam: first step moves by about the learning rate") {
  Tensor p({2}, {0.0, 0.0});
  AdamState st = AdamState::init({&p}, 0.05);
  Tensor g({2}, {0.3, -4.0});
  adam_step({&p}, {&g}, st);
  CHECK(p.data[0] == doctest::Approx(-0.05).epsilon(1e-6));
  CHECK(p.data[1] == doctest::Approx(0.05).epsilon(1e-6));
}

TEST_CASE("adam: 100 steps shrink x^2 from x=5 below 1") {
  Tensor x({1}, {5.0});
  AdamState st = AdamState::init({&x}, 0.1);
  for (int i = 0; i < 100; ++i) {
    Tensor g({1}, {2.0 * x.data[0]});
    adam_step({&x}, {&g}, st);
  }
  CHECK(std::abs(x.data[0]) < 1.0);
}

TEST_CASE("grad_check: dense+relu+cross-entropy fragment") {
  Rng rng(99);
  Tensor x = random_tensor({6}, rng);
  Tensor w = random_tensor({4, 6}, rng, 0.7);
  Tensor b = random_tensor({4}, rng, 0.3);
  const auto fragment = [](Tape& t, const std::vector<NodeId>& in) {
    const NodeId d = t.dense(in[0], in[1], in[2]);
    const NodeId r = t.relu(d);
    return t.softmax_cross_entropy(t.reshape(r, {1, 4}), {1});
  };
  const auto report = grad_check(fragment, {x, w, b}, 1e-5);
  CHECK(report.pass());
}

TEST_CASE("grad_check: zero-weight network gives near-zero both ways") {
  Tensor x({3}, {1.0, 2.0, 3.0});
  Tensor w({2, 3});
  Tensor b({2});
  const auto fragment = [](Tape& t, const std::vector<NodeId>& in) {
    const NodeId d = t.dense(in[0], in[1], in[2]);
    return t.softmax_cross_entropy(t.reshape(d, {1, 2}), {0});
  };
  const auto report = grad_check(fragment, {x, w, b}, 1e-5);
  CHECK(report.pass());
}

TEST_CASE("grad_check rejects non-scalar fragments") {
  Tensor x({2}, {1.0, 2.0});
  const auto fragment = [](Tape&, const std::vector<NodeId>& in) { return in[0]; };
  CHECK_THROWS_AS(grad_check(fragment, {x}, 1e-5), usage_error);
}

TEST_CASE("checkpoint round-trip with optimizer state") {
  Rng rng(111);
  ParamSet set;
  set.params.push_back({"w", random_tensor({3, 2}, rng)});
  set.params.push_back({"b", random_tensor({3}, rng)});
  set.buffers.push_back({"stat", random_tensor({3}, rng)});
  AdamState st = AdamState::init(set.param_ptrs(), 0.01);
  st.step = 7;
  st.m[0].data[0] = 0.5;

  const std::string dir = "checkpoint_test_dir";
  save_checkpoint(dir, set, &st, {{"note", "x"}});
  const Checkpoint ck = load_checkpoint(dir);
  REQUIRE(ck.set.params.size() == 2);
  CHECK(ck.set.params[0].value.data == set.params[0].value.data);
  CHECK(ck.set.buffers[0].value.data == set.buffers[0].value.data);
  REQUIRE(ck.opt.has_value());
  CHECK(ck.opt->step == 7);
  CHECK(ck.opt->m[0].data[0] == 0.5);
  CHECK(ck.meta.at("note") == "x");
}
