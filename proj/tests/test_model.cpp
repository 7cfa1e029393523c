/*
 * Copyright 2026 The gplab Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "gplab/model/network.hpp"
#include "support/oracles.hpp"

namespace gplab {
namespace {

TEST(RoundFilters, Examples) {
  EXPECT_EQ(round_filters(32, 1.0), 32u);
  EXPECT_EQ(round_filters(16, 1.2), 24u);
  EXPECT_EQ(round_filters(8, 0.5), 8u);
  EXPECT_EQ(round_filters(1280, 1.4), 1792u);
  EXPECT_EQ(round_filters(40, 1.1), 48u);
}

TEST(RoundFilters, MultipleOfDivisorAndMonotone) {
  for (std::size_t base = 1; base <= 400; base += 3) {
    std::size_t prev = 0;
    for (double m = 0.25; m <= 3.0; m += 0.05) {
      const std::size_t r = round_filters(base, m, 8);
      ASSERT_EQ(r % 8, 0u);
      ASSERT_GE(r, 8u);
      ASSERT_GE(r, prev) << base << " " << m;
      prev = r;
    }
  }
}

TEST(RoundRepeats, ExamplesAndMonotone) {
  EXPECT_EQ(round_repeats(2, 1.0), 2u);
  EXPECT_EQ(round_repeats(2, 1.1), 3u);
  EXPECT_EQ(round_repeats(1, 1.8), 2u);
  for (std::size_t base = 1; base < 6; ++base) {
    std::size_t prev = 0;
    for (double m = 1.0; m <= 3.0; m += 0.01) {
      const std::size_t r = round_repeats(base, m);
      ASSERT_GE(r, 1u);
      ASSERT_GE(r, prev);
      prev = r;
    }
  }
}

TEST(ModelSpec, ResolvedToyVariants) {
  auto b0 = resolve(model_spec("toy-B0"));
  EXPECT_EQ(b0.stage_channels, (std::vector<std::size_t>{16, 24, 40}));
  EXPECT_EQ(b0.stage_repeats, (std::vector<std::size_t>{1, 2, 2}));
  EXPECT_EQ(b0.total_stride, 8u);
  // ceil(1.1 * {1, 2, 2})
  auto b1 = resolve(model_spec("toy-B1"));
  EXPECT_EQ(b1.stage_repeats, (std::vector<std::size_t>{2, 3, 3}));
  auto full = resolve(model_spec("B4"));
  EXPECT_EQ(full.stage_repeats, (std::vector<std::size_t>{2, 4, 4, 6, 6, 8, 2}));
  EXPECT_EQ(full.stage_channels, (std::vector<std::size_t>{24, 32, 56, 112, 160, 272, 448}));
  EXPECT_THROW(model_spec("B7"), UsageError);
}

TEST(ModelSpec, RejectsInvalidStageTable) {
  auto spec = model_spec("toy-B0");
  spec.stages[1].kernel = 4;
  EXPECT_THROW(build<float>(spec, 0), UsageError);
  spec = model_spec("toy-B0");
  spec.stages.clear();
  EXPECT_THROW(build<float>(spec, 0), UsageError);
}

TEST(ModelSpec, WidthAndDepthMonotone) {
  auto base = model_spec("B0");
  auto prev = resolve(base);
  for (double m = 1.05; m < 2.5; m += 0.05) {
    auto s = base;
    s.coefficients.width_multiplier = m;
    s.coefficients.depth_multiplier = m;
    auto r = resolve(s);
    for (std::size_t i = 0; i < r.stage_channels.size(); ++i) {
      ASSERT_GE(r.stage_channels[i], prev.stage_channels[i]);
      ASSERT_GE(r.stage_repeats[i], prev.stage_repeats[i]);
    }
    prev = r;
  }
}

// Closed-form parameter count of toy-B0, written out by hand from the layer
// list (conv weights, BN scale+shift, SE dense layers, classifier).
std::size_t toy_b0_param_count() {
  auto conv_bn = [](std::size_t cin, std::size_t cout, std::size_t k, std::size_t groups) {
    return cout * (cin / groups) * k * k + 2 * cout;
  };
  auto mbconv = [&](std::size_t in, std::size_t out, std::size_t expand, std::size_t k) {
    const std::size_t mid = in * expand;
    const std::size_t se = std::max<std::size_t>(1, in / 4);
    std::size_t n = 0;
    if (expand != 1) n += conv_bn(in, mid, 1, 1);
    n += conv_bn(mid, mid, k, mid);
    n += se * mid + se + mid * se + mid;
    n += conv_bn(mid, out, 1, 1);
    return n;
  };
  std::size_t n = conv_bn(3, 32, 3, 1);
  n += mbconv(32, 16, 1, 3);
  n += mbconv(16, 24, 6, 3) + mbconv(24, 24, 6, 3);
  n += mbconv(24, 40, 6, 5) + mbconv(40, 40, 6, 5);
  n += conv_bn(40, 128, 1, 1);
  n += 6 * 128 + 6;
  return n;
}

TEST(Network, ParameterCountMatchesClosedForm) {
  auto net = build<float>(model_spec("toy-B0"), 1);
  EXPECT_EQ(net.parameter_count(), toy_b0_param_count());
}

TEST(Network, ForwardShapeAndFiniteLogits) {
  auto net = build<float>(model_spec("toy-B0"), 3);
  std::mt19937_64 rng(1);
  auto x = testing::random_tensor<float>({2, 3, 64, 64}, rng, -2, 2);
  Tape<float> tape;
  auto logits = net.forward(tape, x, Mode::train);
  ASSERT_EQ(logits.shape(), (Shape{2, 6}));
  for (float v : logits.data()) EXPECT_TRUE(std::isfinite(v));
  auto odd = testing::random_tensor<float>({1, 3, 37, 45}, rng);
  EXPECT_EQ(net.predict_logits(odd).shape(), (Shape{1, 6}));
}

TEST(Network, EvalForwardIsDeterministic) {
  auto net = build<float>(model_spec("toy-B0"), 3);
  std::mt19937_64 rng(2);
  auto x = testing::random_tensor<float>({3, 3, 32, 32}, rng);
  auto a = net.predict_logits(x);
  auto b = net.predict_logits(x);
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(Network, RejectsTooSmallInputNamingMinimum) {
  auto net = build<float>(model_spec("toy-B0"), 3);
  try {
    net.predict_logits(Tensor<float>(Shape{1, 3, 7, 16}));
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("8x8"), std::string::npos) << e.what();
  }
}

TEST(Network, SameSeedBitIdenticalParametersStableNames) {
  auto a = build<float>(model_spec("toy-B0"), 42);
  auto b = build<float>(model_spec("toy-B0"), 42);
  auto c = build<float>(model_spec("toy-B0"), 43);
  ASSERT_EQ(a.parameters().size(), b.parameters().size());
  bool any_diff = false;
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    EXPECT_EQ(a.parameters()[i].name, b.parameters()[i].name);
    auto x = a.parameters()[i].tensor.data();
    auto y = b.parameters()[i].tensor.data();
    auto z = c.parameters()[i].tensor.data();
    for (std::size_t j = 0; j < x.size(); ++j) {
      ASSERT_EQ(x[j], y[j]);
      any_diff |= x[j] != z[j];
    }
  }
  EXPECT_TRUE(any_diff);
  EXPECT_EQ(a.parameters().front().name, "stem.conv.weight");
  EXPECT_EQ(a.parameters().back().name, "classifier.bias");
  EXPECT_EQ(a.buffers().front().name, "stem.bn.running_mean");
}

TEST(Network, InitializationConventions) {
  auto net = build<double>(model_spec("toy-B0"), 5);
  for (const auto& e : net.parameters()) {
    if (e.name.ends_with(".bn.weight")) {
      for (double v : e.tensor.data()) ASSERT_EQ(v, 1.0);
    } else if (e.name.ends_with(".bias")) {
      for (double v : e.tensor.data()) ASSERT_EQ(v, 0.0) << e.name;
    }
  }
  // Fan-in scaling: the classifier (fan-in 128) has variance ~1/128.
  const auto& w = net.parameters()[net.parameters().size() - 2].tensor;
  double ss = 0;
  for (double v : w.data()) ss += v * v;
  EXPECT_NEAR(ss / w.numel(), 1.0 / 128.0, 0.5 / 128.0);
}

MBConvBlock<double> make_block(BlockGeometry g, std::uint64_t seed) {
  MBConvBlock<double> blk(g);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0, 0.3);
  for (auto* t : {&blk.expand.weight, &blk.depthwise.weight, &blk.se_reduce_w, &blk.se_expand_w,
                  &blk.project.weight})
    for (double& v : t->data()) v = nd(rng);
  return blk;
}

TEST(MBConv, ResidualAddsInput) {
  BlockGeometry g{8, 8, 48, 2, 3, 1};
  auto blk = make_block(g, 1);
  std::mt19937_64 rng(3);
  auto x = testing::random_tensor<double>({2, 8, 6, 6}, rng);
  Tape<double> tape(false);
  auto with = mbconv_forward(tape, x, blk, Mode::eval);
  ASSERT_TRUE(g.residual());
  auto path = [&] {
    Tensor<double> h = ops::silu(tape, blk.expand.forward(tape, x, Mode::eval));
    h = ops::silu(tape, blk.depthwise.forward(tape, h, Mode::eval));
    auto pooled = ops::reshape(tape, ops::adaptive_avg_pool2d(tape, h), Shape{2, 48});
    auto gate = ops::sigmoid(tape, ops::linear(tape, ops::silu(tape, ops::linear(tape, pooled, blk.se_reduce_w, blk.se_reduce_b)),
                                               blk.se_expand_w, blk.se_expand_b));
    return blk.project.forward(tape, ops::channel_scale(tape, h, gate), Mode::eval);
  }();
  ASSERT_EQ(with.shape(), x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_NEAR(with[i], path[i] + x[i], 1e-12);
}

TEST(MBConv, ZeroPooledFeaturesGiveHalfGate) {
  BlockGeometry g{8, 16, 48, 2, 3, 1};
  auto blk = make_block(g, 2);
  Tape<double> tape(false);
  Tensor<double> pooled(Shape{3, 48});
  auto gate = ops::sigmoid(tape, ops::linear(tape, ops::silu(tape, ops::linear(tape, pooled, blk.se_reduce_w, blk.se_reduce_b)),
                                             blk.se_expand_w, blk.se_expand_b));
  for (double v : gate.data()) EXPECT_EQ(v, 0.5);

  // With the gate pinned at 0.5 the block output is the projection of half
  // the depthwise path, i.e. exactly the ungated path at half amplitude
  // (the projection is linear and eval-mode BN is affine).
  for (double& v : blk.se_reduce_w.data()) v = 0.0;
  std::mt19937_64 rng(4);
  auto x = testing::random_tensor<double>({2, 8, 5, 5}, rng);
  auto out = mbconv_forward(tape, x, blk, Mode::eval);
  Tensor<double> h = ops::silu(tape, blk.expand.forward(tape, x, Mode::eval));
  h = ops::silu(tape, blk.depthwise.forward(tape, h, Mode::eval));
  auto half = blk.project.forward(tape, ops::scale(tape, h, 0.5), Mode::eval);
  EXPECT_FALSE(g.residual());
  for (std::size_t i = 0; i < out.numel(); ++i) EXPECT_NEAR(out[i], half[i], 1e-12);
}

TEST(MBConv, StrideTwoHalvesWithFloor) {
  BlockGeometry g{8, 16, 48, 2, 3, 2};
  auto blk = make_block(g, 3);
  std::mt19937_64 rng(5);
  Tape<double> tape(false);
  auto y = mbconv_forward(tape, testing::random_tensor<double>({1, 8, 7, 10}, rng), blk, Mode::train);
  EXPECT_EQ(y.shape(), (Shape{1, 16, 4, 5}));
  EXPECT_THROW(mbconv_forward(tape, testing::random_tensor<double>({1, 7, 7, 10}, rng), blk, Mode::train),
               ShapeError);
}

TEST(MBConv, ResidualPreservesShapeProperty) {
  std::mt19937_64 rng(6);
  for (std::size_t c : {8u, 16u, 24u}) {
    for (std::size_t k : {3u, 5u}) {
      BlockGeometry g{c, c, c * 6, std::max<std::size_t>(1, c / 4), k, 1};
      auto blk = make_block(g, c + k);
      auto x = testing::random_tensor<double>({2, c, 9, 7}, rng);
      Tape<double> tape(false);
      EXPECT_EQ(mbconv_forward(tape, x, blk, Mode::train).shape(), x.shape());
    }
  }
}

TEST(Network, FullToyGradientMatchesFiniteDifferences) {
  auto net = build<double>(model_spec("toy-B0"), 7);
  std::mt19937_64 rng(8);
  auto x = testing::random_tensor<double>({2, 3, 16, 16}, rng, -2, 2);
  auto probe = testing::random_tensor<double>({2, 6}, rng);
  auto loss_of = [&](Tape<double>& tape) {
    return ops::sum(tape, ops::mul(tape, net.forward(tape, x, Mode::train), probe));
  };
  Tape<double> tape;
  tape.backward(loss_of(tape));
  auto f = [&] {
    Tape<double> off(false);
    return loss_of(off).item();
  };
  double worst = 0;
  std::uint64_t s = 0;
  for (auto& e : net.parameters()) {
    auto g = e.tensor.grad();
    std::vector<double> analytic(g.begin(), g.end());
    auto idx = testing::sample_entries(e.tensor.numel(), 4, ++s);
    const double err = testing::fd_max_rel_error(e.tensor, analytic, f, idx);
    EXPECT_LT(err, 1e-3) << e.name;
    worst = std::max(worst, err);
  }
  RecordProperty("max_rel_err", std::to_string(worst));
}

} // namespace
} // namespace gplab
