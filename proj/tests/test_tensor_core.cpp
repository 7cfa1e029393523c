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
#include <vector>

#include <gtest/gtest.h>

#include "gplab/ops.hpp"
#include "support/oracles.hpp"

namespace gplab {
namespace {

using testing::all_entries;
using testing::fd_max_rel_error;
using testing::random_tensor;

std::vector<double> grad_copy(Tensor<double>& t) {
  auto g = t.grad();
  return {g.begin(), g.end()};
}

// Weighted sum with fixed random coefficients, so every output element
// contributes a distinct gradient.
Tensor<double> probe_loss(Tape<double>& tape, const Tensor<double>& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tensor<double> w = random_tensor<double>(y.shape(), rng);
  return ops::sum(tape, ops::mul(tape, y, w));
}

TEST(Tensor, ElementCountMatchesShape) {
  Tensor<float> t(Shape{2, 3, 4});
  EXPECT_EQ(t.numel(), 24u);
  EXPECT_THROW(Tensor<float>(Shape{2, 2}, std::vector<float>(3)), ShapeError);
}

TEST(Tensor, GradientHasValueShape) {
  Tensor<float> t(Shape{3, 5}, true);
  EXPECT_FALSE(t.has_grad());
  EXPECT_EQ(t.grad().size(), t.numel());
}

TEST(Conv2d, AllOnesThreeByThree) {
  Tape<double> tape;
  auto x = Tensor<double>::full({1, 1, 3, 3}, 1.0);
  auto k = Tensor<double>::full({1, 1, 3, 3}, 1.0);
  auto y = ops::conv2d(tape, x, k);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_DOUBLE_EQ(y[0], 9.0);
}

TEST(Conv2d, DepthwisePerChannelScaling) {
  Tape<double> tape;
  auto x = Tensor<double>::full({1, 2, 2, 2}, 1.0);
  Tensor<double> k(Shape{2, 1, 1, 1}, {2.0, 3.0});
  auto y = ops::conv2d(tape, x, k, {.stride = 1, .padding = 0, .groups = 2});
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_DOUBLE_EQ(y[i], 2.0);
    EXPECT_DOUBLE_EQ(y[4 + i], 3.0);
  }
}

TEST(Conv2d, OutputExtentFollowsFloorRule) {
  Tape<float> tape;
  Tensor<float> x(Shape{1, 1, 7, 9});
  Tensor<float> k(Shape{2, 1, 3, 3});
  auto y = ops::conv2d(tape, x, k, {.stride = 2, .padding = 1});
  EXPECT_EQ(y.shape(), (Shape{1, 2, 4, 5}));
}

TEST(Conv2d, RejectsMismatchNamingDimension) {
  Tape<float> tape;
  Tensor<float> x(Shape{1, 3, 5, 5});
  Tensor<float> k(Shape{4, 2, 3, 3});
  try {
    ops::conv2d(tape, x, k);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("dim 1"), std::string::npos) << e.what();
  }
  Tensor<float> k2(Shape{4, 1, 3, 3});
  EXPECT_THROW(ops::conv2d(tape, x, k2, {.groups = 2}), ShapeError);
}

TEST(Conv2d, MatchesNaiveOracleForGroupedAndStrided) {
  std::mt19937_64 rng(11);
  struct Case {
    std::size_t cin, cout, k, stride, pad, groups;
  };
  for (Case c : {Case{3, 4, 3, 1, 1, 1}, Case{4, 6, 3, 2, 1, 2}, Case{6, 6, 5, 2, 2, 6},
                 Case{5, 7, 1, 1, 0, 1}, Case{4, 8, 3, 1, 0, 4}}) {
    auto x = random_tensor<double>({2, c.cin, 7, 6}, rng);
    auto k = random_tensor<double>({c.cout, c.cin / c.groups, c.k, c.k}, rng);
    Tape<double> tape(false);
    auto y = ops::conv2d(tape, x, k, {c.stride, c.pad, c.groups});
    auto ref = testing::naive_conv2d({x.data().begin(), x.data().end()}, 2, c.cin, 7, 6,
                                     {k.data().begin(), k.data().end()}, c.cout, c.k, c.k,
                                     c.stride, c.pad, c.groups);
    ASSERT_EQ(y.numel(), ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) {
      EXPECT_NEAR(y[i], ref[i], 1e-10);
    }
  }
}

TEST(Conv2d, DepthwiseEqualsPerChannelLoopOracle) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t c = 1 + trial % 5, h = 3 + trial % 7, w = 4 + trial % 3;
    const std::size_t k = trial % 2 ? 3 : 5, stride = 1 + trial % 2, pad = k / 2;
    auto x = random_tensor<double>({2, c, h, w}, rng);
    auto kern = random_tensor<double>({c, 1, k, k}, rng);
    Tape<double> tape(false);
    auto y = ops::conv2d(tape, x, kern, {stride, pad, c});
    auto ref = testing::naive_conv2d({x.data().begin(), x.data().end()}, 2, c, h, w,
                                     {kern.data().begin(), kern.data().end()}, c, k, k, stride,
                                     pad, c);
    for (std::size_t i = 0; i < ref.size(); ++i) ASSERT_NEAR(y[i], ref[i], 1e-10);
  }
}

TEST(Conv2d, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(42);
  auto x = random_tensor<double>({2, 3, 8, 8}, rng);
  auto k = random_tensor<double>({4, 3, 3, 3}, rng);
  x.set_requires_grad(true);
  k.set_requires_grad(true);
  auto loss_of = [&](Tape<double>& tape) {
    return probe_loss(tape, ops::conv2d(tape, x, k, {.stride = 1, .padding = 1}), 7);
  };
  Tape<double> tape;
  tape.backward(loss_of(tape));
  auto f = [&] {
    Tape<double> off(false);
    return loss_of(off).item();
  };
  EXPECT_LT(fd_max_rel_error(x, grad_copy(x), f, all_entries(x.numel())), 1e-4);
  EXPECT_LT(fd_max_rel_error(k, grad_copy(k), f, all_entries(k.numel())), 1e-4);
}

TEST(Conv2d, GroupedAndDepthwiseGradients) {
  std::mt19937_64 rng(43);
  for (auto [cin, cout, groups, stride] :
       {std::tuple{4, 6, 2, 2}, std::tuple{3, 3, 3, 1}, std::tuple{3, 3, 3, 2},
        std::tuple{4, 4, 1, 2}}) {
    auto x = random_tensor<double>({2, std::size_t(cin), 5, 6}, rng);
    auto k = random_tensor<double>({std::size_t(cout), std::size_t(cin / groups), 3, 3}, rng);
    x.set_requires_grad(true);
    k.set_requires_grad(true);
    ops::Conv2dOptions opt{std::size_t(stride), 1, std::size_t(groups)};
    auto loss_of = [&](Tape<double>& tape) {
      return probe_loss(tape, ops::conv2d(tape, x, k, opt), 3);
    };
    Tape<double> tape;
    tape.backward(loss_of(tape));
    auto f = [&] {
      Tape<double> off(false);
      return loss_of(off).item();
    };
    EXPECT_LT(fd_max_rel_error(x, grad_copy(x), f, all_entries(x.numel())), 1e-4);
    EXPECT_LT(fd_max_rel_error(k, grad_copy(k), f, all_entries(k.numel())), 1e-4);
  }
}

TEST(BatchNorm, ConstantChannelMapsToZero) {
  Tape<double> tape;
  Tensor<double> x(Shape{2, 2, 2, 2});
  for (std::size_t i = 0; i < 16; ++i) x[i] = (i / 4) % 2 ? 7.0 : -3.0;
  auto scale = Tensor<double>::full({2}, 1.0);
  Tensor<double> shift(Shape{2});
  ops::BatchNormState<double> st(2);
  auto y = ops::batch_norm2d(tape, x, scale, shift, st, ops::Mode::train);
  for (double v : y.data()) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(BatchNorm, ShiftSetsChannelMean) {
  std::mt19937_64 rng(2);
  auto x = random_tensor<double>({4, 3, 5, 5}, rng, -10, 10);
  auto scale = Tensor<double>::full({3}, 1.0);
  auto shift = Tensor<double>::full({3}, 5.0);
  ops::BatchNormState<double> st(3);
  Tape<double> tape;
  auto y = ops::batch_norm2d(tape, x, scale, shift, st, ops::Mode::train);
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0;
    for (std::size_t b = 0; b < 4; ++b)
      for (std::size_t i = 0; i < 25; ++i) m += y[(b * 3 + c) * 25 + i];
    EXPECT_NEAR(m / 100.0, 5.0, 1e-9);
  }
}

TEST(BatchNorm, TrainModeStandardizesChannels) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd(0.0, 1.0);
  Tensor<double> x(Shape{8, 4, 6, 6});
  for (double& v : x.data()) v = nd(rng);
  auto scale = Tensor<double>::full({4}, 1.0);
  Tensor<double> shift(Shape{4});
  ops::BatchNormState<double> st(4);
  Tape<double> tape;
  auto y = ops::batch_norm2d(tape, x, scale, shift, st, ops::Mode::train);
  for (std::size_t c = 0; c < 4; ++c) {
    double m = 0, s = 0;
    for (std::size_t b = 0; b < 8; ++b)
      for (std::size_t i = 0; i < 36; ++i) m += y[(b * 4 + c) * 36 + i];
    m /= 288.0;
    for (std::size_t b = 0; b < 8; ++b)
      for (std::size_t i = 0; i < 36; ++i) s += std::pow(y[(b * 4 + c) * 36 + i] - m, 2);
    EXPECT_LT(std::abs(m), 1e-5);
    EXPECT_NEAR(s / 288.0, 1.0, 1e-4);
  }
}

TEST(BatchNorm, RunningStatsUpdateAndEvalUsesThem) {
  Tensor<double> x(Shape{2, 1, 1, 2}, {1.0, 3.0, 5.0, 7.0});
  auto scale = Tensor<double>::full({1}, 1.0);
  Tensor<double> shift(Shape{1});
  ops::BatchNormState<double> st(1);
  Tape<double> tape;
  ops::batch_norm2d(tape, x, scale, shift, st, ops::Mode::train, {.momentum = 0.1, .eps = 1e-5});
  // batch mean 4, unbiased variance 20/3
  EXPECT_NEAR(st.running_mean[0], 0.4, 1e-12);
  EXPECT_NEAR(st.running_var[0], 0.9 + 0.1 * 20.0 / 3.0, 1e-12);
  const double rm = st.running_mean[0], rv = st.running_var[0];
  auto y = ops::batch_norm2d(tape, x, scale, shift, st, ops::Mode::eval);
  EXPECT_NEAR(y[2], (5.0 - rm) / std::sqrt(rv + 1e-5), 1e-12);
  EXPECT_EQ(st.running_mean[0], rm);
}

TEST(BatchNorm, RejectsZeroBatchAndBadLengths) {
  Tape<float> tape;
  ops::BatchNormState<float> st(2);
  auto scale = Tensor<float>::full({2}, 1.0f);
  Tensor<float> shift(Shape{2});
  EXPECT_THROW(ops::batch_norm2d(tape, Tensor<float>(Shape{0, 2, 2, 2}), scale, shift, st,
                                 ops::Mode::train),
               ShapeError);
  EXPECT_THROW(ops::batch_norm2d(tape, Tensor<float>(Shape{1, 3, 2, 2}), scale, shift, st,
                                 ops::Mode::train),
               ShapeError);
}

TEST(BatchNorm, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(9);
  for (auto mode : {ops::Mode::train, ops::Mode::eval}) {
    auto x = random_tensor<double>({3, 2, 3, 4}, rng, -2, 2);
    auto scale = random_tensor<double>({2}, rng, 0.5, 1.5);
    auto shift = random_tensor<double>({2}, rng);
    x.set_requires_grad(true);
    scale.set_requires_grad(true);
    shift.set_requires_grad(true);
    ops::BatchNormState<double> st(2);
    st.running_mean[0] = 0.3;
    st.running_var[1] = 2.0;
    auto loss_of = [&](Tape<double>& tape) {
      ops::BatchNormState<double> scratch = st;
      scratch.running_mean = st.running_mean.clone();
      scratch.running_var = st.running_var.clone();
      return probe_loss(tape, ops::batch_norm2d(tape, x, scale, shift, scratch, mode), 4);
    };
    Tape<double> tape;
    tape.backward(loss_of(tape));
    auto f = [&] {
      Tape<double> off(false);
      return loss_of(off).item();
    };
    EXPECT_LT(fd_max_rel_error(x, grad_copy(x), f, all_entries(x.numel())), 1e-4);
    EXPECT_LT(fd_max_rel_error(scale, grad_copy(scale), f, all_entries(2)), 1e-4);
    EXPECT_LT(fd_max_rel_error(shift, grad_copy(shift), f, all_entries(2)), 1e-4);
  }
}

TEST(Silu, ValuesAndDerivativeAtZero) {
  Tape<double> tape;
  Tensor<double> x(Shape{3}, {0.0, 20.0, -3.0}, true);
  auto y = ops::silu(tape, x);
  EXPECT_DOUBLE_EQ(y[0], 0.0);
  EXPECT_NEAR(y[1], 20.0, 1e-6);
  EXPECT_NEAR(y[2], -3.0 / (1.0 + std::exp(3.0)), 1e-15);
  tape.backward(ops::sum(tape, y));
  EXPECT_DOUBLE_EQ(x.grad()[0], 0.5);
}

TEST(Silu, SigmoidAndSiluGradients) {
  std::mt19937_64 rng(1);
  auto x = random_tensor<double>({40}, rng, -6, 6);
  x.set_requires_grad(true);
  for (int which = 0; which < 2; ++which) {
    x.zero_grad();
    auto loss_of = [&](Tape<double>& tape) {
      auto y = which ? ops::sigmoid(tape, x) : ops::silu(tape, x);
      return probe_loss(tape, y, 5);
    };
    Tape<double> tape;
    tape.backward(loss_of(tape));
    auto f = [&] {
      Tape<double> off(false);
      return loss_of(off).item();
    };
    EXPECT_LT(fd_max_rel_error(x, grad_copy(x), f, all_entries(40)), 1e-4);
  }
}

TEST(AdaptiveAvgPool, MeanOfWindow) {
  Tape<double> tape;
  Tensor<double> x(Shape{1, 1, 2, 2}, {1, 2, 3, 5});
  EXPECT_DOUBLE_EQ(ops::adaptive_avg_pool2d(tape, x)[0], 2.75);
  auto c = Tensor<double>::full({2, 3, 5, 7}, 1.25);
  auto y = ops::adaptive_avg_pool2d(tape, c);
  EXPECT_EQ(y.shape(), (Shape{2, 3, 1, 1}));
  for (double v : y.data()) EXPECT_DOUBLE_EQ(v, 1.25);
}

TEST(AdaptiveAvgPool, GradientIsInverseArea) {
  Tape<double> tape;
  std::mt19937_64 rng(4);
  auto x = random_tensor<double>({2, 3, 4, 5}, rng);
  x.set_requires_grad(true);
  tape.backward(ops::sum(tape, ops::adaptive_avg_pool2d(tape, x)));
  for (double g : x.grad()) EXPECT_DOUBLE_EQ(g, 1.0 / 20.0);
}

TEST(AdaptiveAvgPool, OverlappingWindowsGradient) {
  std::mt19937_64 rng(6);
  auto x = random_tensor<double>({1, 2, 5, 7}, rng);
  x.set_requires_grad(true);
  auto loss_of = [&](Tape<double>& tape) {
    return probe_loss(tape, ops::adaptive_avg_pool2d(tape, x, 3, 2), 8);
  };
  Tape<double> tape;
  tape.backward(loss_of(tape));
  auto f = [&] {
    Tape<double> off(false);
    return loss_of(off).item();
  };
  EXPECT_LT(fd_max_rel_error(x, grad_copy(x), f, all_entries(x.numel())), 1e-4);
}

TEST(Linear, IdentityAndBiasOnly) {
  Tape<double> tape;
  std::mt19937_64 rng(8);
  auto x = random_tensor<double>({3, 4}, rng);
  Tensor<double> eye(Shape{4, 4});
  for (std::size_t i = 0; i < 4; ++i) eye[i * 5] = 1.0;
  auto y = ops::linear(tape, x, eye, Tensor<double>(Shape{4}));
  for (std::size_t i = 0; i < 12; ++i) EXPECT_DOUBLE_EQ(y[i], x[i]);
  Tensor<double> b(Shape{2}, {0.5, -2.0});
  auto z = ops::linear(tape, x, Tensor<double>(Shape{2, 4}), b);
  for (std::size_t r = 0; r < 3; ++r) {
    EXPECT_DOUBLE_EQ(z[r * 2], 0.5);
    EXPECT_DOUBLE_EQ(z[r * 2 + 1], -2.0);
  }
}

TEST(Linear, MatchesNaiveMatmulAndRejectsMismatch) {
  std::mt19937_64 rng(10);
  auto x = random_tensor<double>({5, 7}, rng);
  auto w = random_tensor<double>({3, 7}, rng);
  auto b = random_tensor<double>({3}, rng);
  Tape<double> tape(false);
  auto y = ops::linear(tape, x, w, b);
  auto ref = testing::naive_linear({x.data().begin(), x.data().end()}, 5, 7,
                                   {w.data().begin(), w.data().end()}, 3,
                                   {b.data().begin(), b.data().end()});
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-6);
  EXPECT_THROW(ops::linear(tape, x, random_tensor<double>({3, 6}, rng), b), ShapeError);
  EXPECT_THROW(ops::linear(tape, x, w, Tensor<double>(Shape{4})), ShapeError);
}

TEST(Linear, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(12);
  auto x = random_tensor<double>({4, 5}, rng);
  auto w = random_tensor<double>({3, 5}, rng);
  auto b = random_tensor<double>({3}, rng);
  for (auto* t : {&x, &w, &b}) t->set_requires_grad(true);
  auto loss_of = [&](Tape<double>& tape) { return probe_loss(tape, ops::linear(tape, x, w, b), 2); };
  Tape<double> tape;
  tape.backward(loss_of(tape));
  auto f = [&] {
    Tape<double> off(false);
    return loss_of(off).item();
  };
  for (auto* t : {&x, &w, &b}) {
    EXPECT_LT(fd_max_rel_error(*t, grad_copy(*t), f, all_entries(t->numel())), 1e-4);
  }
}

TEST(Softmax, ClosedFormCases) {
  auto a = ops::softmax(Tensor<double>(Shape{3}, {0, 0, 0}));
  for (double v : a.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
  auto b = ops::softmax(Tensor<double>(Shape{2}, {0.0, std::log(3.0)}));
  EXPECT_NEAR(b[0], 0.25, 1e-15);
  EXPECT_NEAR(b[1], 0.75, 1e-15);
  auto c = ops::softmax(Tensor<float>(Shape{2}, {1000.0f, 1000.0f}));
  EXPECT_FLOAT_EQ(c[0], 0.5f);
  EXPECT_FLOAT_EQ(c[1], 0.5f);
}

TEST(Softmax, RowsSumToOneUpToMagnitudeThousand) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 200; ++trial) {
    auto x = random_tensor<float>({4, 6}, rng, -1000, 1000);
    auto y = ops::softmax(x);
    for (std::size_t r = 0; r < 4; ++r) {
      double s = 0;
      for (std::size_t j = 0; j < 6; ++j) {
        EXPECT_GE(y[r * 6 + j], 0.0f);
        s += y[r * 6 + j];
      }
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
  }
}

TEST(Softmax, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(14);
  auto x = random_tensor<double>({3, 6}, rng, -3, 3);
  x.set_requires_grad(true);
  auto loss_of = [&](Tape<double>& tape) { return probe_loss(tape, ops::softmax(tape, x), 1); };
  Tape<double> tape;
  tape.backward(loss_of(tape));
  auto f = [&] {
    Tape<double> off(false);
    return loss_of(off).item();
  };
  EXPECT_LT(fd_max_rel_error(x, grad_copy(x), f, all_entries(x.numel())), 1e-4);
}

TEST(ChannelScale, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(15);
  auto x = random_tensor<double>({2, 3, 2, 3}, rng);
  auto g = random_tensor<double>({2, 3}, rng);
  x.set_requires_grad(true);
  g.set_requires_grad(true);
  auto loss_of = [&](Tape<double>& tape) {
    return probe_loss(tape, ops::channel_scale(tape, x, g), 6);
  };
  Tape<double> tape;
  tape.backward(loss_of(tape));
  auto f = [&] {
    Tape<double> off(false);
    return loss_of(off).item();
  };
  EXPECT_LT(fd_max_rel_error(x, grad_copy(x), f, all_entries(x.numel())), 1e-4);
  EXPECT_LT(fd_max_rel_error(g, grad_copy(g), f, all_entries(g.numel())), 1e-4);
}

TEST(Backward, SumAndSumOfSquares) {
  Tape<double> tape;
  Tensor<double> x(Shape{2}, {1.0, 2.0}, true);
  tape.backward(ops::sum(tape, x));
  EXPECT_DOUBLE_EQ(x.grad()[0], 1.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], 1.0);

  Tape<double> tape2;
  Tensor<double> z(Shape{2}, {1.0, 2.0}, true);
  tape2.backward(ops::sum(tape2, ops::square(tape2, z)));
  EXPECT_DOUBLE_EQ(z.grad()[0], 2.0);
  EXPECT_DOUBLE_EQ(z.grad()[1], 4.0);
}

TEST(Backward, RejectsNonScalarLoss) {
  Tape<double> tape;
  Tensor<double> x(Shape{2}, {1.0, 2.0}, true);
  auto y = ops::square(tape, x);
  EXPECT_THROW(tape.backward(y), ShapeError);
}

TEST(Backward, RepeatedCallsAccumulate) {
  Tape<double> tape;
  Tensor<double> x(Shape{2}, {1.0, 2.0}, true);
  auto loss = ops::sum(tape, ops::square(tape, x));
  tape.backward(loss);
  tape.backward(loss);
  EXPECT_DOUBLE_EQ(x.grad()[0], 4.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], 8.0);
}

TEST(Backward, MultipleConsumersAccumulate) {
  Tape<double> tape;
  Tensor<double> x(Shape{1}, {3.0}, true);
  auto a = ops::scale(tape, x, 2.0);
  auto b = ops::mul(tape, x, x);
  tape.backward(ops::sum(tape, ops::add(tape, a, b)));
  EXPECT_DOUBLE_EQ(x.grad()[0], 2.0 + 6.0);
}

TEST(Backward, VisitsInReverseRecordingOrder) {
  Tape<double> tape;
  Tensor<double> x(Shape{3}, {1, 2, 3}, true);
  auto y = ops::silu(tape, ops::square(tape, ops::scale(tape, x, 0.5)));
  auto loss = ops::sum(tape, y);
  std::vector<std::size_t> visited;
  tape.set_visit_hook([&](std::size_t i) { visited.push_back(i); });
  tape.backward(loss);
  ASSERT_EQ(visited.size(), tape.size());
  for (std::size_t i = 0; i < visited.size(); ++i) {
    EXPECT_EQ(visited[i], tape.size() - 1 - i);
  }
}

TEST(Backward, DeterministicBitIdenticalGradients) {
  auto run = [] {
    std::mt19937_64 rng(99);
    auto x = random_tensor<float>({2, 3, 6, 6}, rng);
    auto k = random_tensor<float>({5, 3, 3, 3}, rng);
    k.set_requires_grad(true);
    Tape<float> tape;
    auto y = ops::silu(tape, ops::conv2d(tape, x, k, {.stride = 2, .padding = 1}));
    tape.backward(ops::sum(tape, y));
    auto g = k.grad();
    return std::vector<float>(g.begin(), g.end());
  };
  EXPECT_EQ(run(), run());
}

TEST(Backward, NoRecordingWhenDisabled) {
  Tape<double> tape(false);
  Tensor<double> x(Shape{2}, {1.0, 2.0}, true);
  ops::sum(tape, ops::square(tape, x));
  EXPECT_EQ(tape.size(), 0u);
}

} // namespace
} // namespace gplab
