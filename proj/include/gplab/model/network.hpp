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

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "gplab/model/scaling.hpp"
#include "gplab/ops.hpp"

namespace gplab {

using ops::Mode;

/// Convolution followed by batch norm (no bias on the convolution).
template <class T>
struct ConvBn {
  Tensor<T> weight;
  Tensor<T> bn_scale;
  Tensor<T> bn_shift;
  ops::BatchNormState<T> bn;
  ops::Conv2dOptions conv;

  ConvBn() = default;
  ConvBn(std::size_t cin, std::size_t cout, std::size_t k, std::size_t stride, std::size_t groups)
      : weight(Shape{cout, cin / groups, k, k}, true),
        bn_scale(Tensor<T>::full(Shape{cout}, T{1}, true)),
        bn_shift(Shape{cout}, true),
        bn(cout),
        conv{stride, k / 2, groups} {}

  Tensor<T> forward(Tape<T>& tape, const Tensor<T>& x, Mode mode) {
    return ops::batch_norm2d(tape, ops::conv2d(tape, x, weight, conv), bn_scale, bn_shift, bn, mode);
  }
};

/// Mobile inverted bottleneck block with squeeze-excitation.
template <class T>
struct MBConvBlock {
  BlockGeometry geom{};
  bool has_expand = false;
  ConvBn<T> expand;
  ConvBn<T> depthwise;
  Tensor<T> se_reduce_w, se_reduce_b, se_expand_w, se_expand_b;
  ConvBn<T> project;

  MBConvBlock() = default;
  explicit MBConvBlock(const BlockGeometry& g)
      : geom(g),
        has_expand(g.expanded_channels != g.in_channels),
        depthwise(g.expanded_channels, g.expanded_channels, g.kernel, g.stride, g.expanded_channels),
        se_reduce_w(Shape{g.se_channels, g.expanded_channels}, true),
        se_reduce_b(Shape{g.se_channels}, true),
        se_expand_w(Shape{g.expanded_channels, g.se_channels}, true),
        se_expand_b(Shape{g.expanded_channels}, true),
        project(g.expanded_channels, g.out_channels, 1, 1, 1) {
    if (has_expand) expand = ConvBn<T>(g.in_channels, g.expanded_channels, 1, 1, 1);
  }
};

/**
 * expand 1x1 (skipped at ratio 1) -> BN -> SiLU -> depthwise kxk -> BN ->
 * SiLU -> squeeze-excitation gate -> project 1x1 -> BN, plus the input when
 * stride is 1 and channel counts match.
 */
template <class T>
Tensor<T> mbconv_forward(Tape<T>& tape, const Tensor<T>& x, MBConvBlock<T>& blk, Mode mode) {
  if (x.rank() != 4 || x.dim(1) != blk.geom.in_channels) {
    throw ShapeError("mbconv: expected " + std::to_string(blk.geom.in_channels) +
                     " input channels (dim 1), got shape " + shape_str(x.shape()));
  }
  Tensor<T> h = x;
  if (blk.has_expand) h = ops::silu(tape, blk.expand.forward(tape, h, mode));
  h = ops::silu(tape, blk.depthwise.forward(tape, h, mode));

  const std::size_t n = h.dim(0), c = h.dim(1);
  Tensor<T> pooled = ops::reshape(tape, ops::adaptive_avg_pool2d(tape, h), Shape{n, c});
  Tensor<T> squeezed = ops::silu(tape, ops::linear(tape, pooled, blk.se_reduce_w, blk.se_reduce_b));
  Tensor<T> gate = ops::sigmoid(tape, ops::linear(tape, squeezed, blk.se_expand_w, blk.se_expand_b));
  h = ops::channel_scale(tape, h, gate);

  h = blk.project.forward(tape, h, mode);
  if (blk.geom.residual()) h = ops::add(tape, h, x);
  return h;
}

/**
 * stem conv -> MBConv stages -> head 1x1 conv -> BN -> SiLU -> adaptive
 * average pool -> linear classifier.
 *
 * Parameters and batch-norm buffers are exposed through a registry with
 * stable, build-order names. The network owns its tensors; it is movable but
 * not copyable (tensors are shared handles).
 */
template <class T = float>
class Network {
public:
  struct Entry {
    std::string name;
    Tensor<T> tensor;
  };

  Network() = default;
  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  const ModelSpec& spec() const noexcept { return spec_; }
  const ResolvedModel& resolved() const noexcept { return resolved_; }

  /// Trainable tensors in registry order.
  const std::vector<Entry>& parameters() const noexcept { return params_; }
  std::vector<Entry>& parameters() noexcept { return params_; }
  /// Batch-norm running statistics in registry order.
  const std::vector<Entry>& buffers() const noexcept { return buffers_; }
  std::vector<Entry>& buffers() noexcept { return buffers_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& e : params_) n += e.tensor.numel();
    return n;
  }

  void zero_grad() {
    for (auto& e : params_) e.tensor.zero_grad();
  }

  std::vector<MBConvBlock<T>>& blocks() { return blocks_; }

  Tensor<T> forward(Tape<T>& tape, const Tensor<T>& batch, Mode mode) {
    if (batch.rank() != 4 || batch.dim(1) != 3) {
      throw ShapeError("forward expects [N,3,H,W], got " + shape_str(batch.shape()));
    }
    const std::size_t min = resolved_.total_stride;
    if (batch.dim(2) < min || batch.dim(3) < min) {
      throw ShapeError("input " + std::to_string(batch.dim(2)) + "x" + std::to_string(batch.dim(3)) +
                       " is smaller than the minimum spatial size " + std::to_string(min) + "x" +
                       std::to_string(min) + " for " + spec_.name);
    }
    Tensor<T> h = ops::silu(tape, stem_.forward(tape, batch, mode));
    for (auto& blk : blocks_) h = mbconv_forward(tape, h, blk, mode);
    h = ops::silu(tape, head_.forward(tape, h, mode));
    const std::size_t n = h.dim(0), c = h.dim(1);
    h = ops::reshape(tape, ops::adaptive_avg_pool2d(tape, h), Shape{n, c});
    return ops::linear(tape, h, classifier_w_, classifier_b_);
  }

  /// Eval-mode forward without recording.
  Tensor<T> predict_logits(const Tensor<T>& batch) {
    Tape<T> off(false);
    return forward(off, batch, Mode::eval);
  }

  /// Deterministic construction; see build().
  static Network build(const ModelSpec& spec, std::uint64_t seed) {
    Network net;
    net.spec_ = spec;
    net.resolved_ = resolve(spec);
    const auto& r = net.resolved_;
    net.stem_ = ConvBn<T>(3, r.stem_channels, 3, 2, 1);
    for (const auto& stage : r.blocks)
      for (const auto& g : stage) net.blocks_.emplace_back(g);
    const std::size_t last = r.stage_channels.back();
    net.head_ = ConvBn<T>(last, r.head_channels, 1, 1, 1);
    net.classifier_w_ = Tensor<T>(Shape{spec.head_classes, r.head_channels}, true);
    net.classifier_b_ = Tensor<T>(Shape{spec.head_classes}, true);
    net.register_all();
    net.initialize(seed);
    return net;
  }

private:
  void add_convbn(const std::string& prefix, ConvBn<T>& m) {
    params_.push_back({prefix + ".conv.weight", m.weight});
    params_.push_back({prefix + ".bn.weight", m.bn_scale});
    params_.push_back({prefix + ".bn.bias", m.bn_shift});
    buffers_.push_back({prefix + ".bn.running_mean", m.bn.running_mean});
    buffers_.push_back({prefix + ".bn.running_var", m.bn.running_var});
  }

  void register_all() {
    add_convbn("stem", stem_);
    std::size_t flat = 0;
    for (std::size_t s = 0; s < resolved_.blocks.size(); ++s) {
      for (std::size_t b = 0; b < resolved_.blocks[s].size(); ++b, ++flat) {
        auto& blk = blocks_[flat];
        const std::string p = "stages." + std::to_string(s) + "." + std::to_string(b);
        if (blk.has_expand) add_convbn(p + ".expand", blk.expand);
        add_convbn(p + ".depthwise", blk.depthwise);
        params_.push_back({p + ".se.reduce.weight", blk.se_reduce_w});
        params_.push_back({p + ".se.reduce.bias", blk.se_reduce_b});
        params_.push_back({p + ".se.expand.weight", blk.se_expand_w});
        params_.push_back({p + ".se.expand.bias", blk.se_expand_b});
        add_convbn(p + ".project", blk.project);
      }
    }
    add_convbn("head", head_);
    params_.push_back({"classifier.weight", classifier_w_});
    params_.push_back({"classifier.bias", classifier_b_});
  }

  // Fan-in scaled normal for conv (He) and dense (LeCun) weights; biases and
  // BN shifts zero; BN scales one. Values are drawn in double so every
  // precision gets the same initialization.
  void initialize(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (auto& e : params_) {
      auto& t = e.tensor;
      const bool is_weight = e.name.ends_with(".weight") && t.rank() >= 2;
      if (!is_weight) continue;
      std::size_t fan_in = 1;
      for (std::size_t i = 1; i < t.rank(); ++i) fan_in *= t.dim(i);
      const double gain = t.rank() == 4 ? 2.0 : 1.0;
      std::normal_distribution<double> nd(0.0, std::sqrt(gain / static_cast<double>(fan_in)));
      for (T& v : t.data()) v = static_cast<T>(nd(rng));
    }
  }

  ModelSpec spec_;
  ResolvedModel resolved_{};
  ConvBn<T> stem_;
  std::vector<MBConvBlock<T>> blocks_;
  ConvBn<T> head_;
  Tensor<T> classifier_w_;
  Tensor<T> classifier_b_;
  std::vector<Entry> params_;
  std::vector<Entry> buffers_;
};

template <class T = float>
Network<T> build(const ModelSpec& spec, std::uint64_t seed) {
  return Network<T>::build(spec, seed);
}

/// Copies parameter and buffer values from `src` into `dst` (same registry).
template <class T, class U>
void copy_state(const Network<U>& src, Network<T>& dst) {
  auto copy = [](const auto& from, auto& to, const char* what) {
    if (from.size() != to.size()) throw ShapeError(std::string("copy_state: ") + what + " count differs");
    for (std::size_t i = 0; i < from.size(); ++i) {
      if (from[i].name != to[i].name || from[i].tensor.shape() != to[i].tensor.shape()) {
        throw ShapeError("copy_state: registry mismatch at " + from[i].name);
      }
      auto s = from[i].tensor.data();
      auto d = to[i].tensor.data();
      for (std::size_t j = 0; j < s.size(); ++j) d[j] = static_cast<T>(s[j]);
    }
  };
  copy(src.parameters(), dst.parameters(), "parameter");
  copy(src.buffers(), dst.buffers(), "buffer");
}

} // namespace gplab
