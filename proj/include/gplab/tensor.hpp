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

#include <algorithm>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "gplab/error.hpp"

namespace gplab {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    os << (i ? "," : "") << shape[i];
  }
  os << ']';
  return os.str();
}

/**
 * Dense row-major array that can take part in reverse-mode differentiation.
 *
 * Tensor is a handle: copies share the same storage, so a value captured by a
 * tape closure and the value held by the caller are the same object. Use
 * clone() for an independent copy. The gradient buffer is allocated lazily and
 * always has the value's shape.
 */
template <class T = float>
class Tensor {
public:
  using value_type = T;

  Tensor() : s_(std::make_shared<Storage>()) {}

  explicit Tensor(Shape shape, bool requires_grad = false)
      : s_(std::make_shared<Storage>()) {
    s_->shape = std::move(shape);
    s_->value.assign(shape_numel(s_->shape), T{0});
    s_->requires_grad = requires_grad;
  }

  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false)
      : s_(std::make_shared<Storage>()) {
    if (values.size() != shape_numel(shape)) {
      throw ShapeError("tensor of shape " + shape_str(shape) + " needs " +
                       std::to_string(shape_numel(shape)) + " elements, got " +
                       std::to_string(values.size()));
    }
    s_->shape = std::move(shape);
    s_->value = std::move(values);
    s_->requires_grad = requires_grad;
  }

  static Tensor full(Shape shape, T fill, bool requires_grad = false) {
    Tensor t(std::move(shape), requires_grad);
    std::fill(t.s_->value.begin(), t.s_->value.end(), fill);
    return t;
  }

  static Tensor scalar(T v, bool requires_grad = false) {
    return Tensor(Shape{}, std::vector<T>{v}, requires_grad);
  }

  const Shape& shape() const noexcept { return s_->shape; }
  std::size_t rank() const noexcept { return s_->shape.size(); }
  std::size_t dim(std::size_t i) const { return s_->shape.at(i); }
  std::size_t numel() const noexcept { return s_->value.size(); }

  std::span<T> data() noexcept { return s_->value; }
  std::span<const T> data() const noexcept { return s_->value; }
  T& operator[](std::size_t i) { return s_->value[i]; }
  const T& operator[](std::size_t i) const { return s_->value[i]; }

  T item() const {
    if (numel() != 1) {
      throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    }
    return s_->value[0];
  }

  bool requires_grad() const noexcept { return s_->requires_grad; }
  void set_requires_grad(bool on) noexcept { s_->requires_grad = on; }

  bool has_grad() const noexcept { return !s_->grad.empty(); }

  /// Gradient buffer; zero-filled on first access. Writable through const
  /// handles: gradients are accumulation state, not part of the value.
  std::span<T> grad() const {
    if (s_->grad.size() != s_->value.size()) {
      s_->grad.assign(s_->value.size(), T{0});
    }
    return s_->grad;
  }

  void zero_grad() const { std::fill(s_->grad.begin(), s_->grad.end(), T{0}); }

  /// Independent copy of the value; gradient and graph links are dropped.
  Tensor clone() const {
    Tensor t(shape(), std::vector<T>(s_->value), false);
    return t;
  }

  /// Same storage viewed under a different shape with equal element count.
  /// The result is a fresh leaf; use ops::reshape inside a recorded graph.
  Tensor reshaped(Shape shape) const {
    if (shape_numel(shape) != numel()) {
      throw ShapeError("cannot reshape " + shape_str(this->shape()) + " to " + shape_str(shape));
    }
    return Tensor(std::move(shape), std::vector<T>(s_->value), false);
  }

  bool same_storage(const Tensor& other) const noexcept { return s_ == other.s_; }

  template <class U>
  Tensor<U> cast() const {
    std::vector<U> v(s_->value.begin(), s_->value.end());
    return Tensor<U>(shape(), std::move(v), false);
  }

private:
  struct Storage {
    Shape shape;
    std::vector<T> value{T{0}};
    mutable std::vector<T> grad;
    bool requires_grad = false;
  };

  std::shared_ptr<Storage> s_;
};

/**
 * Ordered record of primitive operations for reverse traversal.
 *
 * Each recorded entry owns its output handle and a closure that reads the
 * output gradient and accumulates into the input gradients. backward() runs
 * the closures in exact reverse recording order. A tape constructed with
 * recording disabled records nothing, which is how inference runs.
 */
template <class T = float>
class Tape {
public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) noexcept = default;
  Tape& operator=(Tape&&) noexcept = default;

  bool recording() const noexcept { return recording_; }
  std::size_t size() const noexcept { return entries_.size(); }

  /// True when an op over `inputs` must be recorded.
  template <class... Ts>
  bool wants(const Ts&... inputs) const noexcept {
    return recording_ && (inputs.requires_grad() || ...);
  }

  void record(Tensor<T> output, std::function<void()> backward_fn) {
    output.set_requires_grad(true);
    entries_.push_back(Entry{std::move(output), std::move(backward_fn)});
  }

  /// Observer hook invoked with the index of each entry as backward visits it.
  void set_visit_hook(std::function<void(std::size_t)> hook) { visit_hook_ = std::move(hook); }

  /**
   * Back-propagates from a scalar loss. Intermediate gradients are reset
   * first; leaf gradients (parameters, inputs) accumulate across calls.
   */
  void backward(Tensor<T> loss) {
    if (loss.numel() != 1) {
      throw ShapeError("backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
    }
    bool connected = !entries_.empty() && entries_.back().output.same_storage(loss);
    if (!connected) {
      connected = std::any_of(entries_.begin(), entries_.end(),
                              [&](const Entry& e) { return e.output.same_storage(loss); });
    }
    if (!connected && !loss.requires_grad()) {
      throw ShapeError("backward() on a loss that is not connected to the tape");
    }
    for (auto& e : entries_) {
      e.output.zero_grad();
    }
    loss.grad()[0] += T{1};
    for (std::size_t i = entries_.size(); i-- > 0;) {
      if (visit_hook_) {
        visit_hook_(i);
      }
      entries_[i].backward();
    }
  }

  void clear() { entries_.clear(); }

private:
  struct Entry {
    Tensor<T> output;
    std::function<void()> backward;
  };

  bool recording_;
  std::vector<Entry> entries_;
  std::function<void(std::size_t)> visit_hook_;
};

} // namespace gplab
