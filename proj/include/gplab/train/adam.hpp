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
#include <span>
#include <string>
#include <vector>

#include "gplab/error.hpp"
#include "gplab/tensor.hpp"

namespace gplab {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

/**
 * One bias-corrected Adam update of a flat parameter array. `step` is the
 * 1-based step count after this update. Decay shrinks the parameter by
 * lr * weight_decay before the moments are touched.
 */
template <class T>
void adam_update(std::span<T> p, std::span<const T> g, std::span<T> m, std::span<T> v, double lr,
                 std::uint64_t step, const AdamOptions& o) {
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(step));
  const T shrink = static_cast<T>(1.0 - lr * o.weight_decay);
  const T b1 = static_cast<T>(o.beta1), b2 = static_cast<T>(o.beta2);
  const T step_size = static_cast<T>(lr / c1);
  const T inv_c2 = static_cast<T>(1.0 / c2);
  const T eps = static_cast<T>(o.eps);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (o.weight_decay != 0.0) p[i] *= shrink;
    m[i] = b1 * m[i] + (T{1} - b1) * g[i];
    v[i] = b2 * v[i] + (T{1} - b2) * g[i] * g[i];
    p[i] -= step_size * m[i] / (std::sqrt(v[i] * inv_c2) + eps);
  }
}

/// Adam over a fixed, ordered list of parameter tensors.
template <class T>
class Adam {
public:
  Adam() = default;
  Adam(std::vector<Tensor<T>> params, AdamOptions opt) : params_(std::move(params)), opt_(opt) {
    for (const auto& p : params_) {
      m_.emplace_back(p.shape());
      v_.emplace_back(p.shape());
    }
  }

  /// Applies one update with the grads currently on the parameters.
  /// `names` (optional, parallel to params) only feeds diagnostics.
  void step(double lr, const std::vector<std::string>* names = nullptr) {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      for (T g : std::as_const(params_[i]).grad()) {
        if (!std::isfinite(g)) {
          throw NumericError("non-finite gradient in parameter " +
                             (names ? (*names)[i] : std::to_string(i)));
        }
      }
    }
    ++step_;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      adam_update<T>(p.data(), std::span<const T>(p.grad()), m_[i].data(), v_[i].data(), lr, step_,
                     opt_);
    }
  }

  std::uint64_t steps() const noexcept { return step_; }
  void set_steps(std::uint64_t s) noexcept { step_ = s; }
  const AdamOptions& options() const noexcept { return opt_; }
  std::vector<Tensor<T>>& first_moments() noexcept { return m_; }
  std::vector<Tensor<T>>& second_moments() noexcept { return v_; }
  const std::vector<Tensor<T>>& first_moments() const noexcept { return m_; }
  const std::vector<Tensor<T>>& second_moments() const noexcept { return v_; }

private:
  std::vector<Tensor<T>> params_;
  std::vector<Tensor<T>> m_, v_;
  AdamOptions opt_{};
  std::uint64_t step_ = 0;
};

} // namespace gplab
