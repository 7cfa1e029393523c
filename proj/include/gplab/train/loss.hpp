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
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "gplab/data/classes.hpp"
#include "gplab/error.hpp"
#include "gplab/tensor.hpp"

namespace gplab {

struct ClassWeights {
  std::vector<double> w;

  static ClassWeights uniform(std::size_t classes = kNumClasses) {
    return ClassWeights{std::vector<double>(classes, 1.0)};
  }
};

/// Inverse-frequency weights w_c = N / (C * N_c); mean 1 under the class distribution.
template <class Counts>
ClassWeights class_weights(const Counts& counts) {
  const std::size_t c = std::size(counts);
  double total = 0.0;
  for (std::size_t i = 0; i < c; ++i) {
    if (counts[i] == 0) {
      const std::string name =
          c == kNumClasses ? class_name(static_cast<int>(i)) : std::to_string(i);
      throw DataError("class " + name + " has no samples; cannot weight the loss");
    }
    total += static_cast<double>(counts[i]);
  }
  ClassWeights out{std::vector<double>(c)};
  for (std::size_t i = 0; i < c; ++i) {
    out.w[i] = total / (static_cast<double>(c) * static_cast<double>(counts[i]));
  }
  return out;
}

namespace ops {

/**
 * Weighted cross-entropy of logits[N,K] against integer labels:
 *   L = -(1/N) sum_i w[y_i] * log softmax(logits_i)[y_i]
 * evaluated through log-sum-exp so finite logits never hit log(0).
 */
template <class T>
Tensor<T> weighted_cross_entropy(Tape<T>& tape, const Tensor<T>& logits, std::span<const int> labels,
                                 const ClassWeights& weights) {
  if (logits.rank() != 2) {
    throw ShapeError("weighted_cross_entropy: logits must be [N,K], got " +
                     shape_str(logits.shape()));
  }
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (labels.size() != n) {
    throw ShapeError("weighted_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(n) + " rows (dim 0)");
  }
  if (weights.w.size() != k) {
    throw ShapeError("weighted_cross_entropy: " + std::to_string(weights.w.size()) +
                     " class weights for " + std::to_string(k) + " classes (dim 1)");
  }
  if (n == 0) throw ShapeError("weighted_cross_entropy: empty batch");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= k) {
      throw DataError("weighted_cross_entropy: label " + std::to_string(y) + " outside 0.." +
                      std::to_string(k - 1));
    }
  }

  auto probs = std::make_shared<std::vector<T>>(n * k);
  auto x = logits.data();
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = x.data() + i * k;
    T m = row[0];
    for (std::size_t j = 1; j < k; ++j) m = std::max(m, row[j]);
    T z{0};
    for (std::size_t j = 0; j < k; ++j) z += std::exp(row[j] - m);
    const T lse = m + std::log(z);
    for (std::size_t j = 0; j < k; ++j) (*probs)[i * k + j] = std::exp(row[j] - lse);
    const auto y = static_cast<std::size_t>(labels[i]);
    loss -= weights.w[y] * static_cast<double>(row[y] - lse);
  }
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(loss / static_cast<double>(n)));

  if (tape.wants(logits)) {
    std::vector<int> ys(labels.begin(), labels.end());
    std::vector<T> wy(n);
    for (std::size_t i = 0; i < n; ++i) wy[i] = static_cast<T>(weights.w[ys[i]]);
    tape.record(out, [logits, out, probs, ys = std::move(ys), wy = std::move(wy), n, k]() mutable {
      const T g = out.grad()[0] / static_cast<T>(n);
      auto gx = logits.grad();
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
          const T onehot = static_cast<std::size_t>(ys[i]) == j ? T{1} : T{0};
          gx[i * k + j] += g * wy[i] * ((*probs)[i * k + j] - onehot);
        }
      }
    });
  }
  return out;
}

} // namespace ops
} // namespace gplab
