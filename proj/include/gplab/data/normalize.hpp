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

#include "gplab/error.hpp"
#include "gplab/tensor.hpp"

namespace gplab {

struct NormalizationSpec {
  double epsilon = 1e-10;
};

struct BatchStatistics {
  double mean = 0.0;
  double stddev = 0.0;
};

/// Scalar mean and population standard deviation over every element.
template <class T>
BatchStatistics batch_statistics(const Tensor<T>& batch) {
  BatchStatistics s;
  const auto v = batch.data();
  for (T x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (T x : v) {
    const double d = x - s.mean;
    ss += d * d;
  }
  s.stddev = std::sqrt(ss / static_cast<double>(v.size()));
  return s;
}

/**
 * Z = (X - mu) / (sigma + eps) with one scalar mu and sigma pooled over all
 * images, channels and pixels of the mini-batch.
 */
template <class T>
Tensor<T> normalize_batch(const Tensor<T>& batch, const NormalizationSpec& spec = {}) {
  if (batch.rank() < 1 || batch.dim(0) == 0 || batch.numel() == 0) {
    throw ShapeError("normalize_batch: empty batch " + shape_str(batch.shape()));
  }
  if (!(spec.epsilon > 0)) {
    throw UsageError("normalize_batch: epsilon must be positive");
  }
  const BatchStatistics s = batch_statistics(batch);
  const double denom = s.stddev + spec.epsilon;
  Tensor<T> out(batch.shape());
  auto src = batch.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i] = static_cast<T>((src[i] - s.mean) / denom);
  }
  return out;
}

} // namespace gplab
