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
#include <cstdint>
#include <random>
#include <vector>

#include "gplab/data/augment.hpp"
#include "gplab/data/dataset.hpp"
#include "gplab/error.hpp"
#include "gplab/tensor.hpp"

namespace gplab {

/// Per-epoch generator: seeded from (seed, epoch) so epochs differ but are reproducible.
inline std::mt19937_64 epoch_rng(std::uint64_t seed, std::uint64_t epoch, std::uint64_t stream = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

/**
 * Splits `subset` into consecutive mini-batches of at most batch_size
 * indices. With shuffle on, the subset is permuted by epoch_rng(seed, epoch)
 * first; otherwise input order is kept. The last batch may be smaller.
 */
inline std::vector<std::vector<std::size_t>> batches(std::vector<std::size_t> subset,
                                                     std::size_t batch_size, std::uint64_t seed,
                                                     std::uint64_t epoch = 0, bool shuffle = true) {
  if (batch_size == 0) throw UsageError("batch size must be >= 1");
  if (shuffle) {
    auto rng = epoch_rng(seed, epoch);
    std::shuffle(subset.begin(), subset.end(), rng);
  }
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < subset.size(); i += batch_size) {
    const std::size_t end = std::min(subset.size(), i + batch_size);
    out.emplace_back(subset.begin() + static_cast<std::ptrdiff_t>(i),
                     subset.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

/// Stacks the selected [3,H,W] images into one [N,3,H,W] tensor.
template <class T>
Tensor<T> stack_images(const std::vector<Tensor<T>>& images) {
  if (images.empty()) throw ShapeError("stack_images: no images");
  const Shape& s = images.front().shape();
  const std::size_t per = images.front().numel();
  Tensor<T> out(Shape{images.size(), s[0], s[1], s[2]});
  auto dst = out.data();
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].shape() != s) {
      throw ShapeError("stack_images: image " + std::to_string(i) + " has shape " +
                       shape_str(images[i].shape()) + ", expected " + shape_str(s));
    }
    std::copy(images[i].data().begin(), images[i].data().end(), dst.begin() + static_cast<std::ptrdiff_t>(i * per));
  }
  return out;
}

} // namespace gplab
