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
#include <cmath>
#include <numbers>
#include <random>

#include "gplab/error.hpp"
#include "gplab/tensor.hpp"

namespace gplab {

struct AugmentationSpec {
  double max_rotation_degrees = 20.0;
  double horizontal_flip_prob = 0.5;
  double vertical_flip_prob = 0.5;
  double brightness_delta = 0.1;
  double contrast_delta = 0.1;
  std::uint64_t rng_seed = 0;

  void validate() const {
    auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!prob(horizontal_flip_prob) || !prob(vertical_flip_prob)) {
      throw UsageError("augmentation flip probabilities must lie in [0,1]");
    }
    if (max_rotation_degrees < 0 || brightness_delta < 0 || contrast_delta < 0) {
      throw UsageError("augmentation rotation and deltas must be >= 0");
    }
  }

  /// Everything switched off.
  static AugmentationSpec none() { return {0.0, 0.0, 0.0, 0.0, 0.0, 0}; }
};

/// One concrete draw of the random transform parameters.
struct AugmentationDraw {
  double angle_degrees = 0.0;
  bool hflip = false;
  bool vflip = false;
  double brightness = 1.0;
  double contrast = 1.0;
};

/// Draws the five parameters in a fixed order, consuming the same number of
/// variates whatever the spec, so streams stay aligned across settings.
template <class Rng>
AugmentationDraw draw_augmentation(const AugmentationSpec& spec, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  AugmentationDraw d;
  const double u_angle = unit(rng);
  const double u_h = unit(rng);
  const double u_v = unit(rng);
  const double u_b = unit(rng);
  const double u_c = unit(rng);
  d.angle_degrees = (2.0 * u_angle - 1.0) * spec.max_rotation_degrees;
  d.hflip = u_h < spec.horizontal_flip_prob;
  d.vflip = u_v < spec.vertical_flip_prob;
  d.brightness = 1.0 + (2.0 * u_b - 1.0) * spec.brightness_delta;
  d.contrast = 1.0 + (2.0 * u_c - 1.0) * spec.contrast_delta;
  return d;
}

namespace detail {

// Bilinear sample with clamp-to-edge; lerp form keeps equal neighbours exact.
template <class T>
T sample_clamped(const T* plane, std::size_t h, std::size_t w, double y, double x) {
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  const std::size_t y0 = static_cast<std::size_t>(std::floor(y));
  const std::size_t x0 = static_cast<std::size_t>(std::floor(x));
  const std::size_t y1 = std::min(y0 + 1, h - 1);
  const std::size_t x1 = std::min(x0 + 1, w - 1);
  const T fy = static_cast<T>(y - static_cast<double>(y0));
  const T fx = static_cast<T>(x - static_cast<double>(x0));
  const T p00 = plane[y0 * w + x0], p01 = plane[y0 * w + x1];
  const T p10 = plane[y1 * w + x0], p11 = plane[y1 * w + x1];
  const T top = p00 + fx * (p01 - p00);
  const T bottom = p10 + fx * (p11 - p10);
  return top + fy * (bottom - top);
}

} // namespace detail

/// Rotation about the image centre (counter-clockwise for positive angles).
template <class T>
Tensor<T> rotate(const Tensor<T>& image, double degrees) {
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (degrees == 0.0) return image.clone();
  const double rad = degrees * std::numbers::pi / 180.0;
  const double cs = std::cos(rad), sn = std::sin(rad);
  const double cy = (static_cast<double>(h) - 1.0) / 2.0;
  const double cx = (static_cast<double>(w) - 1.0) / 2.0;
  Tensor<T> out(image.shape());
  auto src = image.data();
  auto dst = out.data();
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
      // Inverse map: rotate the output coordinate back by -angle.
      const double sx = cs * dx - sn * dy + cx;
      const double sy = sn * dx + cs * dy + cy;
      for (std::size_t ch = 0; ch < c; ++ch) {
        dst[(ch * h + y) * w + x] = detail::sample_clamped(src.data() + ch * h * w, h, w, sy, sx);
      }
    }
  }
  return out;
}

template <class T>
Tensor<T> flip_horizontal(const Tensor<T>& image) {
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  Tensor<T> out(image.shape());
  auto s = image.data();
  auto d = out.data();
  for (std::size_t p = 0; p < c * h; ++p)
    for (std::size_t x = 0; x < w; ++x) d[p * w + x] = s[p * w + (w - 1 - x)];
  return out;
}

template <class T>
Tensor<T> flip_vertical(const Tensor<T>& image) {
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  Tensor<T> out(image.shape());
  auto s = image.data();
  auto d = out.data();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      std::copy_n(s.data() + (ch * h + (h - 1 - y)) * w, w, d.data() + (ch * h + y) * w);
  return out;
}

/**
 * Applies a concrete draw to a [3,H,W] image in [0,255]: rotation, flips,
 * brightness (multiplies every pixel), contrast (scales the deviation from
 * the image mean), then clamps to [0,255].
 */
template <class T>
Tensor<T> apply_augmentation(const Tensor<T>& image, const AugmentationDraw& d) {
  if (image.rank() != 3) {
    throw ShapeError("augment expects [C,H,W], got " + shape_str(image.shape()));
  }
  Tensor<T> out = rotate(image, d.angle_degrees);
  if (d.hflip) out = flip_horizontal(out);
  if (d.vflip) out = flip_vertical(out);
  auto v = out.data();
  if (d.brightness != 1.0) {
    for (T& p : v) p = static_cast<T>(p * d.brightness);
  }
  if (d.contrast != 1.0) {
    double mean = 0.0;
    for (T p : v) mean += p;
    mean /= static_cast<double>(v.size());
    for (T& p : v) p = static_cast<T>(mean + d.contrast * (p - mean));
  }
  for (T& p : v) p = std::clamp(p, T{0}, T{255});
  return out;
}

template <class T, class Rng>
Tensor<T> augment(const Tensor<T>& image, const AugmentationSpec& spec, Rng& rng) {
  return apply_augmentation(image, draw_augmentation(spec, rng));
}

/// Bilinear resize of a [C,H,W] image (align-corners=false sampling).
template <class T>
Tensor<T> resize(const Tensor<T>& image, std::size_t out_h, std::size_t out_w) {
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (out_h == h && out_w == w) return image.clone();
  Tensor<T> out(Shape{c, out_h, out_w});
  auto s = image.data();
  auto d = out.data();
  const double sy = static_cast<double>(h) / static_cast<double>(out_h);
  const double sx = static_cast<double>(w) / static_cast<double>(out_w);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < out_h; ++y)
      for (std::size_t x = 0; x < out_w; ++x)
        d[(ch * out_h + y) * out_w + x] = detail::sample_clamped(
            s.data() + ch * h * w, h, w, (static_cast<double>(y) + 0.5) * sy - 0.5,
            (static_cast<double>(x) + 0.5) * sx - 0.5);
  return out;
}

} // namespace gplab
