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

// Procedural stand-in for the six-class patch dataset. Each class is a
// texture family (base colour, structure, noise) with per-image colour jitter
// wide enough that mean colour alone does not separate the classes.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "gplab/data/classes.hpp"
#include "gplab/data/png.hpp"
#include "gplab/error.hpp"

namespace gplab {

/**
 * Largest-remainder apportionment of `total` items over `proportions`
 * (normalized internally). Ties in the remainder go to the lower index.
 */
template <std::size_t K>
std::array<std::size_t, K> apportion(std::size_t total, const std::array<double, K>& proportions) {
  double sum = 0.0;
  for (double p : proportions) {
    if (!(p >= 0.0)) throw UsageError("apportion: proportions must be non-negative");
    sum += p;
  }
  if (!(sum > 0.0)) throw UsageError("apportion: proportions sum to zero");
  std::array<std::size_t, K> counts{};
  std::array<double, K> rem{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < K; ++i) {
    const double quota = static_cast<double>(total) * proportions[i] / sum;
    counts[i] = static_cast<std::size_t>(std::floor(quota + 1e-9));
    rem[i] = quota - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  std::array<std::size_t, K> order{};
  for (std::size_t i = 0; i < K; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  for (std::size_t j = 0; assigned < total; ++j, ++assigned) ++counts[order[j % K]];
  return counts;
}

struct SyntheticSpec {
  std::size_t total = 600;
  std::array<double, kNumClasses> proportions = kReferenceProportions;
  std::size_t image_size = 64;
  std::uint64_t seed = 0;
};

namespace detail {

struct Canvas {
  std::size_t size;
  std::vector<double> px;  // planar RGB

  explicit Canvas(std::size_t s) : size(s), px(3 * s * s) {}

  void fill(const std::array<double, 3>& rgb) {
    for (std::size_t c = 0; c < 3; ++c)
      std::fill(px.begin() + static_cast<std::ptrdiff_t>(c * size * size),
                px.begin() + static_cast<std::ptrdiff_t>((c + 1) * size * size), rgb[c]);
  }

  void blend(std::size_t y, std::size_t x, const std::array<double, 3>& rgb, double alpha) {
    for (std::size_t c = 0; c < 3; ++c) {
      double& p = px[(c * size + y) * size + x];
      p = (1.0 - alpha) * p + alpha * rgb[c];
    }
  }

  // Soft-edged filled disc.
  void disc(double cy, double cx, double r, const std::array<double, 3>& rgb, double alpha) {
    const double s = static_cast<double>(size);
    const int y0 = std::max(0, static_cast<int>(std::floor(cy - r - 1)));
    const int y1 = std::min(static_cast<int>(s) - 1, static_cast<int>(std::ceil(cy + r + 1)));
    const int x0 = std::max(0, static_cast<int>(std::floor(cx - r - 1)));
    const int x1 = std::min(static_cast<int>(s) - 1, static_cast<int>(std::ceil(cx + r + 1)));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const double d = std::hypot(y - cy, x - cx);
        const double cover = std::clamp(r + 0.5 - d, 0.0, 1.0);
        if (cover > 0) blend(static_cast<std::size_t>(y), static_cast<std::size_t>(x), rgb, alpha * cover);
      }
  }

  void ring(double cy, double cx, double r, double thickness, const std::array<double, 3>& rgb,
            double alpha) {
    const double s = static_cast<double>(size);
    const double outer = r + thickness;
    const int y0 = std::max(0, static_cast<int>(std::floor(cy - outer - 1)));
    const int y1 = std::min(static_cast<int>(s) - 1, static_cast<int>(std::ceil(cy + outer + 1)));
    const int x0 = std::max(0, static_cast<int>(std::floor(cx - outer - 1)));
    const int x1 = std::min(static_cast<int>(s) - 1, static_cast<int>(std::ceil(cx + outer + 1)));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const double d = std::hypot(y - cy, x - cx);
        const double cover = std::clamp(std::min(d - r + 0.5, outer + 0.5 - d), 0.0, 1.0);
        if (cover > 0) blend(static_cast<std::size_t>(y), static_cast<std::size_t>(x), rgb, alpha * cover);
      }
  }
};

using Rgb = std::array<double, 3>;

inline Rgb jitter(const Rgb& base, std::mt19937_64& rng, double amount) {
  std::uniform_real_distribution<double> u(-amount, amount);
  const double shared = u(rng);
  Rgb out;
  for (std::size_t c = 0; c < 3; ++c) out[c] = base[c] + shared + 0.5 * u(rng);
  return out;
}

inline void paint_class(Canvas& cv, int cls, std::mt19937_64& rng) {
  const double s = static_cast<double>(cv.size);
  const double scale = s / 64.0;
  std::uniform_real_distribution<double> pos(0.0, s);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Rgb pink = jitter({226, 178, 206}, rng, 28);
  const Rgb pale = jitter({236, 206, 224}, rng, 28);
  const Rgb nucleus = jitter({92, 52, 138}, rng, 25);
  const double two_pi = 2.0 * std::numbers::pi;

  switch (cls) {
  case 0: {  // CT: densely packed small nuclei
    cv.fill(pink);
    const int n = static_cast<int>(55 * scale * scale);
    for (int i = 0; i < n; ++i) {
      cv.disc(pos(rng), pos(rng), (1.2 + 1.2 * unit(rng)) * scale, nucleus, 0.85);
    }
    break;
  }
  case 1: {  // PN: parallel bands of nuclei (palisades)
    cv.fill(pink);
    const double theta = unit(rng) * std::numbers::pi;
    const double period = (9.0 + 4.0 * unit(rng)) * scale;
    const double phase = unit(rng) * two_pi;
    const double ny = std::sin(theta), nx = std::cos(theta);
    for (std::size_t y = 0; y < cv.size; ++y)
      for (std::size_t x = 0; x < cv.size; ++x) {
        const double t = std::sin(two_pi * (static_cast<double>(y) * ny + static_cast<double>(x) * nx) / period + phase);
        if (t > 0.45) cv.blend(y, x, nucleus, 0.75 * std::min(1.0, (t - 0.45) * 4.0));
      }
    break;
  }
  case 2: {  // IC: sparse nuclei over a fine isotropic neuropil texture
    cv.fill(pale);
    const double a1 = unit(rng) * std::numbers::pi, a2 = a1 + std::numbers::pi / 2.0;
    const double p = (3.5 + 1.0 * unit(rng)) * scale;
    for (std::size_t y = 0; y < cv.size; ++y)
      for (std::size_t x = 0; x < cv.size; ++x) {
        const double fy = static_cast<double>(y), fx = static_cast<double>(x);
        const double t = std::sin(two_pi * (fy * std::sin(a1) + fx * std::cos(a1)) / p) +
                         std::sin(two_pi * (fy * std::sin(a2) + fx * std::cos(a2)) / p);
        for (std::size_t c = 0; c < 3; ++c) cv.px[(c * cv.size + y) * cv.size + x] -= 14.0 * t;
      }
    const int n = static_cast<int>(10 * scale * scale);
    for (int i = 0; i < n; ++i) cv.disc(pos(rng), pos(rng), (1.3 + unit(rng)) * scale, nucleus, 0.9);
    break;
  }
  case 3: {  // NC: large pale necrotic blobs with scattered debris
    cv.fill(jitter({214, 172, 198}, rng, 28));
    const Rgb necrotic = jitter({246, 226, 236}, rng, 12);
    const int blobs = 4 + static_cast<int>(3 * unit(rng));
    for (int i = 0; i < blobs; ++i) {
      cv.disc(pos(rng), pos(rng), (8.0 + 6.0 * unit(rng)) * scale, necrotic, 0.8);
    }
    const int debris = static_cast<int>(8 * scale * scale);
    for (int i = 0; i < debris; ++i) cv.disc(pos(rng), pos(rng), 0.8 * scale, nucleus, 0.7);
    break;
  }
  case 4: {  // MP: vessel rings with red walls
    cv.fill(pink);
    const Rgb wall = jitter({172, 48, 78}, rng, 20);
    const int rings = 3 + static_cast<int>(3 * unit(rng));
    for (int i = 0; i < rings; ++i) {
      const double cy = pos(rng), cx = pos(rng), r = (4.5 + 4.0 * unit(rng)) * scale;
      cv.ring(cy, cx, r, 2.0 * scale, wall, 0.9);
      cv.disc(cy, cx, 1.2 * scale, nucleus, 0.8);
    }
    break;
  }
  default: {  // WM: thin wavy fibres
    cv.fill(pale);
    const Rgb fibre = jitter({168, 132, 188}, rng, 20);
    const double period = (5.0 + 2.0 * unit(rng)) * scale;
    const double wave = (14.0 + 10.0 * unit(rng)) * scale;
    const double amp = (1.5 + 2.0 * unit(rng)) * scale;
    const bool vertical = unit(rng) < 0.5;
    for (std::size_t y = 0; y < cv.size; ++y)
      for (std::size_t x = 0; x < cv.size; ++x) {
        const double a = static_cast<double>(vertical ? x : y);
        const double b = static_cast<double>(vertical ? y : x);
        const double t = std::sin(two_pi * (a + amp * std::sin(two_pi * b / wave)) / period);
        if (t > 0.5) cv.blend(y, x, fibre, 0.7 * std::min(1.0, (t - 0.5) * 4.0));
      }
    break;
  }
  }

  std::normal_distribution<double> noise(0.0, 9.0);
  for (double& p : cv.px) p += noise(rng);
}

} // namespace detail

/// Renders image `index` of class `cls`; deterministic in (seed, cls, index).
inline RgbImage render_synthetic(int cls, std::size_t index, std::size_t image_size, std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(cls), static_cast<std::uint32_t>(index)};
  std::mt19937_64 rng(seq);
  detail::Canvas cv(image_size);
  detail::paint_class(cv, cls, rng);
  RgbImage img;
  img.width = img.height = image_size;
  img.pixels.resize(image_size * image_size * 3);
  for (std::size_t y = 0; y < image_size; ++y)
    for (std::size_t x = 0; x < image_size; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = std::clamp(std::round(cv.px[(c * image_size + y) * image_size + x]), 0.0, 255.0);
        img.pixels[(y * image_size + x) * 3 + c] = static_cast<std::uint8_t>(v);
      }
  return img;
}

/**
 * Writes output_root/<class_name>/<class_name>_NNNN.png for every class.
 * Returns the per-class counts (largest-remainder apportionment of total).
 */
inline std::array<std::size_t, kNumClasses> generate_synthetic(const std::filesystem::path& output_root,
                                                               const SyntheticSpec& spec) {
  if (spec.total < kNumClasses) {
    throw UsageError("synthetic total must be >= 6, got " + std::to_string(spec.total));
  }
  if (spec.image_size < 16) {
    throw UsageError("synthetic image size must be >= 16, got " + std::to_string(spec.image_size));
  }
  const auto counts = apportion(spec.total, spec.proportions);
  namespace fs = std::filesystem;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const fs::path dir = output_root / std::string(kClassNames[c]);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) {
      throw DataError("cannot create output directory " + dir.string() +
                      (ec ? ": " + ec.message() : std::string()));
    }
    for (std::size_t i = 0; i < counts[c]; ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "%s_%04zu.png", std::string(kClassNames[c]).c_str(), i);
      write_png(dir / name, render_synthetic(static_cast<int>(c), i, spec.image_size, spec.seed));
    }
  }
  return counts;
}

} // namespace gplab
