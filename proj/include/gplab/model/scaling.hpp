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
#include <cstddef>
#include <string>
#include <vector>

#include "gplab/data/classes.hpp"
#include "gplab/error.hpp"

namespace gplab {

struct ScalingCoefficients {
  double depth_multiplier = 1.0;
  double width_multiplier = 1.0;
  std::size_t input_resolution = 224;
};

/// One stage of the base (unscaled) network.
struct StageSpec {
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t expand_ratio = 1;
  std::size_t base_channels = 16;
  std::size_t base_repeats = 1;
  double se_ratio = 0.25;
};

struct ModelSpec {
  std::string name;
  ScalingCoefficients coefficients;
  std::vector<StageSpec> stages;
  std::size_t stem_channels = 32;
  std::size_t head_channels = 1280;
  std::size_t head_classes = kNumClasses;
  std::size_t channel_divisor = 8;

  void validate() const {
    auto fail = [&](const std::string& why) { throw UsageError("model spec " + name + ": " + why); };
    if (!(coefficients.depth_multiplier > 0) || !(coefficients.width_multiplier > 0) ||
        coefficients.input_resolution == 0) {
      fail("scaling coefficients must be strictly positive");
    }
    if (stages.empty()) fail("stage table is empty");
    if (channel_divisor == 0) fail("channel divisor must be positive");
    if (head_classes == 0 || stem_channels == 0 || head_channels == 0) fail("zero channel count");
    for (std::size_t i = 0; i < stages.size(); ++i) {
      const auto& s = stages[i];
      const std::string at = "stage " + std::to_string(i) + ": ";
      if (s.kernel == 0 || s.kernel % 2 == 0) fail(at + "kernel size must be odd and positive");
      if (s.stride == 0 || s.stride > 2) fail(at + "stride must be 1 or 2");
      if (s.expand_ratio == 0) fail(at + "expansion ratio must be >= 1");
      if (s.base_channels == 0 || s.base_repeats == 0) fail(at + "channels and repeats must be >= 1");
      if (!(s.se_ratio > 0.0 && s.se_ratio <= 1.0)) fail(at + "squeeze-excitation ratio must lie in (0,1]");
    }
  }
};

/**
 * Width scaling: base * multiplier rounded to the nearest multiple of the
 * divisor (never below the divisor), bumped by one divisor when rounding
 * lost more than 10%.
 */
inline std::size_t round_filters(std::size_t base_channels, double width_multiplier,
                                 std::size_t divisor = 8) {
  const double scaled = static_cast<double>(base_channels) * width_multiplier;
  const double d = static_cast<double>(divisor);
  double result = std::max(d, std::floor((scaled + d / 2.0) / d) * d);
  if (result < 0.9 * scaled) result += d;
  return static_cast<std::size_t>(result);
}

/// Depth scaling: ceil(multiplier * base).
inline std::size_t round_repeats(std::size_t base_repeats, double depth_multiplier) {
  return static_cast<std::size_t>(std::ceil(depth_multiplier * static_cast<double>(base_repeats)));
}

/// Fully resolved geometry of one MBConv block.
struct BlockGeometry {
  std::size_t in_channels;
  std::size_t out_channels;
  std::size_t expanded_channels;
  std::size_t se_channels;
  std::size_t kernel;
  std::size_t stride;
  bool residual() const { return stride == 1 && in_channels == out_channels; }
};

struct ResolvedModel {
  std::size_t stem_channels;
  std::size_t head_channels;
  std::vector<std::size_t> stage_repeats;
  std::vector<std::size_t> stage_channels;
  std::vector<std::vector<BlockGeometry>> blocks;  // per stage
  std::size_t total_stride;
};

inline ResolvedModel resolve(const ModelSpec& spec) {
  spec.validate();
  const double wm = spec.coefficients.width_multiplier;
  const double dm = spec.coefficients.depth_multiplier;
  ResolvedModel r;
  r.stem_channels = round_filters(spec.stem_channels, wm, spec.channel_divisor);
  r.head_channels = round_filters(spec.head_channels, wm, spec.channel_divisor);
  r.total_stride = 2;
  std::size_t in = r.stem_channels;
  for (const auto& st : spec.stages) {
    const std::size_t out = round_filters(st.base_channels, wm, spec.channel_divisor);
    const std::size_t reps = round_repeats(st.base_repeats, dm);
    r.stage_channels.push_back(out);
    r.stage_repeats.push_back(reps);
    r.total_stride *= st.stride;
    std::vector<BlockGeometry> blocks;
    for (std::size_t b = 0; b < reps; ++b) {
      BlockGeometry g{};
      g.in_channels = b == 0 ? in : out;
      g.out_channels = out;
      g.expanded_channels = g.in_channels * st.expand_ratio;
      g.se_channels = std::max<std::size_t>(
          1, static_cast<std::size_t>(static_cast<double>(g.in_channels) * st.se_ratio));
      g.kernel = st.kernel;
      g.stride = b == 0 ? st.stride : 1;
      blocks.push_back(g);
    }
    r.blocks.push_back(std::move(blocks));
    in = out;
  }
  return r;
}

/// The canonical seven-stage base table (kernel, stride, expand, channels, repeats).
inline std::vector<StageSpec> base_stage_table() {
  return {{3, 1, 1, 16, 1, 0.25},  {3, 2, 6, 24, 2, 0.25},  {5, 2, 6, 40, 2, 0.25},
          {3, 2, 6, 80, 3, 0.25},  {5, 1, 6, 112, 3, 0.25}, {5, 2, 6, 192, 4, 0.25},
          {3, 1, 6, 320, 1, 0.25}};
}

/**
 * Named variants. "B0".."B4" use the canonical (width, depth, resolution)
 * coefficients; "toy-B0".."toy-B4" apply the same coefficients to the first
 * three stages with a 128-channel head and 64-pixel inputs for desk-scale runs.
 */
inline ModelSpec model_spec(const std::string& name) {
  struct Coef {
    const char* suffix;
    double width, depth;
    std::size_t resolution;
  };
  static constexpr Coef kCoefs[] = {{"B0", 1.0, 1.0, 224},
                                    {"B1", 1.0, 1.1, 240},
                                    {"B2", 1.1, 1.2, 260},
                                    {"B3", 1.2, 1.4, 300},
                                    {"B4", 1.4, 1.8, 380}};
  const bool toy = name.rfind("toy-", 0) == 0;
  const std::string suffix = toy ? name.substr(4) : name;
  for (const auto& c : kCoefs) {
    if (suffix != c.suffix) continue;
    ModelSpec spec;
    spec.name = name;
    spec.coefficients = {c.depth, c.width, toy ? 64 : c.resolution};
    auto table = base_stage_table();
    if (toy) {
      table.resize(3);
      spec.head_channels = 128;
    }
    spec.stages = std::move(table);
    return spec;
  }
  throw UsageError("unknown model '" + name + "' (expected B0..B4 or toy-B0..toy-B4)");
}

} // namespace gplab
