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

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gplab/error.hpp"
#include "gplab/train/trainer.hpp"

namespace gplab {

/**
 * Flat key=value run description: model name, every training, augmentation
 * and normalization hyperparameter, and the data/split/output paths.
 * Defaults reproduce the reference hyperparameters.
 */
struct RunConfig {
  std::string model = "toy-B0";
  TrainConfig train{};
  std::optional<std::uint64_t> seed{};  // unset: GPLAB_SEED, then 0
  std::string data{};
  std::string split{};
  std::string out{};

  bool operator==(const RunConfig& o) const { return render() == o.render(); }

  std::string render() const;
  static RunConfig parse(const std::string& text, const std::string& origin = "config");
  static RunConfig load(const std::filesystem::path& path);

  /// Seed in effect: explicit value, else GPLAB_SEED, else 0.
  std::uint64_t effective_seed() const;
};

namespace detail {

inline std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string fmt_list(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) {
    throw UsageError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size()) {
    throw UsageError("config key '" + key + "': expected a number, got '" + v + "'");
  }
  return d;
}

inline std::vector<std::size_t> parse_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(static_cast<std::size_t>(parse_u64(key, item)));
  }
  return out;
}

} // namespace detail

inline std::string RunConfig::render() const {
  using detail::fmt_double;
  const auto& t = train;
  std::ostringstream o;
  o << "model=" << model << '\n'
    << "batch_size=" << t.batch_size << '\n'
    << "epochs=" << t.epochs << '\n'
    << "lr=" << fmt_double(t.lr) << '\n'
    << "optimizer=adam\n"
    << "weight_decay=" << fmt_double(t.weight_decay) << '\n'
    << "scheduler=" << to_string(t.scheduler.kind) << '\n'
    << "gamma=" << fmt_double(t.scheduler.gamma) << '\n'
    << "step_period=" << t.scheduler.step_period << '\n'
    << "milestones=" << detail::fmt_list(t.scheduler.milestones) << '\n'
    << "checkpoint_epochs=" << detail::fmt_list(t.checkpoint_epochs) << '\n'
    << "rotation=" << fmt_double(t.augmentation.max_rotation_degrees) << '\n'
    << "hflip=" << fmt_double(t.augmentation.horizontal_flip_prob) << '\n'
    << "vflip=" << fmt_double(t.augmentation.vertical_flip_prob) << '\n'
    << "brightness=" << fmt_double(t.augmentation.brightness_delta) << '\n'
    << "contrast=" << fmt_double(t.augmentation.contrast_delta) << '\n'
    << "augment_seed=" << t.augmentation.rng_seed << '\n'
    << "norm_epsilon=" << fmt_double(t.normalization.epsilon) << '\n';
  if (seed) o << "seed=" << *seed << '\n';
  if (!data.empty()) o << "data=" << data << '\n';
  if (!split.empty()) o << "split=" << split << '\n';
  if (!out.empty()) o << "out=" << out << '\n';
  return o.str();
}

inline RunConfig RunConfig::parse(const std::string& text, const std::string& origin) {
  using namespace detail;
  RunConfig c;
  auto& t = c.train;
  std::stringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  std::map<std::string, std::size_t> seen;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(origin + ":" + std::to_string(lineno) + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string v = trim(line.substr(eq + 1));
    if (seen.count(key)) {
      throw UsageError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
    seen[key] = lineno;
    if (key == "model") c.model = v;
    else if (key == "batch_size") t.batch_size = parse_u64(key, v);
    else if (key == "epochs") t.epochs = parse_u64(key, v);
    else if (key == "lr") t.lr = parse_double(key, v);
    else if (key == "optimizer") {
      if (v != "adam") throw UsageError("config key 'optimizer': only 'adam' is supported");
    } else if (key == "weight_decay") t.weight_decay = parse_double(key, v);
    else if (key == "scheduler") t.scheduler.kind = scheduler_kind(v);
    else if (key == "gamma") t.scheduler.gamma = parse_double(key, v);
    else if (key == "step_period") t.scheduler.step_period = parse_u64(key, v);
    else if (key == "milestones") t.scheduler.milestones = parse_list(key, v);
    else if (key == "checkpoint_epochs") t.checkpoint_epochs = parse_list(key, v);
    else if (key == "rotation") t.augmentation.max_rotation_degrees = parse_double(key, v);
    else if (key == "hflip") t.augmentation.horizontal_flip_prob = parse_double(key, v);
    else if (key == "vflip") t.augmentation.vertical_flip_prob = parse_double(key, v);
    else if (key == "brightness") t.augmentation.brightness_delta = parse_double(key, v);
    else if (key == "contrast") t.augmentation.contrast_delta = parse_double(key, v);
    else if (key == "augment_seed") t.augmentation.rng_seed = parse_u64(key, v);
    else if (key == "norm_epsilon") t.normalization.epsilon = parse_double(key, v);
    else if (key == "seed") c.seed = parse_u64(key, v);
    else if (key == "data") c.data = v;
    else if (key == "split") c.split = v;
    else if (key == "out") c.out = v;
    else {
      throw UsageError(origin + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
  }
  return c;
}

inline RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str(), path.string());
}

inline std::uint64_t RunConfig::effective_seed() const {
  if (seed) return *seed;
  if (const char* env = std::getenv("GPLAB_SEED"); env && *env) {
    return detail::parse_u64("GPLAB_SEED", env);
  }
  return 0;
}

} // namespace gplab
