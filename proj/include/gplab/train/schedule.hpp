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
#include <cstddef>
#include <string>
#include <vector>

#include "gplab/error.hpp"

namespace gplab {

struct SchedulerSpec {
  enum class Kind { step, multistep, exponential };

  Kind kind = Kind::exponential;
  double gamma = 0.9;
  std::size_t step_period = 10;            // step kind
  std::vector<std::size_t> milestones{};   // multistep kind

  void validate() const {
    if (!(gamma > 0.0 && gamma <= 1.0)) {
      throw UsageError("scheduler gamma must be in (0, 1], got " + std::to_string(gamma));
    }
    if (kind == Kind::step && step_period == 0) throw UsageError("scheduler step period must be >= 1");
    for (std::size_t i = 1; i < milestones.size(); ++i) {
      if (milestones[i] <= milestones[i - 1]) {
        throw UsageError("scheduler milestones must be strictly increasing");
      }
    }
  }
};

inline const char* to_string(SchedulerSpec::Kind k) {
  switch (k) {
  case SchedulerSpec::Kind::step: return "step";
  case SchedulerSpec::Kind::multistep: return "multistep";
  case SchedulerSpec::Kind::exponential: return "exponential";
  }
  return "?";
}

inline SchedulerSpec::Kind scheduler_kind(const std::string& s) {
  if (s == "step") return SchedulerSpec::Kind::step;
  if (s == "multistep") return SchedulerSpec::Kind::multistep;
  if (s == "exponential") return SchedulerSpec::Kind::exponential;
  throw UsageError("unknown scheduler '" + s + "' (expected step, multistep or exponential)");
}

/// Learning rate for a 0-based epoch; the schedule advances once per epoch.
inline double lr_at(const SchedulerSpec& s, double base_lr, std::size_t epoch) {
  double exponent = 0.0;
  switch (s.kind) {
  case SchedulerSpec::Kind::exponential:
    exponent = static_cast<double>(epoch);
    break;
  case SchedulerSpec::Kind::step:
    exponent = static_cast<double>(epoch / std::max<std::size_t>(1, s.step_period));
    break;
  case SchedulerSpec::Kind::multistep:
    exponent = static_cast<double>(
        std::count_if(s.milestones.begin(), s.milestones.end(), [&](std::size_t m) { return m <= epoch; }));
    break;
  }
  return base_lr * std::pow(s.gamma, exponent);
}

} // namespace gplab
