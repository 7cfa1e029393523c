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

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace gplab {

inline constexpr std::size_t kNumClasses = 6;

/// Class vocabulary in index order: CT=0, PN=1, IC=2, NC=3, MP=4, WM=5.
inline constexpr std::array<std::string_view, kNumClasses> kClassNames = {"CT", "PN", "IC",
                                                                          "NC", "MP", "WM"};

inline std::optional<int> class_index(std::string_view name) {
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    if (kClassNames[i] == name) return static_cast<int>(i);
  }
  return std::nullopt;
}

inline std::string class_name(int index) {
  if (index < 0 || index >= static_cast<int>(kNumClasses)) return "?";
  return std::string(kClassNames[static_cast<std::size_t>(index)]);
}

/// Training-set share per class (index order), from the challenge's
/// published distribution: CT 35%, PN 10%, IC 15%, NC 31%, MP 5%, WM 4%.
inline constexpr std::array<double, kNumClasses> kReferenceProportions = {0.35, 0.10, 0.15,
                                                                          0.31, 0.05, 0.04};

/// Published per-class image counts of the same training set (index order).
inline constexpr std::array<std::size_t, kNumClasses> kReferenceCounts = {34139, 9664, 14500,
                                                                          29542, 4812, 3828};

} // namespace gplab
