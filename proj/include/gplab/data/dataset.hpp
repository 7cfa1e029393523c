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
#include <array>
#include <cctype>
#include <filesystem>
#include <string>
#include <vector>

#include "gplab/data/classes.hpp"
#include "gplab/data/png.hpp"
#include "gplab/error.hpp"
#include "gplab/log.hpp"
#include "gplab/tensor.hpp"

namespace gplab {

struct PatchRecord {
  /// Path relative to the dataset root, '/'-separated (e.g. "CT/0001.png").
  std::string image_path;
  /// 0..5, or -1 for an unlabeled record.
  int class_index = -1;

  std::string class_name() const { return gplab::class_name(class_index); }
};

struct PatchDataset {
  std::filesystem::path root;
  std::vector<PatchRecord> records;
  std::array<std::size_t, kNumClasses> class_counts{};
  bool labeled = true;

  std::size_t size() const noexcept { return records.size(); }
  bool empty() const noexcept { return records.empty(); }

  std::filesystem::path full_path(std::size_t i) const { return root / records.at(i).image_path; }

  std::vector<int> labels() const {
    std::vector<int> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(r.class_index);
    return out;
  }
};

namespace detail {

inline bool is_png(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png";
}

inline std::vector<std::string> sorted_pngs(const std::filesystem::path& dir) {
  std::vector<std::string> names;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_png(entry.path())) {
      names.push_back(entry.path().filename().string());
    }
  }
  std::sort(names.begin(), names.end());
  return names;
}

} // namespace detail

/**
 * Enumerates root/<class_name>/<file>.png. Records come out in lexicographic
 * (class_name, filename) order. A root holding PNG files directly and no
 * subdirectories is read as an unlabeled set. Images are not decoded here.
 */
inline PatchDataset ingest(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(root, ec)) {
    throw DataError("dataset root is not a directory: " + root.string());
  }
  PatchDataset ds;
  ds.root = root;
  std::vector<std::string> class_dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) class_dirs.push_back(entry.path().filename().string());
  }
  std::sort(class_dirs.begin(), class_dirs.end());

  if (class_dirs.empty()) {
    for (const auto& name : detail::sorted_pngs(root)) {
      ds.records.push_back(PatchRecord{name, -1});
    }
    ds.labeled = false;
    if (ds.records.empty()) {
      log::warn("dataset root " + root.string() + " contains no images");
    }
    return ds;
  }

  for (const auto& dir : class_dirs) {
    const auto idx = class_index(dir);
    if (!idx) {
      throw DataError("unknown class directory '" + dir + "' under " + root.string() +
                      " (expected one of CT, PN, IC, NC, MP, WM)");
    }
    for (const auto& name : detail::sorted_pngs(root / dir)) {
      ds.records.push_back(PatchRecord{dir + "/" + name, *idx});
      ++ds.class_counts[static_cast<std::size_t>(*idx)];
    }
  }
  if (ds.records.empty()) {
    log::warn("dataset root " + root.string() + " contains no images");
  }
  return ds;
}

/// Decodes one record to a [3,H,W] RGB tensor with values in [0,255].
template <class T = float>
Tensor<T> decode(const PatchDataset& ds, std::size_t index) {
  return to_tensor<T>(read_png(ds.full_path(index)));
}

/// Every image of a dataset decoded once and kept in memory.
template <class T = float>
struct ImageStore {
  std::vector<Tensor<T>> images;
  std::size_t height = 0;
  std::size_t width = 0;

  static ImageStore load(const PatchDataset& ds) {
    ImageStore store;
    store.images.reserve(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
      Tensor<T> img = decode<T>(ds, i);
      if (i == 0) {
        store.height = img.dim(1);
        store.width = img.dim(2);
      } else if (img.dim(1) != store.height || img.dim(2) != store.width) {
        throw DataError("image " + ds.full_path(i).string() + " is " +
                        std::to_string(img.dim(2)) + "x" + std::to_string(img.dim(1)) +
                        ", expected " + std::to_string(store.width) + "x" +
                        std::to_string(store.height) + " like the rest of the dataset");
      }
      store.images.push_back(std::move(img));
    }
    return store;
  }
};

} // namespace gplab
