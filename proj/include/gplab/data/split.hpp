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
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "gplab/data/classes.hpp"
#include "gplab/data/dataset.hpp"
#include "gplab/error.hpp"

namespace gplab {

/**
 * Record-index to fold assignment. Holdout plans use fold 0 for train and
 * fold 1 for validation; k-fold plans use folds 0..k-1.
 */
struct SplitPlan {
  enum class Kind { holdout, kfold };

  static constexpr int kTrain = 0;
  static constexpr int kVal = 1;

  Kind kind = Kind::holdout;
  std::size_t k = 2;
  double ratio = 0.8;
  std::vector<int> fold;

  std::size_t size() const noexcept { return fold.size(); }

  std::vector<std::size_t> members(int f) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < fold.size(); ++i)
      if (fold[i] == f) out.push_back(i);
    return out;
  }

  std::vector<std::size_t> excluding(int f) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < fold.size(); ++i)
      if (fold[i] != f) out.push_back(i);
    return out;
  }

  /// Training records: the train tag for holdout, every other fold for k-fold.
  std::vector<std::size_t> train_indices(int validation_fold = 0) const {
    return kind == Kind::holdout ? members(kTrain) : excluding(validation_fold);
  }

  std::vector<std::size_t> val_indices(int validation_fold = 0) const {
    return kind == Kind::holdout ? members(kVal) : members(validation_fold);
  }

  std::string fold_label(std::size_t i) const {
    if (kind == Kind::holdout) return fold[i] == kTrain ? "train" : "val";
    return std::to_string(fold[i]);
  }
};

namespace detail {

inline std::array<std::vector<std::size_t>, kNumClasses> by_class(const PatchDataset& ds) {
  std::array<std::vector<std::size_t>, kNumClasses> groups;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const int c = ds.records[i].class_index;
    if (c < 0 || c >= static_cast<int>(kNumClasses)) {
      throw DataError("cannot stratify unlabeled record " + ds.records[i].image_path);
    }
    groups[static_cast<std::size_t>(c)].push_back(i);
  }
  return groups;
}

} // namespace detail

struct HoldoutOptions {
  double ratio = 0.8;
  std::uint64_t seed = 0;
  /// Reject datasets in which any of the six classes has no records.
  bool require_every_class = false;
};

/**
 * Stratified train/validation split: per class, floor(ratio * N_c) records
 * go to train and the remainder to validation. Within-class membership is a
 * seeded shuffle.
 */
inline SplitPlan split_holdout(const PatchDataset& ds, HoldoutOptions opt = {}) {
  if (!(opt.ratio > 0.0 && opt.ratio < 1.0)) {
    throw UsageError("holdout ratio must lie strictly between 0 and 1");
  }
  if (ds.empty()) throw DataError("cannot split an empty dataset");
  auto groups = detail::by_class(ds);
  SplitPlan plan;
  plan.kind = SplitPlan::Kind::holdout;
  plan.k = 2;
  plan.ratio = opt.ratio;
  plan.fold.assign(ds.size(), SplitPlan::kVal);
  std::mt19937_64 rng(opt.seed);
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    auto& g = groups[c];
    if (g.empty()) {
      if (opt.require_every_class) {
        throw DataError("class " + class_name(static_cast<int>(c)) + " has no records");
      }
      continue;
    }
    std::shuffle(g.begin(), g.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::floor(opt.ratio * static_cast<double>(g.size())));
    for (std::size_t j = 0; j < n_train; ++j) plan.fold[g[j]] = SplitPlan::kTrain;
  }
  return plan;
}

/**
 * Stratified k-fold split. Each class is shuffled and dealt round-robin over
 * the folds; the dealing position carries over from one class to the next so
 * total fold sizes differ by at most one as well.
 */
inline SplitPlan split_kfold(const PatchDataset& ds, std::size_t k = 5, std::uint64_t seed = 0) {
  if (k < 2) throw UsageError("k-fold split needs k >= 2, got " + std::to_string(k));
  if (ds.empty()) throw DataError("cannot split an empty dataset");
  auto groups = detail::by_class(ds);
  SplitPlan plan;
  plan.kind = SplitPlan::Kind::kfold;
  plan.k = k;
  plan.ratio = 1.0 - 1.0 / static_cast<double>(k);
  plan.fold.assign(ds.size(), -1);
  std::mt19937_64 rng(seed);
  std::size_t next = 0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    auto& g = groups[c];
    if (g.empty()) continue;
    if (g.size() < k) {
      throw DataError("class " + class_name(static_cast<int>(c)) + " has " +
                      std::to_string(g.size()) + " records, fewer than k = " + std::to_string(k));
    }
    std::shuffle(g.begin(), g.end(), rng);
    for (std::size_t idx : g) {
      plan.fold[idx] = static_cast<int>(next);
      next = (next + 1) % k;
    }
  }
  return plan;
}

/// CSV with header "index,path,class,fold", LF line endings.
inline void write_split_csv(const std::filesystem::path& path, const PatchDataset& ds,
                            const SplitPlan& plan) {
  if (plan.size() != ds.size()) {
    throw DataError("split plan covers " + std::to_string(plan.size()) + " records, dataset has " +
                    std::to_string(ds.size()));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write split file " + path.string());
  out << "index,path,class,fold\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out << i << ',' << ds.records[i].image_path << ',' << ds.records[i].class_name() << ','
        << plan.fold_label(i) << '\n';
  }
  if (!out) throw DataError("failed writing split file " + path.string());
}

/**
 * Reads a split CSV and checks it against the dataset it was made for:
 * same record count, same path and class per index.
 */
inline SplitPlan read_split_csv(const std::filesystem::path& path, const PatchDataset& ds) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read split file " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "index,path,class,fold") {
    throw DataError("split file " + path.string() + " lacks header index,path,class,fold");
  }
  SplitPlan plan;
  bool holdout = false, kfold = false;
  int max_fold = -1;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, ',')) cols.push_back(col);
    if (cols.size() != 4) {
      throw DataError("split file " + path.string() + " row " + std::to_string(row + 1) +
                      " does not have 4 columns");
    }
    if (cols[0] != std::to_string(row)) {
      throw DataError("split file " + path.string() + " row " + std::to_string(row + 1) +
                      " has index " + cols[0]);
    }
    if (row >= ds.size() || ds.records[row].image_path != cols[1] ||
        ds.records[row].class_name() != cols[2]) {
      throw DataError("split file " + path.string() + " row " + std::to_string(row + 1) +
                      " does not match the dataset (" + cols[1] + ")");
    }
    if (cols[3] == "train" || cols[3] == "val") {
      holdout = true;
      plan.fold.push_back(cols[3] == "train" ? SplitPlan::kTrain : SplitPlan::kVal);
    } else {
      kfold = true;
      int f = -1;
      try {
        f = std::stoi(cols[3]);
      } catch (const std::exception&) {
        f = -1;
      }
      if (f < 0) throw DataError("split file " + path.string() + " has bad fold '" + cols[3] + "'");
      plan.fold.push_back(f);
      max_fold = std::max(max_fold, f);
    }
    ++row;
  }
  if (row != ds.size()) {
    throw DataError("split file " + path.string() + " has " + std::to_string(row) +
                    " rows, dataset has " + std::to_string(ds.size()));
  }
  if (holdout && kfold) throw DataError("split file " + path.string() + " mixes holdout and k-fold tags");
  if (kfold) {
    plan.kind = SplitPlan::Kind::kfold;
    plan.k = static_cast<std::size_t>(max_fold + 1);
    plan.ratio = 1.0 - 1.0 / static_cast<double>(plan.k);
  } else {
    plan.kind = SplitPlan::Kind::holdout;
    plan.k = 2;
    const auto n_train = plan.members(SplitPlan::kTrain).size();
    plan.ratio = plan.size() ? static_cast<double>(n_train) / static_cast<double>(plan.size()) : 0.0;
  }
  return plan;
}

} // namespace gplab
