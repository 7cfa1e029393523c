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
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "gplab/data/classes.hpp"
#include "gplab/error.hpp"
#include "gplab/tensor.hpp"

namespace gplab {

/// Square count grid; rows are true classes, columns predictions.
class ConfusionMatrix {
public:
  explicit ConfusionMatrix(std::size_t classes = kNumClasses)
      : k_(classes), cells_(classes * classes, 0) {}

  std::size_t classes() const noexcept { return k_; }
  std::uint64_t operator()(std::size_t t, std::size_t p) const { return cells_[t * k_ + p]; }

  void add(int truth, int pred) {
    check(truth, "true");
    check(pred, "predicted");
    ++cells_[static_cast<std::size_t>(truth) * k_ + static_cast<std::size_t>(pred)];
  }

  std::uint64_t total() const noexcept {
    std::uint64_t s = 0;
    for (auto v : cells_) s += v;
    return s;
  }
  std::uint64_t trace() const noexcept {
    std::uint64_t s = 0;
    for (std::size_t i = 0; i < k_; ++i) s += (*this)(i, i);
    return s;
  }
  std::uint64_t row_sum(std::size_t t) const noexcept {
    std::uint64_t s = 0;
    for (std::size_t p = 0; p < k_; ++p) s += (*this)(t, p);
    return s;
  }
  std::uint64_t col_sum(std::size_t p) const noexcept {
    std::uint64_t s = 0;
    for (std::size_t t = 0; t < k_; ++t) s += (*this)(t, p);
    return s;
  }

  bool operator==(const ConfusionMatrix&) const = default;

private:
  void check(int label, const char* which) const {
    if (label < 0 || static_cast<std::size_t>(label) >= k_) {
      throw DataError(std::string(which) + " label " + std::to_string(label) + " outside 0.." +
                      std::to_string(k_ - 1));
    }
  }

  std::size_t k_;
  std::vector<std::uint64_t> cells_;
};

inline ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> pred,
                                 std::size_t classes = kNumClasses) {
  if (truth.size() != pred.size()) {
    throw UsageError("confusion: " + std::to_string(truth.size()) + " labels vs " +
                     std::to_string(pred.size()) + " predictions");
  }
  ConfusionMatrix cm(classes);
  for (std::size_t i = 0; i < truth.size(); ++i) cm.add(truth[i], pred[i]);
  return cm;
}

namespace detail {
inline double safe_div(double a, double b) { return b == 0.0 ? 0.0 : a / b; }
} // namespace detail

/// F1 per class; precision, recall or F1 with a zero denominator count as 0.
inline std::vector<double> per_class_f1(const ConfusionMatrix& cm) {
  std::vector<double> f1(cm.classes());
  for (std::size_t c = 0; c < cm.classes(); ++c) {
    const double tp = static_cast<double>(cm(c, c));
    const double p = detail::safe_div(tp, static_cast<double>(cm.col_sum(c)));
    const double r = detail::safe_div(tp, static_cast<double>(cm.row_sum(c)));
    f1[c] = detail::safe_div(2.0 * p * r, p + r);
  }
  return f1;
}

inline double macro_f1(const ConfusionMatrix& cm) {
  const auto f1 = per_class_f1(cm);
  double s = 0.0;
  for (double v : f1) s += v;
  return s / static_cast<double>(f1.size());
}

/// Micro-F1; equals accuracy for single-label problems.
inline double micro_f1(const ConfusionMatrix& cm) {
  return detail::safe_div(static_cast<double>(cm.trace()), static_cast<double>(cm.total()));
}

/// Per-class F1 weighted by true-class support.
inline double weighted_f1(const ConfusionMatrix& cm) {
  const auto f1 = per_class_f1(cm);
  double s = 0.0;
  for (std::size_t c = 0; c < f1.size(); ++c) s += f1[c] * static_cast<double>(cm.row_sum(c));
  return detail::safe_div(s, static_cast<double>(cm.total()));
}

/// Multiclass Matthews correlation (Gorodkin R_K); 0 when undefined.
inline double mcc(const ConfusionMatrix& cm) {
  const double s = static_cast<double>(cm.total());
  const double c = static_cast<double>(cm.trace());
  double pt = 0.0, pp = 0.0, tt = 0.0;
  for (std::size_t k = 0; k < cm.classes(); ++k) {
    const double t = static_cast<double>(cm.row_sum(k));
    const double p = static_cast<double>(cm.col_sum(k));
    pt += p * t;
    pp += p * p;
    tt += t * t;
  }
  const double den = (s * s - pp) * (s * s - tt);
  if (den <= 0.0) return 0.0;
  return (c * s - pt) / std::sqrt(den);
}

/// Row-wise argmax of a [N,K] tensor; ties go to the lowest index.
template <class T>
std::vector<int> argmax_rows(const Tensor<T>& scores) {
  if (scores.rank() != 2) {
    throw ShapeError("argmax_rows expects [N,K], got " + shape_str(scores.shape()));
  }
  const std::size_t n = scores.dim(0), k = scores.dim(1);
  std::vector<int> out(n);
  auto v = scores.data();
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = v.subspan(i * k, k);
    out[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

/// CSV with a "true\pred" corner cell and class names on both axes.
inline void write_confusion_csv(const std::filesystem::path& path, const ConfusionMatrix& cm) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  auto name = [&](std::size_t c) {
    return cm.classes() == kNumClasses ? std::string(class_name(static_cast<int>(c)))
                                       : std::to_string(c);
  };
  f << "true\\pred";
  for (std::size_t p = 0; p < cm.classes(); ++p) f << ',' << name(p);
  f << '\n';
  for (std::size_t t = 0; t < cm.classes(); ++t) {
    f << name(t);
    for (std::size_t p = 0; p < cm.classes(); ++p) f << ',' << cm(t, p);
    f << '\n';
  }
  if (!f) throw DataError("failed writing " + path.string());
}

} // namespace gplab
