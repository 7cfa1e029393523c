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

// Independent reference implementations used only by the tests. Nothing in
// here calls into the code paths it is used to check.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <vector>

#include "gplab/tensor.hpp"

namespace gplab::testing {

inline double rel_err(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-7});
  return std::abs(analytic - numeric) / denom;
}

/**
 * Central finite differences of `loss` with respect to selected entries of
 * `t`, compared with `analytic` (a copy of t's gradient taken beforehand).
 * Returns the maximum relative error over the checked entries.
 */
inline double fd_max_rel_error(Tensor<double>& t, const std::vector<double>& analytic,
                               const std::function<double()>& loss,
                               const std::vector<std::size_t>& entries, double h = 1e-4) {
  double worst = 0.0;
  auto v = t.data();
  for (std::size_t i : entries) {
    const double keep = v[i];
    v[i] = keep + h;
    const double up = loss();
    v[i] = keep - h;
    const double down = loss();
    v[i] = keep;
    const double numeric = (up - down) / (2.0 * h);
    worst = std::max(worst, rel_err(analytic[i], numeric));
  }
  return worst;
}

inline std::vector<std::size_t> all_entries(std::size_t n) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  return idx;
}

inline std::vector<std::size_t> sample_entries(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (n <= k) return all_entries(n);
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> idx = all_entries(n);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

template <class T>
Tensor<T> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<T> t(std::move(shape));
  for (T& v : t.data()) v = static_cast<T>(u(rng));
  return t;
}

/// Direct six-loop convolution with groups, zero padding.
inline std::vector<double> naive_conv2d(const std::vector<double>& x, std::size_t n,
                                        std::size_t cin, std::size_t h, std::size_t w,
                                        const std::vector<double>& k, std::size_t cout,
                                        std::size_t kh, std::size_t kw, std::size_t stride,
                                        std::size_t pad, std::size_t groups) {
  const std::size_t oh = (h + 2 * pad - kh) / stride + 1;
  const std::size_t ow = (w + 2 * pad - kw) / stride + 1;
  const std::size_t cg = cin / groups, coutg = cout / groups;
  std::vector<double> y(n * cout * oh * ow, 0.0);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t co = 0; co < cout; ++co) {
      const std::size_t grp = co / coutg;
      for (std::size_t oi = 0; oi < oh; ++oi)
        for (std::size_t oj = 0; oj < ow; ++oj) {
          double acc = 0.0;
          for (std::size_t ci = 0; ci < cg; ++ci)
            for (std::size_t a = 0; a < kh; ++a)
              for (std::size_t c = 0; c < kw; ++c) {
                const long ii = static_cast<long>(oi * stride + a) - static_cast<long>(pad);
                const long jj = static_cast<long>(oj * stride + c) - static_cast<long>(pad);
                if (ii < 0 || jj < 0 || ii >= static_cast<long>(h) || jj >= static_cast<long>(w))
                  continue;
                const std::size_t cin_idx = grp * cg + ci;
                acc += x[((b * cin + cin_idx) * h + ii) * w + jj] *
                       k[((co * cg + ci) * kh + a) * kw + c];
              }
          y[((b * cout + co) * oh + oi) * ow + oj] = acc;
        }
    }
  return y;
}

/// Row-major [n,f] x [o,f]^T + b with a plain triple loop.
inline std::vector<double> naive_linear(const std::vector<double>& x, std::size_t n,
                                        std::size_t f, const std::vector<double>& w,
                                        std::size_t o, const std::vector<double>& b) {
  std::vector<double> y(n * o);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < o; ++j) {
      double acc = b[j];
      for (std::size_t p = 0; p < f; ++p) acc += x[i * f + p] * w[j * f + p];
      y[i * o + j] = acc;
    }
  return y;
}

/// Explicit softmax followed by the weighted negative log-likelihood.
inline double naive_weighted_ce(const std::vector<double>& logits, std::size_t n, std::size_t k,
                                const std::vector<int>& labels, const std::vector<double>& w) {
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> p(k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      p[j] = std::exp(logits[i * k + j]);
      z += p[j];
    }
    const std::size_t y = static_cast<std::size_t>(labels[i]);
    total += w[y] * std::log(p[y] / z);
  }
  return -total / static_cast<double>(n);
}

/// F1 and Gorodkin MCC straight from label lists, no confusion matrix.
struct RawMetrics {
  std::vector<double> f1;
  double macro_f1 = 0.0;
  double mcc = 0.0;
};

inline RawMetrics raw_metrics(const std::vector<int>& truth, const std::vector<int>& pred,
                              int classes) {
  RawMetrics m;
  const std::size_t n = truth.size();
  for (int c = 0; c < classes; ++c) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (pred[i] == c && truth[i] == c) ++tp;
      else if (pred[i] == c) ++fp;
      else if (truth[i] == c) ++fn;
    }
    const double p = (tp + fp) > 0 ? tp / (tp + fp) : 0.0;
    const double r = (tp + fn) > 0 ? tp / (tp + fn) : 0.0;
    m.f1.push_back((p + r) > 0 ? 2 * p * r / (p + r) : 0.0);
  }
  double s = 0;
  for (double f : m.f1) s += f;
  m.macro_f1 = s / classes;
  // Pairwise form of the multiclass MCC: covariance of one-hot indicator
  // vectors, accumulated sample by sample.
  double cov_xy = 0, cov_xx = 0, cov_yy = 0;
  for (int c = 0; c < classes; ++c) {
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
      mx += truth[i] == c;
      my += pred[i] == c;
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double x = (truth[i] == c) - mx;
      const double y = (pred[i] == c) - my;
      cov_xy += x * y;
      cov_xx += x * x;
      cov_yy += y * y;
    }
  }
  m.mcc = (cov_xx > 0 && cov_yy > 0) ? cov_xy / std::sqrt(cov_xx * cov_yy) : 0.0;
  return m;
}

} // namespace gplab::testing
