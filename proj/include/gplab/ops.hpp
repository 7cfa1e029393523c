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

// Differentiable primitives. Every function takes the tape first; outputs are
// recorded only when the tape is recording and some input requires a gradient.

#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "gplab/tensor.hpp"

namespace gplab::ops {

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

inline void require(bool ok, const std::string& what) {
  if (!ok) {
    throw ShapeError(what);
  }
}

template <class T>
void require_rank(const Tensor<T>& t, std::size_t rank, const char* op, const char* arg) {
  require(t.rank() == rank, std::string(op) + ": " + arg + " must have rank " +
                                std::to_string(rank) + ", got shape " + shape_str(t.shape()));
}

template <class T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                      " vs " + shape_str(b.shape()));
}

template <class T>
T sigmoid(T x) {
  // Split form avoids exp overflow for large |x|.
  if (x >= T{0}) {
    return T{1} / (T{1} + std::exp(-x));
  }
  const T e = std::exp(x);
  return e / (T{1} + e);
}

} // namespace detail

// ---------------------------------------------------------------------------
// Elementwise

template <class T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "add");
  Tensor<T> out(a.shape());
  auto o = out.data();
  auto av = a.data();
  auto bv = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    o[i] = av[i] + bv[i];
  }
  if (tape.wants(a, b)) {
    tape.record(out, [a, b, out]() mutable {
      auto g = out.grad();
      if (a.requires_grad()) {
        auto ga = a.grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "mul");
  Tensor<T> out(a.shape());
  auto o = out.data();
  auto av = a.data();
  auto bv = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    o[i] = av[i] * bv[i];
  }
  if (tape.wants(a, b)) {
    tape.record(out, [a, b, out]() mutable {
      auto g = out.grad();
      auto av = a.data();
      auto bv = b.data();
      if (a.requires_grad()) {
        auto ga = a.grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> square(Tape<T>& tape, const Tensor<T>& x) {
  return mul(tape, x, x);
}

template <class T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& x, T factor) {
  Tensor<T> out(x.shape());
  auto o = out.data();
  auto xv = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    o[i] = xv[i] * factor;
  }
  if (tape.wants(x)) {
    tape.record(out, [x, out, factor]() mutable {
      auto g = out.grad();
      auto gx = x.grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * factor;
    });
  }
  return out;
}

/// Sum of all elements as a scalar tensor.
template <class T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& x) {
  T acc{0};
  for (T v : x.data()) {
    acc += v;
  }
  Tensor<T> out = Tensor<T>::scalar(acc);
  if (tape.wants(x)) {
    tape.record(out, [x, out]() mutable {
      const T g = out.grad()[0];
      for (T& gx : x.grad()) gx += g;
    });
  }
  return out;
}

template <class T>
Tensor<T> sigmoid(Tape<T>& tape, const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  auto o = out.data();
  auto xv = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    o[i] = detail::sigmoid(xv[i]);
  }
  if (tape.wants(x)) {
    tape.record(out, [x, out]() mutable {
      auto g = out.grad();
      auto y = out.data();
      auto gx = x.grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (T{1} - y[i]);
    });
  }
  return out;
}

/// x * sigmoid(x), elementwise.
template <class T>
Tensor<T> silu(Tape<T>& tape, const Tensor<T>& x) {
  using Arr = Eigen::Array<T, Eigen::Dynamic, 1>;
  const auto n = static_cast<Eigen::Index>(x.numel());
  Eigen::Map<const Arr> xa(x.data().data(), n);
  // 1/(1+e^-x) saturates cleanly to 0 or 1 for large |x| (no NaN).
  auto sig = std::make_shared<Arr>(T{1} / (T{1} + (-xa).exp()));
  Tensor<T> out(x.shape());
  Eigen::Map<Arr>(out.data().data(), n) = xa * *sig;
  if (tape.wants(x)) {
    tape.record(out, [x, out, sig, n]() mutable {
      Eigen::Map<const Arr> g(out.grad().data(), n);
      Eigen::Map<const Arr> xv(x.data().data(), n);
      Eigen::Map<Arr> gx(x.grad().data(), n);
      const Arr& s = *sig;
      gx += g * (s + xv * s * (T{1} - s));
    });
  }
  return out;
}

template <class T>
Tensor<T> reshape(Tape<T>& tape, const Tensor<T>& x, Shape shape) {
  detail::require(shape_numel(shape) == x.numel(),
                  "reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  Tensor<T> out(std::move(shape), std::vector<T>(x.data().begin(), x.data().end()));
  if (tape.wants(x)) {
    tape.record(out, [x, out]() mutable {
      auto g = out.grad();
      auto gx = x.grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  }
  return out;
}

/// Scales every (n, c) feature map of x[N,C,H,W] by gate[N,C].
template <class T>
Tensor<T> channel_scale(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& gate) {
  detail::require_rank(x, 4, "channel_scale", "input");
  detail::require(gate.rank() == 2 && gate.dim(0) == x.dim(0) && gate.dim(1) == x.dim(1),
                  "channel_scale: gate shape " + shape_str(gate.shape()) +
                      " does not match input batch/channels " + shape_str(x.shape()));
  const std::size_t planes = x.dim(0) * x.dim(1);
  const std::size_t hw = x.dim(2) * x.dim(3);
  Tensor<T> out(x.shape());
  auto o = out.data();
  auto xv = x.data();
  auto gv = gate.data();
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t i = 0; i < hw; ++i) {
      o[p * hw + i] = xv[p * hw + i] * gv[p];
    }
  }
  if (tape.wants(x, gate)) {
    tape.record(out, [x, gate, out, planes, hw]() mutable {
      auto g = out.grad();
      auto xv = x.data();
      auto gv = gate.data();
      if (x.requires_grad()) {
        auto gx = x.grad();
        for (std::size_t p = 0; p < planes; ++p)
          for (std::size_t i = 0; i < hw; ++i) gx[p * hw + i] += g[p * hw + i] * gv[p];
      }
      if (gate.requires_grad()) {
        auto gg = gate.grad();
        for (std::size_t p = 0; p < planes; ++p) {
          T acc{0};
          for (std::size_t i = 0; i < hw; ++i) acc += g[p * hw + i] * xv[p * hw + i];
          gg[p] += acc;
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Convolution

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;
};

inline std::size_t conv_out_extent(std::size_t in, std::size_t k, std::size_t stride,
                                   std::size_t padding) {
  return (in + 2 * padding - k) / stride + 1;
}

namespace detail {

// Unfolds one group of one sample into col[cg*kh*kw, oh*ow].
template <class T>
void im2col(const T* x, std::size_t cg, std::size_t h, std::size_t w, std::size_t kh,
            std::size_t kw, std::size_t stride, std::size_t pad, std::size_t oh, std::size_t ow,
            T* col) {
  for (std::size_t c = 0; c < cg; ++c) {
    const T* plane = x + c * h * w;
    for (std::size_t ki = 0; ki < kh; ++ki) {
      for (std::size_t kj = 0; kj < kw; ++kj) {
        T* row = col + ((c * kh + ki) * kw + kj) * oh * ow;
        for (std::size_t oi = 0; oi < oh; ++oi) {
          const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(oi * stride + ki) -
                                    static_cast<std::ptrdiff_t>(pad);
          T* dst = row + oi * ow;
          if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(h)) {
            std::fill(dst, dst + ow, T{0});
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(ii) * w;
          for (std::size_t oj = 0; oj < ow; ++oj) {
            const std::ptrdiff_t jj = static_cast<std::ptrdiff_t>(oj * stride + kj) -
                                      static_cast<std::ptrdiff_t>(pad);
            dst[oj] = (jj < 0 || jj >= static_cast<std::ptrdiff_t>(w)) ? T{0} : src[jj];
          }
        }
      }
    }
  }
}

template <class T>
void col2im_add(const T* col, std::size_t cg, std::size_t h, std::size_t w, std::size_t kh,
                std::size_t kw, std::size_t stride, std::size_t pad, std::size_t oh,
                std::size_t ow, T* x) {
  for (std::size_t c = 0; c < cg; ++c) {
    T* plane = x + c * h * w;
    for (std::size_t ki = 0; ki < kh; ++ki) {
      for (std::size_t kj = 0; kj < kw; ++kj) {
        const T* row = col + ((c * kh + ki) * kw + kj) * oh * ow;
        for (std::size_t oi = 0; oi < oh; ++oi) {
          const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(oi * stride + ki) -
                                    static_cast<std::ptrdiff_t>(pad);
          if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(h)) continue;
          T* dst = plane + static_cast<std::size_t>(ii) * w;
          const T* src = row + oi * ow;
          for (std::size_t oj = 0; oj < ow; ++oj) {
            const std::ptrdiff_t jj = static_cast<std::ptrdiff_t>(oj * stride + kj) -
                                      static_cast<std::ptrdiff_t>(pad);
            if (jj >= 0 && jj < static_cast<std::ptrdiff_t>(w)) dst[jj] += src[oj];
          }
        }
      }
    }
  }
}

struct ConvGeometry {
  std::size_t n, cin, h, w, cout, kh, kw, oh, ow, groups, cg, coutg, stride, pad;
  bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
  bool depthwise() const { return cg == 1 && coutg == 1; }
};

// Depthwise kernels with one filter per channel: direct loops.
template <class T>
void depthwise_forward(const ConvGeometry& g, const T* x, const T* k, T* y) {
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t c = 0; c < g.cin; ++c) {
      const T* plane = x + (n * g.cin + c) * g.h * g.w;
      const T* kern = k + c * g.kh * g.kw;
      T* out = y + (n * g.cout + c) * g.oh * g.ow;
      for (std::size_t oi = 0; oi < g.oh; ++oi) {
        for (std::size_t oj = 0; oj < g.ow; ++oj) {
          T acc{0};
          for (std::size_t ki = 0; ki < g.kh; ++ki) {
            const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(oi * g.stride + ki) -
                                      static_cast<std::ptrdiff_t>(g.pad);
            if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(g.h)) continue;
            for (std::size_t kj = 0; kj < g.kw; ++kj) {
              const std::ptrdiff_t jj = static_cast<std::ptrdiff_t>(oj * g.stride + kj) -
                                        static_cast<std::ptrdiff_t>(g.pad);
              if (jj < 0 || jj >= static_cast<std::ptrdiff_t>(g.w)) continue;
              acc += plane[static_cast<std::size_t>(ii) * g.w + static_cast<std::size_t>(jj)] *
                     kern[ki * g.kw + kj];
            }
          }
          out[oi * g.ow + oj] = acc;
        }
      }
    }
  }
}

template <class T>
void depthwise_backward(const ConvGeometry& g, const T* x, const T* k, const T* dy, T* dx,
                        T* dk) {
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t c = 0; c < g.cin; ++c) {
      const T* plane = x + (n * g.cin + c) * g.h * g.w;
      const T* kern = k + c * g.kh * g.kw;
      const T* gout = dy + (n * g.cout + c) * g.oh * g.ow;
      T* gplane = dx ? dx + (n * g.cin + c) * g.h * g.w : nullptr;
      T* gkern = dk ? dk + c * g.kh * g.kw : nullptr;
      for (std::size_t oi = 0; oi < g.oh; ++oi) {
        for (std::size_t oj = 0; oj < g.ow; ++oj) {
          const T go = gout[oi * g.ow + oj];
          for (std::size_t ki = 0; ki < g.kh; ++ki) {
            const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(oi * g.stride + ki) -
                                      static_cast<std::ptrdiff_t>(g.pad);
            if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(g.h)) continue;
            for (std::size_t kj = 0; kj < g.kw; ++kj) {
              const std::ptrdiff_t jj = static_cast<std::ptrdiff_t>(oj * g.stride + kj) -
                                        static_cast<std::ptrdiff_t>(g.pad);
              if (jj < 0 || jj >= static_cast<std::ptrdiff_t>(g.w)) continue;
              const std::size_t xi =
                  static_cast<std::size_t>(ii) * g.w + static_cast<std::size_t>(jj);
              if (gkern) gkern[ki * g.kw + kj] += go * plane[xi];
              if (gplane) gplane[xi] += go * kern[ki * g.kw + kj];
            }
          }
        }
      }
    }
  }
}

} // namespace detail

/**
 * 2-D cross-correlation of input[N,Cin,H,W] with kernel[Cout,Cin/groups,Kh,Kw].
 * groups == Cin with one filter per channel is a depthwise convolution; a 1x1
 * kernel is a pointwise one. Zero padding on all four sides.
 */
template <class T>
Tensor<T> conv2d(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& kernel,
                 Conv2dOptions opt = {}) {
  detail::require_rank(input, 4, "conv2d", "input");
  detail::require_rank(kernel, 4, "conv2d", "kernel");
  detail::require(opt.stride >= 1, "conv2d: stride must be >= 1");
  detail::require(opt.groups >= 1, "conv2d: groups must be >= 1");
  detail::ConvGeometry g{};
  g.n = input.dim(0);
  g.cin = input.dim(1);
  g.h = input.dim(2);
  g.w = input.dim(3);
  g.cout = kernel.dim(0);
  g.kh = kernel.dim(2);
  g.kw = kernel.dim(3);
  g.groups = opt.groups;
  g.stride = opt.stride;
  g.pad = opt.padding;
  detail::require(g.cin % g.groups == 0, "conv2d: input channels (dim 1) = " +
                                             std::to_string(g.cin) + " not divisible by groups " +
                                             std::to_string(g.groups));
  detail::require(g.cout % g.groups == 0, "conv2d: kernel output channels (dim 0) = " +
                                              std::to_string(g.cout) +
                                              " not divisible by groups " +
                                              std::to_string(g.groups));
  g.cg = g.cin / g.groups;
  g.coutg = g.cout / g.groups;
  detail::require(kernel.dim(1) == g.cg, "conv2d: kernel dim 1 = " +
                                             std::to_string(kernel.dim(1)) + " but Cin/groups = " +
                                             std::to_string(g.cg));
  detail::require(g.h + 2 * g.pad >= g.kh, "conv2d: padded input height (dim 2) " +
                                               std::to_string(g.h + 2 * g.pad) +
                                               " smaller than kernel height " +
                                               std::to_string(g.kh));
  detail::require(g.w + 2 * g.pad >= g.kw, "conv2d: padded input width (dim 3) " +
                                               std::to_string(g.w + 2 * g.pad) +
                                               " smaller than kernel width " +
                                               std::to_string(g.kw));
  g.oh = conv_out_extent(g.h, g.kh, g.stride, g.pad);
  g.ow = conv_out_extent(g.w, g.kw, g.stride, g.pad);

  Tensor<T> out(Shape{g.n, g.cout, g.oh, g.ow});
  const T* x = input.data().data();
  const T* k = kernel.data().data();
  T* y = out.data().data();
  const std::size_t ohw = g.oh * g.ow;
  const std::size_t patch = g.cg * g.kh * g.kw;

  if (g.depthwise()) {
    detail::depthwise_forward(g, x, k, y);
  } else {
    std::vector<T> col(g.pointwise() ? 0 : patch * ohw);
    for (std::size_t n = 0; n < g.n; ++n) {
      for (std::size_t gi = 0; gi < g.groups; ++gi) {
        const T* xin = x + (n * g.cin + gi * g.cg) * g.h * g.w;
        const T* src = xin;
        if (!g.pointwise()) {
          detail::im2col(xin, g.cg, g.h, g.w, g.kh, g.kw, g.stride, g.pad, g.oh, g.ow, col.data());
          src = col.data();
        }
        detail::ConstMatMap<T> cm(src, patch, ohw);
        detail::ConstMatMap<T> km(k + gi * g.coutg * patch, g.coutg, patch);
        detail::MatMap<T> om(y + (n * g.cout + gi * g.coutg) * ohw, g.coutg, ohw);
        om.noalias() = km * cm;
      }
    }
  }

  if (tape.wants(input, kernel)) {
    tape.record(out, [input, kernel, out, g]() mutable {
      const T* x = input.data().data();
      const T* k = kernel.data().data();
      const T* dy = out.grad().data();
      T* dx = input.requires_grad() ? input.grad().data() : nullptr;
      T* dk = kernel.requires_grad() ? kernel.grad().data() : nullptr;
      if (g.depthwise()) {
        detail::depthwise_backward(g, x, k, dy, dx, dk);
        return;
      }
      const std::size_t ohw = g.oh * g.ow;
      const std::size_t patch = g.cg * g.kh * g.kw;
      std::vector<T> col(g.pointwise() ? 0 : patch * ohw);
      std::vector<T> dcol(g.pointwise() || !dx ? 0 : patch * ohw);
      for (std::size_t n = 0; n < g.n; ++n) {
        for (std::size_t gi = 0; gi < g.groups; ++gi) {
          const T* xin = x + (n * g.cin + gi * g.cg) * g.h * g.w;
          detail::ConstMatMap<T> dym(dy + (n * g.cout + gi * g.coutg) * ohw, g.coutg, ohw);
          detail::ConstMatMap<T> km(k + gi * g.coutg * patch, g.coutg, patch);
          if (dk) {
            const T* src = xin;
            if (!g.pointwise()) {
              detail::im2col(xin, g.cg, g.h, g.w, g.kh, g.kw, g.stride, g.pad, g.oh, g.ow,
                             col.data());
              src = col.data();
            }
            detail::ConstMatMap<T> cm(src, patch, ohw);
            detail::MatMap<T> dkm(dk + gi * g.coutg * patch, g.coutg, patch);
            dkm.noalias() += dym * cm.transpose();
          }
          if (dx) {
            T* dxin = dx + (n * g.cin + gi * g.cg) * g.h * g.w;
            if (g.pointwise()) {
              detail::MatMap<T> dxm(dxin, patch, ohw);
              dxm.noalias() += km.transpose() * dym;
            } else {
              detail::MatMap<T> dcm(dcol.data(), patch, ohw);
              dcm.noalias() = km.transpose() * dym;
              detail::col2im_add(dcol.data(), g.cg, g.h, g.w, g.kh, g.kw, g.stride, g.pad, g.oh,
                                 g.ow, dxin);
            }
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Normalization and pooling

enum class Mode { train, eval };

/// Running statistics owned by a batch-norm layer.
template <class T>
struct BatchNormState {
  Tensor<T> running_mean;
  Tensor<T> running_var;

  explicit BatchNormState(std::size_t channels = 0)
      : running_mean(Shape{channels}), running_var(Tensor<T>::full(Shape{channels}, T{1})) {}
};

struct BatchNormOptions {
  double momentum = 0.1;
  double eps = 1e-5;
};

/**
 * Per-channel batch normalization of input[N,C,H,W].
 *
 * Train mode normalizes with the biased batch variance and folds the batch
 * statistics into the running ones (unbiased variance, PyTorch convention).
 * Eval mode uses the running statistics and leaves them untouched.
 */
template <class T>
Tensor<T> batch_norm2d(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& scale,
                       const Tensor<T>& shift, BatchNormState<T>& state, Mode mode,
                       BatchNormOptions opt = {}) {
  detail::require_rank(input, 4, "batch_norm2d", "input");
  const std::size_t n = input.dim(0);
  const std::size_t c = input.dim(1);
  const std::size_t hw = input.dim(2) * input.dim(3);
  detail::require(n > 0, "batch_norm2d: zero batch size (dim 0)");
  detail::require(hw > 0, "batch_norm2d: empty spatial extent");
  detail::require(scale.numel() == c && shift.numel() == c,
                  "batch_norm2d: scale/shift length must equal channel count (dim 1) = " +
                      std::to_string(c));
  detail::require(state.running_mean.numel() == c && state.running_var.numel() == c,
                  "batch_norm2d: running statistics length must equal channel count " +
                      std::to_string(c));
  detail::require(opt.eps > 0, "batch_norm2d: eps must be positive");

  const std::size_t count = n * hw;
  Tensor<T> out(input.shape());
  // Saved per-channel mean and inverse std for backward.
  std::vector<T> mean(c), invstd(c);
  auto xv = input.data();
  auto yv = out.data();
  auto sc = scale.data();
  auto sh = shift.data();

  using Arr = Eigen::Array<T, Eigen::Dynamic, 1>;
  const auto plane_len = static_cast<Eigen::Index>(hw);
  auto plane = [plane_len](auto span, std::size_t off) {
    using P = std::remove_reference_t<decltype(span[0])>;
    return Eigen::Map<std::conditional_t<std::is_const_v<P>, const Arr, Arr>>(span.data() + off,
                                                                            plane_len);
  };

  for (std::size_t ch = 0; ch < c; ++ch) {
    if (mode == Mode::train) {
      // Plane sums in T, accumulated across planes in double.
      double s = 0.0;
      for (std::size_t b = 0; b < n; ++b) s += plane(xv, (b * c + ch) * hw).sum();
      const double mu = s / static_cast<double>(count);
      double ss = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        ss += (plane(xv, (b * c + ch) * hw) - static_cast<T>(mu)).square().sum();
      }
      const double var = ss / static_cast<double>(count);
      mean[ch] = static_cast<T>(mu);
      invstd[ch] = static_cast<T>(1.0 / std::sqrt(var + opt.eps));
      const double unbiased = count > 1 ? ss / static_cast<double>(count - 1) : var;
      auto rm = state.running_mean.data();
      auto rv = state.running_var.data();
      rm[ch] = static_cast<T>((1.0 - opt.momentum) * rm[ch] + opt.momentum * mu);
      rv[ch] = static_cast<T>((1.0 - opt.momentum) * rv[ch] + opt.momentum * unbiased);
    } else {
      mean[ch] = state.running_mean.data()[ch];
      invstd[ch] = static_cast<T>(
          1.0 / std::sqrt(static_cast<double>(state.running_var.data()[ch]) + opt.eps));
    }
    const T k = invstd[ch] * sc[ch];
    const T bias = sh[ch] - mean[ch] * k;
    for (std::size_t b = 0; b < n; ++b) {
      plane(yv, (b * c + ch) * hw) = plane(xv, (b * c + ch) * hw) * k + bias;
    }
  }

  if (tape.wants(input, scale, shift)) {
    tape.record(out, [input, scale, shift, out, mean, invstd, n, c, hw, mode, plane]() mutable {
      auto xv = std::as_const(input).data();
      auto dy = std::span<const T>(out.grad());
      auto sc = scale.data();
      const T inv_m = static_cast<T>(1.0 / static_cast<double>(n * hw));
      for (std::size_t ch = 0; ch < c; ++ch) {
        const T mu = mean[ch];
        const T is = invstd[ch];
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (std::size_t b = 0; b < n; ++b) {
          const std::size_t off = (b * c + ch) * hw;
          auto g = plane(dy, off);
          sum_dy += g.sum();
          sum_dy_xhat += (g * ((plane(xv, off) - mu) * is)).sum();
        }
        if (shift.requires_grad()) shift.grad()[ch] += static_cast<T>(sum_dy);
        if (scale.requires_grad()) scale.grad()[ch] += static_cast<T>(sum_dy_xhat);
        if (!input.requires_grad()) continue;
        auto dx = input.grad();
        const T k = sc[ch] * is;
        const T mean_dy = static_cast<T>(sum_dy) * inv_m;
        const T mean_dy_xhat = static_cast<T>(sum_dy_xhat) * inv_m;
        for (std::size_t b = 0; b < n; ++b) {
          const std::size_t off = (b * c + ch) * hw;
          if (mode == Mode::train) {
            plane(dx, off) +=
                k * (plane(dy, off) - mean_dy - (plane(xv, off) - mu) * is * mean_dy_xhat);
          } else {
            plane(dx, off) += k * plane(dy, off);
          }
        }
      }
    });
  }
  return out;
}

/**
 * Adaptive average pooling of input[N,C,H,W] to [N,C,out_h,out_w]. Window i
 * along an axis of extent L spans [floor(i*L/out), ceil((i+1)*L/out)).
 */
template <class T>
Tensor<T> adaptive_avg_pool2d(Tape<T>& tape, const Tensor<T>& input, std::size_t out_h = 1,
                              std::size_t out_w = 1) {
  detail::require_rank(input, 4, "adaptive_avg_pool2d", "input");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  detail::require(h >= 1 && w >= 1, "adaptive_avg_pool2d: empty spatial extent");
  detail::require(out_h >= 1 && out_w >= 1, "adaptive_avg_pool2d: output extent must be >= 1");
  auto lo = [](std::size_t i, std::size_t in, std::size_t out) { return i * in / out; };
  auto hi = [](std::size_t i, std::size_t in, std::size_t out) {
    return ((i + 1) * in + out - 1) / out;
  };
  Tensor<T> out(Shape{n, c, out_h, out_w});
  auto xv = input.data();
  auto yv = out.data();
  for (std::size_t p = 0; p < n * c; ++p) {
    const T* plane = xv.data() + p * h * w;
    for (std::size_t oi = 0; oi < out_h; ++oi) {
      for (std::size_t oj = 0; oj < out_w; ++oj) {
        const std::size_t i0 = lo(oi, h, out_h), i1 = hi(oi, h, out_h);
        const std::size_t j0 = lo(oj, w, out_w), j1 = hi(oj, w, out_w);
        T acc{0};
        for (std::size_t i = i0; i < i1; ++i)
          for (std::size_t j = j0; j < j1; ++j) acc += plane[i * w + j];
        yv[(p * out_h + oi) * out_w + oj] = acc / static_cast<T>((i1 - i0) * (j1 - j0));
      }
    }
  }
  if (tape.wants(input)) {
    tape.record(out, [input, out, n, c, h, w, out_h, out_w, lo, hi]() mutable {
      auto dy = out.grad();
      auto dx = input.grad();
      for (std::size_t p = 0; p < n * c; ++p) {
        for (std::size_t oi = 0; oi < out_h; ++oi) {
          for (std::size_t oj = 0; oj < out_w; ++oj) {
            const std::size_t i0 = lo(oi, h, out_h), i1 = hi(oi, h, out_h);
            const std::size_t j0 = lo(oj, w, out_w), j1 = hi(oj, w, out_w);
            const T g = dy[(p * out_h + oi) * out_w + oj] / static_cast<T>((i1 - i0) * (j1 - j0));
            for (std::size_t i = i0; i < i1; ++i)
              for (std::size_t j = j0; j < j1; ++j) dx[p * h * w + i * w + j] += g;
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dense layers

/// input[N,F] x weight[O,F]^T + bias[O].
template <class T>
Tensor<T> linear(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& weight,
                 const Tensor<T>& bias) {
  detail::require_rank(input, 2, "linear", "input");
  detail::require_rank(weight, 2, "linear", "weight");
  const std::size_t n = input.dim(0), f = input.dim(1), o = weight.dim(0);
  detail::require(weight.dim(1) == f, "linear: input features (dim 1) = " + std::to_string(f) +
                                          " but weight dim 1 = " + std::to_string(weight.dim(1)));
  detail::require(bias.numel() == o, "linear: bias length " + std::to_string(bias.numel()) +
                                         " but weight dim 0 = " + std::to_string(o));
  Tensor<T> out(Shape{n, o});
  detail::ConstMatMap<T> xm(input.data().data(), n, f);
  detail::ConstMatMap<T> wm(weight.data().data(), o, f);
  detail::MatMap<T> ym(out.data().data(), n, o);
  ym.noalias() = xm * wm.transpose();
  auto b = bias.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < o; ++j) ym(i, j) += b[j];

  if (tape.wants(input, weight, bias)) {
    tape.record(out, [input, weight, bias, out, n, f, o]() mutable {
      detail::ConstMatMap<T> dym(out.grad().data(), n, o);
      if (input.requires_grad()) {
        detail::ConstMatMap<T> wm(weight.data().data(), o, f);
        detail::MatMap<T> dxm(input.grad().data(), n, f);
        dxm.noalias() += dym * wm;
      }
      if (weight.requires_grad()) {
        detail::ConstMatMap<T> xm(input.data().data(), n, f);
        detail::MatMap<T> dwm(weight.grad().data(), o, f);
        dwm.noalias() += dym.transpose() * xm;
      }
      if (bias.requires_grad()) {
        auto db = bias.grad();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < o; ++j) db[j] += dym(i, j);
      }
    });
  }
  return out;
}

/// Row-wise softmax over the last axis with max subtraction.
template <class T>
Tensor<T> softmax(Tape<T>& tape, const Tensor<T>& logits) {
  detail::require(logits.rank() >= 1 && logits.shape().back() >= 1,
                  "softmax: last axis must have at least one element");
  const std::size_t k = logits.shape().back();
  const std::size_t rows = logits.numel() / k;
  Tensor<T> out(logits.shape());
  auto x = logits.data();
  auto y = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.data() + r * k;
    T* yr = y.data() + r * k;
    const T mx = *std::max_element(xr, xr + k);
    T z{0};
    for (std::size_t j = 0; j < k; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      z += yr[j];
    }
    for (std::size_t j = 0; j < k; ++j) yr[j] /= z;
  }
  if (tape.wants(logits)) {
    tape.record(out, [logits, out, rows, k]() mutable {
      auto y = out.data();
      auto dy = out.grad();
      auto dx = logits.grad();
      for (std::size_t r = 0; r < rows; ++r) {
        T dot{0};
        for (std::size_t j = 0; j < k; ++j) dot += dy[r * k + j] * y[r * k + j];
        for (std::size_t j = 0; j < k; ++j) dx[r * k + j] += y[r * k + j] * (dy[r * k + j] - dot);
      }
    });
  }
  return out;
}

/// Softmax without graph recording.
template <class T>
Tensor<T> softmax(const Tensor<T>& logits) {
  Tape<T> off(false);
  return softmax(off, logits);
}

} // namespace gplab::ops
