/* Copyright 2026 The MonoPix Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Forward/backward kernels for the handful of layer types the generator,
// discriminator and expert need. Every backward is written against the
// values cached by its forward; parameter gradients accumulate (+=).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "monopix/tensor.hpp"

namespace monopix::ops {

struct ConvGeometry {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  int pad = 1;

  [[nodiscard]] int out_size(int in) const { return (in + 2 * pad - kernel) / stride + 1; }
  [[nodiscard]] Eigen::Index patch() const {
    return static_cast<Eigen::Index>(in_channels) * kernel * kernel;
  }
};

namespace detail {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Output columns [lo, hi) whose input column ox*stride - pad + k is in range.
inline void valid_range(int size, int out, int stride, int pad, int k, int& lo, int& hi) {
  lo = 0;
  while (lo < out && lo * stride - pad + k < 0) ++lo;
  hi = out;
  while (hi > lo && (hi - 1) * stride - pad + k >= size) --hi;
}

/// Unfolds one sample into `col` (row stride `ld`): one row per
/// (channel, ky, kx), one column per output position.
template <typename Scalar>
void im2col(const Scalar* src, int h, int w, const ConvGeometry& g, int oh, int ow, Scalar* col,
            Eigen::Index ld) {
  const int k = g.kernel;
  Eigen::Index row_index = 0;
  for (int ci = 0; ci < g.in_channels; ++ci) {
    const Scalar* plane = src + static_cast<std::ptrdiff_t>(ci) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx, ++row_index) {
        Scalar* out = col + row_index * ld;
        int lo = 0;
        int hi = 0;
        valid_range(w, ow, g.stride, g.pad, kx, lo, hi);
        for (int oy = 0; oy < oh; ++oy, out += ow) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= h) {
            std::fill_n(out, ow, Scalar(0));
            continue;
          }
          const Scalar* row = plane + static_cast<std::ptrdiff_t>(iy) * w - g.pad + kx;
          std::fill_n(out, lo, Scalar(0));
          if (g.stride == 1) {
            std::copy(row + lo, row + hi, out + lo);
          } else {
            for (int ox = lo; ox < hi; ++ox) out[ox] = row[ox * g.stride];
          }
          std::fill(out + hi, out + ow, Scalar(0));
        }
      }
    }
  }
}

/// Adjoint of im2col: scatters-adds `col` back onto a sample.
template <typename Scalar>
void col2im(const Scalar* col, Eigen::Index ld, int h, int w, const ConvGeometry& g, int oh, int ow,
            Scalar* dst) {
  const int k = g.kernel;
  Eigen::Index row_index = 0;
  for (int ci = 0; ci < g.in_channels; ++ci) {
    Scalar* plane = dst + static_cast<std::ptrdiff_t>(ci) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx, ++row_index) {
        const Scalar* in = col + row_index * ld;
        int lo = 0;
        int hi = 0;
        valid_range(w, ow, g.stride, g.pad, kx, lo, hi);
        for (int oy = 0; oy < oh; ++oy, in += ow) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= h) continue;
          Scalar* row = plane + static_cast<std::ptrdiff_t>(iy) * w - g.pad + kx;
          for (int ox = lo; ox < hi; ++ox) row[ox * g.stride] += in[ox];
        }
      }
    }
  }
}

template <typename Scalar>
bool is_pointwise(const ConvGeometry& g) {
  return g.kernel == 1 && g.stride == 1 && g.pad == 0;
}

/// All samples unfolded side by side: (patch) x (n * out_plane).
template <typename Scalar>
void unfold_batch(const Tensor<Scalar>& x, const ConvGeometry& g, int oh, int ow, RowMatrix<Scalar>& col) {
  const Eigen::Index p = static_cast<Eigen::Index>(oh) * ow;
  col.resize(g.patch(), p * x.n());
  if (is_pointwise<Scalar>(g)) {
    for (int n = 0; n < x.n(); ++n) col.middleCols(n * p, p) = x.sample_matrix(n);
    return;
  }
  for (int n = 0; n < x.n(); ++n) im2col(x.sample(n), x.h(), x.w(), g, oh, ow, col.data() + n * p, col.cols());
}

}  // namespace detail

/// 2-D convolution. `weight` is (out, in, k, k); `bias` is (1, out, 1, 1).
template <typename Scalar>
Tensor<Scalar> conv2d_forward(const Tensor<Scalar>& x, const Tensor<Scalar>& weight,
                              const Tensor<Scalar>& bias, const ConvGeometry& g) {
  if (x.c() != g.in_channels) {
    throw ShapeError("conv2d: expected " + std::to_string(g.in_channels) + " input channels, got " +
                     x.shape().str());
  }
  const int oh = g.out_size(x.h());
  const int ow = g.out_size(x.w());
  if (oh <= 0 || ow <= 0) throw ShapeError("conv2d: input too small " + x.shape().str());
  Tensor<Scalar> y(x.n(), g.out_channels, oh, ow);
  const typename Tensor<Scalar>::ConstMatrixMap w(weight.data(), g.out_channels, g.patch());
  const Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> b(bias.data(), g.out_channels);
  const Eigen::Index p = static_cast<Eigen::Index>(oh) * ow;
  detail::RowMatrix<Scalar> col;
  detail::unfold_batch(x, g, oh, ow, col);
  detail::RowMatrix<Scalar> out(g.out_channels, col.cols());
  out.noalias() = w * col;
  for (int n = 0; n < x.n(); ++n) {
    auto dst = y.sample_matrix(n);
    dst = out.middleCols(n * p, p);
    dst.colwise() += b;
  }
  return y;
}

/// Gradients of conv2d. Parameter gradients accumulate; any output pointer
/// may be null to skip that term.
template <typename Scalar>
void conv2d_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& weight, const ConvGeometry& g,
                     const Tensor<Scalar>& dy, Tensor<Scalar>* dweight, Tensor<Scalar>* dbias,
                     Tensor<Scalar>* dx) {
  const int oh = dy.h();
  const int ow = dy.w();
  const Eigen::Index p = static_cast<Eigen::Index>(oh) * ow;
  const typename Tensor<Scalar>::ConstMatrixMap w(weight.data(), g.out_channels, g.patch());
  detail::RowMatrix<Scalar> gout(g.out_channels, p * dy.n());
  for (int n = 0; n < dy.n(); ++n) gout.middleCols(n * p, p) = dy.sample_matrix(n);
  if (dbias != nullptr) {
    Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> db(dbias->data(), g.out_channels);
    db += gout.rowwise().sum();
  }
  if (dweight != nullptr) {
    detail::RowMatrix<Scalar> col;
    detail::unfold_batch(x, g, oh, ow, col);
    typename Tensor<Scalar>::MatrixMap dw(dweight->data(), g.out_channels, g.patch());
    dw.noalias() += gout * col.transpose();
  }
  if (dx != nullptr) {
    *dx = Tensor<Scalar>(x.shape());
    detail::RowMatrix<Scalar> dcol(g.patch(), gout.cols());
    dcol.noalias() = w.transpose() * gout;
    for (int n = 0; n < x.n(); ++n) {
      if (detail::is_pointwise<Scalar>(g)) {
        dx->sample_matrix(n) = dcol.middleCols(n * p, p);
      } else {
        detail::col2im(dcol.data() + n * p, dcol.cols(), x.h(), x.w(), g, oh, ow, dx->sample(n));
      }
    }
  }
}

template <typename Scalar>
Tensor<Scalar> leaky_relu_forward(Tensor<Scalar> x, Scalar slope) {
  // max(v, slope * v) equals the leaky ReLU for slope in [0, 1]
  x.array() = x.array().max(slope * x.array());
  return x;
}

/// Uses the forward output; its sign equals the input's for slope > 0.
template <typename Scalar>
Tensor<Scalar> leaky_relu_backward(const Tensor<Scalar>& y, Tensor<Scalar> dy, Scalar slope) {
  const Scalar* yd = y.data();
  Scalar* d = dy.data();
  const Eigen::Index n = dy.array().size();
  for (Eigen::Index i = 0; i < n; ++i) d[i] *= Scalar(yd[i] > Scalar(0)) * (Scalar(1) - slope) + slope;
  return dy;
}

template <typename Scalar>
Tensor<Scalar> tanh_forward(Tensor<Scalar> x) {
  x.array() = x.array().tanh();
  return x;
}

template <typename Scalar>
Tensor<Scalar> tanh_backward(const Tensor<Scalar>& y, Tensor<Scalar> dy) {
  dy.array() *= Scalar(1) - y.array().square();
  return dy;
}

template <typename Scalar>
struct NormCache {
  Tensor<Scalar> normalized;              // x-hat
  std::vector<Scalar> inv_std;            // per (n, c) plane or per channel
  std::vector<Scalar> batch_mean;         // batch norm only
  std::vector<Scalar> batch_var;          // batch norm only, unbiased
  bool used_running_stats = false;
};

inline constexpr double kNormEpsilon = 1e-5;

/// Instance normalization without affine parameters.
template <typename Scalar>
Tensor<Scalar> instance_norm_forward(const Tensor<Scalar>& x, NormCache<Scalar>* cache) {
  Tensor<Scalar> y(x.shape());
  const Eigen::Index p = x.shape().plane();
  std::vector<Scalar> inv(static_cast<std::size_t>(x.n()) * x.c());
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>> in(x.plane(n, c), p);
      Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>> out(y.plane(n, c), p);
      const Scalar mean = in.mean();
      const Scalar var = (in - mean).square().mean();
      const Scalar is = Scalar(1) / std::sqrt(var + Scalar(kNormEpsilon));
      out = (in - mean) * is;
      inv[static_cast<std::size_t>(n) * x.c() + c] = is;
    }
  }
  if (cache != nullptr) {
    cache->normalized = y;
    cache->inv_std = std::move(inv);
  }
  return y;
}

template <typename Scalar>
Tensor<Scalar> instance_norm_backward(const NormCache<Scalar>& cache, const Tensor<Scalar>& dy) {
  const Tensor<Scalar>& xhat = cache.normalized;
  Tensor<Scalar> dx(dy.shape());
  const Eigen::Index p = dy.shape().plane();
  for (int n = 0; n < dy.n(); ++n) {
    for (int c = 0; c < dy.c(); ++c) {
      Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>> g(dy.plane(n, c), p);
      Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>> xh(xhat.plane(n, c), p);
      Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>> out(dx.plane(n, c), p);
      const Scalar is = cache.inv_std[static_cast<std::size_t>(n) * dy.c() + c];
      out = is * (g - g.mean() - xh * (g * xh).mean());
    }
  }
  return dx;
}

/// Batch normalization with affine scale/shift. In training mode the
/// batch statistics are used and reported through the cache; otherwise the
/// supplied running statistics are used.
template <typename Scalar>
Tensor<Scalar> batch_norm_forward(const Tensor<Scalar>& x, const Tensor<Scalar>& gamma,
                                  const Tensor<Scalar>& beta, const Tensor<Scalar>& running_mean,
                                  const Tensor<Scalar>& running_var, bool training,
                                  NormCache<Scalar>* cache) {
  Tensor<Scalar> y(x.shape());
  Tensor<Scalar> xhat(x.shape());
  const Eigen::Index p = x.shape().plane();
  const Eigen::Index count = p * x.n();
  std::vector<Scalar> inv(x.c()), means(x.c()), vars(x.c());
  for (int c = 0; c < x.c(); ++c) {
    Scalar mean = running_mean.data()[c];
    Scalar var = running_var.data()[c];
    Scalar unbiased = var;
    if (training) {
      Scalar sum = 0;
      for (int n = 0; n < x.n(); ++n) {
        sum += Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>(x.plane(n, c), p).sum();
      }
      mean = sum / Scalar(count);
      Scalar sq = 0;
      for (int n = 0; n < x.n(); ++n) {
        sq += (Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>(x.plane(n, c), p) - mean)
                  .square()
                  .sum();
      }
      var = sq / Scalar(count);
      unbiased = count > 1 ? sq / Scalar(count - 1) : var;
    }
    const Scalar is = Scalar(1) / std::sqrt(var + Scalar(kNormEpsilon));
    inv[c] = is;
    means[c] = mean;
    vars[c] = unbiased;
    for (int n = 0; n < x.n(); ++n) {
      Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>> in(x.plane(n, c), p);
      Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>> xh(xhat.plane(n, c), p);
      Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>> out(y.plane(n, c), p);
      xh = (in - mean) * is;
      out = gamma.data()[c] * xh + beta.data()[c];
    }
  }
  if (cache != nullptr) {
    cache->normalized = std::move(xhat);
    cache->inv_std = std::move(inv);
    cache->batch_mean = std::move(means);
    cache->batch_var = std::move(vars);
    cache->used_running_stats = !training;
  }
  return y;
}

template <typename Scalar>
Tensor<Scalar> batch_norm_backward(const NormCache<Scalar>& cache, const Tensor<Scalar>& gamma,
                                   const Tensor<Scalar>& dy, Tensor<Scalar>* dgamma,
                                   Tensor<Scalar>* dbeta) {
  const Tensor<Scalar>& xhat = cache.normalized;
  Tensor<Scalar> dx(dy.shape());
  const Eigen::Index p = dy.shape().plane();
  const Scalar count = Scalar(p * dy.n());
  for (int c = 0; c < dy.c(); ++c) {
    Scalar sum_g = 0;
    Scalar sum_gx = 0;
    for (int n = 0; n < dy.n(); ++n) {
      Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>> g(dy.plane(n, c), p);
      Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>> xh(xhat.plane(n, c), p);
      sum_g += g.sum();
      sum_gx += (g * xh).sum();
    }
    if (dgamma != nullptr) dgamma->data()[c] += sum_gx;
    if (dbeta != nullptr) dbeta->data()[c] += sum_g;
    const Scalar gm = gamma.data()[c];
    const Scalar is = cache.inv_std[c];
    for (int n = 0; n < dy.n(); ++n) {
      Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>> g(dy.plane(n, c), p);
      Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>> xh(xhat.plane(n, c), p);
      Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>> out(dx.plane(n, c), p);
      if (cache.used_running_stats) {
        out = gm * is * g;
      } else {
        out = gm * is * (g - sum_g / count - xh * (sum_gx / count));
      }
    }
  }
  return dx;
}

/// 2x2 max pooling, stride 2. `argmax` receives the winning in-plane index
/// of every output element.
template <typename Scalar>
Tensor<Scalar> max_pool2_forward(const Tensor<Scalar>& x, std::vector<std::int32_t>* argmax) {
  if (x.h() % 2 != 0 || x.w() % 2 != 0) {
    throw ShapeError("max_pool2: odd spatial size " + x.shape().str());
  }
  Tensor<Scalar> y(x.n(), x.c(), x.h() / 2, x.w() / 2);
  if (argmax != nullptr) argmax->resize(static_cast<std::size_t>(y.size()));
  std::size_t o = 0;
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      const Scalar* in = x.plane(n, c);
      Scalar* out = y.plane(n, c);
      for (int oy = 0; oy < y.h(); ++oy) {
        for (int ox = 0; ox < y.w(); ++ox, ++o) {
          const int base = 2 * oy * x.w() + 2 * ox;
          int best = base;
          for (const int cand : {base + 1, base + x.w(), base + x.w() + 1}) {
            if (in[cand] > in[best]) best = cand;
          }
          out[oy * y.w() + ox] = in[best];
          if (argmax != nullptr) (*argmax)[o] = best;
        }
      }
    }
  }
  return y;
}

template <typename Scalar>
Tensor<Scalar> max_pool2_backward(const Shape& input_shape, const std::vector<std::int32_t>& argmax,
                                  const Tensor<Scalar>& dy) {
  Tensor<Scalar> dx(input_shape);
  std::size_t o = 0;
  for (int n = 0; n < dy.n(); ++n) {
    for (int c = 0; c < dy.c(); ++c) {
      const Scalar* g = dy.plane(n, c);
      Scalar* out = dx.plane(n, c);
      for (Eigen::Index i = 0; i < dy.shape().plane(); ++i, ++o) out[argmax[o]] += g[i];
    }
  }
  return dx;
}

namespace detail {

struct Tap {
  int lo;
  int hi;
  double frac;
};

// Half-pixel (align_corners = false) source taps for 2x up-sampling.
inline std::vector<Tap> upsample_taps(int in, int out) {
  std::vector<Tap> taps(out);
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * static_cast<double>(in) / out - 0.5;
    if (src < 0) src = 0;
    const int lo = std::min(static_cast<int>(src), in - 1);
    const int hi = std::min(lo + 1, in - 1);
    taps[o] = {lo, hi, src - lo};
  }
  return taps;
}

}  // namespace detail

/// Bilinear 2x up-sampling with half-pixel centers.
template <typename Scalar>
Tensor<Scalar> upsample2_forward(const Tensor<Scalar>& x) {
  Tensor<Scalar> y(x.n(), x.c(), 2 * x.h(), 2 * x.w());
  const auto ty = detail::upsample_taps(x.h(), y.h());
  const auto tx = detail::upsample_taps(x.w(), y.w());
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      const Scalar* in = x.plane(n, c);
      Scalar* out = y.plane(n, c);
      for (int oy = 0; oy < y.h(); ++oy) {
        const auto& a = ty[oy];
        const Scalar fy = static_cast<Scalar>(a.frac);
        const Scalar* r0 = in + a.lo * x.w();
        const Scalar* r1 = in + a.hi * x.w();
        for (int ox = 0; ox < y.w(); ++ox) {
          const auto& b = tx[ox];
          const Scalar fx = static_cast<Scalar>(b.frac);
          const Scalar top = r0[b.lo] + fx * (r0[b.hi] - r0[b.lo]);
          const Scalar bot = r1[b.lo] + fx * (r1[b.hi] - r1[b.lo]);
          out[oy * y.w() + ox] = top + fy * (bot - top);
        }
      }
    }
  }
  return y;
}

template <typename Scalar>
Tensor<Scalar> upsample2_backward(const Shape& input_shape, const Tensor<Scalar>& dy) {
  Tensor<Scalar> dx(input_shape);
  const auto ty = detail::upsample_taps(input_shape.h, dy.h());
  const auto tx = detail::upsample_taps(input_shape.w, dy.w());
  for (int n = 0; n < dy.n(); ++n) {
    for (int c = 0; c < dy.c(); ++c) {
      const Scalar* g = dy.plane(n, c);
      Scalar* out = dx.plane(n, c);
      for (int oy = 0; oy < dy.h(); ++oy) {
        const auto& a = ty[oy];
        const Scalar fy = static_cast<Scalar>(a.frac);
        Scalar* r0 = out + a.lo * input_shape.w;
        Scalar* r1 = out + a.hi * input_shape.w;
        for (int ox = 0; ox < dy.w(); ++ox) {
          const auto& b = tx[ox];
          const Scalar fx = static_cast<Scalar>(b.frac);
          const Scalar v = g[oy * dy.w() + ox];
          r0[b.lo] += (1 - fy) * (1 - fx) * v;
          r0[b.hi] += (1 - fy) * fx * v;
          r1[b.lo] += fy * (1 - fx) * v;
          r1[b.hi] += fy * fx * v;
        }
      }
    }
  }
  return dx;
}

/// Mean over the spatial axes: (n, c, h, w) -> (n, c, 1, 1).
template <typename Scalar>
Tensor<Scalar> global_average_forward(const Tensor<Scalar>& x) {
  Tensor<Scalar> y(x.n(), x.c(), 1, 1);
  for (int n = 0; n < x.n(); ++n) y.sample_matrix(n) = x.sample_matrix(n).rowwise().mean();
  return y;
}

template <typename Scalar>
Tensor<Scalar> global_average_backward(const Shape& input_shape, const Tensor<Scalar>& dy) {
  Tensor<Scalar> dx(input_shape);
  const Scalar scale = Scalar(1) / Scalar(input_shape.plane());
  for (int n = 0; n < dy.n(); ++n) {
    for (int c = 0; c < dy.c(); ++c) {
      Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>>(dx.plane(n, c), input_shape.plane())
          .setConstant(dy(n, c, 0, 0) * scale);
    }
  }
  return dx;
}

}  // namespace monopix::ops
