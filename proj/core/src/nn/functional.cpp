// Copyright 2026 The mdsvit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "mdsvit/nn/functional.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Core>

#include "../gemm.hpp"
#include "mdsvit/autograd.hpp"
#include "mdsvit/parallel.hpp"

namespace mdsvit::nn {

namespace {

constexpr std::int64_t kRowChunk = 512;
constexpr std::int64_t kColChunk = 4096;
constexpr std::int64_t kQueryBlock = 64;

std::int64_t chunk_count(std::int64_t n, std::int64_t chunk) { return (n + chunk - 1) / chunk; }

void require(bool ok, const std::string& message) {
  if (!ok) throw ShapeError(message);
}

void require_dtype(const Tensor& a, const Tensor& b, const char* op) {
  if (b.defined() && a.dtype() != b.dtype()) throw Error(std::string(op) + ": dtype mismatch");
}

template <class T>
T* grad_ptr(GradSink& sink, std::size_t i) {
  Buffer* g = sink.grad(i);
  return g ? g->span<T>().data() : nullptr;
}

// Sums per-task partial results in task order so the reduction order never
// depends on the thread count.
template <class T>
void reduce_partials(const std::vector<std::vector<T>>& partials, T* dst) {
  for (const auto& p : partials) {
    for (std::size_t i = 0; i < p.size(); ++i) dst[i] += p[i];
  }
}

struct ConvGeometry {
  std::int64_t n, c, h, w, o, kh, kw, stride, pad, ho, wo;
  std::int64_t positions() const { return ho * wo; }
  std::int64_t patch() const { return c * kh * kw; }
  bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

template <class T>
void im2col(const ConvGeometry& g, const T* image, std::int64_t p0, std::int64_t len, T* col) {
  for (std::int64_t c = 0; c < g.c; ++c) {
    const T* plane = image + c * g.h * g.w;
    for (std::int64_t ky = 0; ky < g.kh; ++ky) {
      for (std::int64_t kx = 0; kx < g.kw; ++kx) {
        T* dst = col + ((c * g.kh + ky) * g.kw + kx) * len;
        // Walk output rows; each row segment maps to one input row.
        std::int64_t p = p0;
        while (p < p0 + len) {
          const std::int64_t oy = p / g.wo, ox0 = p % g.wo;
          const std::int64_t ox1 = std::min(g.wo, ox0 + (p0 + len - p));
          T* out = dst + (p - p0);
          const std::int64_t iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) {
            std::fill(out, out + (ox1 - ox0), T(0));
          } else {
            const T* row = plane + iy * g.w;
            for (std::int64_t ox = ox0; ox < ox1; ++ox) {
              const std::int64_t ix = ox * g.stride - g.pad + kx;
              out[ox - ox0] = (ix >= 0 && ix < g.w) ? row[ix] : T(0);
            }
          }
          p += ox1 - ox0;
        }
      }
    }
  }
}

// Adds the column gradient of one input channel back onto its image plane.
template <class T>
void col2im_channel(const ConvGeometry& g, const T* dcol, std::int64_t c, T* plane) {
  const std::int64_t positions = g.positions();
  for (std::int64_t ky = 0; ky < g.kh; ++ky) {
    for (std::int64_t kx = 0; kx < g.kw; ++kx) {
      const T* src = dcol + ((c * g.kh + ky) * g.kw + kx) * positions;
      for (std::int64_t oy = 0; oy < g.ho; ++oy) {
        const std::int64_t iy = oy * g.stride - g.pad + ky;
        if (iy < 0 || iy >= g.h) continue;
        for (std::int64_t ox = 0; ox < g.wo; ++ox) {
          const std::int64_t ix = ox * g.stride - g.pad + kx;
          if (ix >= 0 && ix < g.w) plane[iy * g.w + ix] += src[oy * g.wo + ox];
        }
      }
    }
  }
}

}  // namespace

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require(weight.rank() == 2, "linear: weight must be [out, in]");
  const std::int64_t in = weight.size(1), out = weight.size(0);
  require(x.size(-1) == in, "linear: input " + to_string(x.shape()) + " does not match weight " + to_string(weight.shape()));
  require(!bias.defined() || (bias.rank() == 1 && bias.size(0) == out), "linear: bias must be [out]");
  require_dtype(x, weight, "linear");
  require_dtype(x, bias, "linear");
  const std::int64_t rows = x.numel() / in;
  Shape out_shape = x.shape();
  out_shape.back() = out;
  std::vector<Tensor> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  const bool has_bias = bias.defined();

  return dispatch(x.dtype(), [&]<class T>() {
    Buffer y(x.dtype(), static_cast<std::size_t>(rows * out));
    const T* px = x.data<T>().data();
    const T* pw = weight.data<T>().data();
    const T* pb = has_bias ? bias.data<T>().data() : nullptr;
    T* py = y.span<T>().data();
    parallel_tasks(chunk_count(rows, kRowChunk), [&](std::int64_t t) {
      const std::int64_t r0 = t * kRowChunk, rn = std::min(kRowChunk, rows - r0);
      detail::gemm<T>(false, true, rn, out, in, px + r0 * in, in, pw, in, py + r0 * out, out, false);
      if (pb) {
        for (std::int64_t r = 0; r < rn; ++r) {
          T* row = py + (r0 + r) * out;
          for (std::int64_t o = 0; o < out; ++o) row[o] += pb[o];
        }
      }
    });
    return make_result("linear", out_shape, std::move(y), inputs,
                       [x, weight, rows, in, out, has_bias](const Buffer& g, GradSink& sink) {
                         const T* pg = g.span<T>().data();
                         const T* px = x.data<T>().data();
                         const T* pw = weight.data<T>().data();
                         T* dx = grad_ptr<T>(sink, 0);
                         T* dw = grad_ptr<T>(sink, 1);
                         T* db = has_bias ? grad_ptr<T>(sink, 2) : nullptr;
                         const std::int64_t tasks = chunk_count(rows, kRowChunk);
                         std::vector<std::vector<T>> partial(dw ? static_cast<std::size_t>(tasks) : 0);
                         parallel_tasks(tasks, [&](std::int64_t t) {
                           const std::int64_t r0 = t * kRowChunk, rn = std::min(kRowChunk, rows - r0);
                           if (dx) detail::gemm<T>(false, false, rn, in, out, pg + r0 * out, out, pw, in, dx + r0 * in, in, true);
                           if (dw) {
                             auto& p = partial[static_cast<std::size_t>(t)];
                             p.assign(static_cast<std::size_t>(out * in), T(0));
                             detail::gemm<T>(true, false, out, in, rn, pg + r0 * out, out, px + r0 * in, in, p.data(), in, false);
                           }
                         });
                         if (dw) reduce_partials(partial, dw);
                         if (db) {
                           for (std::int64_t r = 0; r < rows; ++r) {
                             for (std::int64_t o = 0; o < out; ++o) db[o] += pg[r * out + o];
                           }
                         }
                       });
  });
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::int64_t stride, std::int64_t padding) {
  require(x.rank() == 4, "conv2d: input must be [N,C,H,W], got " + to_string(x.shape()));
  require(weight.rank() == 4, "conv2d: weight must be [O,C,kh,kw]");
  require(stride >= 1 && padding >= 0, "conv2d: invalid stride/padding");
  require(x.size(1) == weight.size(1), "conv2d: channel mismatch, input has " + std::to_string(x.size(1)) +
                                           " channels, kernel expects " + std::to_string(weight.size(1)));
  require_dtype(x, weight, "conv2d");
  require_dtype(x, bias, "conv2d");
  ConvGeometry geo{x.size(0), x.size(1), x.size(2), x.size(3), weight.size(0), weight.size(2), weight.size(3),
                   stride, padding, 0, 0};
  require(geo.h + 2 * padding >= geo.kh && geo.w + 2 * padding >= geo.kw, "conv2d: input smaller than kernel");
  geo.ho = (geo.h + 2 * padding - geo.kh) / stride + 1;
  geo.wo = (geo.w + 2 * padding - geo.kw) / stride + 1;
  require(!bias.defined() || (bias.rank() == 1 && bias.size(0) == geo.o), "conv2d: bias must be [O]");
  const bool has_bias = bias.defined();
  std::vector<Tensor> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  const Shape out_shape{geo.n, geo.o, geo.ho, geo.wo};

  return dispatch(x.dtype(), [&]<class T>() {
    const std::int64_t P = geo.positions(), K = geo.patch();
    const std::int64_t per_sample = chunk_count(P, kColChunk);
    Buffer y(x.dtype(), static_cast<std::size_t>(numel_of(out_shape)));
    const T* px = x.data<T>().data();
    const T* pw = weight.data<T>().data();
    const T* pb = has_bias ? bias.data<T>().data() : nullptr;
    T* py = y.span<T>().data();
    parallel_tasks(geo.n * per_sample, [&](std::int64_t t) {
      const std::int64_t n = t / per_sample, p0 = (t % per_sample) * kColChunk, len = std::min(kColChunk, P - p0);
      const T* image = px + n * geo.c * geo.h * geo.w;
      T* dst = py + n * geo.o * P + p0;
      if (geo.pointwise()) {
        detail::gemm<T>(false, false, geo.o, len, geo.c, pw, geo.c, image + p0, P, dst, P, false);
      } else {
        std::vector<T> col(static_cast<std::size_t>(K * len));
        im2col(geo, image, p0, len, col.data());
        detail::gemm<T>(false, false, geo.o, len, K, pw, K, col.data(), len, dst, P, false);
      }
      if (pb) {
        for (std::int64_t o = 0; o < geo.o; ++o) {
          for (std::int64_t i = 0; i < len; ++i) dst[o * P + i] += pb[o];
        }
      }
    });
    return make_result("conv2d", out_shape, std::move(y), inputs, [x, weight, geo, has_bias](const Buffer& g, GradSink& sink) {
      const std::int64_t P = geo.positions(), K = geo.patch();
      const std::int64_t per_sample = chunk_count(P, kColChunk);
      const T* pg = g.span<T>().data();
      const T* px = x.data<T>().data();
      const T* pw = weight.data<T>().data();
      T* dx = grad_ptr<T>(sink, 0);
      T* dw = grad_ptr<T>(sink, 1);
      T* db = has_bias ? grad_ptr<T>(sink, 2) : nullptr;
      if (db) {
        for (std::int64_t n = 0; n < geo.n; ++n) {
          for (std::int64_t o = 0; o < geo.o; ++o) {
            const T* row = pg + (n * geo.o + o) * P;
            T acc = 0;
            for (std::int64_t i = 0; i < P; ++i) acc += row[i];
            db[o] += acc;
          }
        }
      }
      if (dw) {
        std::vector<std::vector<T>> partial(static_cast<std::size_t>(geo.n * per_sample));
        parallel_tasks(geo.n * per_sample, [&](std::int64_t t) {
          const std::int64_t n = t / per_sample, p0 = (t % per_sample) * kColChunk, len = std::min(kColChunk, P - p0);
          const T* image = px + n * geo.c * geo.h * geo.w;
          const T* grad = pg + n * geo.o * P + p0;
          auto& acc = partial[static_cast<std::size_t>(t)];
          acc.assign(static_cast<std::size_t>(geo.o * K), T(0));
          if (geo.pointwise()) {
            detail::gemm<T>(false, true, geo.o, K, len, grad, P, image + p0, P, acc.data(), K, false);
          } else {
            std::vector<T> col(static_cast<std::size_t>(K * len));
            im2col(geo, image, p0, len, col.data());
            detail::gemm<T>(false, true, geo.o, K, len, grad, P, col.data(), len, acc.data(), K, false);
          }
        });
        reduce_partials(partial, dw);
      }
      if (dx) {
        std::vector<T> dcol(geo.pointwise() ? 0 : static_cast<std::size_t>(K * P));
        for (std::int64_t n = 0; n < geo.n; ++n) {
          const T* grad = pg + n * geo.o * P;
          T* dimage = dx + n * geo.c * geo.h * geo.w;
          parallel_tasks(per_sample, [&](std::int64_t t) {
            const std::int64_t p0 = t * kColChunk, len = std::min(kColChunk, P - p0);
            if (geo.pointwise()) {
              detail::gemm<T>(true, false, geo.c, len, geo.o, pw, geo.c, grad + p0, P, dimage + p0, P, true);
            } else {
              detail::gemm<T>(true, false, K, len, geo.o, pw, K, grad + p0, P, dcol.data() + p0, P, false);
            }
          });
          if (!geo.pointwise()) {
            parallel_tasks(geo.c, [&](std::int64_t c) {
              col2im_channel(geo, dcol.data(), c, dimage + c * geo.h * geo.w);
            });
          }
        }
      }
    });
  });
}

Tensor batch_norm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                    Tensor& running_var, bool training, double momentum, double eps) {
  require(x.rank() == 4, "batch_norm2d: input must be [N,C,H,W]");
  const std::int64_t n = x.size(0), channels = x.size(1), hw = x.size(2) * x.size(3);
  for (const Tensor* t : std::initializer_list<const Tensor*>{&gamma, &beta, &running_mean, &running_var}) {
    require(t->rank() == 1 && t->size(0) == channels,
            "batch_norm2d: channel count mismatch, input has " + std::to_string(channels));
  }
  const std::int64_t count = n * hw;
  if (training && count < 2) {
    throw DegenerateInputError("batch_norm2d: batch statistics need more than one value per channel (input " +
                               to_string(x.shape()) + ")");
  }
  auto mean = std::make_shared<std::vector<double>>(static_cast<std::size_t>(channels));
  auto invstd = std::make_shared<std::vector<double>>(static_cast<std::size_t>(channels));

  return dispatch(x.dtype(), [&]<class T>() {
    const T* px = x.data<T>().data();
    if (training) {
      auto rm = running_mean.mutable_data<T>();
      auto rv = running_var.mutable_data<T>();
      for (std::int64_t c = 0; c < channels; ++c) {
        double s = 0;
        for (std::int64_t b = 0; b < n; ++b) {
          const T* p = px + (b * channels + c) * hw;
          for (std::int64_t i = 0; i < hw; ++i) s += p[i];
        }
        const double mu = s / static_cast<double>(count);
        double ss = 0;
        for (std::int64_t b = 0; b < n; ++b) {
          const T* p = px + (b * channels + c) * hw;
          for (std::int64_t i = 0; i < hw; ++i) ss += (p[i] - mu) * (p[i] - mu);
        }
        const double var = ss / static_cast<double>(count);
        (*mean)[static_cast<std::size_t>(c)] = mu;
        (*invstd)[static_cast<std::size_t>(c)] = 1.0 / std::sqrt(var + eps);
        const auto ci = static_cast<std::size_t>(c);
        rm[ci] = static_cast<T>((1.0 - momentum) * rm[ci] + momentum * mu);
        rv[ci] = static_cast<T>((1.0 - momentum) * rv[ci] +
                                momentum * var * static_cast<double>(count) / static_cast<double>(count - 1));
      }
    } else {
      auto rm = running_mean.data<T>();
      auto rv = running_var.data<T>();
      for (std::int64_t c = 0; c < channels; ++c) {
        const auto ci = static_cast<std::size_t>(c);
        (*mean)[ci] = rm[ci];
        (*invstd)[ci] = 1.0 / std::sqrt(static_cast<double>(rv[ci]) + eps);
      }
    }
    Buffer y(x.dtype(), static_cast<std::size_t>(x.numel()));
    T* py = y.span<T>().data();
    const T* pgamma = gamma.data<T>().data();
    const T* pbeta = beta.data<T>().data();
    for (std::int64_t b = 0; b < n; ++b) {
      for (std::int64_t c = 0; c < channels; ++c) {
        const auto ci = static_cast<std::size_t>(c);
        const T scale = static_cast<T>(pgamma[ci] * (*invstd)[ci]);
        const T shift = static_cast<T>(pbeta[ci] - pgamma[ci] * (*mean)[ci] * (*invstd)[ci]);
        const T* src = px + (b * channels + c) * hw;
        T* dst = py + (b * channels + c) * hw;
        for (std::int64_t i = 0; i < hw; ++i) dst[i] = src[i] * scale + shift;
      }
    }
    return make_result("batch_norm2d", x.shape(), std::move(y), {x, gamma, beta},
                       [x, gamma, mean, invstd, training, n, channels, hw, count](const Buffer& g, GradSink& sink) {
                         const T* pg = g.span<T>().data();
                         const T* px = x.data<T>().data();
                         const T* pgamma = gamma.data<T>().data();
                         T* dx = grad_ptr<T>(sink, 0);
                         T* dgamma = grad_ptr<T>(sink, 1);
                         T* dbeta = grad_ptr<T>(sink, 2);
                         for (std::int64_t c = 0; c < channels; ++c) {
                           const auto ci = static_cast<std::size_t>(c);
                           const double mu = (*mean)[ci], is = (*invstd)[ci];
                           double sum_g = 0, sum_gx = 0;
                           for (std::int64_t b = 0; b < n; ++b) {
                             const T* gp = pg + (b * channels + c) * hw;
                             const T* xp = px + (b * channels + c) * hw;
                             for (std::int64_t i = 0; i < hw; ++i) {
                               sum_g += gp[i];
                               sum_gx += gp[i] * (xp[i] - mu) * is;
                             }
                           }
                           if (dgamma) dgamma[ci] += static_cast<T>(sum_gx);
                           if (dbeta) dbeta[ci] += static_cast<T>(sum_g);
                           if (!dx) continue;
                           const double k = pgamma[ci] * is;
                           const double m = static_cast<double>(count);
                           for (std::int64_t b = 0; b < n; ++b) {
                             const T* gp = pg + (b * channels + c) * hw;
                             const T* xp = px + (b * channels + c) * hw;
                             T* dp = dx + (b * channels + c) * hw;
                             for (std::int64_t i = 0; i < hw; ++i) {
                               if (training) {
                                 const double xhat = (xp[i] - mu) * is;
                                 dp[i] += static_cast<T>(k * (gp[i] - sum_g / m - xhat * sum_gx / m));
                               } else {
                                 dp[i] += static_cast<T>(k * gp[i]);
                               }
                             }
                           }
                         }
                       });
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::int64_t dim = x.size(-1);
  require(gamma.rank() == 1 && gamma.size(0) == dim && beta.rank() == 1 && beta.size(0) == dim,
          "layer_norm: parameter size does not match last axis of " + to_string(x.shape()));
  require_dtype(x, gamma, "layer_norm");
  const std::int64_t rows = x.numel() / dim;
  auto stats = std::make_shared<std::vector<double>>(static_cast<std::size_t>(2 * rows));  // mean, invstd
  return dispatch(x.dtype(), [&]<class T>() {
    Buffer y(x.dtype(), static_cast<std::size_t>(x.numel()));
    const T* px = x.data<T>().data();
    const T* pgamma = gamma.data<T>().data();
    const T* pbeta = beta.data<T>().data();
    T* py = y.span<T>().data();
    for (std::int64_t r = 0; r < rows; ++r) {
      const T* src = px + r * dim;
      double s = 0;
      for (std::int64_t i = 0; i < dim; ++i) s += src[i];
      const double mu = s / static_cast<double>(dim);
      double ss = 0;
      for (std::int64_t i = 0; i < dim; ++i) ss += (src[i] - mu) * (src[i] - mu);
      const double is = 1.0 / std::sqrt(ss / static_cast<double>(dim) + eps);
      (*stats)[static_cast<std::size_t>(2 * r)] = mu;
      (*stats)[static_cast<std::size_t>(2 * r + 1)] = is;
      T* dst = py + r * dim;
      for (std::int64_t i = 0; i < dim; ++i) dst[i] = static_cast<T>((src[i] - mu) * is) * pgamma[i] + pbeta[i];
    }
    return make_result("layer_norm", x.shape(), std::move(y), {x, gamma, beta},
                       [x, gamma, stats, rows, dim](const Buffer& g, GradSink& sink) {
                         const T* pg = g.span<T>().data();
                         const T* px = x.data<T>().data();
                         const T* pgamma = gamma.data<T>().data();
                         T* dx = grad_ptr<T>(sink, 0);
                         T* dgamma = grad_ptr<T>(sink, 1);
                         T* dbeta = grad_ptr<T>(sink, 2);
                         std::vector<double> xhat(static_cast<std::size_t>(dim));
                         for (std::int64_t r = 0; r < rows; ++r) {
                           const double mu = (*stats)[static_cast<std::size_t>(2 * r)];
                           const double is = (*stats)[static_cast<std::size_t>(2 * r + 1)];
                           const T* gp = pg + r * dim;
                           const T* xp = px + r * dim;
                           double mean_g = 0, mean_gx = 0;
                           for (std::int64_t i = 0; i < dim; ++i) {
                             const auto ii = static_cast<std::size_t>(i);
                             xhat[ii] = (xp[i] - mu) * is;
                             const double gx = static_cast<double>(gp[i]) * pgamma[i];
                             mean_g += gx;
                             mean_gx += gx * xhat[ii];
                             if (dgamma) dgamma[i] += static_cast<T>(gp[i] * xhat[ii]);
                             if (dbeta) dbeta[i] += gp[i];
                           }
                           if (!dx) continue;
                           mean_g /= static_cast<double>(dim);
                           mean_gx /= static_cast<double>(dim);
                           T* dp = dx + r * dim;
                           for (std::int64_t i = 0; i < dim; ++i) {
                             const double gx = static_cast<double>(gp[i]) * pgamma[i];
                             dp[i] += static_cast<T>(is * (gx - mean_g - xhat[static_cast<std::size_t>(i)] * mean_gx));
                           }
                         }
                       });
  });
}

std::vector<LinearTap> bilinear_taps(std::int64_t in_size, std::int64_t out_size) {
  std::vector<LinearTap> taps(static_cast<std::size_t>(out_size));
  const double scale = static_cast<double>(in_size) / static_cast<double>(out_size);
  for (std::int64_t d = 0; d < out_size; ++d) {
    double src = (static_cast<double>(d) + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    auto lo = static_cast<std::int64_t>(src);
    if (lo > in_size - 1) lo = in_size - 1;
    auto& t = taps[static_cast<std::size_t>(d)];
    t.lo = lo;
    t.hi = lo < in_size - 1 ? lo + 1 : lo;
    t.weight_hi = src - static_cast<double>(lo);
  }
  return taps;
}

Tensor resize_bilinear(const Tensor& x, std::int64_t out_h, std::int64_t out_w) {
  require(x.rank() == 4, "resize_bilinear: input must be [N,C,H,W]");
  require(out_h >= 1 && out_w >= 1, "resize_bilinear: invalid output size");
  const std::int64_t planes = x.size(0) * x.size(1), in_h = x.size(2), in_w = x.size(3);
  auto ty = bilinear_taps(in_h, out_h);
  auto tx = bilinear_taps(in_w, out_w);
  const Shape out_shape{x.size(0), x.size(1), out_h, out_w};
  return dispatch(x.dtype(), [&]<class T>() {
    Buffer y(x.dtype(), static_cast<std::size_t>(numel_of(out_shape)));
    const T* px = x.data<T>().data();
    T* py = y.span<T>().data();
    for (std::int64_t p = 0; p < planes; ++p) {
      const T* src = px + p * in_h * in_w;
      T* dst = py + p * out_h * out_w;
      for (std::int64_t oy = 0; oy < out_h; ++oy) {
        const auto& a = ty[static_cast<std::size_t>(oy)];
        const T wy = static_cast<T>(a.weight_hi);
        const T* r0 = src + a.lo * in_w;
        const T* r1 = src + a.hi * in_w;
        for (std::int64_t ox = 0; ox < out_w; ++ox) {
          const auto& b = tx[static_cast<std::size_t>(ox)];
          const T wx = static_cast<T>(b.weight_hi);
          const T top = (T(1) - wx) * r0[b.lo] + wx * r0[b.hi];
          const T bottom = (T(1) - wx) * r1[b.lo] + wx * r1[b.hi];
          dst[oy * out_w + ox] = (T(1) - wy) * top + wy * bottom;
        }
      }
    }
    return make_result("upsample_bilinear", out_shape, std::move(y), {x},
                       [ty, tx, planes, in_h, in_w, out_h, out_w](const Buffer& g, GradSink& sink) {
                         T* dx = grad_ptr<T>(sink, 0);
                         if (!dx) return;
                         const T* pg = g.span<T>().data();
                         for (std::int64_t p = 0; p < planes; ++p) {
                           const T* src = pg + p * out_h * out_w;
                           T* dst = dx + p * in_h * in_w;
                           for (std::int64_t oy = 0; oy < out_h; ++oy) {
                             const auto& a = ty[static_cast<std::size_t>(oy)];
                             const T wy = static_cast<T>(a.weight_hi);
                             T* r0 = dst + a.lo * in_w;
                             T* r1 = dst + a.hi * in_w;
                             for (std::int64_t ox = 0; ox < out_w; ++ox) {
                               const auto& b = tx[static_cast<std::size_t>(ox)];
                               const T wx = static_cast<T>(b.weight_hi);
                               const T gv = src[oy * out_w + ox];
                               r0[b.lo] += (T(1) - wy) * (T(1) - wx) * gv;
                               r0[b.hi] += (T(1) - wy) * wx * gv;
                               r1[b.lo] += wy * (T(1) - wx) * gv;
                               r1[b.hi] += wy * wx * gv;
                             }
                           }
                         }
                       });
  });
}

Tensor upsample_bilinear(const Tensor& x, std::int64_t factor) {
  require(factor >= 1, "upsample_bilinear: factor must be >= 1");
  require(x.rank() == 4, "upsample_bilinear: input must be [N,C,H,W]");
  return resize_bilinear(x, x.size(2) * factor, x.size(3) * factor);
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& bias, double scale) {
  require(q.rank() == 3 && k.rank() == 3 && v.rank() == 3, "attention: q, k, v must be 3-D");
  const std::int64_t B = q.size(0), T_q = q.size(1), d = q.size(2), S = k.size(1), dv = v.size(2);
  require(k.size(0) == B && v.size(0) == B && k.size(2) == d && v.size(1) == S,
          "attention: incompatible q/k/v shapes " + to_string(q.shape()) + ", " + to_string(k.shape()) + ", " +
              to_string(v.shape()));
  require_dtype(q, k, "attention");
  require_dtype(q, v, "attention");
  require_dtype(q, bias, "attention");
  const bool has_bias = bias.defined();
  const std::int64_t G = has_bias ? bias.size(0) : B;
  if (has_bias) {
    require(bias.rank() == 3 && bias.size(1) == T_q && bias.size(2) == S && B % G == 0,
            "attention: bias must be [G,T,S] with G dividing the batch");
  }
  std::vector<Tensor> inputs{q, k, v};
  if (has_bias) inputs.push_back(bias);
  const Shape out_shape{B, T_q, dv};

  return dispatch(q.dtype(), [&]<class T>() {
    // logits for query rows [r0, r0+rn) of batch b, softmax-normalized in place
    auto probabilities = [=](const T* pq, const T* pk, const T* pbias, std::int64_t b, std::int64_t r0,
                             std::int64_t rn, T* p) {
      detail::gemm<T>(false, true, rn, S, d, pq + (b * T_q + r0) * d, d, pk + b * S * d, d, p, S, false);
      const T* brow = pbias ? pbias + ((b % G) * T_q + r0) * S : nullptr;
      // Work in an Eigen-owned (aligned) row so the vectorized exp and sum
      // never depend on where the scratch buffer happened to land.
      Eigen::Array<T, Eigen::Dynamic, 1> row(S);
      for (std::int64_t r = 0; r < rn; ++r) {
        Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>> dst(p + r * S, S);
        row = dst * static_cast<T>(scale);
        if (brow) row += Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>(brow + r * S, S);
        row = (row - row.maxCoeff()).exp();
        row /= row.sum();
        dst = row;
      }
    };

    Buffer y(q.dtype(), static_cast<std::size_t>(numel_of(out_shape)));
    const T* pq = q.data<T>().data();
    const T* pk = k.data<T>().data();
    const T* pv = v.data<T>().data();
    const T* pbias = has_bias ? bias.data<T>().data() : nullptr;
    T* py = y.span<T>().data();
    parallel_tasks(B, [&](std::int64_t b) {
      std::vector<T> p(static_cast<std::size_t>(std::min(kQueryBlock, T_q) * S));
      for (std::int64_t r0 = 0; r0 < T_q; r0 += kQueryBlock) {
        const std::int64_t rn = std::min(kQueryBlock, T_q - r0);
        probabilities(pq, pk, pbias, b, r0, rn, p.data());
        detail::gemm<T>(false, false, rn, dv, S, p.data(), S, pv + b * S * dv, dv, py + (b * T_q + r0) * dv, dv, false);
      }
    });

    return make_result("attention", out_shape, std::move(y), inputs,
                       [q, k, v, bias, has_bias, B, T_q, d, S, dv, G, scale, probabilities](const Buffer& g, GradSink& sink) {
                         const T* pg = g.span<T>().data();
                         const T* pq = q.data<T>().data();
                         const T* pk = k.data<T>().data();
                         const T* pv = v.data<T>().data();
                         const T* pbias = has_bias ? bias.data<T>().data() : nullptr;
                         T* dq = grad_ptr<T>(sink, 0);
                         T* dk = grad_ptr<T>(sink, 1);
                         T* dvv = grad_ptr<T>(sink, 2);
                         T* dbias = has_bias ? grad_ptr<T>(sink, 3) : nullptr;
                         // One task per bias slot so dbias writes never collide.
                         parallel_tasks(G, [&](std::int64_t slot) {
                           const std::int64_t block = std::min(kQueryBlock, T_q);
                           std::vector<T> p(static_cast<std::size_t>(block * S)), ds(p.size());
                           for (std::int64_t b = slot; b < B; b += G) {
                             for (std::int64_t r0 = 0; r0 < T_q; r0 += kQueryBlock) {
                               const std::int64_t rn = std::min(kQueryBlock, T_q - r0);
                               probabilities(pq, pk, pbias, b, r0, rn, p.data());
                               const T* grow = pg + (b * T_q + r0) * dv;
                               if (dvv) detail::gemm<T>(true, false, S, dv, rn, p.data(), S, grow, dv, dvv + b * S * dv, dv, true);
                               if (!dq && !dk && !dbias) continue;
                               detail::gemm<T>(false, true, rn, S, dv, grow, dv, pv + b * S * dv, dv, ds.data(), S, false);
                               for (std::int64_t r = 0; r < rn; ++r) {
                                 T* dsr = ds.data() + r * S;
                                 const T* pr = p.data() + r * S;
                                 T dot = 0;
                                 for (std::int64_t j = 0; j < S; ++j) dot += dsr[j] * pr[j];
                                 for (std::int64_t j = 0; j < S; ++j) dsr[j] = pr[j] * (dsr[j] - dot);
                               }
                               if (dbias) {
                                 T* brow = dbias + (slot * T_q + r0) * S;
                                 for (std::int64_t i = 0; i < rn * S; ++i) brow[i] += ds[static_cast<std::size_t>(i)];
                               }
                               const T s = static_cast<T>(scale);
                               for (std::int64_t i = 0; i < rn * S; ++i) ds[static_cast<std::size_t>(i)] *= s;
                               if (dq) detail::gemm<T>(false, false, rn, d, S, ds.data(), S, pk + b * S * d, d, dq + (b * T_q + r0) * d, d, true);
                               if (dk) detail::gemm<T>(true, false, S, d, rn, ds.data(), S, pq + (b * T_q + r0) * d, d, dk + b * S * d, d, true);
                             }
                           }
                         });
                       });
  });
}

}  // namespace mdsvit::nn
