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

#include "mdsvit/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "gemm.hpp"
#include "mdsvit/autograd.hpp"

namespace mdsvit {

namespace {

void check_dtypes(const Tensor& a, const Tensor& b, const char* op) {
  if (a.dtype() != b.dtype()) {
    throw Error(std::string(op) + ": dtype mismatch (" + dtype_name(a.dtype()) + " vs " + dtype_name(b.dtype()) + ")");
  }
}

std::int64_t normalize_axis(std::int64_t axis, std::int64_t rank, const Shape& shape) {
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) {
    throw AxisError("axis " + std::to_string(axis) + " invalid for shape " + to_string(shape));
  }
  return axis;
}

// View of a tensor as [outer, len, inner] around one axis.
struct AxisSplit {
  std::int64_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, std::int64_t axis) {
  AxisSplit s;
  for (std::int64_t i = 0; i < axis; ++i) s.outer *= shape[static_cast<std::size_t>(i)];
  s.len = shape[static_cast<std::size_t>(axis)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

template <class T, class F>
Buffer map_unary(const Tensor& a, F f) {
  Buffer out(a.dtype(), static_cast<std::size_t>(a.numel()));
  auto src = a.data<T>();
  auto dst = out.span<T>();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
  return out;
}

enum class UnaryKind { exp, log, sqrt, relu, sigmoid, gelu };

const char* unary_name(UnaryKind k) {
  switch (k) {
    case UnaryKind::exp: return "exp";
    case UnaryKind::log: return "log";
    case UnaryKind::sqrt: return "sqrt";
    case UnaryKind::relu: return "relu";
    case UnaryKind::sigmoid: return "sigmoid";
    case UnaryKind::gelu: return "gelu";
  }
  return "?";
}

Tensor unary(UnaryKind kind, const Tensor& a) {
  return dispatch(a.dtype(), [&]<class T>() {
    auto out = std::make_shared<Buffer>(map_unary<T>(a, [kind](T x) -> T {
      switch (kind) {
        case UnaryKind::exp: return std::exp(x);
        case UnaryKind::log: return std::log(x);
        case UnaryKind::sqrt: return std::sqrt(x);
        case UnaryKind::relu: return x > T(0) ? x : T(0);
        case UnaryKind::sigmoid: return T(1) / (T(1) + std::exp(-x));
        case UnaryKind::gelu: return T(0.5) * x * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
      }
      return x;
    }));
    std::shared_ptr<const Buffer> saved = out;
    return make_result(unary_name(kind), a.shape(), out, {a}, [kind, a, saved](const Buffer& g, GradSink& sink) {
      Buffer* ga = sink.grad(0);
      if (!ga) return;
      auto gin = g.span<T>();
      auto y = saved->span<T>();
      auto x = a.data<T>();
      auto dst = ga->span<T>();
      for (std::size_t i = 0; i < dst.size(); ++i) {
        T d = 0;
        switch (kind) {
          case UnaryKind::exp: d = y[i]; break;
          case UnaryKind::log: d = T(1) / x[i]; break;
          case UnaryKind::sqrt: d = T(0.5) / y[i]; break;
          case UnaryKind::relu: d = x[i] > T(0) ? T(1) : T(0); break;
          case UnaryKind::sigmoid: d = y[i] * (T(1) - y[i]); break;
          case UnaryKind::gelu: {
            const T cdf = T(0.5) * (T(1) + std::erf(x[i] / std::numbers::sqrt2_v<T>));
            const T pdf = std::exp(T(-0.5) * x[i] * x[i]) * std::numbers::inv_sqrtpi_v<T> / std::numbers::sqrt2_v<T>;
            d = cdf + x[i] * pdf;
            break;
          }
        }
        dst[i] += gin[i] * d;
      }
    });
  });
}

const char* binary_name(BinaryOp op) {
  switch (op) {
    case BinaryOp::add: return "add";
    case BinaryOp::sub: return "sub";
    case BinaryOp::mul: return "mul";
    case BinaryOp::div: return "div";
    case BinaryOp::minimum: return "minimum";
    case BinaryOp::maximum: return "maximum";
  }
  return "?";
}

// Single-axis reduction; the axis is removed (shape [1] if nothing remains).
Tensor reduce_axis(ReduceOp op, const Tensor& a, std::int64_t axis) {
  const auto split = split_at(a.shape(), axis);
  Shape out_shape = a.shape();
  out_shape.erase(out_shape.begin() + axis);
  if (out_shape.empty()) out_shape = {1};
  const char* name = op == ReduceOp::sum ? "sum" : op == ReduceOp::mean ? "mean" : op == ReduceOp::max ? "max" : "min";
  return dispatch(a.dtype(), [&]<class T>() {
    Buffer out(a.dtype(), static_cast<std::size_t>(split.outer * split.inner));
    auto src = a.data<T>();
    auto dst = out.span<T>();
    auto arg = std::make_shared<std::vector<std::int64_t>>();
    if (op == ReduceOp::max || op == ReduceOp::min) arg->resize(dst.size());
    for (std::int64_t o = 0; o < split.outer; ++o) {
      for (std::int64_t i = 0; i < split.inner; ++i) {
        const std::int64_t base = o * split.len * split.inner + i;
        const auto out_index = static_cast<std::size_t>(o * split.inner + i);
        if (op == ReduceOp::sum || op == ReduceOp::mean) {
          T acc = 0;
          for (std::int64_t k = 0; k < split.len; ++k) acc += src[static_cast<std::size_t>(base + k * split.inner)];
          dst[out_index] = op == ReduceOp::mean ? acc / static_cast<T>(split.len) : acc;
        } else {
          std::int64_t best = 0;
          T best_value = src[static_cast<std::size_t>(base)];
          for (std::int64_t k = 1; k < split.len; ++k) {
            const T v = src[static_cast<std::size_t>(base + k * split.inner)];
            if (op == ReduceOp::max ? v > best_value : v < best_value) {
              best_value = v;
              best = k;
            }
          }
          dst[out_index] = best_value;
          (*arg)[out_index] = best;
        }
      }
    }
    return make_result(name, out_shape, std::move(out), {a}, [op, split, arg](const Buffer& g, GradSink& sink) {
      Buffer* ga = sink.grad(0);
      if (!ga) return;
      auto gin = g.span<T>();
      auto dst = ga->span<T>();
      for (std::int64_t o = 0; o < split.outer; ++o) {
        for (std::int64_t i = 0; i < split.inner; ++i) {
          const std::int64_t base = o * split.len * split.inner + i;
          const auto out_index = static_cast<std::size_t>(o * split.inner + i);
          const T gv = gin[out_index];
          if (op == ReduceOp::sum || op == ReduceOp::mean) {
            const T scaled = op == ReduceOp::mean ? gv / static_cast<T>(split.len) : gv;
            for (std::int64_t k = 0; k < split.len; ++k) dst[static_cast<std::size_t>(base + k * split.inner)] += scaled;
          } else {
            dst[static_cast<std::size_t>(base + (*arg)[out_index] * split.inner)] += gv;
          }
        }
      }
    });
  });
}

template <class T>
void permute_copy(std::span<const T> src, const Shape& in_shape, const std::vector<std::int64_t>& order,
                  std::span<T> dst) {
  const std::size_t rank = in_shape.size();
  std::vector<std::int64_t> in_stride(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_stride[i - 1] = in_stride[i] * in_shape[i];
  std::vector<std::int64_t> out_extent(rank), stride(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    out_extent[i] = in_shape[static_cast<std::size_t>(order[i])];
    stride[i] = in_stride[static_cast<std::size_t>(order[i])];
  }
  if (rank == 0) {
    dst[0] = src[0];
    return;
  }
  // Innermost output axis is walked in a tight loop.
  const std::int64_t last_extent = out_extent[rank - 1];
  const std::int64_t last_stride = stride[rank - 1];
  std::vector<std::int64_t> idx(rank, 0);
  std::int64_t offset = 0;
  std::size_t out = 0;
  const std::size_t total = dst.size();
  while (out < total) {
    for (std::int64_t k = 0; k < last_extent; ++k) dst[out++] = src[static_cast<std::size_t>(offset + k * last_stride)];
    // advance the odometer over the outer axes
    std::size_t axis = rank - 1;
    while (axis-- > 0) {
      offset += stride[axis];
      if (++idx[axis] < out_extent[axis]) break;
      offset -= stride[axis] * out_extent[axis];
      idx[axis] = 0;
    }
  }
}

}  // namespace

Tensor elementwise(BinaryOp op, const Tensor& a, const Tensor& b) {
  check_dtypes(a, b, binary_name(op));
  const bool b_scalar = a.shape() != b.shape() && b.numel() == 1;
  if (!b_scalar && a.shape() != b.shape()) {
    throw ShapeError(std::string(binary_name(op)) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
  return dispatch(a.dtype(), [&]<class T>() {
    const auto n = static_cast<std::size_t>(a.numel());
    Buffer out(a.dtype(), n);
    auto x = a.data<T>();
    auto y = b.data<T>();
    auto z = out.span<T>();
    for (std::size_t i = 0; i < n; ++i) {
      const T yi = y[b_scalar ? 0 : i];
      switch (op) {
        case BinaryOp::add: z[i] = x[i] + yi; break;
        case BinaryOp::sub: z[i] = x[i] - yi; break;
        case BinaryOp::mul: z[i] = x[i] * yi; break;
        case BinaryOp::div: z[i] = x[i] / yi; break;
        case BinaryOp::minimum: z[i] = yi < x[i] ? yi : x[i]; break;
        case BinaryOp::maximum: z[i] = yi > x[i] ? yi : x[i]; break;
      }
    }
    return make_result(binary_name(op), a.shape(), std::move(out), {a, b},
                       [op, a, b, b_scalar](const Buffer& g, GradSink& sink) {
                         auto gin = g.span<T>();
                         auto x = a.data<T>();
                         auto y = b.data<T>();
                         Buffer* ga = sink.grad(0);
                         Buffer* gb = sink.grad(1);
                         T* da = ga ? ga->span<T>().data() : nullptr;
                         T* db = gb ? gb->span<T>().data() : nullptr;
                         for (std::size_t i = 0; i < gin.size(); ++i) {
                           const std::size_t j = b_scalar ? 0 : i;
                           const T gi = gin[i];
                           T dxa = 0, dyb = 0;
                           switch (op) {
                             case BinaryOp::add: dxa = gi; dyb = gi; break;
                             case BinaryOp::sub: dxa = gi; dyb = -gi; break;
                             case BinaryOp::mul: dxa = gi * y[j]; dyb = gi * x[i]; break;
                             case BinaryOp::div: dxa = gi / y[j]; dyb = -gi * x[i] / (y[j] * y[j]); break;
                             case BinaryOp::minimum: (y[j] < x[i] ? dyb : dxa) = gi; break;
                             case BinaryOp::maximum: (y[j] > x[i] ? dyb : dxa) = gi; break;
                           }
                           if (da) da[i] += dxa;
                           if (db) db[j] += dyb;
                         }
                       });
  });
}

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::mul, a, b); }
Tensor div(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::div, a, b); }
Tensor minimum(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::minimum, a, b); }
Tensor maximum(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::maximum, a, b); }

Tensor affine(const Tensor& a, double scale, double shift) {
  return dispatch(a.dtype(), [&]<class T>() {
    const T s = static_cast<T>(scale), t = static_cast<T>(shift);
    Buffer out = map_unary<T>(a, [s, t](T x) { return s * x + t; });
    return make_result("affine", a.shape(), std::move(out), {a}, [s](const Buffer& g, GradSink& sink) {
      if (Buffer* ga = sink.grad(0)) {
        auto gin = g.span<T>();
        auto dst = ga->span<T>();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += s * gin[i];
      }
    });
  });
}

Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
Tensor operator+(const Tensor& a, double b) { return affine(a, 1.0, b); }
Tensor operator+(double a, const Tensor& b) { return affine(b, 1.0, a); }
Tensor operator-(const Tensor& a, double b) { return affine(a, 1.0, -b); }
Tensor operator-(double a, const Tensor& b) { return affine(b, -1.0, a); }
Tensor operator*(const Tensor& a, double b) { return affine(a, b, 0.0); }
Tensor operator*(double a, const Tensor& b) { return affine(b, a, 0.0); }
Tensor operator/(const Tensor& a, double b) { return affine(a, 1.0 / b, 0.0); }
Tensor operator-(const Tensor& a) { return affine(a, -1.0, 0.0); }

Tensor exp(const Tensor& a) { return unary(UnaryKind::exp, a); }
Tensor log(const Tensor& a) { return unary(UnaryKind::log, a); }
Tensor sqrt(const Tensor& a) { return unary(UnaryKind::sqrt, a); }
Tensor relu(const Tensor& a) { return unary(UnaryKind::relu, a); }
Tensor sigmoid(const Tensor& a) { return unary(UnaryKind::sigmoid, a); }
Tensor gelu(const Tensor& a) { return unary(UnaryKind::gelu, a); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_dtypes(a, b, "matmul");
  const bool batched = a.rank() == 3;
  if (!((a.rank() == 2 && b.rank() == 2) || (a.rank() == 3 && b.rank() == 3))) {
    throw ShapeError("matmul: expected two 2-D or two 3-D operands, got " + to_string(a.shape()) + " x " +
                     to_string(b.shape()));
  }
  const std::int64_t batch = batched ? a.size(0) : 1;
  const std::int64_t m = a.size(-2), k = a.size(-1), n = b.size(-1);
  if (b.size(-2) != k || (batched && b.size(0) != batch)) {
    throw ShapeError("matmul: inner dimension mismatch " + to_string(a.shape()) + " x " + to_string(b.shape()));
  }
  Shape out_shape = batched ? Shape{batch, m, n} : Shape{m, n};
  return dispatch(a.dtype(), [&]<class T>() {
    Buffer out(a.dtype(), static_cast<std::size_t>(batch * m * n));
    const T* pa = a.data<T>().data();
    const T* pb = b.data<T>().data();
    T* pc = out.span<T>().data();
    for (std::int64_t i = 0; i < batch; ++i) {
      detail::gemm<T>(false, false, m, n, k, pa + i * m * k, pb + i * k * n, pc + i * m * n, false);
    }
    return make_result("matmul", out_shape, std::move(out), {a, b}, [a, b, batch, m, n, k](const Buffer& g, GradSink& sink) {
      const T* pg = g.span<T>().data();
      const T* pa = a.data<T>().data();
      const T* pb = b.data<T>().data();
      if (Buffer* ga = sink.grad(0)) {
        T* da = ga->span<T>().data();
        for (std::int64_t i = 0; i < batch; ++i) {
          detail::gemm<T>(false, true, m, k, n, pg + i * m * n, pb + i * k * n, da + i * m * k, true);
        }
      }
      if (Buffer* gb = sink.grad(1)) {
        T* db = gb->span<T>().data();
        for (std::int64_t i = 0; i < batch; ++i) {
          detail::gemm<T>(true, false, k, n, m, pa + i * m * k, pg + i * m * n, db + i * k * n, true);
        }
      }
    });
  });
}

Tensor reduce(ReduceOp op, const Tensor& a, std::vector<std::int64_t> axes) {
  if (axes.empty()) return reduce_axis(op, reshape(a, {a.numel()}), 0);
  for (auto& axis : axes) axis = normalize_axis(axis, a.rank(), a.shape());
  std::sort(axes.begin(), axes.end());
  if (std::adjacent_find(axes.begin(), axes.end()) != axes.end()) throw AxisError("reduce: repeated axis");
  if (static_cast<std::int64_t>(axes.size()) == a.rank()) return reduce_axis(op, reshape(a, {a.numel()}), 0);
  Tensor out = a;
  for (auto it = axes.rbegin(); it != axes.rend(); ++it) {
    if (op == ReduceOp::mean) {
      out = reduce_axis(ReduceOp::mean, out, *it);
    } else {
      out = reduce_axis(op, out, *it);
    }
  }
  return out;
}

Tensor sum(const Tensor& a, std::vector<std::int64_t> axes) { return reduce(ReduceOp::sum, a, std::move(axes)); }
Tensor mean(const Tensor& a, std::vector<std::int64_t> axes) { return reduce(ReduceOp::mean, a, std::move(axes)); }
Tensor max(const Tensor& a, std::vector<std::int64_t> axes) { return reduce(ReduceOp::max, a, std::move(axes)); }
Tensor min(const Tensor& a, std::vector<std::int64_t> axes) { return reduce(ReduceOp::min, a, std::move(axes)); }

Tensor softmax(const Tensor& a, std::int64_t axis) {
  axis = normalize_axis(axis, a.rank(), a.shape());
  const auto split = split_at(a.shape(), axis);
  return dispatch(a.dtype(), [&]<class T>() {
    auto out = std::make_shared<Buffer>(a.dtype(), static_cast<std::size_t>(a.numel()));
    auto src = a.data<T>();
    auto dst = out->span<T>();
    for (std::int64_t o = 0; o < split.outer; ++o) {
      for (std::int64_t i = 0; i < split.inner; ++i) {
        const std::int64_t base = o * split.len * split.inner + i;
        auto at = [&](std::int64_t k) { return static_cast<std::size_t>(base + k * split.inner); };
        T peak = src[at(0)];
        for (std::int64_t k = 1; k < split.len; ++k) peak = std::max(peak, src[at(k)]);
        T total = 0;
        for (std::int64_t k = 0; k < split.len; ++k) {
          dst[at(k)] = std::exp(src[at(k)] - peak);
          total += dst[at(k)];
        }
        for (std::int64_t k = 0; k < split.len; ++k) dst[at(k)] /= total;
      }
    }
    std::shared_ptr<const Buffer> saved = out;
    return make_result("softmax", a.shape(), out, {a}, [saved, split](const Buffer& g, GradSink& sink) {
      Buffer* ga = sink.grad(0);
      if (!ga) return;
      auto y = saved->span<T>();
      auto gin = g.span<T>();
      auto dst = ga->span<T>();
      for (std::int64_t o = 0; o < split.outer; ++o) {
        for (std::int64_t i = 0; i < split.inner; ++i) {
          const std::int64_t base = o * split.len * split.inner + i;
          auto at = [&](std::int64_t k) { return static_cast<std::size_t>(base + k * split.inner); };
          T dot = 0;
          for (std::int64_t k = 0; k < split.len; ++k) dot += gin[at(k)] * y[at(k)];
          for (std::int64_t k = 0; k < split.len; ++k) dst[at(k)] += y[at(k)] * (gin[at(k)] - dot);
        }
      }
    });
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  std::int64_t known = 1;
  std::int64_t* inferred = nullptr;
  for (auto& extent : shape) {
    if (extent == -1 && inferred == nullptr) {
      inferred = &extent;
    } else if (extent < 1) {
      throw ShapeError("reshape: invalid target shape " + to_string(shape));
    } else {
      known *= extent;
    }
  }
  if (inferred != nullptr && a.numel() % known == 0) *inferred = a.numel() / known;
  if (numel_of(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + to_string(a.shape()) + " as " + to_string(shape));
  }
  return make_result("reshape", std::move(shape), a.buffer(), {a}, [](const Buffer& g, GradSink& sink) {
    if (Buffer* ga = sink.grad(0)) ga->add(g);
  });
}

Tensor permute(const Tensor& a, const std::vector<std::int64_t>& order) {
  const auto rank = a.rank();
  if (static_cast<std::int64_t>(order.size()) != rank) throw AxisError("permute: order length != rank");
  std::vector<std::int64_t> inverse(order.size(), -1);
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto axis = order[i];
    if (axis < 0 || axis >= rank || inverse[static_cast<std::size_t>(axis)] != -1) {
      throw AxisError("permute: invalid axis order");
    }
    inverse[static_cast<std::size_t>(axis)] = static_cast<std::int64_t>(i);
  }
  Shape out_shape(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) out_shape[i] = a.shape()[static_cast<std::size_t>(order[i])];
  return dispatch(a.dtype(), [&]<class T>() {
    Buffer out(a.dtype(), static_cast<std::size_t>(a.numel()));
    permute_copy<T>(a.data<T>(), a.shape(), order, out.span<T>());
    return make_result("permute", out_shape, std::move(out), {a}, [out_shape, inverse](const Buffer& g, GradSink& sink) {
      Buffer* ga = sink.grad(0);
      if (!ga) return;
      Buffer back(g.dtype(), g.size());
      permute_copy<T>(g.span<T>(), out_shape, inverse, back.span<T>());
      ga->add(back);
    });
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::int64_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Tensor& first = parts.front();
  axis = normalize_axis(axis, first.rank(), first.shape());
  Shape out_shape = first.shape();
  out_shape[static_cast<std::size_t>(axis)] = 0;
  std::vector<std::int64_t> lengths;
  for (const auto& p : parts) {
    check_dtypes(first, p, "concat");
    if (p.rank() != first.rank()) throw ShapeError("concat: rank mismatch");
    for (std::int64_t d = 0; d < first.rank(); ++d) {
      if (d != axis && p.size(d) != first.size(d)) {
        throw ShapeError("concat: shape mismatch " + to_string(first.shape()) + " vs " + to_string(p.shape()));
      }
    }
    lengths.push_back(p.size(axis));
    out_shape[static_cast<std::size_t>(axis)] += p.size(axis);
  }
  const auto split = split_at(out_shape, axis);
  return dispatch(first.dtype(), [&]<class T>() {
    Buffer out(first.dtype(), static_cast<std::size_t>(numel_of(out_shape)));
    auto dst = out.span<T>();
    std::int64_t offset = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
      auto src = parts[p].data<T>();
      const std::int64_t chunk = lengths[p] * split.inner;
      for (std::int64_t o = 0; o < split.outer; ++o) {
        std::copy_n(src.begin() + o * chunk, chunk, dst.begin() + o * split.len * split.inner + offset * split.inner);
      }
      offset += lengths[p];
    }
    return make_result("concat", out_shape, std::move(out), parts, [lengths, split](const Buffer& g, GradSink& sink) {
      auto gin = g.span<T>();
      std::int64_t offset = 0;
      for (std::size_t p = 0; p < lengths.size(); ++p) {
        const std::int64_t chunk = lengths[p] * split.inner;
        if (Buffer* gp = sink.grad(p)) {
          auto dst = gp->span<T>();
          for (std::int64_t o = 0; o < split.outer; ++o) {
            const auto* src = gin.data() + o * split.len * split.inner + offset * split.inner;
            for (std::int64_t k = 0; k < chunk; ++k) dst[static_cast<std::size_t>(o * chunk + k)] += src[k];
          }
        }
        offset += lengths[p];
      }
    });
  });
}

Tensor slice(const Tensor& a, std::int64_t axis, std::int64_t start, std::int64_t length) {
  axis = normalize_axis(axis, a.rank(), a.shape());
  if (start < 0 || length < 1 || start + length > a.size(axis)) {
    throw ShapeError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                     ") out of bounds for shape " + to_string(a.shape()));
  }
  const auto split = split_at(a.shape(), axis);
  Shape out_shape = a.shape();
  out_shape[static_cast<std::size_t>(axis)] = length;
  return dispatch(a.dtype(), [&]<class T>() {
    Buffer out(a.dtype(), static_cast<std::size_t>(numel_of(out_shape)));
    auto src = a.data<T>();
    auto dst = out.span<T>();
    const std::int64_t chunk = length * split.inner;
    for (std::int64_t o = 0; o < split.outer; ++o) {
      std::copy_n(src.begin() + o * split.len * split.inner + start * split.inner, chunk, dst.begin() + o * chunk);
    }
    return make_result("slice", out_shape, std::move(out), {a}, [split, start, chunk](const Buffer& g, GradSink& sink) {
      Buffer* ga = sink.grad(0);
      if (!ga) return;
      auto gin = g.span<T>();
      auto dst = ga->span<T>();
      for (std::int64_t o = 0; o < split.outer; ++o) {
        T* d = dst.data() + o * split.len * split.inner + start * split.inner;
        const T* s = gin.data() + o * chunk;
        for (std::int64_t k = 0; k < chunk; ++k) d[k] += s[k];
      }
    });
  });
}

Tensor pad(const Tensor& a, std::int64_t axis, std::int64_t before, std::int64_t after) {
  axis = normalize_axis(axis, a.rank(), a.shape());
  if (before < 0 || after < 0) throw ShapeError("pad: negative padding");
  if (before == 0 && after == 0) return a;
  const auto split = split_at(a.shape(), axis);
  Shape out_shape = a.shape();
  out_shape[static_cast<std::size_t>(axis)] += before + after;
  const std::int64_t out_len = out_shape[static_cast<std::size_t>(axis)];
  return dispatch(a.dtype(), [&]<class T>() {
    Buffer out(a.dtype(), static_cast<std::size_t>(numel_of(out_shape)));
    auto src = a.data<T>();
    auto dst = out.span<T>();
    const std::int64_t chunk = split.len * split.inner;
    for (std::int64_t o = 0; o < split.outer; ++o) {
      std::copy_n(src.begin() + o * chunk, chunk, dst.begin() + o * out_len * split.inner + before * split.inner);
    }
    return make_result("pad", out_shape, std::move(out), {a}, [split, before, out_len, chunk](const Buffer& g, GradSink& sink) {
      Buffer* ga = sink.grad(0);
      if (!ga) return;
      auto gin = g.span<T>();
      auto dst = ga->span<T>();
      for (std::int64_t o = 0; o < split.outer; ++o) {
        const T* s = gin.data() + o * out_len * split.inner + before * split.inner;
        T* d = dst.data() + o * chunk;
        for (std::int64_t k = 0; k < chunk; ++k) d[k] += s[k];
      }
    });
  });
}

Tensor roll(const Tensor& a, std::int64_t axis, std::int64_t shift) {
  axis = normalize_axis(axis, a.rank(), a.shape());
  const auto split = split_at(a.shape(), axis);
  const std::int64_t n = split.len;
  const std::int64_t s = ((shift % n) + n) % n;
  if (s == 0) return a;
  return dispatch(a.dtype(), [&]<class T>() {
    Buffer out(a.dtype(), static_cast<std::size_t>(a.numel()));
    auto src = a.data<T>();
    auto dst = out.span<T>();
    for (std::int64_t o = 0; o < split.outer; ++o) {
      for (std::int64_t k = 0; k < n; ++k) {
        const std::int64_t from = (k - s + n) % n;
        std::copy_n(src.begin() + (o * n + from) * split.inner, split.inner, dst.begin() + (o * n + k) * split.inner);
      }
    }
    return make_result("roll", a.shape(), std::move(out), {a}, [split, n, s](const Buffer& g, GradSink& sink) {
      Buffer* ga = sink.grad(0);
      if (!ga) return;
      auto gin = g.span<T>();
      auto dst = ga->span<T>();
      for (std::int64_t o = 0; o < split.outer; ++o) {
        for (std::int64_t k = 0; k < n; ++k) {
          const std::int64_t from = (k - s + n) % n;
          T* d = dst.data() + (o * n + from) * split.inner;
          const T* src = gin.data() + (o * n + k) * split.inner;
          for (std::int64_t i = 0; i < split.inner; ++i) d[i] += src[i];
        }
      }
    });
  });
}

Tensor repeat(const Tensor& a, std::int64_t count) {
  if (count < 1) throw ShapeError("repeat: count must be >= 1");
  Shape out_shape = a.shape();
  out_shape.insert(out_shape.begin(), count);
  return dispatch(a.dtype(), [&]<class T>() {
    const auto n = static_cast<std::size_t>(a.numel());
    Buffer out(a.dtype(), n * static_cast<std::size_t>(count));
    auto src = a.data<T>();
    auto dst = out.span<T>();
    for (std::int64_t c = 0; c < count; ++c) std::copy(src.begin(), src.end(), dst.begin() + static_cast<std::ptrdiff_t>(c * n));
    return make_result("repeat", out_shape, std::move(out), {a}, [n, count](const Buffer& g, GradSink& sink) {
      Buffer* ga = sink.grad(0);
      if (!ga) return;
      auto gin = g.span<T>();
      auto dst = ga->span<T>();
      for (std::int64_t c = 0; c < count; ++c) {
        for (std::size_t i = 0; i < n; ++i) dst[i] += gin[static_cast<std::size_t>(c) * n + i];
      }
    });
  });
}

Tensor gather_rows(const Tensor& table, const std::vector<std::int64_t>& indices) {
  if (table.rank() != 2) throw ShapeError("gather_rows: table must be 2-D");
  if (indices.empty()) throw ShapeError("gather_rows: no indices");
  const std::int64_t rows = table.size(0), cols = table.size(1);
  for (auto i : indices) {
    if (i < 0 || i >= rows) throw ShapeError("gather_rows: index out of range");
  }
  Shape out_shape{static_cast<std::int64_t>(indices.size()), cols};
  return dispatch(table.dtype(), [&]<class T>() {
    Buffer out(table.dtype(), indices.size() * static_cast<std::size_t>(cols));
    auto src = table.data<T>();
    auto dst = out.span<T>();
    for (std::size_t r = 0; r < indices.size(); ++r) {
      std::copy_n(src.begin() + indices[r] * cols, cols, dst.begin() + static_cast<std::ptrdiff_t>(r) * cols);
    }
    return make_result("gather_rows", out_shape, std::move(out), {table}, [indices, cols](const Buffer& g, GradSink& sink) {
      Buffer* gt = sink.grad(0);
      if (!gt) return;
      auto gin = g.span<T>();
      auto dst = gt->span<T>();
      for (std::size_t r = 0; r < indices.size(); ++r) {
        for (std::int64_t c = 0; c < cols; ++c) {
          dst[static_cast<std::size_t>(indices[r] * cols + c)] += gin[r * static_cast<std::size_t>(cols) + static_cast<std::size_t>(c)];
        }
      }
    });
  });
}

}  // namespace mdsvit
