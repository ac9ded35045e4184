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

#include "mdsvit/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mdsvit {

namespace {
thread_local DType g_default_dtype = DType::f32;

void check_extents(const Shape& shape) {
  for (auto extent : shape) {
    if (extent < 1) throw ShapeError("invalid shape " + to_string(shape) + ": extents must be >= 1");
  }
}

std::shared_ptr<TensorImpl> new_leaf(const Shape& shape, Buffer buffer) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = shape;
  impl->data = std::make_shared<Buffer>(std::move(buffer));
  return impl;
}
}  // namespace

const char* dtype_name(DType dtype) { return dtype == DType::f32 ? "f32" : "f64"; }

std::int64_t numel_of(const Shape& shape) {
  std::int64_t n = 1;
  for (auto extent : shape) n *= extent;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

DType default_dtype() { return g_default_dtype; }

DTypeGuard::DTypeGuard(DType dtype) : previous_(g_default_dtype) { g_default_dtype = dtype; }
DTypeGuard::~DTypeGuard() { g_default_dtype = previous_; }

Buffer::Buffer(DType dtype, std::size_t n) {
  if (dtype == DType::f32) {
    store_ = std::vector<float>(n, 0.0f);
  } else {
    store_ = std::vector<double>(n, 0.0);
  }
}

std::size_t Buffer::size() const {
  return std::visit([](const auto& v) { return v.size(); }, store_);
}

double Buffer::get(std::size_t i) const {
  return std::visit([i](const auto& v) { return static_cast<double>(v[i]); }, store_);
}

void Buffer::set(std::size_t i, double value) {
  std::visit([&](auto& v) { v[i] = static_cast<typename std::decay_t<decltype(v)>::value_type>(value); },
             store_);
}

void Buffer::fill(double value) {
  std::visit(
      [&](auto& v) {
        using T = typename std::decay_t<decltype(v)>::value_type;
        std::fill(v.begin(), v.end(), static_cast<T>(value));
      },
      store_);
}

void Buffer::add(const Buffer& other) {
  if (other.dtype() != dtype() || other.size() != size()) throw ShapeError("buffer add: dtype/size mismatch");
  dispatch(dtype(), [&]<class T>() {
    auto dst = span<T>();
    auto src = other.span<T>();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  });
}

Buffer Buffer::cast(DType target) const {
  Buffer out(target, size());
  dispatch(dtype(), [&]<class S>() {
    dispatch(target, [&]<class D>() {
      auto src = span<S>();
      auto dst = out.span<D>();
      for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<D>(src[i]);
    });
  });
  return out;
}

std::int64_t Tensor::size(std::int64_t axis) const {
  const auto r = rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw AxisError("axis out of range for shape " + to_string(shape()));
  return impl_->shape[static_cast<std::size_t>(axis)];
}

Tensor& Tensor::set_requires_grad(bool flag) {
  if (!is_leaf()) throw Error("requires_grad can only be set on leaf tensors");
  impl_->requires_grad = flag;
  return *this;
}

std::vector<double> Tensor::to_vector() const {
  std::vector<double> out(static_cast<std::size_t>(numel()));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = impl_->data->get(i);
  return out;
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
  return impl_->data->get(0);
}

double Tensor::at(std::initializer_list<std::int64_t> index) const {
  if (static_cast<std::int64_t>(index.size()) != rank()) throw ShapeError("at(): index rank mismatch");
  std::int64_t flat = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    const auto extent = impl_->shape[axis++];
    if (i < 0 || i >= extent) throw ShapeError("at(): index out of range");
    flat = flat * extent + i;
  }
  return impl_->data->get(static_cast<std::size_t>(flat));
}

const Buffer& Tensor::grad_buffer() const {
  if (!impl_->grad) throw Error("tensor has no gradient");
  return *impl_->grad;
}

std::vector<double> Tensor::grad_vector() const {
  const auto& g = grad_buffer();
  std::vector<double> out(g.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = g.get(i);
  return out;
}

Tensor Tensor::detach() const {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = impl_->shape;
  impl->data = impl_->data;
  return Tensor(std::move(impl));
}

Tensor Tensor::clone() const { return Tensor(new_leaf(impl_->shape, *impl_->data)); }

Tensor Tensor::to(DType target) const { return Tensor(new_leaf(impl_->shape, impl_->data->cast(target))); }

Tensor create(const Shape& shape, const InitPolicy& policy, DType dtype) {
  check_extents(shape);
  const auto n = static_cast<std::size_t>(numel_of(shape));
  Buffer buffer(dtype, n);
  std::visit(
      [&](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, init::Ones>) {
          buffer.fill(1.0);
        } else if constexpr (std::is_same_v<P, init::Uniform>) {
          Rng rng(p.seed);
          for (std::size_t i = 0; i < n; ++i) buffer.set(i, rng.uniform(p.low, p.high));
        } else if constexpr (std::is_same_v<P, init::Normal>) {
          Rng rng(p.seed);
          for (std::size_t i = 0; i < n; ++i) buffer.set(i, rng.normal(p.mean, p.stddev));
        } else if constexpr (std::is_same_v<P, init::Explicit>) {
          if (p.values.size() != n) {
            throw ShapeError("length mismatch: shape " + to_string(shape) + " needs " + std::to_string(n) +
                             " values, got " + std::to_string(p.values.size()));
          }
          for (std::size_t i = 0; i < n; ++i) buffer.set(i, p.values[i]);
        }
      },
      policy);
  return Tensor(new_leaf(shape, std::move(buffer)));
}

Tensor zeros(const Shape& shape, DType dtype) { return create(shape, init::Zeros{}, dtype); }
Tensor ones(const Shape& shape, DType dtype) { return create(shape, init::Ones{}, dtype); }

Tensor full(const Shape& shape, double value, DType dtype) {
  auto t = zeros(shape, dtype);
  t.mutable_buffer().fill(value);
  return t;
}

Tensor from_values(const Shape& shape, std::vector<double> values, DType dtype) {
  return create(shape, init::Explicit{std::move(values)}, dtype);
}

Tensor scalar(double value, DType dtype) { return full({1}, value, dtype); }

Tensor uniform(const Shape& shape, double low, double high, Rng& rng, DType dtype) {
  auto t = zeros(shape, dtype);
  auto& b = t.mutable_buffer();
  for (std::size_t i = 0; i < b.size(); ++i) b.set(i, rng.uniform(low, high));
  return t;
}

Tensor normal(const Shape& shape, double mean, double stddev, Rng& rng, DType dtype) {
  auto t = zeros(shape, dtype);
  auto& b = t.mutable_buffer();
  for (std::size_t i = 0; i < b.size(); ++i) b.set(i, rng.normal(mean, stddev));
  return t;
}

Tensor truncated_normal(const Shape& shape, double stddev, Rng& rng, DType dtype) {
  auto t = zeros(shape, dtype);
  auto& b = t.mutable_buffer();
  for (std::size_t i = 0; i < b.size(); ++i) b.set(i, rng.truncated_normal(0.0, stddev));
  return t;
}

Tensor from_buffer(const Shape& shape, Buffer buffer) {
  check_extents(shape);
  if (static_cast<std::int64_t>(buffer.size()) != numel_of(shape)) {
    throw ShapeError("length mismatch: buffer of " + std::to_string(buffer.size()) + " for shape " + to_string(shape));
  }
  return Tensor(new_leaf(shape, std::move(buffer)));
}

}  // namespace mdsvit
