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

#pragma once

#include <cstdint>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "mdsvit/error.hpp"
#include "mdsvit/random.hpp"

namespace mdsvit {

enum class DType : std::uint8_t { f32, f64 };

const char* dtype_name(DType dtype);

/// Extents, outermost first. Row-major; images are (N, C, H, W).
using Shape = std::vector<std::int64_t>;

std::int64_t numel_of(const Shape& shape);
std::string to_string(const Shape& shape);

/// Dtype used by factories and layer constructors when none is given.
DType default_dtype();

/// Scoped override of default_dtype() for the current thread.
class DTypeGuard {
 public:
  explicit DTypeGuard(DType dtype);
  ~DTypeGuard();
  DTypeGuard(const DTypeGuard&) = delete;
  DTypeGuard& operator=(const DTypeGuard&) = delete;

 private:
  DType previous_;
};

/// Calls fn.template operator()<T>() with T = float or double.
template <class F>
decltype(auto) dispatch(DType dtype, F&& fn) {
  if (dtype == DType::f64) return fn.template operator()<double>();
  return fn.template operator()<float>();
}

template <class T>
constexpr DType dtype_of() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? DType::f32 : DType::f64;
}

/// Contiguous zero-initialized storage of one dtype.
class Buffer {
 public:
  Buffer() = default;
  Buffer(DType dtype, std::size_t n);

  DType dtype() const { return store_.index() == 0 ? DType::f32 : DType::f64; }
  std::size_t size() const;

  template <class T>
  std::span<T> span() {
    return std::get<std::vector<T>>(store_);
  }
  template <class T>
  std::span<const T> span() const {
    return std::get<std::vector<T>>(store_);
  }

  double get(std::size_t i) const;
  void set(std::size_t i, double v);
  void fill(double v);
  /// this += other (same dtype and size).
  void add(const Buffer& other);
  Buffer cast(DType dtype) const;

 private:
  std::variant<std::vector<float>, std::vector<double>> store_;
};

struct Node;

struct TensorImpl {
  Shape shape;
  std::shared_ptr<Buffer> data;
  std::shared_ptr<Buffer> grad;
  bool requires_grad = false;
  std::shared_ptr<Node> node;  // null for leaves
};

/// Shared handle to a dense tensor and, for non-leaves, the operation that
/// produced it. Copies alias the same tensor.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::int64_t rank() const { return static_cast<std::int64_t>(impl_->shape.size()); }
  /// Extent along axis; negative axes count from the end.
  std::int64_t size(std::int64_t axis) const;
  std::int64_t numel() const { return static_cast<std::int64_t>(impl_->data->size()); }
  DType dtype() const { return impl_->data->dtype(); }

  bool requires_grad() const { return impl_->requires_grad; }
  /// Only valid on leaves.
  Tensor& set_requires_grad(bool flag);
  bool is_leaf() const { return impl_->node == nullptr; }

  template <class T>
  std::span<const T> data() const {
    return std::as_const(*impl_->data).span<T>();
  }
  /// Direct write access for initialization and optimizer updates on leaves.
  template <class T>
  std::span<T> mutable_data() {
    return impl_->data->span<T>();
  }
  const Buffer& buffer() const { return *impl_->data; }
  Buffer& mutable_buffer() { return *impl_->data; }

  std::vector<double> to_vector() const;
  /// Value of a one-element tensor.
  double item() const;
  double at(std::initializer_list<std::int64_t> index) const;

  bool has_grad() const { return impl_->grad != nullptr; }
  const Buffer& grad_buffer() const;
  std::vector<double> grad_vector() const;
  void zero_grad() { impl_->grad.reset(); }

  /// Same data, no graph history, requires_grad = false.
  Tensor detach() const;
  /// Deep copy of the data as a fresh leaf.
  Tensor clone() const;
  Tensor to(DType dtype) const;

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

namespace init {
struct Zeros {};
struct Ones {};
struct Uniform {
  double low = 0.0;
  double high = 1.0;
  std::uint64_t seed = 0;
};
struct Normal {
  double mean = 0.0;
  double stddev = 1.0;
  std::uint64_t seed = 0;
};
struct Explicit {
  std::vector<double> values;
};
}  // namespace init

using InitPolicy = std::variant<init::Zeros, init::Ones, init::Uniform, init::Normal, init::Explicit>;

/// Leaf tensor of the given shape. Extents must be >= 1.
Tensor create(const Shape& shape, const InitPolicy& policy, DType dtype = default_dtype());

Tensor zeros(const Shape& shape, DType dtype = default_dtype());
Tensor ones(const Shape& shape, DType dtype = default_dtype());
Tensor full(const Shape& shape, double value, DType dtype = default_dtype());
Tensor from_values(const Shape& shape, std::vector<double> values, DType dtype = default_dtype());
Tensor scalar(double value, DType dtype = default_dtype());

Tensor uniform(const Shape& shape, double low, double high, Rng& rng, DType dtype = default_dtype());
Tensor normal(const Shape& shape, double mean, double stddev, Rng& rng, DType dtype = default_dtype());
/// Normal truncated at two standard deviations (the usual ViT weight init).
Tensor truncated_normal(const Shape& shape, double stddev, Rng& rng, DType dtype = default_dtype());

/// Leaf from an existing buffer; shape must match its length.
Tensor from_buffer(const Shape& shape, Buffer buffer);

}  // namespace mdsvit
