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
#include <vector>

#include "mdsvit/tensor.hpp"

namespace mdsvit {

// Elementwise binary ops. Shapes must be equal, or `b` must hold exactly one
// element (a differentiable scalar). No other broadcasting.
enum class BinaryOp { add, sub, mul, div, minimum, maximum };

Tensor elementwise(BinaryOp op, const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
/// Min/max route the gradient to `a` on ties.
Tensor minimum(const Tensor& a, const Tensor& b);
Tensor maximum(const Tensor& a, const Tensor& b);

/// scale * a + shift.
Tensor affine(const Tensor& a, double scale, double shift);

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, const Tensor& b);
Tensor operator/(const Tensor& a, const Tensor& b);
Tensor operator+(const Tensor& a, double b);
Tensor operator+(double a, const Tensor& b);
Tensor operator-(const Tensor& a, double b);
Tensor operator-(double a, const Tensor& b);
Tensor operator*(const Tensor& a, double b);
Tensor operator*(double a, const Tensor& b);
Tensor operator/(const Tensor& a, double b);
Tensor operator-(const Tensor& a);

// Elementwise unary ops.
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
/// Exact (erf-based) GELU.
Tensor gelu(const Tensor& a);

/// [m,k] x [k,n] -> [m,n], or batched [B,m,k] x [B,k,n] -> [B,m,n].
Tensor matmul(const Tensor& a, const Tensor& b);

enum class ReduceOp { sum, mean, max, min };

/// Reduces over `axes` (removed from the result). An empty axes list reduces
/// everything to shape [1]. max/min send the gradient to the first extremum.
Tensor reduce(ReduceOp op, const Tensor& a, std::vector<std::int64_t> axes = {});
Tensor sum(const Tensor& a, std::vector<std::int64_t> axes = {});
Tensor mean(const Tensor& a, std::vector<std::int64_t> axes = {});
Tensor max(const Tensor& a, std::vector<std::int64_t> axes = {});
Tensor min(const Tensor& a, std::vector<std::int64_t> axes = {});

/// Numerically stable softmax along one axis.
Tensor softmax(const Tensor& a, std::int64_t axis);

// Layout ops. All copy; none aliases its input.
/// One extent may be -1 and is inferred.
Tensor reshape(const Tensor& a, Shape shape);
Tensor permute(const Tensor& a, const std::vector<std::int64_t>& order);
Tensor concat(const std::vector<Tensor>& parts, std::int64_t axis);
Tensor slice(const Tensor& a, std::int64_t axis, std::int64_t start, std::int64_t length);
/// Zero padding before/after along one axis.
Tensor pad(const Tensor& a, std::int64_t axis, std::int64_t before, std::int64_t after);
/// Cyclic shift: out[i] = a[(i - shift) mod n] along axis.
Tensor roll(const Tensor& a, std::int64_t axis, std::int64_t shift);
/// Stacks `count` copies along a new leading axis.
Tensor repeat(const Tensor& a, std::int64_t count);
/// rows[i] = table[indices[i]] for a 2-D table.
Tensor gather_rows(const Tensor& table, const std::vector<std::int64_t>& indices);

}  // namespace mdsvit
