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
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mdsvit/random.hpp"
#include "mdsvit/tensor.hpp"

namespace mdsvit::nn {

/// Called once per parameter or buffer with its dotted name.
using TensorVisitor = std::function<void(const std::string& name, Tensor& tensor, bool is_buffer)>;

class Module {
 public:
  virtual ~Module() = default;
  virtual void visit(const std::string& prefix, const TensorVisitor& fn) = 0;
  virtual void set_training(bool training) { training_ = training; }
  bool training() const { return training_; }

 protected:
  bool training_ = true;
};

std::string join_name(const std::string& prefix, const std::string& name);

std::vector<std::pair<std::string, Tensor>> named_parameters(Module& m);
std::vector<std::pair<std::string, Tensor>> named_buffers(Module& m);
std::int64_t parameter_count(Module& m);
void set_requires_grad(Module& m, bool flag);
void zero_grad(Module& m);

class Linear : public Module {
 public:
  Linear() = default;
  /// Weight ~ truncated normal(0, 0.02), bias zero.
  Linear(std::int64_t in, std::int64_t out, bool bias, Rng& rng);
  Tensor forward(const Tensor& x) const;
  void visit(const std::string& prefix, const TensorVisitor& fn) override;

  Tensor weight;  // [out, in]
  Tensor bias;    // [out] or undefined
};

class Conv2d : public Module {
 public:
  Conv2d() = default;
  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and bias.
  Conv2d(std::int64_t in, std::int64_t out, std::int64_t kernel, std::int64_t stride, std::int64_t padding, Rng& rng);
  Tensor forward(const Tensor& x) const;
  void visit(const std::string& prefix, const TensorVisitor& fn) override;

  Tensor weight;  // [out, in, k, k]
  Tensor bias;    // [out]
  std::int64_t stride = 1;
  std::int64_t padding = 0;
};

class BatchNorm2d : public Module {
 public:
  BatchNorm2d() = default;
  explicit BatchNorm2d(std::int64_t channels, double momentum = 0.1, double eps = 1e-5);
  Tensor forward(const Tensor& x);
  void visit(const std::string& prefix, const TensorVisitor& fn) override;

  Tensor gamma, beta, running_mean, running_var;
  double momentum = 0.1;
  double eps = 1e-5;
};

class LayerNorm : public Module {
 public:
  LayerNorm() = default;
  explicit LayerNorm(std::int64_t dim, double eps = 1e-5);
  Tensor forward(const Tensor& x) const;
  void visit(const std::string& prefix, const TensorVisitor& fn) override;

  Tensor gamma, beta;
  double eps = 1e-5;
};

/// Linear -> GELU -> Linear with hidden width expansion * dim.
class Mlp : public Module {
 public:
  Mlp() = default;
  Mlp(std::int64_t dim, std::int64_t expansion, Rng& rng);
  Tensor forward(const Tensor& x) const;
  void visit(const std::string& prefix, const TensorVisitor& fn) override;

  Linear fc1, fc2;
};

/// Multi-head self-attention over [B, T, dim] token sets.
class Msa : public Module {
 public:
  Msa() = default;
  Msa(std::int64_t dim, std::int64_t heads, Rng& rng);
  /// `bias`, when given, is [G * heads, T, T] and is added to the logits of
  /// batch entry b, head h at index (b % G) * heads + h.
  Tensor forward(const Tensor& x, const Tensor& bias = {}) const;
  void visit(const std::string& prefix, const TensorVisitor& fn) override;

  std::int64_t dim = 0;
  std::int64_t heads = 1;
  Linear q, k, v, out;
};

/// Attention within non-overlapping square windows of a channels-last grid
/// [N, H, W, C], with a learned relative position bias and optional cyclic
/// shift. H and W must be multiples of the window size; callers pad and pass
/// the unpadded extents so padded keys are masked out.
class WindowAttention : public Module {
 public:
  WindowAttention() = default;
  WindowAttention(std::int64_t dim, std::int64_t heads, std::int64_t window, std::int64_t shift, Rng& rng);
  Tensor forward(const Tensor& x, std::int64_t valid_h, std::int64_t valid_w) const;
  Tensor forward(const Tensor& x) const { return forward(x, x.size(1), x.size(2)); }
  void visit(const std::string& prefix, const TensorVisitor& fn) override;

  /// Shift actually used along an axis of the given extent: none when the
  /// whole axis fits in one window.
  std::int64_t shift_for(std::int64_t extent) const { return extent > window ? shift : 0; }

  std::int64_t window = 1;
  std::int64_t shift = 0;
  Msa msa;
  Tensor relative_bias;  // [(2w-1)^2, heads]
};

/// Pre-norm Swin block on [N, H, W, C]: attention and MLP sublayers, each
/// with a residual connection. Pads to window multiples internally.
class SwinBlock : public Module {
 public:
  SwinBlock() = default;
  SwinBlock(std::int64_t dim, std::int64_t heads, std::int64_t window, std::int64_t shift, std::int64_t mlp_ratio,
            Rng& rng);
  Tensor forward(const Tensor& x) const;
  void visit(const std::string& prefix, const TensorVisitor& fn) override;

  LayerNorm norm1, norm2;
  WindowAttention attn;
  Mlp mlp;
};

/// [N, H, W, C] -> [N, H/2, W/2, 2C]: concatenates 2x2 neighbours, applies
/// LayerNorm(4C) and a bias-free Linear(4C -> 2C).
class PatchMerging : public Module {
 public:
  PatchMerging() = default;
  PatchMerging(std::int64_t dim, Rng& rng);
  Tensor forward(const Tensor& x) const;
  void visit(const std::string& prefix, const TensorVisitor& fn) override;

  LayerNorm norm;
  Linear reduction;
};

/// [N, 3, H, W] -> [N, H/p, W/p, C]: non-overlapping p x p patches, linear
/// embedding and LayerNorm.
class PatchEmbed : public Module {
 public:
  PatchEmbed() = default;
  PatchEmbed(std::int64_t in_channels, std::int64_t dim, std::int64_t patch, Rng& rng);
  Tensor forward(const Tensor& x) const;
  void visit(const std::string& prefix, const TensorVisitor& fn) override;

  std::int64_t patch = 4;
  Linear proj;
  LayerNorm norm;
};

/// [N, C, H, W] <-> [N, H, W, C].
Tensor to_channels_last(const Tensor& x);
Tensor to_channels_first(const Tensor& x);

}  // namespace mdsvit::nn
