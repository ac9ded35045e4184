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

namespace mdsvit::nn {

/// y = x W^T + b over the last axis. x: [..., in], weight: [out, in],
/// bias: [out] or undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

/// 2-D cross-correlation. x: [N,C,H,W], weight: [O,C,kh,kw], bias: [O] or
/// undefined. Output spatial size is (H + 2*padding - kh) / stride + 1.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::int64_t stride, std::int64_t padding);

/// Batch normalization over (N,H,W) per channel. In training mode batch
/// statistics are used and the running buffers are updated in place
/// (running_var with the unbiased estimate); in eval mode only the running
/// buffers are read.
Tensor batch_norm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                    Tensor& running_var, bool training, double momentum, double eps);

/// Normalizes over the last axis.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);

/// One source tap pair of 1-D linear interpolation.
struct LinearTap {
  std::int64_t lo = 0;
  std::int64_t hi = 0;
  double weight_hi = 0.0;  // weight of `hi`; `lo` gets 1 - weight_hi
};

/// Half-pixel (align_corners = false) source taps for resizing in -> out.
std::vector<LinearTap> bilinear_taps(std::int64_t in_size, std::int64_t out_size);

/// Bilinear resize of [N,C,H,W] to [N,C,out_h,out_w], align_corners = false.
Tensor resize_bilinear(const Tensor& x, std::int64_t out_h, std::int64_t out_w);
/// Bilinear upsampling by an integer factor.
Tensor upsample_bilinear(const Tensor& x, std::int64_t factor);

/// Scaled dot-product attention, one softmax per query row.
/// q: [B,T,d], k: [B,S,d], v: [B,S,dv], bias: [G,T,S] or undefined, where
/// batch entry b adds bias[b % G] to its logits. Probabilities are never
/// stored; backward recomputes them block by block.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& bias, double scale);

}  // namespace mdsvit::nn
