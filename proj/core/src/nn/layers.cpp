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

#include "mdsvit/nn/layers.hpp"

#include <cmath>

#include "mdsvit/error.hpp"
#include "mdsvit/nn/functional.hpp"
#include "mdsvit/ops.hpp"

namespace mdsvit::nn {

namespace {

constexpr double kMasked = -1e9;
constexpr double kInitStd = 0.02;

// Region labels along one axis of a rolled grid; tokens in different regions
// were not neighbours before the cyclic shift.
std::vector<int> shift_regions(std::int64_t extent, std::int64_t window, std::int64_t shift) {
  std::vector<int> label(static_cast<std::size_t>(extent), 0);
  if (shift == 0) return label;
  for (std::int64_t i = extent - window; i < extent - shift; ++i) label[static_cast<std::size_t>(i)] = 1;
  for (std::int64_t i = extent - shift; i < extent; ++i) label[static_cast<std::size_t>(i)] = 2;
  return label;
}

}  // namespace

std::string join_name(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}

std::vector<std::pair<std::string, Tensor>> named_parameters(Module& m) {
  std::vector<std::pair<std::string, Tensor>> out;
  m.visit("", [&](const std::string& name, Tensor& t, bool is_buffer) {
    if (!is_buffer) out.emplace_back(name, t);
  });
  return out;
}

std::vector<std::pair<std::string, Tensor>> named_buffers(Module& m) {
  std::vector<std::pair<std::string, Tensor>> out;
  m.visit("", [&](const std::string& name, Tensor& t, bool is_buffer) {
    if (is_buffer) out.emplace_back(name, t);
  });
  return out;
}

std::int64_t parameter_count(Module& m) {
  std::int64_t n = 0;
  for (const auto& [name, t] : named_parameters(m)) n += t.numel();
  return n;
}

void set_requires_grad(Module& m, bool flag) {
  m.visit("", [&](const std::string&, Tensor& t, bool is_buffer) {
    if (!is_buffer) t.set_requires_grad(flag);
  });
}

void zero_grad(Module& m) {
  m.visit("", [](const std::string&, Tensor& t, bool) { t.zero_grad(); });
}

Linear::Linear(std::int64_t in, std::int64_t out, bool with_bias, Rng& rng) {
  weight = truncated_normal({out, in}, kInitStd, rng).set_requires_grad(true);
  if (with_bias) bias = zeros({out}).set_requires_grad(true);
}

Tensor Linear::forward(const Tensor& x) const { return linear(x, weight, bias); }

void Linear::visit(const std::string& prefix, const TensorVisitor& fn) {
  fn(join_name(prefix, "weight"), weight, false);
  if (bias.defined()) fn(join_name(prefix, "bias"), bias, false);
}

Conv2d::Conv2d(std::int64_t in, std::int64_t out, std::int64_t kernel, std::int64_t stride_, std::int64_t padding_,
               Rng& rng)
    : stride(stride_), padding(padding_) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in * kernel * kernel));
  weight = uniform({out, in, kernel, kernel}, -bound, bound, rng).set_requires_grad(true);
  bias = uniform({out}, -bound, bound, rng).set_requires_grad(true);
}

Tensor Conv2d::forward(const Tensor& x) const { return conv2d(x, weight, bias, stride, padding); }

void Conv2d::visit(const std::string& prefix, const TensorVisitor& fn) {
  fn(join_name(prefix, "weight"), weight, false);
  fn(join_name(prefix, "bias"), bias, false);
}

BatchNorm2d::BatchNorm2d(std::int64_t channels, double momentum_, double eps_) : momentum(momentum_), eps(eps_) {
  gamma = ones({channels}).set_requires_grad(true);
  beta = zeros({channels}).set_requires_grad(true);
  running_mean = zeros({channels});
  running_var = ones({channels});
}

Tensor BatchNorm2d::forward(const Tensor& x) {
  return batch_norm2d(x, gamma, beta, running_mean, running_var, training_, momentum, eps);
}

void BatchNorm2d::visit(const std::string& prefix, const TensorVisitor& fn) {
  fn(join_name(prefix, "gamma"), gamma, false);
  fn(join_name(prefix, "beta"), beta, false);
  fn(join_name(prefix, "running_mean"), running_mean, true);
  fn(join_name(prefix, "running_var"), running_var, true);
}

LayerNorm::LayerNorm(std::int64_t dim, double eps_) : eps(eps_) {
  gamma = ones({dim}).set_requires_grad(true);
  beta = zeros({dim}).set_requires_grad(true);
}

Tensor LayerNorm::forward(const Tensor& x) const { return layer_norm(x, gamma, beta, eps); }

void LayerNorm::visit(const std::string& prefix, const TensorVisitor& fn) {
  fn(join_name(prefix, "gamma"), gamma, false);
  fn(join_name(prefix, "beta"), beta, false);
}

Mlp::Mlp(std::int64_t dim, std::int64_t expansion, Rng& rng)
    : fc1(dim, dim * expansion, true, rng), fc2(dim * expansion, dim, true, rng) {}

Tensor Mlp::forward(const Tensor& x) const { return fc2.forward(gelu(fc1.forward(x))); }

void Mlp::visit(const std::string& prefix, const TensorVisitor& fn) {
  fc1.visit(join_name(prefix, "fc1"), fn);
  fc2.visit(join_name(prefix, "fc2"), fn);
}

Msa::Msa(std::int64_t dim_, std::int64_t heads_, Rng& rng) : dim(dim_), heads(heads_) {
  if (heads < 1 || dim % heads != 0) {
    throw ConfigError("attention dim " + std::to_string(dim) + " is not divisible by " + std::to_string(heads) +
                      " heads");
  }
  q = Linear(dim, dim, true, rng);
  k = Linear(dim, dim, true, rng);
  v = Linear(dim, dim, true, rng);
  out = Linear(dim, dim, true, rng);
}

Tensor Msa::forward(const Tensor& x, const Tensor& bias) const {
  if (x.rank() != 3 || x.size(2) != dim) {
    throw ShapeError("msa: expected [B, T, " + std::to_string(dim) + "], got " + to_string(x.shape()));
  }
  const std::int64_t B = x.size(0), T = x.size(1), hd = dim / heads;
  auto split = [&](const Tensor& t) { return reshape(permute(reshape(t, {B, T, heads, hd}), {0, 2, 1, 3}), {B * heads, T, hd}); };
  Tensor a = attention(split(q.forward(x)), split(k.forward(x)), split(v.forward(x)), bias,
                       1.0 / std::sqrt(static_cast<double>(hd)));
  return out.forward(reshape(permute(reshape(a, {B, heads, T, hd}), {0, 2, 1, 3}), {B, T, dim}));
}

void Msa::visit(const std::string& prefix, const TensorVisitor& fn) {
  q.visit(join_name(prefix, "q"), fn);
  k.visit(join_name(prefix, "k"), fn);
  v.visit(join_name(prefix, "v"), fn);
  out.visit(join_name(prefix, "out"), fn);
}

WindowAttention::WindowAttention(std::int64_t dim, std::int64_t heads, std::int64_t window_, std::int64_t shift_,
                                 Rng& rng)
    : window(window_), shift(shift_), msa(dim, heads, rng) {
  if (window < 1 || shift < 0 || shift >= window) {
    throw ConfigError("window attention needs window >= 1 and 0 <= shift < window");
  }
  relative_bias = truncated_normal({(2 * window - 1) * (2 * window - 1), heads}, kInitStd, rng).set_requires_grad(true);
}

Tensor WindowAttention::forward(const Tensor& x, std::int64_t valid_h, std::int64_t valid_w) const {
  if (x.rank() != 4) throw ShapeError("window attention: expected [N, H, W, C], got " + to_string(x.shape()));
  const std::int64_t N = x.size(0), H = x.size(1), W = x.size(2), C = x.size(3);
  if (H % window != 0 || W % window != 0) {
    throw ShapeError("window attention: grid " + std::to_string(H) + "x" + std::to_string(W) +
                     " is not a multiple of window " + std::to_string(window));
  }
  const std::int64_t sh = shift_for(H), sw = shift_for(W);
  const std::int64_t nh = H / window, nw = W / window, n_windows = nh * nw, T = window * window;
  const std::int64_t heads = msa.heads;

  Tensor h = x;
  if (sh) h = roll(h, 1, -sh);
  if (sw) h = roll(h, 2, -sw);
  h = reshape(permute(reshape(h, {N, nh, window, nw, window, C}), {0, 1, 3, 2, 4, 5}), {N * n_windows, T, C});

  // Relative position bias, one [T, T] table per head.
  std::vector<std::int64_t> index(static_cast<std::size_t>(T * T));
  for (std::int64_t a = 0; a < T; ++a) {
    for (std::int64_t b = 0; b < T; ++b) {
      const std::int64_t dy = a / window - b / window + window - 1;
      const std::int64_t dx = a % window - b % window + window - 1;
      index[static_cast<std::size_t>(a * T + b)] = dy * (2 * window - 1) + dx;
    }
  }
  Tensor rel = permute(reshape(gather_rows(relative_bias, index), {T, T, heads}), {2, 0, 1});

  // Shift-boundary and padding masks, one [T, T] table per window.
  const bool need_mask = sh || sw || valid_h < H || valid_w < W;
  Tensor bias;
  if (need_mask) {
    const auto rh = shift_regions(H, window, sh), rw = shift_regions(W, window, sw);
    std::vector<double> mask(static_cast<std::size_t>(n_windows * heads * T * T), 0.0);
    std::vector<int> region(static_cast<std::size_t>(T));
    std::vector<bool> valid(static_cast<std::size_t>(T));
    for (std::int64_t wy = 0; wy < nh; ++wy) {
      for (std::int64_t wx = 0; wx < nw; ++wx) {
        for (std::int64_t t = 0; t < T; ++t) {
          const std::int64_t y = wy * window + t / window, xx = wx * window + t % window;
          region[static_cast<std::size_t>(t)] = rh[static_cast<std::size_t>(y)] * 3 + rw[static_cast<std::size_t>(xx)];
          valid[static_cast<std::size_t>(t)] = (y + sh) % H < valid_h && (xx + sw) % W < valid_w;
        }
        double* dst = mask.data() + (wy * nw + wx) * heads * T * T;
        for (std::int64_t a = 0; a < T; ++a) {
          for (std::int64_t b = 0; b < T; ++b) {
            const bool blocked = region[static_cast<std::size_t>(a)] != region[static_cast<std::size_t>(b)] ||
                                 !valid[static_cast<std::size_t>(b)];
            if (blocked) {
              for (std::int64_t hh = 0; hh < heads; ++hh) dst[(hh * T + a) * T + b] = kMasked;
            }
          }
        }
      }
    }
    bias = reshape(repeat(rel, n_windows), {n_windows * heads, T, T}) +
           from_values({n_windows * heads, T, T}, std::move(mask), x.dtype());
  } else {
    bias = rel;
  }

  h = msa.forward(h, bias);
  h = reshape(permute(reshape(h, {N, nh, nw, window, window, C}), {0, 1, 3, 2, 4, 5}), {N, H, W, C});
  if (sh) h = roll(h, 1, sh);
  if (sw) h = roll(h, 2, sw);
  return h;
}

void WindowAttention::visit(const std::string& prefix, const TensorVisitor& fn) {
  msa.visit(prefix, fn);
  fn(join_name(prefix, "relative_bias"), relative_bias, false);
}

SwinBlock::SwinBlock(std::int64_t dim, std::int64_t heads, std::int64_t window, std::int64_t shift,
                     std::int64_t mlp_ratio, Rng& rng)
    : norm1(dim), norm2(dim), attn(dim, heads, window, shift, rng), mlp(dim, mlp_ratio, rng) {}

Tensor SwinBlock::forward(const Tensor& x) const {
  const std::int64_t H = x.size(1), W = x.size(2), ws = attn.window;
  const std::int64_t pad_h = (ws - H % ws) % ws, pad_w = (ws - W % ws) % ws;
  Tensor h = norm1.forward(x);
  h = pad(pad(h, 1, 0, pad_h), 2, 0, pad_w);
  h = attn.forward(h, H, W);
  if (pad_h) h = slice(h, 1, 0, H);
  if (pad_w) h = slice(h, 2, 0, W);
  Tensor y = x + h;
  return y + mlp.forward(norm2.forward(y));
}

void SwinBlock::visit(const std::string& prefix, const TensorVisitor& fn) {
  norm1.visit(join_name(prefix, "norm1"), fn);
  attn.visit(join_name(prefix, "attn"), fn);
  norm2.visit(join_name(prefix, "norm2"), fn);
  mlp.visit(join_name(prefix, "mlp"), fn);
}

PatchMerging::PatchMerging(std::int64_t dim, Rng& rng) : norm(4 * dim), reduction(4 * dim, 2 * dim, false, rng) {}

Tensor PatchMerging::forward(const Tensor& x) const {
  if (x.rank() != 4 || x.size(1) % 2 != 0 || x.size(2) % 2 != 0) {
    throw ShapeError("patch merging: needs [N, H, W, C] with even H and W, got " + to_string(x.shape()));
  }
  const std::int64_t N = x.size(0), H = x.size(1), W = x.size(2), C = x.size(3);
  // Neighbour order (0,0), (1,0), (0,1), (1,1) as (row, col) offsets.
  Tensor g = reshape(permute(reshape(x, {N, H / 2, 2, W / 2, 2, C}), {0, 1, 3, 4, 2, 5}), {N, H / 2, W / 2, 4 * C});
  return reduction.forward(norm.forward(g));
}

void PatchMerging::visit(const std::string& prefix, const TensorVisitor& fn) {
  norm.visit(join_name(prefix, "norm"), fn);
  reduction.visit(join_name(prefix, "reduction"), fn);
}

PatchEmbed::PatchEmbed(std::int64_t in_channels, std::int64_t dim, std::int64_t patch_, Rng& rng)
    : patch(patch_), proj(in_channels * patch_ * patch_, dim, true, rng), norm(dim) {}

Tensor PatchEmbed::forward(const Tensor& x) const {
  if (x.rank() != 4 || x.size(2) % patch != 0 || x.size(3) % patch != 0) {
    throw ShapeError("patch embed: input " + to_string(x.shape()) + " is not a multiple of patch " +
                     std::to_string(patch));
  }
  const std::int64_t N = x.size(0), C = x.size(1), H = x.size(2) / patch, W = x.size(3) / patch;
  // [N, C, H, p, W, p] -> [N, H, W, C, p, p]
  Tensor tokens = reshape(permute(reshape(x, {N, C, H, patch, W, patch}), {0, 2, 4, 1, 3, 5}),
                          {N, H, W, C * patch * patch});
  return norm.forward(proj.forward(tokens));
}

void PatchEmbed::visit(const std::string& prefix, const TensorVisitor& fn) {
  proj.visit(join_name(prefix, "proj"), fn);
  norm.visit(join_name(prefix, "norm"), fn);
}

Tensor to_channels_last(const Tensor& x) { return permute(x, {0, 2, 3, 1}); }
Tensor to_channels_first(const Tensor& x) { return permute(x, {0, 3, 1, 2}); }

}  // namespace mdsvit::nn
