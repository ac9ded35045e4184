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

#include "mdsvit/backbone.hpp"

#include "mdsvit/error.hpp"
#include "mdsvit/ops.hpp"

namespace mdsvit {

namespace {

// Extends `axis` by `count` copies of its last slice. Zero padding would give
// constant patches whose LayerNorm sits at zero variance.
Tensor replicate_edge(const Tensor& x, std::int64_t axis, std::int64_t count) {
  if (count == 0) return x;
  std::vector<Tensor> parts{x};
  const Tensor edge = slice(x, axis, x.size(axis) - 1, 1);
  for (std::int64_t i = 0; i < count; ++i) parts.push_back(edge);
  return concat(parts, axis);
}

}  // namespace

BackboneConfig BackboneConfig::toy() { return BackboneConfig{}; }

BackboneConfig BackboneConfig::large() {
  BackboneConfig c;
  c.embed_dim = 96;
  c.depths = {2, 2, 6, 2};
  c.heads = {3, 6, 12, 24};
  c.window = 7;
  return c;
}

void BackboneConfig::validate() const {
  if (in_channels < 1 || patch_size < 1 || embed_dim < 1 || window < 1 || mlp_ratio < 1) {
    throw ConfigError("backbone: in_channels, patch_size, embed_dim, window and mlp_ratio must be positive");
  }
  for (int s = 0; s < 4; ++s) {
    const auto stage = std::to_string(s + 1);
    if (depths[s] < 1) throw ConfigError("backbone: stage " + stage + " depth must be >= 1");
    if ((s == 1 || s == 2) && depths[s] < 2) {
      throw ConfigError("backbone: stage " + stage + " is tapped twice and needs depth >= 2, got " +
                        std::to_string(depths[s]));
    }
    if (heads[s] < 1 || stage_dim(s) % heads[s] != 0) {
      throw ConfigError("backbone: stage " + stage + " dim " + std::to_string(stage_dim(s)) +
                        " is not divisible by " + std::to_string(heads[s]) + " heads");
    }
  }
}

Backbone::Backbone(const BackboneConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  embed_ = nn::PatchEmbed(config_.in_channels, config_.embed_dim, config_.patch_size, rng);
  const std::int64_t shift = config_.shifted_windows ? config_.window / 2 : 0;
  for (int s = 0; s < 4; ++s) {
    for (std::int64_t b = 0; b < config_.depths[s]; ++b) {
      stages_[s].emplace_back(config_.stage_dim(s), config_.heads[s], config_.window, b % 2 ? shift : 0,
                              config_.mlp_ratio, rng);
    }
    if (s < 3) merges_[s] = nn::PatchMerging(config_.stage_dim(s), rng);
  }
}

Tensor Backbone::pad_image(const Tensor& image) const {
  if (image.rank() != 4 || image.size(1) != config_.in_channels) {
    throw ShapeError("backbone: expected [N, " + std::to_string(config_.in_channels) + ", H, W], got " +
                     to_string(image.shape()));
  }
  const std::int64_t m = config_.input_multiple();
  const std::int64_t ph = (m - image.size(2) % m) % m, pw = (m - image.size(3) % m) % m;
  if ((ph || pw) && !config_.pad_input) {
    throw ShapeError("backbone: input " + std::to_string(image.size(2)) + "x" + std::to_string(image.size(3)) +
                     " is not divisible by " + std::to_string(m) + " and padding is disabled");
  }
  return replicate_edge(replicate_edge(image, 2, ph), 3, pw);
}

Tensor Backbone::stage1(const Tensor& image) const {
  Tensor x = embed_.forward(pad_image(image));
  for (const auto& block : stages_[0]) x = block.forward(x);
  return nn::to_channels_first(x);
}

FeaturePyramid Backbone::forward(const Tensor& image) const {
  FeaturePyramid out;
  Tensor x = embed_.forward(pad_image(image));
  std::size_t next = 0;
  for (int s = 0; s < 4; ++s) {
    const auto& blocks = stages_[s];
    const std::size_t mid = (blocks.size() + 1) / 2;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      x = blocks[b].forward(x);
      if ((s == 1 || s == 2) && b + 1 == mid) out.maps[next++] = nn::to_channels_first(x);
    }
    out.maps[next++] = nn::to_channels_first(x);
    if (s < 3) x = merges_[s].forward(x);
  }
  return out;
}

void Backbone::visit(const std::string& prefix, const nn::TensorVisitor& fn) {
  embed_.visit(nn::join_name(prefix, "patch_embed"), fn);
  for (int s = 0; s < 4; ++s) {
    const std::string stage = nn::join_name(prefix, "stage" + std::to_string(s + 1));
    for (std::size_t b = 0; b < stages_[s].size(); ++b) stages_[s][b].visit(nn::join_name(stage, std::to_string(b)), fn);
    if (s < 3) merges_[s].visit(nn::join_name(stage, "merge"), fn);
  }
}

}  // namespace mdsvit
