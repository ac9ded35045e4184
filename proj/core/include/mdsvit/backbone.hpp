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

#include <array>
#include <cstdint>
#include <vector>

#include "mdsvit/nn/layers.hpp"
#include "mdsvit/tensor.hpp"

namespace mdsvit {

struct BackboneConfig {
  std::int64_t in_channels = 3;
  std::int64_t patch_size = 4;
  std::int64_t embed_dim = 16;
  std::array<std::int64_t, 4> depths{1, 2, 2, 1};
  std::array<std::int64_t, 4> heads{2, 2, 4, 4};
  std::int64_t window = 4;
  std::int64_t mlp_ratio = 4;
  bool shifted_windows = true;
  /// Pad inputs (bottom/right, edge-replicated) up to a multiple of
  /// 8 * patch_size; when false such inputs are rejected.
  bool pad_input = true;

  static BackboneConfig toy();
  static BackboneConfig large();

  /// Channels of stage s (0-based): embed_dim * 2^s.
  std::int64_t stage_dim(int stage) const { return embed_dim << stage; }
  /// Multiple every input side is padded to.
  std::int64_t input_multiple() const { return patch_size * 8; }
  /// Throws ConfigError on invalid settings.
  void validate() const;
};

/// Six multi-scale maps, channels-first. x1 is 1/4 of the (padded) input,
/// x2 and x3 are 1/8, x4 and x5 are 1/16, x6 is 1/32.
struct FeaturePyramid {
  std::array<Tensor, 6> maps;
  const Tensor& operator[](std::size_t i) const { return maps[i]; }
};

/// Swin-style four-stage encoder. Stages 2 and 3 are tapped twice: after
/// block ceil(d/2) and at the stage output.
class Backbone : public nn::Module {
 public:
  Backbone() = default;
  Backbone(const BackboneConfig& config, std::uint64_t seed);

  FeaturePyramid forward(const Tensor& image) const;
  /// Stage-1 output only (x1), for locality checks.
  Tensor stage1(const Tensor& image) const;

  void visit(const std::string& prefix, const nn::TensorVisitor& fn) override;
  const BackboneConfig& config() const { return config_; }

 private:
  Tensor pad_image(const Tensor& image) const;

  BackboneConfig config_;
  nn::PatchEmbed embed_;
  std::array<std::vector<nn::SwinBlock>, 4> stages_;
  std::array<nn::PatchMerging, 3> merges_;
};

}  // namespace mdsvit
