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
#include <string>
#include <vector>

#include "mdsvit/backbone.hpp"
#include "mdsvit/nn/layers.hpp"

namespace mdsvit {

struct ModelConfig {
  std::string preset = "toy";
  std::int64_t height = 96;
  std::int64_t width = 128;
  double scale = 1.0 / 16.0;  // channel scale relative to the full-size model
  BackboneConfig backbone = BackboneConfig::toy();
  std::array<std::int64_t, 6> encoder_dims{32, 32, 48, 48, 48, 48};
  std::array<std::int64_t, 6> encoder_heads{4, 4, 6, 6, 6, 6};
  std::int64_t encoder_layers = 2;
  std::int64_t mlp_ratio = 4;
  /// Output channels of the seven decoder convs; the last must be 1.
  std::vector<std::int64_t> decoder_channels{48, 32, 24, 16, 16, 8, 1};
  /// Output channels of the seven merge convs (input is 2 channels).
  std::vector<std::int64_t> merge_channels{16, 32, 32, 16, 8, 4, 1};

  static ModelConfig toy();
  static ModelConfig large();
  /// Preset by name ("toy" or "large"); throws ConfigError otherwise.
  static ModelConfig preset_named(const std::string& name);

  /// Token grid (h, w) of feature map i (0-based) at the configured size.
  std::array<std::int64_t, 2> grid(int i) const;
  /// Checks every shape relation the assembled model relies on, including
  /// that each decoder skip matches the tensor it multiplies.
  void validate() const;

  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
};

/// 1x1 projection, learned absolute position embedding and pre-norm
/// transformer layers over the flattened (row-major) token grid.
class TransformerEncoder : public nn::Module {
 public:
  struct Layer {
    nn::LayerNorm norm1, norm2;
    nn::Msa msa;
    nn::Mlp mlp;
  };

  TransformerEncoder() = default;
  TransformerEncoder(std::int64_t in_channels, std::int64_t dim, std::int64_t heads, std::int64_t layers,
                     std::int64_t mlp_ratio, std::int64_t grid_h, std::int64_t grid_w, Rng& rng);
  /// [N, C, h, w] -> [N, dim, h, w].
  Tensor forward(const Tensor& x) const;
  void visit(const std::string& prefix, const nn::TensorVisitor& fn) override;

  std::int64_t grid_h = 0, grid_w = 0;
  nn::Conv2d proj;
  Tensor pos;  // [h*w, dim]
  std::vector<Layer> layers;
};

/// Seven 3x3 convs, BN + ReLU after the first six, sigmoid after the last.
/// Bilinear x2 upsampling follows each of the first `upsamples` layers; the
/// two skip maps multiply the activations after layers 1 and 2.
class DecoderHead : public nn::Module {
 public:
  DecoderHead() = default;
  DecoderHead(std::int64_t in_channels, const std::vector<std::int64_t>& channels, std::int64_t upsamples, Rng& rng);
  /// An undefined skip disables that multiplication. When `layer_inputs` is
  /// given it receives the input of every conv layer.
  Tensor forward(const Tensor& deepest, const Tensor& skip1, const Tensor& skip2,
                 std::vector<Tensor>* layer_inputs = nullptr);
  void visit(const std::string& prefix, const nn::TensorVisitor& fn) override;
  void set_training(bool training) override;

  std::int64_t upsamples = 0;
  std::vector<nn::Conv2d> convs;
  std::vector<nn::BatchNorm2d> norms;
};

/// Fuses the two decoder maps: concat on channels, seven 3x3 convs.
class MergeNet : public nn::Module {
 public:
  MergeNet() = default;
  MergeNet(const std::vector<std::int64_t>& channels, Rng& rng);
  Tensor forward(const Tensor& map1, const Tensor& map2);
  void visit(const std::string& prefix, const nn::TensorVisitor& fn) override;
  void set_training(bool training) override;

  std::vector<nn::Conv2d> convs;
  std::vector<nn::BatchNorm2d> norms;
};

enum class ForwardMode { dual, merged };

struct SaliencyMaps {
  Tensor map1, map2;
  Tensor merged;  // undefined in dual mode
};

struct ParameterCounts {
  std::int64_t backbone = 0, encoders = 0, decoders = 0, merge = 0, total = 0;
};

class SaliencyModel : public nn::Module {
 public:
  SaliencyModel() = default;
  SaliencyModel(const ModelConfig& config, std::uint64_t seed);

  /// image [N, 3, H, W] at the configured resolution.
  SaliencyMaps forward(const Tensor& image, ForwardMode mode = ForwardMode::dual);
  /// Encoder outputs e1..e6 for an image.
  std::array<Tensor, 6> encode(const Tensor& image);

  /// Everything except the merge head.
  void visit_main(const std::string& prefix, const nn::TensorVisitor& fn);
  void visit(const std::string& prefix, const nn::TensorVisitor& fn) override;
  void set_training(bool training) override;

  ParameterCounts count_parameters();
  const ModelConfig& config() const { return config_; }

  Backbone backbone;
  std::array<TransformerEncoder, 6> encoders;
  DecoderHead decoder1, decoder2;
  MergeNet merge;

 private:
  ModelConfig config_;
};

/// Adapts a visiting function into a Module (e.g. the main part of a model).
class ModuleView : public nn::Module {
 public:
  explicit ModuleView(std::function<void(const std::string&, const nn::TensorVisitor&)> fn) : fn_(std::move(fn)) {}
  void visit(const std::string& prefix, const nn::TensorVisitor& fn) override { fn_(prefix, fn); }

 private:
  std::function<void(const std::string&, const nn::TensorVisitor&)> fn_;
};

}  // namespace mdsvit
