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

#include "mdsvit/model.hpp"

#include <json.hpp>

#include "mdsvit/error.hpp"
#include "mdsvit/nn/functional.hpp"
#include "mdsvit/ops.hpp"

namespace mdsvit {

namespace {

constexpr std::array<std::int64_t, 6> kFeatureStride{4, 8, 8, 16, 16, 32};

std::string dims_text(std::int64_t c, std::int64_t h, std::int64_t w) {
  return "[" + std::to_string(c) + "," + std::to_string(h) + "," + std::to_string(w) + "]";
}

// Shape of the activation right after decoder layer `layer` (0-based).
std::array<std::int64_t, 3> decoder_shape_after(const std::vector<std::int64_t>& channels, std::int64_t h,
                                                std::int64_t w, std::int64_t upsamples, std::size_t layer) {
  for (std::size_t l = 0; l <= layer; ++l) {
    if (static_cast<std::int64_t>(l) < upsamples) {
      h *= 2;
      w *= 2;
    }
  }
  return {channels[layer], h, w};
}

}  // namespace

ModelConfig ModelConfig::toy() { return ModelConfig{}; }

ModelConfig ModelConfig::large() {
  ModelConfig c;
  c.preset = "large";
  c.height = 288;
  c.width = 384;
  c.scale = 1.0;
  c.backbone = BackboneConfig::large();
  c.encoder_dims = {512, 512, 768, 768, 768, 768};
  c.encoder_heads = {8, 8, 12, 12, 12, 12};
  c.decoder_channels = {768, 512, 256, 128, 64, 32, 1};
  c.merge_channels = {64, 128, 128, 96, 64, 32, 1};
  return c;
}

ModelConfig ModelConfig::preset_named(const std::string& name) {
  if (name == "toy") return toy();
  if (name == "large") return large();
  throw ConfigError("unknown model preset '" + name + "' (valid: toy, large)");
}

std::array<std::int64_t, 2> ModelConfig::grid(int i) const {
  const auto s = kFeatureStride[static_cast<std::size_t>(i)] * backbone.patch_size / 4;
  return {height / s, width / s};
}

void ModelConfig::validate() const {
  backbone.validate();
  const std::int64_t m = backbone.input_multiple();
  if (height < m || width < m || height % m != 0 || width % m != 0) {
    throw ConfigError("model: input " + std::to_string(height) + "x" + std::to_string(width) +
                      " must be a positive multiple of " + std::to_string(m));
  }
  if (encoder_layers < 1 || mlp_ratio < 1) throw ConfigError("model: encoder_layers and mlp_ratio must be >= 1");
  for (int i = 0; i < 6; ++i) {
    if (encoder_dims[i] < 1 || encoder_heads[i] < 1 || encoder_dims[i] % encoder_heads[i] != 0) {
      throw ConfigError("model: encoder " + std::to_string(i + 1) + " dim " + std::to_string(encoder_dims[i]) +
                        " is not divisible by " + std::to_string(encoder_heads[i]) + " heads");
    }
  }
  for (const auto* sched : {&decoder_channels, &merge_channels}) {
    const char* what = sched == &decoder_channels ? "decoder" : "merge";
    if (sched->size() != 7 || sched->back() != 1) {
      throw ConfigError(std::string("model: ") + what + " schedule needs 7 entries ending in 1");
    }
    for (auto c : *sched) {
      if (c < 1) throw ConfigError(std::string("model: ") + what + " channels must be positive");
    }
  }
  // Decoder 1 reads e6 with skips e4, e2 and five upsamples; decoder 2 reads
  // e5 with skips e3, e1 and four upsamples. Both must land on the input size.
  struct Plan {
    int input, skip1, skip2;
    std::int64_t upsamples;
  };
  for (const Plan& p : {Plan{5, 3, 1, 5}, Plan{4, 2, 0, 4}}) {
    const auto [h, w] = grid(p.input);
    const std::string name = p.input == 5 ? "decoder 1" : "decoder 2";
    for (auto [layer, skip] : {std::pair{0, p.skip1}, std::pair{1, p.skip2}}) {
      const auto got = decoder_shape_after(decoder_channels, h, w, p.upsamples, static_cast<std::size_t>(layer));
      const auto [sh, sw] = grid(skip);
      if (got[0] != encoder_dims[skip] || got[1] != sh || got[2] != sw) {
        throw ConfigError("model: " + name + " layer " + std::to_string(layer + 1) + " produces " +
                          dims_text(got[0], got[1], got[2]) + " but skip e" + std::to_string(skip + 1) + " is " +
                          dims_text(encoder_dims[skip], sh, sw));
      }
    }
    const auto out = decoder_shape_after(decoder_channels, h, w, p.upsamples, 6);
    if (out[1] != height || out[2] != width) {
      throw ConfigError("model: " + name + " output " + dims_text(out[0], out[1], out[2]) +
                        " does not match the input size");
    }
  }
}

std::string ModelConfig::to_json() const {
  nlohmann::ordered_json j;
  j["preset"] = preset;
  j["height"] = height;
  j["width"] = width;
  j["scale"] = scale;
  j["backbone"] = {{"in_channels", backbone.in_channels}, {"patch_size", backbone.patch_size},
                   {"embed_dim", backbone.embed_dim},     {"depths", backbone.depths},
                   {"heads", backbone.heads},             {"window", backbone.window},
                   {"mlp_ratio", backbone.mlp_ratio},     {"shifted_windows", backbone.shifted_windows},
                   {"pad_input", backbone.pad_input}};
  j["encoder_dims"] = encoder_dims;
  j["encoder_heads"] = encoder_heads;
  j["encoder_layers"] = encoder_layers;
  j["mlp_ratio"] = mlp_ratio;
  j["decoder_channels"] = decoder_channels;
  j["merge_channels"] = merge_channels;
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    ModelConfig c = preset_named(j.value("preset", std::string("toy")));
    c.height = j.value("height", c.height);
    c.width = j.value("width", c.width);
    c.scale = j.value("scale", c.scale);
    if (j.contains("backbone")) {
      const auto& b = j["backbone"];
      c.backbone.in_channels = b.value("in_channels", c.backbone.in_channels);
      c.backbone.patch_size = b.value("patch_size", c.backbone.patch_size);
      c.backbone.embed_dim = b.value("embed_dim", c.backbone.embed_dim);
      c.backbone.depths = b.value("depths", c.backbone.depths);
      c.backbone.heads = b.value("heads", c.backbone.heads);
      c.backbone.window = b.value("window", c.backbone.window);
      c.backbone.mlp_ratio = b.value("mlp_ratio", c.backbone.mlp_ratio);
      c.backbone.shifted_windows = b.value("shifted_windows", c.backbone.shifted_windows);
      c.backbone.pad_input = b.value("pad_input", c.backbone.pad_input);
    }
    c.encoder_dims = j.value("encoder_dims", c.encoder_dims);
    c.encoder_heads = j.value("encoder_heads", c.encoder_heads);
    c.encoder_layers = j.value("encoder_layers", c.encoder_layers);
    c.mlp_ratio = j.value("mlp_ratio", c.mlp_ratio);
    c.decoder_channels = j.value("decoder_channels", c.decoder_channels);
    c.merge_channels = j.value("merge_channels", c.merge_channels);
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
}

TransformerEncoder::TransformerEncoder(std::int64_t in_channels, std::int64_t dim, std::int64_t heads,
                                       std::int64_t n_layers, std::int64_t mlp_ratio, std::int64_t grid_h_,
                                       std::int64_t grid_w_, Rng& rng)
    : grid_h(grid_h_), grid_w(grid_w_), proj(in_channels, dim, 1, 1, 0, rng) {
  pos = truncated_normal({grid_h * grid_w, dim}, 0.02, rng).set_requires_grad(true);
  for (std::int64_t l = 0; l < n_layers; ++l) {
    layers.push_back(Layer{nn::LayerNorm(dim), nn::LayerNorm(dim), nn::Msa(dim, heads, rng), nn::Mlp(dim, mlp_ratio, rng)});
  }
}

Tensor TransformerEncoder::forward(const Tensor& x) const {
  if (x.rank() != 4 || x.size(2) != grid_h || x.size(3) != grid_w) {
    throw ShapeError("encoder: input " + to_string(x.shape()) + " does not match the position grid " +
                     std::to_string(grid_h) + "x" + std::to_string(grid_w));
  }
  const std::int64_t N = x.size(0), dim = pos.size(1);
  Tensor z = reshape(nn::to_channels_last(proj.forward(x)), {N, grid_h * grid_w, dim}) + repeat(pos, N);
  for (const auto& layer : layers) {
    z = z + layer.msa.forward(layer.norm1.forward(z));
    z = z + layer.mlp.forward(layer.norm2.forward(z));
  }
  return nn::to_channels_first(reshape(z, {N, grid_h, grid_w, dim}));
}

void TransformerEncoder::visit(const std::string& prefix, const nn::TensorVisitor& fn) {
  proj.visit(nn::join_name(prefix, "proj"), fn);
  fn(nn::join_name(prefix, "pos"), pos, false);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string p = nn::join_name(prefix, "layer" + std::to_string(l));
    layers[l].norm1.visit(nn::join_name(p, "norm1"), fn);
    layers[l].msa.visit(nn::join_name(p, "msa"), fn);
    layers[l].norm2.visit(nn::join_name(p, "norm2"), fn);
    layers[l].mlp.visit(nn::join_name(p, "mlp"), fn);
  }
}

DecoderHead::DecoderHead(std::int64_t in_channels, const std::vector<std::int64_t>& channels, std::int64_t upsamples_,
                         Rng& rng)
    : upsamples(upsamples_) {
  std::int64_t in = in_channels;
  for (std::size_t l = 0; l < channels.size(); ++l) {
    convs.emplace_back(in, channels[l], 3, 1, 1, rng);
    if (l + 1 < channels.size()) norms.emplace_back(channels[l]);
    in = channels[l];
  }
}

Tensor DecoderHead::forward(const Tensor& deepest, const Tensor& skip1, const Tensor& skip2,
                            std::vector<Tensor>* layer_inputs) {
  Tensor x = deepest;
  for (std::size_t l = 0; l < convs.size(); ++l) {
    if (layer_inputs) layer_inputs->push_back(x);
    x = convs[l].forward(x);
    x = l < norms.size() ? relu(norms[l].forward(x)) : sigmoid(x);
    if (static_cast<std::int64_t>(l) < upsamples) x = nn::upsample_bilinear(x, 2);
    if (l == 0 && skip1.defined()) x = x * skip1;
    if (l == 1 && skip2.defined()) x = x * skip2;
  }
  return x;
}

void DecoderHead::visit(const std::string& prefix, const nn::TensorVisitor& fn) {
  for (std::size_t l = 0; l < convs.size(); ++l) {
    convs[l].visit(nn::join_name(prefix, "conv" + std::to_string(l + 1)), fn);
    if (l < norms.size()) norms[l].visit(nn::join_name(prefix, "bn" + std::to_string(l + 1)), fn);
  }
}

void DecoderHead::set_training(bool training) {
  Module::set_training(training);
  for (auto& n : norms) n.set_training(training);
}

MergeNet::MergeNet(const std::vector<std::int64_t>& channels, Rng& rng) {
  std::int64_t in = 2;
  for (std::size_t l = 0; l < channels.size(); ++l) {
    convs.emplace_back(in, channels[l], 3, 1, 1, rng);
    if (l + 1 < channels.size()) norms.emplace_back(channels[l]);
    in = channels[l];
  }
}

Tensor MergeNet::forward(const Tensor& map1, const Tensor& map2) {
  if (map1.shape() != map2.shape() || map1.rank() != 4 || map1.size(1) != 1) {
    throw ShapeError("merge: maps must share an [N, 1, H, W] shape, got " + to_string(map1.shape()) + " and " +
                     to_string(map2.shape()));
  }
  Tensor x = concat({map1, map2}, 1);
  for (std::size_t l = 0; l < convs.size(); ++l) {
    x = convs[l].forward(x);
    x = l < norms.size() ? relu(norms[l].forward(x)) : sigmoid(x);
  }
  return x;
}

void MergeNet::visit(const std::string& prefix, const nn::TensorVisitor& fn) {
  for (std::size_t l = 0; l < convs.size(); ++l) {
    convs[l].visit(nn::join_name(prefix, "conv" + std::to_string(l + 1)), fn);
    if (l < norms.size()) norms[l].visit(nn::join_name(prefix, "bn" + std::to_string(l + 1)), fn);
  }
}

void MergeNet::set_training(bool training) {
  Module::set_training(training);
  for (auto& n : norms) n.set_training(training);
}

SaliencyModel::SaliencyModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  backbone = Backbone(config_.backbone, mix_seed(seed, 1));
  Rng enc_rng(mix_seed(seed, 2));
  for (int i = 0; i < 6; ++i) {
    const auto [h, w] = config_.grid(i);
    const std::int64_t in = config_.backbone.stage_dim(std::array{0, 1, 1, 2, 2, 3}[static_cast<std::size_t>(i)]);
    encoders[static_cast<std::size_t>(i)] = TransformerEncoder(in, config_.encoder_dims[i], config_.encoder_heads[i],
                                                               config_.encoder_layers, config_.mlp_ratio, h, w, enc_rng);
  }
  Rng dec_rng(mix_seed(seed, 3));
  decoder1 = DecoderHead(config_.encoder_dims[5], config_.decoder_channels, 5, dec_rng);
  decoder2 = DecoderHead(config_.encoder_dims[4], config_.decoder_channels, 4, dec_rng);
  Rng merge_rng(mix_seed(seed, 4));
  merge = MergeNet(config_.merge_channels, merge_rng);
}

std::array<Tensor, 6> SaliencyModel::encode(const Tensor& image) {
  if (image.rank() != 4 || image.size(1) != config_.backbone.in_channels || image.size(2) != config_.height ||
      image.size(3) != config_.width) {
    throw ShapeError("model: expected input [N, " + std::to_string(config_.backbone.in_channels) + ", " +
                     std::to_string(config_.height) + ", " + std::to_string(config_.width) + "], got " +
                     to_string(image.shape()) + "; a different resolution needs a rebuilt model");
  }
  const FeaturePyramid features = backbone.forward(image);
  std::array<Tensor, 6> e;
  for (std::size_t i = 0; i < 6; ++i) e[i] = encoders[i].forward(features[i]);
  return e;
}

SaliencyMaps SaliencyModel::forward(const Tensor& image, ForwardMode mode) {
  const auto e = encode(image);
  SaliencyMaps out;
  out.map1 = decoder1.forward(e[5], e[3], e[1]);
  out.map2 = decoder2.forward(e[4], e[2], e[0]);
  if (mode == ForwardMode::merged) out.merged = merge.forward(out.map1, out.map2);
  return out;
}

void SaliencyModel::visit_main(const std::string& prefix, const nn::TensorVisitor& fn) {
  backbone.visit(nn::join_name(prefix, "backbone"), fn);
  for (std::size_t i = 0; i < 6; ++i) encoders[i].visit(nn::join_name(prefix, "encoder" + std::to_string(i + 1)), fn);
  decoder1.visit(nn::join_name(prefix, "decoder1"), fn);
  decoder2.visit(nn::join_name(prefix, "decoder2"), fn);
}

void SaliencyModel::visit(const std::string& prefix, const nn::TensorVisitor& fn) {
  visit_main(prefix, fn);
  merge.visit(nn::join_name(prefix, "merge"), fn);
}

void SaliencyModel::set_training(bool training) {
  Module::set_training(training);
  decoder1.set_training(training);
  decoder2.set_training(training);
  merge.set_training(training);
}

ParameterCounts SaliencyModel::count_parameters() {
  ParameterCounts c;
  c.backbone = parameter_count(backbone);
  for (auto& e : encoders) c.encoders += parameter_count(e);
  c.decoders = parameter_count(decoder1) + parameter_count(decoder2);
  c.merge = parameter_count(merge);
  c.total = parameter_count(*this);
  return c;
}

}  // namespace mdsvit
