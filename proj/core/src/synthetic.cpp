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

#include "mdsvit/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "mdsvit/error.hpp"
#include "mdsvit/image_io.hpp"
#include "mdsvit/random.hpp"

namespace mdsvit {

void SynthConfig::validate() const {
  if (count < 1) throw ConfigError("synthesize: count must be >= 1, got " + std::to_string(count));
  if (height < 8 || width < 8) {
    throw ConfigError("synthesize: resolution must be at least 8x8, got " + std::to_string(height) + "x" +
                      std::to_string(width));
  }
  if (max_blobs < 1) throw ConfigError("synthesize: max_blobs must be >= 1");
}

SaliencySample synthesize_sample(const SynthConfig& config, std::int64_t index) {
  config.validate();
  Rng rng(mix_seed(config.seed, static_cast<std::uint64_t>(index), 0x5e4d));
  const std::int64_t h = config.height, w = config.width;
  const std::size_t plane = static_cast<std::size_t>(h * w);

  // Background: a soft color gradient plus a sinusoidal texture and noise.
  double base[3], tilt[3];
  for (int c = 0; c < 3; ++c) {
    base[c] = rng.uniform(0.2, 0.5);
    tilt[c] = rng.uniform(-0.15, 0.15);
  }
  const double fx = rng.uniform(0.1, 0.4), fy = rng.uniform(0.1, 0.4), phase = rng.uniform(0.0, 6.28);
  std::vector<double> image(3 * plane);
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x) {
      const double texture = 0.05 * std::sin(fx * x + phase) * std::cos(fy * y);
      for (int c = 0; c < 3; ++c) {
        image[c * plane + y * w + x] = base[c] + tilt[c] * (static_cast<double>(x) / w - 0.5) + texture +
                                       rng.uniform(-0.03, 0.03);
      }
    }

  const std::int64_t blobs = 1 + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(config.max_blobs)));
  const double short_side = static_cast<double>(std::min(h, w));
  std::vector<double> saliency(plane, 0.0), fixation(plane, 0.0);
  for (std::int64_t b = 0; b < blobs; ++b) {
    const double radius = rng.uniform(0.06, 0.14) * short_side;
    const double cy = rng.uniform(radius, static_cast<double>(h) - radius);
    const double cx = rng.uniform(radius, static_cast<double>(w) - radius);
    double color[3];
    for (double& v : color) v = rng.uniform(0.0, 1.0);
    color[rng.below(3)] = rng.uniform(0.85, 1.0);  // keep blobs vivid
    const double sigma = 0.8 * radius;
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < w; ++x) {
        const double d = std::hypot(y + 0.5 - cy, x + 0.5 - cx);
        const double alpha = std::clamp(radius - d + 0.5, 0.0, 1.0);
        const std::size_t p = static_cast<std::size_t>(y * w + x);
        for (int c = 0; c < 3; ++c) image[c * plane + p] = (1 - alpha) * image[c * plane + p] + alpha * color[c];
        saliency[p] += std::exp(-0.5 * d * d / (sigma * sigma));
      }
    const auto fy_px = std::clamp<std::int64_t>(static_cast<std::int64_t>(cy), 0, h - 1);
    const auto fx_px = std::clamp<std::int64_t>(static_cast<std::int64_t>(cx), 0, w - 1);
    fixation[static_cast<std::size_t>(fy_px * w + fx_px)] = 1.0;
  }
  for (double& v : image) v = std::clamp(v, 0.0, 1.0);
  const auto [lo, hi] = std::minmax_element(saliency.begin(), saliency.end());
  const double low = *lo, range = *hi - *lo;
  for (double& v : saliency) v = (v - low) / range;

  char id[32];
  std::snprintf(id, sizeof id, "synth_%04lld", static_cast<long long>(index));
  return {from_values({3, h, w}, std::move(image)), from_values({1, h, w}, std::move(saliency)),
          from_values({1, h, w}, std::move(fixation)), id};
}

DatasetManifest synthesize_dataset(const std::string& root, const SynthConfig& config) {
  config.validate();
  namespace fs = std::filesystem;
  const fs::path base(root);
  for (const char* kind : {"images", "maps", "fixations"}) fs::create_directories(base / kind / config.split);
  for (std::int64_t i = 0; i < config.count; ++i) {
    const SaliencySample s = synthesize_sample(config, i);
    encode_image((base / "images" / config.split / (s.id + ".ppm")).string(), s.image);
    encode_image((base / "maps" / config.split / (s.id + ".pgm")).string(), s.saliency);
    encode_image((base / "fixations" / config.split / (s.id + ".pgm")).string(), s.fixation);
  }
  return load_manifest(root, config.split);
}

}  // namespace mdsvit
