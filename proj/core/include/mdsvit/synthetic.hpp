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
#include <string>

#include "mdsvit/data.hpp"

namespace mdsvit {

struct SynthConfig {
  std::int64_t count = 4;
  std::int64_t height = 96;
  std::int64_t width = 128;
  std::uint64_t seed = 0;
  std::string split = "train";
  std::int64_t max_blobs = 3;

  /// Throws ConfigError on a non-positive count, size or blob limit.
  void validate() const;
};

/// One generated sample: colored soft-edged blobs on a textured background,
/// a saliency map made of Gaussian bumps on the blobs (min 0, max 1), and a
/// binary fixation map with one point per blob center. Depends only on
/// (seed, index).
SaliencySample synthesize_sample(const SynthConfig& config, std::int64_t index);

/// Writes count samples as root/{images,maps,fixations}/<split>/synth_NNNN.{ppm,pgm}
/// and returns the resulting manifest.
DatasetManifest synthesize_dataset(const std::string& root, const SynthConfig& config);

}  // namespace mdsvit
