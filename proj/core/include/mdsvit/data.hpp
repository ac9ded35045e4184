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

#include "mdsvit/tensor.hpp"

namespace mdsvit {

/// One image with its labels. Images are [3, H, W] in [0, 1] until
/// normalized; saliency and fixations are [1, H, W] in [0, 1].
struct SaliencySample {
  Tensor image;
  Tensor saliency;
  Tensor fixation;  // undefined when the dataset has none
  std::string id;
};

struct ManifestEntry {
  std::string id;
  std::string image;
  std::string map;
  std::string fixation;  // empty when absent
};

/// Files of one split: root/{images,maps,fixations}/<split>/<id>.{ppm|pgm|png}.
struct DatasetManifest {
  std::string root;
  std::string split;
  std::vector<ManifestEntry> entries;  // sorted by id
};

/// Scans the split directories. Every image needs a map with the same id;
/// fixations are attached when the fixation directory exists. Throws
/// DataError naming orphan files or missing directories.
DatasetManifest load_manifest(const std::string& root, const std::string& split);
/// Tab-separated cache: a "root\tsplit" header line, then one
/// "id\timage\tmap\tfixation" line per entry.
void save_manifest(const DatasetManifest& manifest, const std::string& path);
/// Reads a cache and checks that every listed file still exists.
DatasetManifest read_manifest(const std::string& path);

/// Decodes the files of one entry. Grayscale images are expanded to three
/// channels; color maps are reduced to their channel mean.
SaliencySample load_sample(const ManifestEntry& entry);

struct PreprocessConfig {
  std::int64_t height = 96;
  std::int64_t width = 128;
  std::array<double, 3> mean{0.485, 0.456, 0.406};
  std::array<double, 3> std{0.229, 0.224, 0.225};

  /// Throws ConfigError unless both sides are positive multiples of 32.
  void validate() const;
};

/// Bilinear resize of image and saliency (saliency then min-max rescaled).
/// Fixation points (values >= 0.5) move to their scaled pixel positions. DegenerateInputError when the
/// saliency map is constant.
SaliencySample resize_sample(const SaliencySample& sample, std::int64_t height, std::int64_t width);
/// (v - mean_c) / std_c on a [3, H, W] or [N, 3, H, W] image.
Tensor normalize_image(const Tensor& image, const std::array<double, 3>& mean, const std::array<double, 3>& std);
/// resize_sample followed by normalize_image.
SaliencySample preprocess(const SaliencySample& sample, const PreprocessConfig& config);

struct AugmentConfig {
  double p_flip = 0.5;
  double p_blur = 0.3;
  double blur_sigma_min = 0.3;
  double blur_sigma_max = 1.5;
  double p_jitter = 0.5;
  double brightness = 0.2;
  double contrast = 0.2;
  double saturation = 0.2;
  double sharpness = 0.2;

  /// Throws ConfigError on probabilities outside [0, 1], a non-positive or
  /// reversed sigma range, or jitter magnitudes outside [0, 1).
  void validate() const;
  /// Flip only, always.
  static AugmentConfig flip_only();
  static AugmentConfig none();
};

/// Random label-preserving augmentation of a resized, not yet normalized
/// sample. Horizontal flips move image, saliency and fixations together;
/// blur and jitter touch the image only. Outputs stay in [0, 1].
SaliencySample augment(const SaliencySample& sample, const AugmentConfig& config, std::uint64_t seed);

/// Separable Gaussian blur (radius ceil(3 sigma), normalized kernel,
/// clamped borders) of a [C, H, W] tensor.
Tensor gaussian_blur(const Tensor& image, double sigma);
Tensor flip_horizontal(const Tensor& chw);

struct Batch {
  Tensor images;     // [B, 3, H, W], normalized
  Tensor saliency;   // [B, 1, H, W]
  Tensor fixations;  // [B, 1, H, W], undefined unless every sample has one
  std::vector<std::string> ids;
};

struct LoaderOptions {
  std::int64_t batch_size = 4;
  bool shuffle = true;
  bool augment = false;
  std::uint64_t seed = 0;
  PreprocessConfig preprocess;
  AugmentConfig augmentation;
};

/// Loads and resizes every sample once; batches are cut per epoch. The order
/// and augmentation of epoch e depend only on (seed, e).
class SaliencyDataset {
 public:
  SaliencyDataset(const DatasetManifest& manifest, LoaderOptions options);

  std::int64_t size() const { return static_cast<std::int64_t>(samples_.size()); }
  std::int64_t batches_per_epoch() const;
  /// Sample indices of every batch of an epoch, in delivery order. A zero
  /// batch_size uses the loader option.
  std::vector<std::vector<std::int64_t>> epoch_order(std::int64_t epoch, std::int64_t batch_size = 0) const;
  std::vector<Batch> epoch(std::int64_t epoch) const;
  /// Collates the given samples, augmenting when enabled.
  Batch make_batch(const std::vector<std::int64_t>& indices, std::int64_t epoch) const;

  const std::vector<SaliencySample>& samples() const { return samples_; }
  const LoaderOptions& options() const { return options_; }

 private:
  LoaderOptions options_;
  std::vector<SaliencySample> samples_;  // resized, unnormalized
};

}  // namespace mdsvit
