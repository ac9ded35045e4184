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

#include "mdsvit/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "mdsvit/autograd.hpp"
#include "mdsvit/error.hpp"
#include "mdsvit/image_io.hpp"
#include "mdsvit/nn/functional.hpp"
#include "mdsvit/ops.hpp"
#include "mdsvit/random.hpp"

namespace fs = std::filesystem;

namespace mdsvit {

namespace {

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".ppm" || ext == ".pgm" || ext == ".png";
}

// id -> path for every image file in dir.
std::map<std::string, std::string> index_directory(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file() || !is_image_file(e.path())) continue;
    const std::string id = e.path().stem().string();
    if (!out.emplace(id, e.path().string()).second) {
      throw DataError("ambiguous id '" + id + "' in " + dir.string() + ": " + out[id] + " and " + e.path().string());
    }
  }
  return out;
}

std::string join_orphans(const std::vector<std::string>& names) {
  std::string s;
  for (std::size_t i = 0; i < names.size() && i < 10; ++i) s += (i ? ", " : "") + names[i];
  if (names.size() > 10) s += ", ... (" + std::to_string(names.size()) + " total)";
  return s;
}

// Plane-major [C, H, W] values with its extents.
struct Planes {
  std::int64_t c, h, w;
  std::vector<double> v;
  double& at(std::int64_t k, std::int64_t y, std::int64_t x) { return v[static_cast<std::size_t>((k * h + y) * w + x)]; }
};

Planes planes_of(const Tensor& t) { return {t.size(0), t.size(1), t.size(2), t.to_vector()}; }
Tensor tensor_of(const Planes& p, DType dtype) { return from_values({p.c, p.h, p.w}, p.v, dtype); }

double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

std::vector<double> luminance(const Planes& p) {
  const std::size_t plane = static_cast<std::size_t>(p.h * p.w);
  std::vector<double> g(plane);
  for (std::size_t i = 0; i < plane; ++i) g[i] = 0.299 * p.v[i] + 0.587 * p.v[plane + i] + 0.114 * p.v[2 * plane + i];
  return g;
}

// Smoothing used by the sharpness adjustment: 3x3 kernel with centre weight
// 5 and the others 1; border pixels are left as they are.
Planes smooth3(const Planes& p) {
  Planes out = p;
  for (std::int64_t k = 0; k < p.c; ++k)
    for (std::int64_t y = 1; y + 1 < p.h; ++y)
      for (std::int64_t x = 1; x + 1 < p.w; ++x) {
        double s = 0;
        for (std::int64_t dy = -1; dy <= 1; ++dy)
          for (std::int64_t dx = -1; dx <= 1; ++dx) s += p.v[static_cast<std::size_t>((k * p.h + y + dy) * p.w + x + dx)];
        s += 4 * p.v[static_cast<std::size_t>((k * p.h + y) * p.w + x)];
        out.at(k, y, x) = s / 13.0;
      }
  return out;
}

// Moves every fixation point to its scaled position, so sparse points
// survive downsampling (coinciding points merge).
Tensor scatter_points(const Tensor& chw, std::int64_t oh, std::int64_t ow) {
  Planes in = planes_of(chw);
  Planes out{in.c, oh, ow, std::vector<double>(static_cast<std::size_t>(in.c * oh * ow))};
  for (std::int64_t k = 0; k < in.c; ++k)
    for (std::int64_t y = 0; y < in.h; ++y)
      for (std::int64_t x = 0; x < in.w; ++x) {
        if (in.at(k, y, x) < 0.5) continue;
        out.at(k, y * oh / in.h, x * ow / in.w) = 1.0;
      }
  return tensor_of(out, chw.dtype());
}

Tensor bilinear_chw(const Tensor& chw, std::int64_t oh, std::int64_t ow) {
  if (chw.size(1) == oh && chw.size(2) == ow) return chw;
  const Shape s = chw.shape();
  return reshape(nn::resize_bilinear(reshape(chw, {1, s[0], s[1], s[2]}), oh, ow), {s[0], oh, ow});
}

Tensor stack(const std::vector<Tensor>& chw) {
  std::vector<Tensor> parts;
  for (const auto& t : chw) parts.push_back(reshape(t, {1, t.size(0), t.size(1), t.size(2)}));
  return concat(parts, 0);
}

}  // namespace

DatasetManifest load_manifest(const std::string& root, const std::string& split) {
  const fs::path base(root);
  const fs::path images_dir = base / "images" / split, maps_dir = base / "maps" / split;
  const fs::path fix_dir = base / "fixations" / split;
  for (const auto& d : {images_dir, maps_dir}) {
    if (!fs::is_directory(d)) throw DataError("dataset directory missing: " + d.string());
  }
  const auto images = index_directory(images_dir), maps = index_directory(maps_dir);
  std::map<std::string, std::string> fixations;
  const bool has_fix = fs::is_directory(fix_dir);
  if (has_fix) fixations = index_directory(fix_dir);

  std::vector<std::string> no_map, no_image, no_fix;
  for (const auto& [id, path] : images) {
    if (!maps.count(id)) no_map.push_back(fs::path(path).filename().string());
    if (has_fix && !fixations.count(id)) no_fix.push_back(fs::path(path).filename().string());
  }
  for (const auto& [id, path] : maps) {
    if (!images.count(id)) no_image.push_back(fs::path(path).filename().string());
  }
  if (!no_map.empty()) throw DataError("images without a saliency map in " + maps_dir.string() + ": " + join_orphans(no_map));
  if (!no_image.empty()) throw DataError("saliency maps without an image in " + images_dir.string() + ": " + join_orphans(no_image));
  if (!no_fix.empty()) throw DataError("images without a fixation map in " + fix_dir.string() + ": " + join_orphans(no_fix));

  DatasetManifest m{root, split, {}};
  for (const auto& [id, path] : images) {  // std::map iterates in id order
    m.entries.push_back({id, path, maps.at(id), has_fix ? fixations.at(id) : std::string()});
  }
  return m;
}

void save_manifest(const DatasetManifest& manifest, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError(path + ": cannot open for writing");
  out << manifest.root << '\t' << manifest.split << '\n';
  for (const auto& e : manifest.entries) out << e.id << '\t' << e.image << '\t' << e.map << '\t' << e.fixation << '\n';
  if (!out) throw DataError(path + ": write failed");
}

DatasetManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path + ": cannot open manifest");
  auto fields = [](const std::string& line) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, '\t')) f.push_back(item);
    if (!line.empty() && line.back() == '\t') f.emplace_back();
    return f;
  };
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty manifest");
  const auto head = fields(line);
  if (head.size() != 2) throw DataError(path + ":1: expected 'root<TAB>split'");
  DatasetManifest m{head[0], head[1], {}};
  for (int n = 2; std::getline(in, line); ++n) {
    if (line.empty()) continue;
    const auto f = fields(line);
    if (f.size() != 4) throw DataError(path + ":" + std::to_string(n) + ": expected 4 tab-separated fields");
    for (int i = 1; i < 4; ++i) {
      if (!f[i].empty() && !fs::exists(f[i])) throw DataError(path + ":" + std::to_string(n) + ": missing file " + f[i]);
    }
    if (f[1].empty() || f[2].empty()) throw DataError(path + ":" + std::to_string(n) + ": image and map are required");
    m.entries.push_back({f[0], f[1], f[2], f[3]});
  }
  return m;
}

SaliencySample load_sample(const ManifestEntry& entry) {
  SaliencySample s;
  s.id = entry.id;
  s.image = decode_image(entry.image);
  if (s.image.size(0) == 1) s.image = concat({s.image, s.image, s.image}, 0);
  auto single_channel = [](Tensor t) { return t.size(0) == 1 ? t : reshape(mean(t, {0}), {1, t.size(1), t.size(2)}); };
  s.saliency = single_channel(decode_image(entry.map));
  if (!entry.fixation.empty()) s.fixation = single_channel(decode_image(entry.fixation));
  if (s.saliency.shape() != Shape{1, s.image.size(1), s.image.size(2)} ||
      (s.fixation.defined() && s.fixation.shape() != s.saliency.shape())) {
    throw DataError(entry.id + ": image " + to_string(s.image.shape()) + ", map " + to_string(s.saliency.shape()) +
                    (s.fixation.defined() ? " and fixations " + to_string(s.fixation.shape()) : std::string()) +
                    " differ in size");
  }
  return s;
}

void PreprocessConfig::validate() const {
  if (height < 32 || width < 32 || height % 32 || width % 32) {
    throw ConfigError("input size " + std::to_string(height) + "x" + std::to_string(width) +
                      " must be a positive multiple of 32 on both sides");
  }
  for (double s : std) {
    if (!(s > 0)) throw ConfigError("normalization std must be positive");
  }
}

SaliencySample resize_sample(const SaliencySample& sample, std::int64_t height, std::int64_t width) {
  NoGradGuard no_grad;
  SaliencySample out;
  out.id = sample.id;
  out.image = bilinear_chw(sample.image, height, width);
  const Tensor sal = bilinear_chw(sample.saliency, height, width);
  const auto v = sal.to_vector();
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  if (!(*hi > *lo)) throw DegenerateInputError(sample.id + ": saliency map is constant");
  out.saliency = (sal - *lo) / (*hi - *lo);
  if (sample.fixation.defined()) out.fixation = scatter_points(sample.fixation, height, width);
  return out;
}

Tensor normalize_image(const Tensor& image, const std::array<double, 3>& mean, const std::array<double, 3>& std) {
  const bool batched = image.rank() == 4;
  if ((image.rank() != 3 && !batched) || image.size(batched ? 1 : 0) != 3) {
    throw ShapeError("normalize_image expects [3, H, W] or [N, 3, H, W], got " + to_string(image.shape()));
  }
  const std::int64_t axis = batched ? 1 : 0;
  std::vector<Tensor> channels;
  for (std::int64_t c = 0; c < 3; ++c) channels.push_back(affine(slice(image, axis, c, 1), 1.0 / std[c], -mean[c] / std[c]));
  return concat(channels, axis);
}

SaliencySample preprocess(const SaliencySample& sample, const PreprocessConfig& config) {
  config.validate();
  SaliencySample out = resize_sample(sample, config.height, config.width);
  NoGradGuard no_grad;
  out.image = normalize_image(out.image, config.mean, config.std);
  return out;
}

void AugmentConfig::validate() const {
  for (double p : {p_flip, p_blur, p_jitter}) {
    if (!(p >= 0 && p <= 1)) throw ConfigError("augmentation probabilities must lie in [0, 1]");
  }
  if (!(blur_sigma_min > 0 && blur_sigma_max >= blur_sigma_min)) {
    throw ConfigError("blur sigma range must be positive and ordered");
  }
  for (double m : {brightness, contrast, saturation, sharpness}) {
    if (!(m >= 0 && m < 1)) throw ConfigError("jitter magnitudes must lie in [0, 1)");
  }
}

AugmentConfig AugmentConfig::flip_only() {
  AugmentConfig c = none();
  c.p_flip = 1.0;
  return c;
}

AugmentConfig AugmentConfig::none() {
  AugmentConfig c;
  c.p_flip = c.p_blur = c.p_jitter = 0.0;
  return c;
}

Tensor flip_horizontal(const Tensor& chw) {
  Planes p = planes_of(chw);
  for (std::int64_t k = 0; k < p.c; ++k)
    for (std::int64_t y = 0; y < p.h; ++y) {
      auto row = p.v.begin() + (k * p.h + y) * p.w;
      std::reverse(row, row + p.w);
    }
  return tensor_of(p, chw.dtype());
}

Tensor gaussian_blur(const Tensor& image, double sigma) {
  if (!(sigma > 0)) throw ConfigError("blur sigma must be positive");
  const auto radius = static_cast<std::int64_t>(std::ceil(3 * sigma));
  std::vector<double> kernel;
  for (std::int64_t i = -radius; i <= radius; ++i) kernel.push_back(std::exp(-0.5 * i * i / (sigma * sigma)));
  const double total = std::accumulate(kernel.begin(), kernel.end(), 0.0);
  for (auto& k : kernel) k /= total;
  Planes p = planes_of(image);
  Planes tmp = p;
  for (std::int64_t k = 0; k < p.c; ++k)
    for (std::int64_t y = 0; y < p.h; ++y)
      for (std::int64_t x = 0; x < p.w; ++x) {
        double s = 0;
        for (std::int64_t i = -radius; i <= radius; ++i) s += kernel[i + radius] * p.at(k, y, std::clamp(x + i, std::int64_t{0}, p.w - 1));
        tmp.at(k, y, x) = s;
      }
  for (std::int64_t k = 0; k < p.c; ++k)
    for (std::int64_t y = 0; y < p.h; ++y)
      for (std::int64_t x = 0; x < p.w; ++x) {
        double s = 0;
        for (std::int64_t i = -radius; i <= radius; ++i) s += kernel[i + radius] * tmp.at(k, std::clamp(y + i, std::int64_t{0}, p.h - 1), x);
        p.at(k, y, x) = s;
      }
  return tensor_of(p, image.dtype());
}

SaliencySample augment(const SaliencySample& sample, const AugmentConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  // Every draw happens unconditionally so one decision never shifts the
  // random stream of the next.
  const bool flip = rng.uniform() < config.p_flip;
  const bool blur = rng.uniform() < config.p_blur;
  const double sigma = rng.uniform(config.blur_sigma_min, config.blur_sigma_max);
  const bool jitter = rng.uniform() < config.p_jitter;
  const double fb = rng.uniform(1 - config.brightness, 1 + config.brightness);
  const double fc = rng.uniform(1 - config.contrast, 1 + config.contrast);
  const double fs = rng.uniform(1 - config.saturation, 1 + config.saturation);
  const double fh = rng.uniform(1 - config.sharpness, 1 + config.sharpness);

  SaliencySample out = sample;
  if (flip) {
    out.image = flip_horizontal(out.image);
    out.saliency = flip_horizontal(out.saliency);
    if (out.fixation.defined()) out.fixation = flip_horizontal(out.fixation);
  }
  if (blur) out.image = gaussian_blur(out.image, sigma);
  if (jitter && out.image.size(0) == 3) {
    Planes p = planes_of(out.image);
    for (auto& x : p.v) x = clamp01(x * fb);
    const auto g0 = luminance(p);
    const double m = std::accumulate(g0.begin(), g0.end(), 0.0) / static_cast<double>(g0.size());
    for (auto& x : p.v) x = clamp01((x - m) * fc + m);
    const auto g = luminance(p);
    const std::size_t plane = g.size();
    for (std::size_t k = 0; k < 3; ++k)
      for (std::size_t i = 0; i < plane; ++i) p.v[k * plane + i] = clamp01(g[i] + (p.v[k * plane + i] - g[i]) * fs);
    const Planes smooth = smooth3(p);
    for (std::size_t i = 0; i < p.v.size(); ++i) p.v[i] = clamp01(smooth.v[i] + (p.v[i] - smooth.v[i]) * fh);
    out.image = tensor_of(p, out.image.dtype());
  }
  return out;
}

SaliencyDataset::SaliencyDataset(const DatasetManifest& manifest, LoaderOptions options) : options_(std::move(options)) {
  options_.preprocess.validate();
  options_.augmentation.validate();
  if (options_.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (manifest.entries.empty()) throw DataError("dataset " + manifest.root + " split '" + manifest.split + "' is empty");
  for (const auto& e : manifest.entries) {
    samples_.push_back(resize_sample(load_sample(e), options_.preprocess.height, options_.preprocess.width));
  }
}

std::int64_t SaliencyDataset::batches_per_epoch() const {
  return (size() + options_.batch_size - 1) / options_.batch_size;
}

std::vector<std::vector<std::int64_t>> SaliencyDataset::epoch_order(std::int64_t epoch, std::int64_t batch_size) const {
  if (batch_size < 0) throw ConfigError("batch_size must be positive, got " + std::to_string(batch_size));
  const auto step = static_cast<std::size_t>(batch_size == 0 ? options_.batch_size : batch_size);
  std::vector<std::int64_t> order(static_cast<std::size_t>(size()));
  std::iota(order.begin(), order.end(), 0);
  if (options_.shuffle) {
    Rng rng(mix_seed(options_.seed, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  }
  std::vector<std::vector<std::int64_t>> batches;
  for (std::size_t i = 0; i < order.size(); i += step) {
    const auto end = std::min(order.size(), i + step);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

Batch SaliencyDataset::make_batch(const std::vector<std::int64_t>& indices, std::int64_t epoch) const {
  NoGradGuard no_grad;
  std::vector<Tensor> images, maps, fixations;
  Batch b;
  for (auto i : indices) {
    SaliencySample s = samples_.at(static_cast<std::size_t>(i));
    if (options_.augment) {
      s = augment(s, options_.augmentation,
                  mix_seed(options_.seed ^ 0xa5a5, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(i)));
    }
    images.push_back(s.image);
    maps.push_back(s.saliency);
    if (s.fixation.defined()) fixations.push_back(s.fixation);
    b.ids.push_back(s.id);
  }
  b.images = normalize_image(stack(images), options_.preprocess.mean, options_.preprocess.std);
  b.saliency = stack(maps);
  if (fixations.size() == indices.size()) b.fixations = stack(fixations);
  return b;
}

std::vector<Batch> SaliencyDataset::epoch(std::int64_t e) const {
  std::vector<Batch> out;
  for (const auto& idx : epoch_order(e)) out.push_back(make_batch(idx, e));
  return out;
}

}  // namespace mdsvit
