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
#include <vector>

#include "mdsvit/tensor.hpp"

namespace mdsvit {

// Saliency maps are [H, W], [1, H, W] or batched [N, 1, H, W]. Batched losses
// are computed per sample and averaged.

/// Regularizer of the KL term.
inline constexpr double kKlEpsilon = 2.2204e-16;

enum class NormalizeMode { sum, minmax };

/// Per-sample normalization (differentiable). Sum mode divides by the total
/// and throws DegenerateInputError on an all-zero map; min-max maps a
/// constant sample to zeros.
Tensor normalize_map(const Tensor& m, NormalizeMode mode);

/// Pearson correlation on the raw maps. DegenerateInputError when either
/// sample is constant.
Tensor loss_cc(const Tensor& pred, const Tensor& gt);
/// Histogram intersection of the sum-normalized maps.
Tensor loss_sim(const Tensor& pred, const Tensor& gt);
/// sum_i m_i log(eps + m_i / (eps + p_i)) on sum-normalized maps.
Tensor loss_kl(const Tensor& pred, const Tensor& gt);

struct LossWeights {
  double sim = 1.0;
  double cc = 2.0;
  double kl = 10.0;
};

/// kl * KL - cc * CC - sim * SIM.
Tensor combined_loss(const Tensor& pred, const Tensor& gt, const LossWeights& weights = {});

/// Positive pixels: ground truth >= 0.5 after min-max normalization.
Tensor binarize_saliency(const Tensor& gt);

/// Area under the ROC curve traced by classifying pred >= t for
/// `n_thresholds` evenly spaced t in [0, 1] (pred is min-max normalized
/// first). Single map only. DegenerateInputError when gt_binary lacks one
/// of the classes.
double auc_threshold_sweep(const Tensor& pred, const Tensor& gt_binary, std::int64_t n_thresholds = 255);

struct MetricReport {
  double auc = 0.0;
  double kl = 0.0;
  double cc = 0.0;
  double sim = 0.0;
  std::int64_t n_samples = 0;

  /// "key: value" lines.
  std::string to_text() const;
  std::string to_json() const;
};

/// Averages per-sample metrics. Each entry is one map; `fixations` is either
/// empty (ground truth is binarized instead) or aligned with `preds`.
MetricReport evaluate(const std::vector<Tensor>& preds, const std::vector<Tensor>& gts,
                      const std::vector<Tensor>& fixations = {});

}  // namespace mdsvit
