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

#include "mdsvit/losses.hpp"

#include <algorithm>
#include <cstdio>

#include <json.hpp>

#include "mdsvit/autograd.hpp"
#include "mdsvit/error.hpp"
#include "mdsvit/ops.hpp"

namespace mdsvit {

namespace {

std::int64_t sample_count(const Tensor& m) {
  const auto r = m.rank();
  if (r == 2) return 1;
  if (r == 3 && m.size(0) == 1) return 1;
  if (r == 4 && m.size(1) == 1) return m.size(0);
  throw ShapeError("saliency map must be [H, W], [1, H, W] or [N, 1, H, W], got " + to_string(m.shape()));
}

// Flattened per-sample views [P].
std::vector<Tensor> split_samples(const Tensor& m) {
  const std::int64_t n = sample_count(m);
  const std::int64_t p = m.numel() / n;
  Tensor flat = reshape(m, {n, p});
  std::vector<Tensor> out;
  for (std::int64_t i = 0; i < n; ++i) out.push_back(reshape(slice(flat, 0, i, 1), {p}));
  return out;
}

void check_pair(const Tensor& pred, const Tensor& gt) {
  if (pred.shape() != gt.shape()) {
    throw ShapeError("prediction " + to_string(pred.shape()) + " and ground truth " + to_string(gt.shape()) +
                     " differ in shape");
  }
}

bool is_constant(const Tensor& sample) {
  const auto v = sample.to_vector();
  return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

Tensor sum_normalize(const Tensor& sample) {
  const Tensor total = sum(sample);
  // NaN passes through so callers can report where it came from.
  if (total.item() <= 0.0) throw DegenerateInputError("sum normalization of an all-zero saliency map");
  return sample / total;
}

template <class F>
Tensor batch_mean(const Tensor& pred, const Tensor& gt, F per_sample) {
  check_pair(pred, gt);
  const auto ps = split_samples(pred), gs = split_samples(gt);
  std::vector<Tensor> values;
  for (std::size_t i = 0; i < ps.size(); ++i) values.push_back(per_sample(ps[i], gs[i]));
  return values.size() == 1 ? values.front() : mean(concat(values, 0));
}

}  // namespace

Tensor normalize_map(const Tensor& m, NormalizeMode mode) {
  std::vector<Tensor> parts;
  for (const Tensor& s : split_samples(m)) {
    if (mode == NormalizeMode::sum) {
      parts.push_back(sum_normalize(s));
    } else {
      const Tensor lo = min(s), hi = max(s);
      parts.push_back(hi.item() > lo.item() ? (s - lo) / (hi - lo) : s * 0.0);
    }
  }
  return reshape(parts.size() == 1 ? parts.front() : concat(parts, 0), m.shape());
}

Tensor loss_cc(const Tensor& pred, const Tensor& gt) {
  return batch_mean(pred, gt, [](const Tensor& p, const Tensor& g) {
    if (is_constant(p) || is_constant(g)) throw DegenerateInputError("CC is undefined for a constant map");
    const Tensor a = p - mean(p), b = g - mean(g);
    return sum(a * b) / sqrt(sum(a * a) * sum(b * b));
  });
}

Tensor loss_sim(const Tensor& pred, const Tensor& gt) {
  return batch_mean(pred, gt, [](const Tensor& p, const Tensor& g) {
    return sum(minimum(sum_normalize(p), sum_normalize(g)));
  });
}

Tensor loss_kl(const Tensor& pred, const Tensor& gt) {
  return batch_mean(pred, gt, [](const Tensor& p, const Tensor& g) {
    const Tensor q = sum_normalize(p), m = sum_normalize(g);
    return sum(m * log(m / (q + kKlEpsilon) + kKlEpsilon));
  });
}

Tensor combined_loss(const Tensor& pred, const Tensor& gt, const LossWeights& w) {
  if (w.sim < 0 || w.cc < 0 || w.kl < 0) throw ConfigError("loss weights must be nonnegative");
  Tensor total = loss_kl(pred, gt) * w.kl;
  total = total - loss_cc(pred, gt) * w.cc;
  return total - loss_sim(pred, gt) * w.sim;
}

Tensor binarize_saliency(const Tensor& gt) {
  NoGradGuard no_grad;
  const auto v = normalize_map(gt.detach(), NormalizeMode::minmax).to_vector();
  std::vector<double> out(v.size());
  std::transform(v.begin(), v.end(), out.begin(), [](double x) { return x >= 0.5 ? 1.0 : 0.0; });
  return from_values(gt.shape(), std::move(out), gt.dtype());
}

double auc_threshold_sweep(const Tensor& pred, const Tensor& gt_binary, std::int64_t n_thresholds) {
  check_pair(pred, gt_binary);
  if (sample_count(pred) != 1) throw ShapeError("auc_threshold_sweep takes a single map");
  if (n_thresholds < 2) throw ConfigError("auc_threshold_sweep needs at least 2 thresholds");
  const auto p = pred.to_vector(), g = gt_binary.to_vector();
  const auto [lo_it, hi_it] = std::minmax_element(p.begin(), p.end());
  const double lo = *lo_it, range = *hi_it - *lo_it;
  std::vector<double> pos, neg;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double s = range > 0 ? (p[i] - lo) / range : 0.0;
    (g[i] > 0.5 ? pos : neg).push_back(s);
  }
  if (pos.empty() || neg.empty()) {
    throw DegenerateInputError("AUC is undefined: ground truth has " + std::string(pos.empty() ? "no positive" : "no negative") +
                               " pixels");
  }
  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end());
  auto rate_at_or_above = [](const std::vector<double>& v, double t) {
    return static_cast<double>(v.end() - std::lower_bound(v.begin(), v.end(), t)) / static_cast<double>(v.size());
  };
  std::vector<std::pair<double, double>> roc{{0.0, 0.0}, {1.0, 1.0}};  // (fpr, tpr)
  for (std::int64_t k = 0; k < n_thresholds; ++k) {
    const double t = static_cast<double>(k) / static_cast<double>(n_thresholds - 1);
    roc.emplace_back(rate_at_or_above(neg, t), rate_at_or_above(pos, t));
  }
  std::sort(roc.begin(), roc.end());
  double area = 0.0;
  for (std::size_t i = 1; i < roc.size(); ++i) {
    area += (roc[i].first - roc[i - 1].first) * (roc[i].second + roc[i - 1].second) / 2.0;
  }
  return area;
}

std::string MetricReport::to_text() const {
  char buf[256];
  std::snprintf(buf, sizeof buf, "auc: %.6f\nkl: %.6f\ncc: %.6f\nsim: %.6f\nn_samples: %lld\n", auc, kl, cc, sim,
                static_cast<long long>(n_samples));
  return buf;
}

std::string MetricReport::to_json() const {
  nlohmann::ordered_json j;
  j["auc"] = auc;
  j["kl"] = kl;
  j["cc"] = cc;
  j["sim"] = sim;
  j["n_samples"] = n_samples;
  return j.dump(2);
}

MetricReport evaluate(const std::vector<Tensor>& preds, const std::vector<Tensor>& gts,
                      const std::vector<Tensor>& fixations) {
  if (preds.empty()) throw ShapeError("evaluate: no samples");
  if (preds.size() != gts.size() || (!fixations.empty() && fixations.size() != preds.size())) {
    throw ShapeError("evaluate: " + std::to_string(preds.size()) + " predictions, " + std::to_string(gts.size()) +
                     " ground-truth maps and " + std::to_string(fixations.size()) + " fixation maps are not aligned");
  }
  NoGradGuard no_grad;
  MetricReport r;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const Tensor p = preds[i].detach().to(DType::f64), g = gts[i].detach().to(DType::f64);
    const Tensor binary = fixations.empty() ? binarize_saliency(g) : fixations[i].detach().to(DType::f64);
    r.auc += auc_threshold_sweep(p, binary);
    r.kl += loss_kl(p, g).item();
    r.cc += loss_cc(p, g).item();
    r.sim += loss_sim(p, g).item();
  }
  const double n = static_cast<double>(preds.size());
  r.auc /= n;
  r.kl /= n;
  r.cc /= n;
  r.sim /= n;
  r.n_samples = static_cast<std::int64_t>(preds.size());
  return r;
}

}  // namespace mdsvit
