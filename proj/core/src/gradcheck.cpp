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

#include "mdsvit/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "mdsvit/autograd.hpp"
#include "mdsvit/ops.hpp"
#include "mdsvit/random.hpp"

namespace mdsvit {

namespace {

std::vector<double> output_weights(const Tensor& out, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x9e1d));
  std::vector<double> r(static_cast<std::size_t>(out.numel()));
  for (auto& v : r) v = rng.uniform(-1.0, 1.0);
  return r;
}

double weighted_sum(const Tensor& out, const std::vector<double>& r) {
  double s = 0;
  for (std::size_t i = 0; i < r.size(); ++i) s += out.buffer().get(i) * r[i];
  return s;
}

std::vector<std::vector<double>> analytic_grads(const GradBuilder& build, const std::vector<Tensor>& inputs,
                                                std::uint64_t seed) {
  for (auto t : inputs) t.zero_grad();
  Tensor out = build(inputs);
  const auto r = output_weights(out, seed);
  Tensor weights = from_values(out.shape(), r, out.dtype());
  backward(sum(mul(out, weights)));
  std::vector<std::vector<double>> grads;
  for (const auto& t : inputs) {
    if (!t.requires_grad()) {
      grads.emplace_back();
    } else if (t.has_grad()) {
      grads.push_back(t.grad_vector());
    } else {
      grads.emplace_back(static_cast<std::size_t>(t.numel()), 0.0);
    }
  }
  return grads;
}

GradCheckReport compare(const std::string& name, const std::vector<std::vector<double>>& analytic,
                        const GradBuilder& build, std::vector<Tensor> reference, const GradCheckOptions& options) {
  GradCheckReport report{name, 0.0, false};
  std::vector<double> r;
  {
    NoGradGuard no_grad;
    r = output_weights(build(reference), options.seed);
  }
  NoGradGuard no_grad;
  Rng pick(mix_seed(options.seed, 0x5a));
  for (std::size_t k = 0; k < reference.size(); ++k) {
    if (analytic[k].empty()) continue;
    Buffer& data = reference[k].mutable_buffer();
    std::vector<std::size_t> probes;
    if (options.samples_per_input > 0 && static_cast<std::size_t>(options.samples_per_input) < data.size()) {
      for (std::int64_t s = 0; s < options.samples_per_input; ++s) probes.push_back(pick.below(data.size()));
    } else {
      for (std::size_t i = 0; i < data.size(); ++i) probes.push_back(i);
    }
    for (std::size_t i : probes) {
      const double original = data.get(i);
      data.set(i, original + options.step);
      const double up = weighted_sum(build(reference), r);
      data.set(i, original - options.step);
      const double down = weighted_sum(build(reference), r);
      data.set(i, original);
      const double gn = (up - down) / (2.0 * options.step);
      const double ga = analytic[k][i];
      const double err = std::abs(ga - gn) / std::max({1.0, std::abs(ga), std::abs(gn)});
      if (!(err <= report.max_relative_error)) report.max_relative_error = std::isnan(err) ? INFINITY : err;
    }
  }
  report.passed = report.max_relative_error < options.tolerance;
  return report;
}

}  // namespace

GradCheckReport grad_check(const std::string& name, const GradBuilder& build, const std::vector<Tensor>& inputs,
                           const GradCheckOptions& options) {
  return grad_check_mixed(name, build, inputs, build, inputs, options);
}

GradCheckReport grad_check(const std::string& name, const GradBuilder& build, const std::vector<Shape>& input_shapes,
                           const GradCheckOptions& options) {
  Rng rng(mix_seed(options.seed, 0x17));
  std::vector<Tensor> inputs;
  for (const auto& shape : input_shapes) {
    inputs.push_back(uniform(shape, -1.0, 1.0, rng, DType::f64).set_requires_grad(true));
  }
  return grad_check(name, build, inputs, options);
}

GradCheckReport grad_check_mixed(const std::string& name, const GradBuilder& analytic_build,
                                 const std::vector<Tensor>& analytic_inputs, const GradBuilder& reference_build,
                                 const std::vector<Tensor>& reference_inputs, const GradCheckOptions& options) {
  if (analytic_inputs.size() != reference_inputs.size()) {
    throw ShapeError("grad_check: analytic and reference input lists differ in length");
  }
  const auto analytic = analytic_grads(analytic_build, analytic_inputs, options.seed);
  for (auto t : analytic_inputs) t.zero_grad();
  return compare(name, analytic, reference_build, reference_inputs, options);
}

}  // namespace mdsvit
