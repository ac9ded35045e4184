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
#include <functional>
#include <string>
#include <vector>

#include "mdsvit/tensor.hpp"

namespace mdsvit {

struct GradCheckReport {
  std::string op_name;
  double max_relative_error = 0.0;
  bool passed = false;
};

/// Builds an output tensor (any shape) from the given inputs. Must be a pure
/// function of the input values.
using GradBuilder = std::function<Tensor(const std::vector<Tensor>&)>;

struct GradCheckOptions {
  double tolerance = 1e-4;
  double step = 1e-4;
  std::uint64_t seed = 0;  // for the random output weighting
  /// When positive, only this many elements per input are probed (chosen
  /// pseudo-randomly from `seed`); zero probes every element.
  std::int64_t samples_per_input = 0;
};

/// Compares analytic gradients of loss = sum(out * R), R uniform in [-1, 1],
/// against central differences for every input that requires a gradient.
/// Error per element is |ga - gn| / max(1, |ga|, |gn|).
GradCheckReport grad_check(const std::string& name, const GradBuilder& build, const std::vector<Tensor>& inputs,
                           const GradCheckOptions& options = {});

/// Convenience form: inputs are fresh f64 leaves drawn uniformly from [-1, 1].
GradCheckReport grad_check(const std::string& name, const GradBuilder& build, const std::vector<Shape>& input_shapes,
                           const GradCheckOptions& options = {});

/// Mixed-precision variant. Analytic gradients come from `analytic_inputs`
/// (any dtype); numeric gradients are taken on `reference_inputs`, which must
/// hold the same values in double precision. `reference_build` must compute
/// the same function as `analytic_build`.
GradCheckReport grad_check_mixed(const std::string& name, const GradBuilder& analytic_build,
                                 const std::vector<Tensor>& analytic_inputs, const GradBuilder& reference_build,
                                 const std::vector<Tensor>& reference_inputs, const GradCheckOptions& options = {});

}  // namespace mdsvit
