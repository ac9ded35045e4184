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

#include "mdsvit/gradcheck.hpp"

namespace mdsvit {

struct GradSuiteCase {
  std::string name;
  /// Registered differentiable ops this case exercises.
  std::vector<std::string> covers;
  std::function<GradCheckReport()> run;
};

/// One case per differentiable op (f64, tolerance 1e-4, inputs kept clear of
/// kinks), the four saliency losses, and the toy backbone (f32 analytic
/// against f64 numeric, tolerance 1e-3).
std::vector<GradSuiteCase> grad_suite_cases();

struct GradSuiteResult {
  std::vector<GradCheckReport> reports;
  /// Registered ops that no case covers.
  std::vector<std::string> uncovered;
  bool all_passed() const;
  std::vector<std::string> failures() const;
  /// Fixed-width "op | max rel error | status" table.
  std::string table() const;
};

/// Runs every case whose name contains `filter` (empty runs all).
GradSuiteResult run_grad_suite(const std::string& filter = "");

}  // namespace mdsvit
