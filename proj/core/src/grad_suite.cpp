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

#include "mdsvit/grad_suite.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "mdsvit/autograd.hpp"
#include "mdsvit/backbone.hpp"
#include "mdsvit/losses.hpp"
#include "mdsvit/nn/functional.hpp"
#include "mdsvit/ops.hpp"

namespace mdsvit {

namespace {

using Inputs = std::vector<Tensor>;

Tensor leaf(const Shape& shape, double low, double high, std::uint64_t seed) {
  Rng rng(seed);
  return uniform(shape, low, high, rng, DType::f64).set_requires_grad(true);
}

// Magnitudes in [0.2, 1] with random signs: at least 0.2 from the kink at 0.
Tensor off_zero(const Shape& shape, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(static_cast<std::size_t>(numel_of(shape)));
  for (auto& x : v) x = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.2, 1.0);
  return from_values(shape, std::move(v), DType::f64).set_requires_grad(true);
}

// Shuffled, evenly spaced values so reductions have a unique extremum.
Tensor distinct(const Shape& shape, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(static_cast<std::size_t>(numel_of(shape)));
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = -1.0 + 0.05 * static_cast<double>(i);
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
  return from_values(shape, std::move(v), DType::f64).set_requires_grad(true);
}

GradSuiteCase unary(const std::string& name, Tensor (*fn)(const Tensor&), Tensor x) {
  return {name, {name}, [=] { return grad_check(name, [fn](const Inputs& in) { return fn(in[0]); }, {x}); }};
}

GradSuiteCase binary(const std::string& name, Tensor (*fn)(const Tensor&, const Tensor&), Tensor a, Tensor b) {
  return {name, {name}, [=] {
            return grad_check(name, [fn](const Inputs& in) { return fn(in[0], in[1]); }, {a, b});
          }};
}

GradSuiteCase simple(const std::string& name, GradBuilder build, Inputs inputs) {
  return {name, {name}, [=] { return grad_check(name, build, inputs); }};
}

GradSuiteCase loss_case(const std::string& name, Tensor (*fn)(const Tensor&, const Tensor&)) {
  // Strictly positive maps keep sum normalization and the SIM minimum smooth.
  const Tensor pred = leaf({2, 1, 6, 7}, 0.05, 1.0, 31);
  Rng rng(32);
  const Tensor gt = uniform({2, 1, 6, 7}, 0.0, 1.0, rng, DType::f64);
  return {name, {}, [=] {
            return grad_check(name, [fn, gt](const Inputs& in) { return fn(in[0], gt); }, {pred});
          }};
}

Tensor combined_default(const Tensor& p, const Tensor& g) { return combined_loss(p, g); }

GradSuiteCase backbone_case() {
  return {"backbone_toy_f32", {}, [] {
            Backbone b32(BackboneConfig::toy(), 21);
            Backbone b64;
            {
              DTypeGuard f64(DType::f64);
              b64 = Backbone(BackboneConfig::toy(), 21);
            }
            auto p32 = nn::named_parameters(b32);
            auto p64 = nn::named_parameters(b64);
            Tensor x32 = create({1, 3, 16, 16}, init::Normal{0, 1, 4}, DType::f32).set_requires_grad(true);
            Tensor x64 = x32.to(DType::f64).set_requires_grad(true);
            Inputs in32{x32}, in64{x64};
            for (std::size_t i = 0; i < p32.size(); ++i) {
              auto dst = p64[i].second.mutable_data<double>();
              const auto src = p32[i].second.data<float>();
              std::copy(src.begin(), src.end(), dst.begin());
              in32.push_back(p32[i].second);
              in64.push_back(p64[i].second);
            }
            auto build = [](Backbone& b) {
              return [&b](const Inputs& in) {
                const auto f = b.forward(in[0]);
                std::vector<Tensor> flat;
                for (const auto& m : f.maps) flat.push_back(reshape(m, {-1}));
                return concat(flat, 0);
              };
            };
            return grad_check_mixed("backbone_toy_f32", build(b32), in32, build(b64), in64,
                                    {.tolerance = 1e-3, .samples_per_input = 6});
          }};
}

}  // namespace

std::vector<GradSuiteCase> grad_suite_cases() {
  std::vector<GradSuiteCase> cases;
  const Shape s{3, 4};
  cases.push_back(binary("add", add, leaf(s, -1, 1, 1), leaf(s, -1, 1, 2)));
  cases.push_back(binary("sub", sub, leaf(s, -1, 1, 3), leaf(s, -1, 1, 4)));
  cases.push_back(binary("mul", mul, leaf(s, -1, 1, 5), leaf(s, -1, 1, 6)));
  cases.push_back(binary("div", div, leaf(s, -1, 1, 7), leaf(s, 0.5, 2, 8)));
  {
    const Tensor a = leaf(s, -1, 1, 9);
    const Tensor b = (a.detach() + off_zero(s, 10).detach() * 0.5).detach().set_requires_grad(true);
    cases.push_back(binary("minimum", minimum, a, b));
    cases.push_back(binary("maximum", maximum, a, b));
  }
  cases.push_back(simple("affine", [](const Inputs& in) { return affine(in[0], -1.5, 0.25); }, {leaf(s, -1, 1, 11)}));
  cases.push_back(unary("exp", exp, leaf(s, -1, 1, 12)));
  cases.push_back(unary("log", log, leaf(s, 0.5, 2, 13)));
  cases.push_back(unary("sqrt", sqrt, leaf(s, 0.5, 2, 14)));
  cases.push_back(unary("relu", relu, off_zero(s, 15)));
  cases.push_back(unary("sigmoid", sigmoid, leaf(s, -3, 3, 16)));
  cases.push_back(unary("gelu", gelu, leaf(s, -3, 3, 17)));
  cases.push_back(binary("matmul", matmul, leaf({2, 3, 4}, -1, 1, 18), leaf({2, 4, 5}, -1, 1, 19)));
  cases.push_back(simple("sum", [](const Inputs& in) { return sum(in[0], {1}); }, {leaf({2, 3, 4}, -1, 1, 20)}));
  cases.push_back(simple("mean", [](const Inputs& in) { return mean(in[0], {0, 2}); }, {leaf({2, 3, 4}, -1, 1, 21)}));
  cases.push_back(simple("max", [](const Inputs& in) { return max(in[0], {1}); }, {distinct({2, 5, 3}, 22)}));
  cases.push_back(simple("min", [](const Inputs& in) { return min(in[0], {2}); }, {distinct({2, 5, 3}, 23)}));
  cases.push_back(simple("softmax", [](const Inputs& in) { return softmax(in[0], 1); }, {leaf({2, 5, 3}, -2, 2, 24)}));
  cases.push_back(simple("reshape", [](const Inputs& in) { return reshape(in[0], {4, -1}); }, {leaf({2, 3, 4}, -1, 1, 25)}));
  cases.push_back(
      simple("permute", [](const Inputs& in) { return permute(in[0], {2, 0, 1}); }, {leaf({2, 3, 4}, -1, 1, 26)}));
  cases.push_back(simple("concat", [](const Inputs& in) { return concat({in[0], in[1]}, 1); },
                         {leaf({2, 3, 2}, -1, 1, 27), leaf({2, 1, 2}, -1, 1, 28)}));
  cases.push_back(simple("slice", [](const Inputs& in) { return slice(in[0], 1, 1, 2); }, {leaf({2, 4, 3}, -1, 1, 29)}));
  cases.push_back(simple("pad", [](const Inputs& in) { return pad(in[0], 2, 1, 2); }, {leaf({2, 3, 3}, -1, 1, 30)}));
  cases.push_back(simple("roll", [](const Inputs& in) { return roll(in[0], 1, -2); }, {leaf({2, 5, 3}, -1, 1, 33)}));
  cases.push_back(simple("repeat", [](const Inputs& in) { return repeat(in[0], 3); }, {leaf({2, 3}, -1, 1, 34)}));
  cases.push_back(simple("gather_rows", [](const Inputs& in) { return gather_rows(in[0], {1, 1, 0, 3}); },
                         {leaf({4, 3}, -1, 1, 35)}));
  cases.push_back(simple("linear", [](const Inputs& in) { return nn::linear(in[0], in[1], in[2]); },
                         {leaf({2, 3, 4}, -1, 1, 36), leaf({5, 4}, -1, 1, 37), leaf({5}, -1, 1, 38)}));
  cases.push_back(simple("conv2d", [](const Inputs& in) { return nn::conv2d(in[0], in[1], in[2], 2, 1); },
                         {leaf({2, 2, 5, 6}, -1, 1, 39), leaf({3, 2, 3, 3}, -1, 1, 40), leaf({3}, -1, 1, 41)}));
  cases.push_back({"batch_norm2d", {"batch_norm2d"}, [] {
                     Tensor rm = zeros({3}, DType::f64), rv = ones({3}, DType::f64);
                     return grad_check("batch_norm2d", [rm, rv](const Inputs& in) mutable {
                       return nn::batch_norm2d(in[0], in[1], in[2], rm, rv, true, 0.1, 1e-5);
                     }, {leaf({2, 3, 3, 2}, -1, 1, 42), leaf({3}, 0.5, 1.5, 43), leaf({3}, -1, 1, 44)});
                   }});
  cases.push_back(simple("layer_norm", [](const Inputs& in) { return nn::layer_norm(in[0], in[1], in[2], 1e-5); },
                         {leaf({3, 6}, -1, 1, 45), leaf({6}, 0.5, 1.5, 46), leaf({6}, -1, 1, 47)}));
  cases.push_back(simple("upsample_bilinear", [](const Inputs& in) { return nn::upsample_bilinear(in[0], 2); },
                         {leaf({1, 2, 3, 4}, -1, 1, 48)}));
  cases.push_back(simple("attention", [](const Inputs& in) { return nn::attention(in[0], in[1], in[2], in[3], 0.7); },
                         {leaf({4, 3, 2}, -1, 1, 49), leaf({4, 5, 2}, -1, 1, 50), leaf({4, 5, 3}, -1, 1, 51),
                          leaf({2, 3, 5}, -1, 1, 52)}));
  cases.push_back(loss_case("loss_cc", loss_cc));
  cases.push_back(loss_case("loss_sim", loss_sim));
  cases.push_back(loss_case("loss_kl", loss_kl));
  cases.push_back(loss_case("combined_loss", combined_default));
  cases.push_back(backbone_case());
  return cases;
}

bool GradSuiteResult::all_passed() const { return uncovered.empty() && failures().empty(); }

std::vector<std::string> GradSuiteResult::failures() const {
  std::vector<std::string> out;
  for (const auto& r : reports)
    if (!r.passed) out.push_back(r.op_name);
  return out;
}

std::string GradSuiteResult::table() const {
  std::string out = "op                   max rel error  status\n";
  char line[96];
  for (const auto& r : reports) {
    std::snprintf(line, sizeof line, "%-20s %13.3e  %s\n", r.op_name.c_str(), r.max_relative_error,
                  r.passed ? "pass" : "FAIL");
    out += line;
  }
  for (const auto& op : uncovered) out += op + std::string(20 - std::min<std::size_t>(20, op.size()), ' ') + " (no case)    FAIL\n";
  return out;
}

GradSuiteResult run_grad_suite(const std::string& filter) {
  GradSuiteResult result;
  std::set<std::string> covered;
  for (const auto& c : grad_suite_cases()) {
    covered.insert(c.covers.begin(), c.covers.end());
    if (!filter.empty() && c.name.find(filter) == std::string::npos) continue;
    result.reports.push_back(c.run());
  }
  for (const auto& op : differentiable_ops())
    if (!covered.count(op)) result.uncovered.push_back(op);
  return result;
}

}  // namespace mdsvit
