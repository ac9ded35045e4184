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

#include <gtest/gtest.h>

#include <set>

#include "mdsvit/autograd.hpp"
#include "mdsvit/grad_suite.hpp"

namespace mdsvit {
namespace {

TEST(GradSuite, CoversEveryRegisteredOp) {
  std::set<std::string> covered;
  for (const auto& c : grad_suite_cases()) covered.insert(c.covers.begin(), c.covers.end());
  for (const auto& op : differentiable_ops()) EXPECT_TRUE(covered.count(op)) << op;
}

TEST(GradSuite, AllCasesPass) {
  const GradSuiteResult r = run_grad_suite();
  EXPECT_TRUE(r.all_passed()) << r.table();
  EXPECT_TRUE(r.uncovered.empty());
  EXPECT_EQ(r.reports.size(), grad_suite_cases().size());
  const std::string table = r.table();
  for (const auto& op : differentiable_ops()) EXPECT_NE(table.find(op), std::string::npos) << op;
  for (const char* loss : {"loss_cc", "loss_sim", "loss_kl", "combined_loss", "backbone_toy_f32"}) {
    EXPECT_NE(table.find(loss), std::string::npos) << loss;
  }
}

TEST(GradSuite, InjectedFaultIsNamed) {
  for (const char* op : {"conv2d", "softmax", "layer_norm"}) {
    debug::inject_backward_fault(op, 1.5);
    const GradSuiteResult r = run_grad_suite(op);
    debug::clear_backward_fault();
    ASSERT_FALSE(r.all_passed()) << op;
    const auto failed = r.failures();
    EXPECT_NE(std::find(failed.begin(), failed.end(), op), failed.end()) << op;
    EXPECT_NE(r.table().find("FAIL"), std::string::npos);
  }
  EXPECT_TRUE(run_grad_suite("conv2d").all_passed());
}

}  // namespace
}  // namespace mdsvit
