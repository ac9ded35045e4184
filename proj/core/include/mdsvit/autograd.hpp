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

#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "mdsvit/tensor.hpp"

namespace mdsvit {

/// Whether new operations record graph nodes on the current thread.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Handed to backward rules; yields the gradient accumulator of each input,
/// or nullptr when that input does not require a gradient.
class GradSink {
 public:
  virtual ~GradSink() = default;
  virtual Buffer* grad(std::size_t input_index) = 0;
};

using BackwardFn = std::function<void(const Buffer& grad_out, GradSink& sink)>;

struct Node {
  std::string op;
  std::vector<Tensor> inputs;
  BackwardFn backward;
};

/// Wraps a freshly computed buffer as an operation result. A graph node is
/// attached only when grad mode is on and some input requires a gradient;
/// otherwise `backward` is dropped and the result is a plain leaf.
Tensor make_result(std::string_view op, Shape shape, Buffer data, std::vector<Tensor> inputs,
                   BackwardFn backward);
/// Same, for rules that keep a reference to their own output values.
Tensor make_result(std::string_view op, Shape shape, std::shared_ptr<Buffer> data, std::vector<Tensor> inputs,
                   BackwardFn backward);

/// Reverse-mode sweep from a one-element tensor. Leaf gradients accumulate
/// across calls until zeroed.
void backward(const Tensor& loss);

/// Names of every primitive with a backward rule.
const std::vector<std::string>& differentiable_ops();

namespace debug {
/// Test hook: multiplies the incoming gradient of every node named `op` by
/// `scale` during backward. Empty name disables.
void inject_backward_fault(std::string op, double scale = 1.5);
void clear_backward_fault();
}  // namespace debug

}  // namespace mdsvit
