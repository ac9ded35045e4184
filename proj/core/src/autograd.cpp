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

#include "mdsvit/autograd.hpp"

#include <unordered_map>
#include <unordered_set>

namespace mdsvit {

namespace {
thread_local bool g_grad_enabled = true;

struct Fault {
  std::string op;
  double scale = 1.0;
};
Fault& fault() {
  static Fault f;
  return f;
}

class EngineSink final : public GradSink {
 public:
  EngineSink(const Node& node, std::unordered_map<TensorImpl*, Buffer>& pending)
      : node_(node), pending_(pending) {}

  Buffer* grad(std::size_t input_index) override {
    const Tensor& input = node_.inputs.at(input_index);
    if (!input.requires_grad()) return nullptr;
    TensorImpl* impl = input.impl().get();
    const auto n = impl->data->size();
    if (impl->node == nullptr) {
      if (!impl->grad) impl->grad = std::make_shared<Buffer>(impl->data->dtype(), n);
      return impl->grad.get();
    }
    auto it = pending_.find(impl);
    if (it == pending_.end()) it = pending_.emplace(impl, Buffer(impl->data->dtype(), n)).first;
    return &it->second;
  }

 private:
  const Node& node_;
  std::unordered_map<TensorImpl*, Buffer>& pending_;
};

std::vector<TensorImpl*> topological_order(TensorImpl* root) {
  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> visited;
  std::vector<std::pair<TensorImpl*, std::size_t>> stack{{root, 0}};
  visited.insert(root);
  while (!stack.empty()) {
    auto& [impl, next_child] = stack.back();
    if (impl->node && next_child < impl->node->inputs.size()) {
      TensorImpl* child = impl->node->inputs[next_child++].impl().get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
      continue;
    }
    order.push_back(impl);
    stack.pop_back();
  }
  return order;  // children before parents
}
}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor make_result(std::string_view op, Shape shape, Buffer data, std::vector<Tensor> inputs, BackwardFn backward) {
  return make_result(op, std::move(shape), std::make_shared<Buffer>(std::move(data)), std::move(inputs),
                     std::move(backward));
}

Tensor make_result(std::string_view op, Shape shape, std::shared_ptr<Buffer> data, std::vector<Tensor> inputs,
                   BackwardFn backward) {
  if (static_cast<std::int64_t>(data->size()) != numel_of(shape)) {
    throw ShapeError(std::string(op) + ": result buffer does not match shape " + to_string(shape));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  bool needs_grad = false;
  if (g_grad_enabled) {
    for (const auto& in : inputs) needs_grad = needs_grad || in.requires_grad();
  }
  if (needs_grad) {
    impl->requires_grad = true;
    impl->node = std::make_shared<Node>(Node{std::string(op), std::move(inputs), std::move(backward)});
  }
  return Tensor(std::move(impl));
}

void backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw RankError("backward() needs a one-element loss, got shape " + to_string(loss.shape()));
  }
  if (!loss.requires_grad()) throw Error("backward() on a tensor that does not require grad");
  TensorImpl* root = loss.impl().get();
  if (root->node == nullptr) {
    if (!root->grad) root->grad = std::make_shared<Buffer>(root->data->dtype(), 1);
    root->grad->set(0, root->grad->get(0) + 1.0);
    return;
  }
  std::unordered_map<TensorImpl*, Buffer> pending;
  {
    Buffer seed(root->data->dtype(), 1);
    seed.set(0, 1.0);
    pending.emplace(root, std::move(seed));
  }
  const auto order = topological_order(root);
  const Fault& f = fault();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* impl = *it;
    if (impl->node == nullptr) continue;
    auto found = pending.find(impl);
    if (found == pending.end()) continue;
    Buffer grad_out = std::move(found->second);
    pending.erase(found);
    if (!f.op.empty() && impl->node->op == f.op) {
      for (std::size_t i = 0; i < grad_out.size(); ++i) grad_out.set(i, grad_out.get(i) * f.scale);
    }
    EngineSink sink(*impl->node, pending);
    impl->node->backward(grad_out, sink);
  }
}

const std::vector<std::string>& differentiable_ops() {
  static const std::vector<std::string> ops = {
      "add",     "sub",        "mul",         "div",         "minimum",    "maximum",      "affine",
      "exp",     "log",        "sqrt",        "relu",        "sigmoid",    "gelu",         "matmul",
      "sum",     "mean",       "max",         "min",         "softmax",    "reshape",      "permute",
      "concat",  "slice",      "pad",         "roll",        "repeat",     "gather_rows",  "linear",
      "conv2d",  "batch_norm2d", "layer_norm", "upsample_bilinear", "attention"};
  return ops;
}

namespace debug {
void inject_backward_fault(std::string op, double scale) {
  fault().op = std::move(op);
  fault().scale = scale;
}
void clear_backward_fault() { fault() = Fault{}; }
}  // namespace debug

}  // namespace mdsvit
