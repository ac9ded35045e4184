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

#include <benchmark/benchmark.h>

#include "mdsvit/autograd.hpp"
#include "mdsvit/losses.hpp"
#include "mdsvit/model.hpp"
#include "mdsvit/nn/functional.hpp"
#include "mdsvit/ops.hpp"
#include "mdsvit/trainer.hpp"

namespace mdsvit {
namespace {

void BM_Matmul(benchmark::State& state) {
  const std::int64_t n = state.range(0);
  const Tensor a = create({n, n}, init::Normal{0, 1, 1});
  const Tensor b = create({n, n}, init::Normal{0, 1, 2});
  NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * 2 * n * n * n);
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);

void BM_Conv3x3(benchmark::State& state) {
  const std::int64_t c = state.range(0);
  const Tensor x = create({2, c, 24, 32}, init::Normal{0, 1, 1});
  const Tensor w = create({c, c, 3, 3}, init::Normal{0, 0.1, 2});
  const Tensor b = zeros({c});
  NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(nn::conv2d(x, w, b, 1, 1));
}
BENCHMARK(BM_Conv3x3)->Arg(16)->Arg(48);

void BM_ConvForwardBackward(benchmark::State& state) {
  const Tensor x = create({2, 32, 24, 32}, init::Normal{0, 1, 1}).set_requires_grad(true);
  const Tensor w = create({32, 32, 3, 3}, init::Normal{0, 0.1, 2}).set_requires_grad(true);
  const Tensor b = zeros({32}).set_requires_grad(true);
  for (auto _ : state) {
    backward(sum(nn::conv2d(x, w, b, 1, 1)));
  }
}
BENCHMARK(BM_ConvForwardBackward);

void BM_Attention(benchmark::State& state) {
  const std::int64_t tokens = state.range(0);
  const Tensor q = create({8, tokens, 16}, init::Normal{0, 1, 1});
  const Tensor k = create({8, tokens, 16}, init::Normal{0, 1, 2});
  const Tensor v = create({8, tokens, 16}, init::Normal{0, 1, 3});
  NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(nn::attention(q, k, v, Tensor(), 0.25));
}
BENCHMARK(BM_Attention)->Arg(16)->Arg(192);

void BM_ToyBackboneForward(benchmark::State& state) {
  const Backbone backbone(BackboneConfig::toy(), 1);
  const Tensor image = create({1, 3, 96, 128}, init::Normal{0, 1, 1});
  NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(backbone.forward(image));
}
BENCHMARK(BM_ToyBackboneForward)->Unit(benchmark::kMillisecond);

void BM_ToyModelInference(benchmark::State& state) {
  SaliencyModel model(ModelConfig::toy(), 1);
  model.set_training(false);
  const Tensor image = create({1, 3, 96, 128}, init::Normal{0, 1, 1});
  NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(image, ForwardMode::merged));
}
BENCHMARK(BM_ToyModelInference)->Unit(benchmark::kMillisecond);

// One optimizer step of the main model on a batch of 4.
void BM_ToyTrainStep(benchmark::State& state) {
  SaliencyModel model(ModelConfig::toy(), 1);
  ModuleView main([&](const std::string& p, const nn::TensorVisitor& fn) { model.visit_main(p, fn); });
  AdamW opt(nn::named_parameters(main), {.lr = 1e-4});
  const Tensor image = create({4, 3, 96, 128}, init::Normal{0, 1, 1});
  const Tensor gt = create({4, 1, 96, 128}, init::Uniform{0.0, 1.0, 2});
  for (auto _ : state) {
    nn::zero_grad(main);
    const SaliencyMaps maps = model.forward(image);
    backward(combined_loss(maps.map1, gt) + combined_loss(maps.map2, gt));
    opt.step();
  }
}
BENCHMARK(BM_ToyTrainStep)->Unit(benchmark::kMillisecond);

void BM_CombinedLoss(benchmark::State& state) {
  const Tensor p = create({4, 1, 96, 128}, init::Uniform{0.01, 1.0, 1});
  const Tensor g = create({4, 1, 96, 128}, init::Uniform{0.0, 1.0, 2});
  NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(combined_loss(p, g));
}
BENCHMARK(BM_CombinedLoss);

void BM_AucSweep(benchmark::State& state) {
  const Tensor p = create({96, 128}, init::Uniform{0.0, 1.0, 1}, DType::f64);
  const Tensor g = binarize_saliency(create({96, 128}, init::Uniform{0.0, 1.0, 2}, DType::f64));
  for (auto _ : state) benchmark::DoNotOptimize(auc_threshold_sweep(p, g));
}
BENCHMARK(BM_AucSweep);

void BM_CheckpointRoundTrip(benchmark::State& state) {
  SaliencyModel model(ModelConfig::toy(), 1);
  Checkpoint ck;
  ck.stage = "main";
  ck.model_config = model.config().to_json();
  ck.train_config = TrainConfig::main_defaults().to_json();
  for (auto& [name, t] : module_state(model)) ck.tensors.emplace_back("model." + name, t);
  for (auto _ : state) benchmark::DoNotOptimize(deserialize_checkpoint(serialize_checkpoint(ck)));
}
BENCHMARK(BM_CheckpointRoundTrip)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace mdsvit

BENCHMARK_MAIN();
