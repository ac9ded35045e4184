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

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "mdsvit/autograd.hpp"
#include "mdsvit/error.hpp"
#include "mdsvit/ops.hpp"
#include "mdsvit/synthetic.hpp"
#include "mdsvit/trainer.hpp"
#include "temp_dir.hpp"

namespace mdsvit {
namespace {

namespace fs = std::filesystem;

std::vector<std::uint8_t> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string message_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

// Sets the gradient of every parameter to `g` through a linear loss.
void set_grads(const NamedTensors& params, const std::vector<std::vector<double>>& g) {
  Tensor loss;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const Tensor& p = params[k].second;
    const Tensor term = sum(p * from_values(p.shape(), g[k], p.dtype()));
    loss = loss.defined() ? loss + term : term;
  }
  for (const auto& [name, p] : params) const_cast<Tensor&>(p).zero_grad();
  backward(loss);
}

NamedTensors scalar_param(double value) {
  return {{"p", from_values({1}, {value}, DType::f64).set_requires_grad(true)}};
}

// Textbook Adam with decoupled decay, one element at a time.
struct ReferenceAdam {
  double lr, b1 = 0.9, b2 = 0.999, eps = 1e-8, wd;
  std::vector<double> m, v;
  int t = 0;
  void step(std::vector<double>& p, const std::vector<double>& g) {
    if (m.empty()) m.assign(p.size(), 0.0), v.assign(p.size(), 0.0);
    ++t;
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] -= lr * wd * p[i];
      m[i] = b1 * m[i] + (1 - b1) * g[i];
      v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
      const double mh = m[i] / (1 - std::pow(b1, t)), vh = v[i] / (1 - std::pow(b2, t));
      p[i] -= lr * mh / (std::sqrt(vh) + eps);
    }
  }
};

TEST(AdamW, FirstStepMovesByLearningRate) {
  auto params = scalar_param(0.5);
  AdamW opt(params, {0.1, 0.9, 0.999, 1e-8, 0.0});
  set_grads(params, {{1.0}});
  opt.step();
  EXPECT_NEAR(params[0].second.item(), 0.5 - 0.1, 1e-6);
  EXPECT_EQ(opt.step_count(), 1);
}

TEST(AdamW, MatchesReferenceWithAndWithoutDecay) {
  for (double wd : {0.0, 0.05}) {
    Rng rng(11);
    auto p = uniform({6}, -1, 1, rng, DType::f64).set_requires_grad(true);
    NamedTensors params{{"w", p}};
    std::vector<double> ref = p.to_vector();
    AdamW opt(params, {0.01, 0.9, 0.999, 1e-8, wd});
    ReferenceAdam oracle{0.01, 0.9, 0.999, 1e-8, wd};
    for (int s = 0; s < 8; ++s) {
      std::vector<double> g(6);
      for (auto& x : g) x = rng.normal();
      set_grads(params, {g});
      opt.step();
      oracle.step(ref, g);
    }
    const auto got = p.to_vector();
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], ref[i], 1e-14) << "wd " << wd;
  }
}

TEST(AdamW, ZeroDecayRunsAreIdentical) {
  auto run = [] {
    Rng rng(5);
    auto p = uniform({4}, -1, 1, rng, DType::f64).set_requires_grad(true);
    NamedTensors params{{"w", p}};
    AdamW opt(params, {0.01, 0.9, 0.999, 1e-8, 0.0});
    for (int s = 0; s < 5; ++s) {
      set_grads(params, {{1.0, -2.0, 0.5, 3.0}});
      opt.step();
    }
    return p.to_vector();
  };
  EXPECT_EQ(run(), run());
}

// Constant-lr Adam orbits the minimum with an amplitude set by lr and the
// start point; lr 0.3 from p = 1 settles inside the tolerance.
TEST(AdamW, ConvergesOnQuadratic) {
  auto params = scalar_param(1.0);
  AdamW opt(params, {0.3, 0.9, 0.999, 1e-8, 0.0});
  Tensor& p = params[0].second;
  for (int s = 0; s < 100; ++s) {
    p.zero_grad();
    const Tensor d = p - 3.0;
    backward(sum(d * d));
    opt.step();
  }
  EXPECT_LT(std::abs(p.item() - 3.0), 1e-2);
}

TEST(AdamW, ZeroGradientLeavesParametersUnchanged) {
  Rng rng(2);
  auto p = uniform({5}, -1, 1, rng).set_requires_grad(true);
  NamedTensors params{{"w", p}};
  const auto before = p.to_vector();
  AdamW opt(params, {0.1, 0.9, 0.999, 1e-8, 0.0});
  set_grads(params, {std::vector<double>(5, 0.0)});
  opt.step();
  EXPECT_EQ(p.to_vector(), before);
}

TEST(AdamW, SkipsParametersWithoutGradient) {
  auto params = scalar_param(2.0);
  AdamW opt(params, {0.1, 0.9, 0.999, 1e-8, 0.1});
  opt.step();
  EXPECT_EQ(params[0].second.item(), 2.0);
}

TEST(AdamW, NonFiniteGradientNamesTheParameter) {
  NamedTensors params{{"encoder.w", from_values({2}, {1.0, 2.0}, DType::f64).set_requires_grad(true)},
                      {"decoder.bias", from_values({2}, {3.0, 4.0}, DType::f64).set_requires_grad(true)}};
  AdamW opt(params, {0.1, 0.9, 0.999, 1e-8, 0.0});
  set_grads(params, {{1.0, 1.0}, {0.0, std::nan("")}});
  const auto msg = message_of([&] { opt.step(); });
  EXPECT_NE(msg.find("decoder.bias"), std::string::npos) << msg;
  EXPECT_EQ(params[0].second.to_vector(), (std::vector<double>{1.0, 2.0}));
  EXPECT_THROW(opt.step(), NumericError);
}

TEST(AdamW, RejectsBadHyperparameters) {
  EXPECT_THROW(AdamW(scalar_param(0), {-1.0, 0.9, 0.999, 1e-8, 0.0}), ConfigError);
  EXPECT_THROW(AdamW(scalar_param(0), {0.1, 1.0, 0.999, 1e-8, 0.0}), ConfigError);
  EXPECT_THROW(AdamW(scalar_param(0), {0.1, 0.9, 0.999, 0.0, 0.0}), ConfigError);
}

TEST(StepLR, MatchesClosedForm) {
  const StepLR s{1e-4, 10, 0.5};
  double expected = 1e-4;
  for (int e = 0; e < 100; ++e) {
    if (e > 0 && e % 10 == 0) expected *= 0.5;
    EXPECT_DOUBLE_EQ(s.lr(e), expected) << "epoch " << e;
  }
  EXPECT_DOUBLE_EQ(StepLR({1.0, 3, 0.1}).lr(7), 0.01);
}

TEST(EarlyStopping, ImprovementNeedsMoreThanMinDelta) {
  EarlyStopping es;
  EXPECT_TRUE(es.update(1.0));
  EXPECT_FALSE(es.update(1.0 - 5e-7));
  EXPECT_EQ(es.since_improvement, 1);
  EXPECT_TRUE(es.update(1.0 - 2e-6));
  EXPECT_EQ(es.since_improvement, 0);
  for (int i = 0; i < 4; ++i) {
    es.update(5.0);
    EXPECT_FALSE(es.should_stop());
  }
  es.update(5.0);
  EXPECT_TRUE(es.should_stop());
}

TrainConfig quiet(TrainConfig c = TrainConfig::main_defaults()) {
  c.log = [](const std::string&) {};
  return c;
}

struct LoopHarness {
  AdamW opt{scalar_param(0.0), {}};
  LoopState state;
  std::vector<double> val_losses;
  std::vector<double> lrs;

  void run(const TrainConfig& config) {
    EpochHooks hooks;
    hooks.train = [&](std::int64_t) {
      lrs.push_back(opt.lr());
      return 1.0;
    };
    hooks.validate = [&](std::int64_t e) {
      ValidationResult v;
      v.loss = e < static_cast<std::int64_t>(val_losses.size()) ? val_losses[static_cast<std::size_t>(e)] : 0.5;
      return v;
    };
    run_epochs(config, opt, hooks, state);
  }
};

TEST(RunEpochs, FrozenValidationStopsAfterPatience) {
  LoopHarness h;
  h.val_losses.assign(50, 0.5);
  TrainConfig c = quiet();
  c.max_epochs = 50;
  h.run(c);
  // Epoch 0 sets the best, epochs 1..5 are the five stagnant ones.
  EXPECT_EQ(h.state.log.epochs.size(), 6u);
  EXPECT_TRUE(h.state.log.stopped_early);
  EXPECT_EQ(h.state.log.best_epoch, 0);
}

TEST(RunEpochs, NeverStopsWhileImproving) {
  LoopHarness h;
  for (int e = 0; e < 30; ++e) h.val_losses.push_back(e % 5 == 4 ? 1.0 / (e + 1) : 10.0);
  TrainConfig c = quiet();
  c.max_epochs = 30;
  h.run(c);
  // An improvement every fifth epoch keeps the stagnant run at four.
  EXPECT_EQ(h.state.log.epochs.size(), 30u);
  EXPECT_FALSE(h.state.log.stopped_early);
}

TEST(RunEpochs, RecordsScheduledLearningRates) {
  LoopHarness h;
  for (int e = 0; e < 25; ++e) h.val_losses.push_back(1.0 - 0.01 * e);
  TrainConfig c = quiet();
  c.max_epochs = 25;
  c.lr = 1e-4;
  h.run(c);
  ASSERT_EQ(h.state.log.epochs.size(), 25u);
  for (const auto& r : h.state.log.epochs) {
    EXPECT_DOUBLE_EQ(r.lr, 1e-4 * std::pow(0.5, r.epoch / 10));
    EXPECT_DOUBLE_EQ(h.lrs[static_cast<std::size_t>(r.epoch)], r.lr);
  }
  EXPECT_DOUBLE_EQ(h.state.log.epochs[9].lr, 1e-4);
  EXPECT_DOUBLE_EQ(h.state.log.epochs[10].lr, 5e-5);
  EXPECT_DOUBLE_EQ(h.state.log.epochs[20].lr, 2.5e-5);
}

TEST(RunEpochs, StopWhenEndsEarly) {
  LoopHarness h;
  for (int e = 0; e < 20; ++e) h.val_losses.push_back(1.0 - 0.01 * e);
  TrainConfig c = quiet();
  c.max_epochs = 20;
  c.stop_when = [](const EpochRecord& r) { return r.epoch == 3; };
  h.run(c);
  EXPECT_EQ(h.state.log.epochs.size(), 4u);
}

TEST(TrainConfig, Validation) {
  EXPECT_NO_THROW(TrainConfig::main_defaults().validate());
  EXPECT_NO_THROW(TrainConfig::merge_defaults().validate());
  EXPECT_EQ(TrainConfig::merge_defaults().batch_size, 64);
  EXPECT_DOUBLE_EQ(TrainConfig::merge_defaults().lr, 1e-5);
  EXPECT_DOUBLE_EQ(TrainConfig::merge_defaults().weight_decay, 0.01);
  TrainConfig c;
  c.max_epochs = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.lr = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.lr_gamma = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
}

TrainingLog sample_log() {
  TrainingLog log;
  EpochRecord r;
  r.epoch = 0;
  r.lr = 1e-4;
  r.train_loss = -1.25;
  r.val_loss = -1.5;
  r.val = {0.8, 0.4, 0.7, 0.6, 4};
  r.per_map = {r.val, {0.9, 0.3, 0.75, 0.65, 4}};
  log.epochs.push_back(r);
  log.best_epoch = 0;
  log.best_val_loss = -1.5;
  return log;
}

Checkpoint sample_checkpoint() {
  Checkpoint ck;
  ck.stage = "main";
  ck.model_config = ModelConfig::toy().to_json();
  ck.train_config = TrainConfig{}.to_json();
  ck.epoch = 3;
  ck.data_seed = 0xdeadbeefcafeULL;
  ck.optimizer_step = 17;
  ck.early_stop.best = -1.5;
  ck.early_stop.since_improvement = 2;
  ck.log = sample_log();
  Rng rng(4);
  ck.tensors = {{"model.a", uniform({2, 3}, -1, 1, rng)},
                {"model.b", from_values({1}, {0.1}, DType::f64)},
                {"adam.m.a", normal({4, 1, 2}, 0, 1, rng)}};
  return ck;
}

TEST(Checkpoint, SerializeRoundTripIsBitwise) {
  const auto first = serialize_checkpoint(sample_checkpoint());
  const Checkpoint loaded = deserialize_checkpoint(first);
  EXPECT_EQ(serialize_checkpoint(loaded), first);
  EXPECT_EQ(loaded.stage, "main");
  EXPECT_EQ(loaded.epoch, 3);
  EXPECT_EQ(loaded.data_seed, 0xdeadbeefcafeULL);
  EXPECT_EQ(loaded.optimizer_step, 17);
  EXPECT_EQ(loaded.early_stop.since_improvement, 2);
  EXPECT_DOUBLE_EQ(loaded.early_stop.best, -1.5);
  EXPECT_EQ(ModelConfig::from_json(loaded.model_config).to_json(), ModelConfig::toy().to_json());
  ASSERT_EQ(loaded.log.epochs.size(), 1u);
  EXPECT_DOUBLE_EQ(loaded.log.epochs[0].per_map[1].auc, 0.9);
  EXPECT_EQ(loaded.log.to_csv(), sample_log().to_csv());

  const Checkpoint original = sample_checkpoint();
  ASSERT_EQ(loaded.tensors.size(), original.tensors.size());
  for (std::size_t i = 0; i < original.tensors.size(); ++i) {
    EXPECT_EQ(loaded.tensors[i].first, original.tensors[i].first);
    EXPECT_EQ(loaded.tensors[i].second.shape(), original.tensors[i].second.shape());
    const auto a = original.tensors[i].second.to(DType::f32), b = loaded.tensors[i].second;
    ASSERT_EQ(b.dtype(), DType::f32);
    EXPECT_EQ(std::memcmp(a.data<float>().data(), b.data<float>().data(), a.data<float>().size_bytes()), 0);
  }
}

TEST(Checkpoint, FileRoundTripAndInfiniteBest) {
  TempDir dir;
  Checkpoint ck = sample_checkpoint();
  ck.early_stop = EarlyStopping{};
  save_checkpoint(dir.file("a.ckpt"), ck);
  const Checkpoint loaded = load_checkpoint(dir.file("a.ckpt"));
  EXPECT_TRUE(std::isinf(loaded.early_stop.best));
  save_checkpoint(dir.file("b.ckpt"), loaded);
  EXPECT_EQ(read_bytes(dir.file("a.ckpt")), read_bytes(dir.file("b.ckpt")));
  EXPECT_FALSE(fs::exists(dir.file("a.ckpt.tmp")));
}

TEST(Checkpoint, VersionMismatchIsExplicit) {
  auto bytes = serialize_checkpoint(sample_checkpoint());
  bytes[4] = 9;
  const auto msg = message_of([&] { deserialize_checkpoint(bytes); });
  EXPECT_NE(msg.find("incompatible checkpoint version 9"), std::string::npos) << msg;
  EXPECT_THROW(deserialize_checkpoint(bytes), CheckpointError);
}

TEST(Checkpoint, ForeignFileIsRejected) {
  const std::string text = "P5\n2 2\n255\nabcd";
  EXPECT_THROW(deserialize_checkpoint({text.begin(), text.end()}), CheckpointError);
  EXPECT_THROW(load_checkpoint("/nonexistent/x.ckpt"), CheckpointError);
}

TEST(Checkpoint, EveryCorruptedByteIsDetected) {
  const auto good = serialize_checkpoint(sample_checkpoint());
  // Every byte after the magic and version, flipped one at a time.
  for (std::size_t i = 8; i < good.size(); ++i) {
    auto bad = good;
    bad[i] ^= 0x5a;
    const auto msg = message_of([&] { deserialize_checkpoint(bad); });
    EXPECT_NE(msg.find("integrity"), std::string::npos) << "byte " << i << ": " << msg;
  }
}

TEST(Checkpoint, TruncationIsDetected) {
  const auto good = serialize_checkpoint(sample_checkpoint());
  for (std::size_t len : {std::size_t{6}, std::size_t{12}, std::size_t{40}, good.size() / 2, good.size() - 5,
                          good.size() - 1}) {
    const std::vector<std::uint8_t> cut(good.begin(), good.begin() + static_cast<std::ptrdiff_t>(len));
    EXPECT_THROW(deserialize_checkpoint(cut), CheckpointError) << "length " << len;
  }
  auto longer = good;
  longer.push_back(0);
  EXPECT_THROW(deserialize_checkpoint(longer), CheckpointError);
}

TEST(ModuleState, LoadChecksNamesAndShapes) {
  Rng rng(1);
  nn::Linear a(3, 2, true, rng), b(3, 2, true, rng);
  load_module_state(b, module_state(a));
  EXPECT_EQ(a.weight.to_vector(), b.weight.to_vector());
  nn::Linear wrong(4, 2, true, rng);
  EXPECT_THROW(load_module_state(wrong, module_state(a)), CheckpointError);
  nn::Linear no_bias(3, 2, false, rng);
  EXPECT_THROW(load_module_state(a, module_state(no_bias)), CheckpointError);
}

// Small end-to-end fixture: 32x32 toy model on synthetic samples.
class TrainerFixture : public ::testing::Test {
 protected:
  void SetUp() override {
    SynthConfig sc;
    sc.count = 4;
    sc.height = 40;
    sc.width = 48;
    sc.seed = 21;
    manifest_ = synthesize_dataset(data_.path().string(), sc);
    options_.batch_size = 2;
    options_.seed = 9;
    options_.preprocess.height = 32;
    options_.preprocess.width = 32;
    config_ = ModelConfig::toy();
    config_.height = 32;
    config_.width = 32;
  }

  SaliencyDataset dataset() const { return SaliencyDataset(manifest_, options_); }
  SaliencyModel model(std::uint64_t seed = 1) const { return SaliencyModel(config_, seed); }
  TrainConfig train_config(std::int64_t epochs) const {
    TrainConfig c = quiet();
    c.max_epochs = epochs;
    c.batch_size = 2;
    c.lr = 1e-3;
    return c;
  }

  TempDir data_, out_;
  DatasetManifest manifest_;
  LoaderOptions options_;
  ModelConfig config_;
};

TEST_F(TrainerFixture, MainWritesArtifactsAndLog) {
  auto ds = dataset();
  auto m = model();
  TrainConfig c = train_config(3);
  c.out_dir = out_.file("run");
  const TrainingLog log = train_main(m, ds, ds, c);
  ASSERT_EQ(log.epochs.size(), 3u);
  for (const char* f : {"best.ckpt", "last.ckpt", "log.csv"}) EXPECT_TRUE(fs::exists(out_.path() / "run" / f)) << f;
  std::ifstream csv(out_.file("run/log.csv"));
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "epoch,lr,train_loss,val_loss,val_auc,val_cc,val_sim,val_kl");
  for (const auto& r : log.epochs) {
    ASSERT_EQ(r.per_map.size(), 2u);
    EXPECT_NEAR(r.val.cc, 0.5 * (r.per_map[0].cc + r.per_map[1].cc), 1e-12);
    EXPECT_TRUE(std::isfinite(r.train_loss));
  }
  const Checkpoint best = load_checkpoint(out_.file("run/best.ckpt"));
  EXPECT_EQ(best.epoch, log.best_epoch);
  EXPECT_EQ(best.stage, "main");
  const Checkpoint last = load_checkpoint(out_.file("run/last.ckpt"));
  EXPECT_EQ(last.epoch, 2);
  EXPECT_EQ(last.log.epochs.size(), 3u);
}

TEST_F(TrainerFixture, MainIsDeterministic) {
  auto ds = dataset();
  auto a = model(), b = model();
  const auto la = train_main(a, ds, ds, train_config(2)), lb = train_main(b, ds, ds, train_config(2));
  EXPECT_EQ(la.to_csv(), lb.to_csv());
}

TEST_F(TrainerFixture, MainTrainsOnlyTheMainModel) {
  auto ds = dataset();
  auto m = model();
  const auto merge_before = module_state(m.merge);
  std::vector<std::vector<double>> before;
  for (const auto& [name, t] : merge_before) before.push_back(t.to_vector());
  const auto w_before = m.decoder1.convs[0].weight.to_vector();
  train_main(m, ds, ds, train_config(1));
  const auto after = module_state(m.merge);
  for (std::size_t i = 0; i < after.size(); ++i) EXPECT_EQ(after[i].second.to_vector(), before[i]);
  EXPECT_NE(m.decoder1.convs[0].weight.to_vector(), w_before);
}

TEST_F(TrainerFixture, NonFiniteLossNamesEpochAndBatch) {
  auto ds = dataset();
  auto m = model();
  m.decoder2.convs.back().bias.mutable_buffer().fill(std::nan(""));
  const auto msg = message_of([&] { train_main(m, ds, ds, train_config(2)); });
  EXPECT_NE(msg.find("epoch 0, batch 0"), std::string::npos) << msg;
  EXPECT_THROW(train_main(m, ds, ds, train_config(2)), NumericError);
}

TEST_F(TrainerFixture, ResumeReproducesNextEpoch) {
  auto ds = dataset();
  auto full = model();
  const TrainingLog uninterrupted = train_main(full, ds, ds, train_config(3));

  auto first = model();
  TrainConfig c = train_config(2);
  c.out_dir = out_.file("part");
  train_main(first, ds, ds, c);

  auto resumed = model(77);  // different init; the checkpoint must overwrite it
  c.max_epochs = 3;
  c.resume = out_.file("part/last.ckpt");
  const TrainingLog continued = train_main(resumed, ds, ds, c);
  ASSERT_EQ(continued.epochs.size(), 3u);
  EXPECT_NEAR(continued.epochs[2].train_loss, uninterrupted.epochs[2].train_loss, 1e-6);
  EXPECT_NEAR(continued.epochs[2].val_loss, uninterrupted.epochs[2].val_loss, 1e-6);
  EXPECT_EQ(continued.epochs[0].train_loss, uninterrupted.epochs[0].train_loss);
}

TEST_F(TrainerFixture, ResumeRejectsMismatchedRuns) {
  auto ds = dataset();
  auto m = model();
  TrainConfig c = train_config(1);
  c.out_dir = out_.file("r");
  train_main(m, ds, ds, c);
  c.resume = out_.file("r/last.ckpt");
  c.max_epochs = 2;

  ModelConfig other = config_;
  other.merge_channels = {8, 8, 8, 8, 8, 4, 1};
  SaliencyModel different(other, 1);
  EXPECT_THROW(train_main(different, ds, ds, c), ConfigError);
  EXPECT_THROW(train_merge(m, ds, ds, c), ConfigError);

  LoaderOptions o = options_;
  o.seed = 10;
  SaliencyDataset reseeded(manifest_, o);
  EXPECT_THROW(train_main(m, reseeded, reseeded, c), ConfigError);
}

TEST_F(TrainerFixture, MergeKeepsTheMainModelFrozen) {
  auto ds = dataset();
  auto m = model();
  train_main(m, ds, ds, train_config(1));
  ModuleView main([&](const std::string& p, const nn::TensorVisitor& fn) { m.visit_main(p, fn); });
  std::vector<std::vector<std::uint8_t>> before;
  for (const auto& [name, t] : module_state(main)) {
    const auto d = t.data<float>();
    before.emplace_back(reinterpret_cast<const std::uint8_t*>(d.data()),
                        reinterpret_cast<const std::uint8_t*>(d.data()) + d.size_bytes());
  }
  const auto merge_before = m.merge.convs[0].weight.to_vector();

  std::vector<std::string> messages;
  TrainConfig c = TrainConfig::merge_defaults();
  c.max_epochs = 2;
  c.lr = 1e-3;
  c.out_dir = out_.file("merge");
  c.log = [&](const std::string& s) { messages.push_back(s); };
  const TrainingLog log = train_merge(m, ds, ds, c);

  std::size_t i = 0;
  for (const auto& [name, t] : module_state(main)) {
    const auto d = t.data<float>();
    const std::vector<std::uint8_t> now(reinterpret_cast<const std::uint8_t*>(d.data()),
                                        reinterpret_cast<const std::uint8_t*>(d.data()) + d.size_bytes());
    EXPECT_EQ(now, before[i++]) << name;
    EXPECT_FALSE(t.has_grad()) << name;
  }
  for (const auto& [name, t] : nn::named_parameters(main)) EXPECT_TRUE(t.requires_grad()) << name;
  EXPECT_NE(m.merge.convs[0].weight.to_vector(), merge_before);
  EXPECT_EQ(log.epochs.size(), 2u);
  ASSERT_FALSE(messages.empty());
  EXPECT_NE(messages[0].find("batch size 64 exceeds the 4 training samples; using 4"), std::string::npos)
      << messages[0];
  for (const char* f : {"merge_best.ckpt", "merge_last.ckpt", "merge_log.csv"}) {
    EXPECT_TRUE(fs::exists(out_.path() / "merge" / f)) << f;
  }
  EXPECT_EQ(load_checkpoint(out_.file("merge/merge_last.ckpt")).stage, "merge");
}

TEST_F(TrainerFixture, MergeBatchSizeHonoredWhenDatasetIsLargeEnough) {
  auto ds = dataset();
  auto m = model();
  std::vector<std::string> messages;
  TrainConfig c = TrainConfig::merge_defaults();
  c.max_epochs = 1;
  c.batch_size = 2;
  c.log = [&](const std::string& s) { messages.push_back(s); };
  train_merge(m, ds, ds, c);
  for (const auto& s : messages) EXPECT_EQ(s.find("warning"), std::string::npos) << s;
}

TEST_F(TrainerFixture, MergeResumeReproducesNextEpoch) {
  auto ds = dataset();
  TrainConfig c = TrainConfig::merge_defaults();
  c.log = [](const std::string&) {};
  c.lr = 1e-3;
  c.max_epochs = 3;
  auto full = model();
  const auto uninterrupted = train_merge(full, ds, ds, c);
  auto part = model();
  c.max_epochs = 2;
  c.out_dir = out_.file("m");
  train_merge(part, ds, ds, c);
  auto resumed = model();
  c.max_epochs = 3;
  c.resume = out_.file("m/merge_last.ckpt");
  const auto continued = train_merge(resumed, ds, ds, c);
  ASSERT_EQ(continued.epochs.size(), 3u);
  EXPECT_NEAR(continued.epochs[2].train_loss, uninterrupted.epochs[2].train_loss, 1e-6);
}

TEST_F(TrainerFixture, ModelFromCheckpointRestoresWeights) {
  auto ds = dataset();
  auto m = model();
  TrainConfig c = train_config(1);
  c.out_dir = out_.file("w");
  train_main(m, ds, ds, c);
  const SaliencyModel restored = model_from_checkpoint(load_checkpoint(out_.file("w/last.ckpt")));
  EXPECT_EQ(restored.config().to_json(), config_.to_json());
  EXPECT_EQ(const_cast<SaliencyModel&>(restored).decoder2.convs[3].weight.to_vector(),
            m.decoder2.convs[3].weight.to_vector());
  EXPECT_EQ(const_cast<SaliencyModel&>(restored).decoder2.norms[3].running_mean.to_vector(),
            m.decoder2.norms[3].running_mean.to_vector());
}

// Smooth random map in [0, 1]: two Gaussian bumps.
Tensor bump_map(std::int64_t n, std::int64_t h, std::int64_t w, Rng& rng) {
  std::vector<double> v(static_cast<std::size_t>(n * h * w), 0.0);
  for (std::int64_t s = 0; s < n; ++s)
    for (int b = 0; b < 2; ++b) {
      const double cy = rng.uniform(0, h), cx = rng.uniform(0, w), sigma = rng.uniform(2, 5);
      for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x) {
          const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
          v[static_cast<std::size_t>((s * h + y) * w + x)] += 0.5 * std::exp(-0.5 * d2 / (sigma * sigma));
        }
    }
  return from_values({n, 1, h, w}, std::move(v));
}

TEST(MergeNetTraining, LearnsThePixelwiseMean) {
  Rng rng(3);
  MergeNet merge(ModelConfig::toy().merge_channels, rng);
  AdamW opt(nn::named_parameters(merge), {3e-3, 0.9, 0.999, 1e-8, 0.0});
  Rng data(8);
  for (int step = 0; step < 200; ++step) {
    const Tensor a = bump_map(8, 16, 16, data), b = bump_map(8, 16, 16, data);
    nn::zero_grad(merge);
    const Tensor d = merge.forward(a, b) - (a + b) * 0.5;
    backward(mean(d * d));
    opt.step();
  }
  merge.set_training(false);
  Rng held_out(99);
  const Tensor a = bump_map(16, 16, 16, held_out), b = bump_map(16, 16, 16, held_out);
  NoGradGuard no_grad;
  const Tensor d = merge.forward(a, b) - (a + b) * 0.5;
  EXPECT_LT(mean(d * d).item(), 1e-3);
}

}  // namespace
}  // namespace mdsvit
