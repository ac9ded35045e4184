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

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails. Optional arguments select criteria by
// number (e.g. `mdsvit_acceptance 2 3`).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cli.hpp"
#include "mdsvit/autograd.hpp"
#include "mdsvit/grad_suite.hpp"
#include "mdsvit/losses.hpp"
#include "mdsvit/model.hpp"
#include "mdsvit/ops.hpp"
#include "mdsvit/synthetic.hpp"
#include "mdsvit/trainer.hpp"
#include "temp_dir.hpp"

namespace mdsvit {
namespace {

namespace fs = std::filesystem;

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Collects sub-checks; a criterion passes only when all of them hold.
class Checks {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok) {
      pass_ = false;
      failed_ += (failed_.empty() ? "" : "; ") + what;
    }
  }
  void note(const std::string& text) { notes_ += (notes_.empty() ? "" : ", ") + text; }
  Outcome outcome() const { return {pass_, pass_ ? notes_ : failed_ + (notes_.empty() ? "" : " | " + notes_)}; }

 private:
  bool pass_ = true;
  std::string failed_, notes_;
};

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

TrainConfig quiet(TrainConfig c) {
  c.log = [](const std::string&) {};
  return c;
}

// ---- 1: gradient suite ----

Outcome gradient_suite() {
  Checks c;
  const auto t0 = std::chrono::steady_clock::now();
  const GradSuiteResult r = run_grad_suite();
  const double elapsed = seconds_since(t0);
  double worst_f64 = 0, worst_backbone = 0;
  for (const auto& rep : r.reports) {
    if (rep.op_name.find("backbone") != std::string::npos) {
      worst_backbone = std::max(worst_backbone, rep.max_relative_error);
      c.expect(rep.max_relative_error < 1e-3, rep.op_name + " rel error " + fmt("%.3g", rep.max_relative_error) + " >= 1e-3");
    } else {
      worst_f64 = std::max(worst_f64, rep.max_relative_error);
      c.expect(rep.max_relative_error < 1e-4, rep.op_name + " rel error " + fmt("%.3g", rep.max_relative_error) + " >= 1e-4");
    }
  }
  for (const auto& op : r.uncovered) c.expect(false, "no check covers " + op);
  for (const auto& name : {"loss_cc", "loss_sim", "loss_kl", "backbone_toy_f32"}) {
    c.expect(std::any_of(r.reports.begin(), r.reports.end(), [&](const auto& rep) { return rep.op_name == name; }),
             std::string("missing case ") + name);
  }
  c.expect(r.all_passed(), "suite reported failures");
  c.expect(elapsed < 120.0, "runtime " + fmt("%.1f s", elapsed) + " exceeds 2 min");
  c.note(std::to_string(r.reports.size()) + " cases");
  c.note("max f64 rel error " + fmt("%.2g", worst_f64));
  c.note("backbone f32 " + fmt("%.2g", worst_backbone));
  c.note(fmt("%.1f s", elapsed));
  return c.outcome();
}

// ---- 2: metric identities ----

Outcome metric_identities() {
  DTypeGuard f64(DType::f64);
  Checks c;
  double worst_cc = 0, worst_sim = 0, worst_kl = 0, worst_loss = 0, worst_auc = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Tensor m = create({32, 32}, init::Uniform{0.01, 1.0, seed}, DType::f64);
    worst_cc = std::max(worst_cc, std::abs(loss_cc(m, m).item() - 1.0));
    worst_sim = std::max(worst_sim, std::abs(loss_sim(m, m).item() - 1.0));
    worst_kl = std::max(worst_kl, loss_kl(m, m).item());
    worst_loss = std::max(worst_loss, std::abs(combined_loss(m, m).item() + 3.0));
    const Tensor fix = binarize_saliency(m);
    worst_auc = std::max(worst_auc, std::abs(auc_threshold_sweep(fix, fix) - 1.0));
  }
  const LossWeights w;
  c.expect(w.kl == 10.0 && w.cc == 2.0 && w.sim == 1.0, "default loss weights are not kl 10, cc 2, sim 1");
  c.expect(worst_cc <= 1e-6, "|CC(m,m)-1| = " + fmt("%.3g", worst_cc));
  c.expect(worst_sim <= 1e-9, "|SIM(m,m)-1| = " + fmt("%.3g", worst_sim));
  c.expect(worst_kl <= 1e-9, "KL(m,m) = " + fmt("%.3g", worst_kl));
  c.expect(worst_loss <= 1e-6, "|loss(m,m)+3| = " + fmt("%.3g", worst_loss));
  c.expect(worst_auc <= 1e-9, "|AUC(perfect)-1| = " + fmt("%.3g", worst_auc));
  c.note("10 random 32x32 maps");
  c.note("worst |CC-1| " + fmt("%.1g", worst_cc));
  c.note("|loss+3| " + fmt("%.1g", worst_loss));
  return c.outcome();
}

// ---- 3: AUC against the pairwise-ranking oracle ----

// Fraction of (positive, negative) pairs ranked correctly, ties count half.
double pairwise_auc(const std::vector<double>& scores, const std::vector<double>& labels) {
  double good = 0, pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] < 0.5) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] >= 0.5) continue;
      pairs += 1;
      good += scores[i] > scores[j] ? 1.0 : scores[i] == scores[j] ? 0.5 : 0.0;
    }
  }
  return good / pairs;
}

Outcome auc_oracle() {
  Checks c;
  Rng rng(2024);
  double worst = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor pred = uniform({32, 32}, 0, 1, rng, DType::f64);
    // Smooth-ish ground truth correlated with the prediction so AUCs span a range.
    const Tensor noise = uniform({32, 32}, 0, 1, rng, DType::f64);
    const double mix = trial / 49.0;
    const Tensor gt = binarize_saliency(mix * pred + (1.0 - mix) * noise);
    const double sweep = auc_threshold_sweep(pred, gt);
    const double exact = pairwise_auc(pred.to_vector(), gt.to_vector());
    worst = std::max(worst, std::abs(sweep - exact));
  }
  c.expect(worst < 0.01, "max |sweep - pairwise| = " + fmt("%.4f", worst));
  c.note("50 pairs, max |sweep - pairwise| " + fmt("%.2g", worst));
  return c.outcome();
}

// ---- 4 and 8 share the large model ----

SaliencyModel& large_model() {
  static std::unique_ptr<SaliencyModel> model;
  if (!model) model = std::make_unique<SaliencyModel>(ModelConfig::large(), 1);
  return *model;
}

void check_contract(Checks& c, SaliencyModel& model, std::int64_t h, std::int64_t w, const std::string& label) {
  NoGradGuard no_grad;
  model.set_training(false);
  const Tensor image = create({1, 3, h, w}, init::Normal{0, 1, 5});
  const FeaturePyramid features = model.backbone.forward(image);
  for (int i = 0; i < 6; ++i) {
    static constexpr int kStride[6] = {4, 8, 8, 16, 16, 32};
    const Shape& s = features[static_cast<std::size_t>(i)].shape();
    const bool ok = s.size() == 4 && s[2] == h / kStride[i] && s[3] == w / kStride[i];
    c.expect(ok, label + " feature x" + std::to_string(i + 1) + " has shape " + to_string(s));
  }
  const SaliencyMaps maps = model.forward(image, ForwardMode::merged);
  for (const auto& [name, t] : {std::pair{"map1", &maps.map1}, std::pair{"map2", &maps.map2},
                                std::pair{"merged", &maps.merged}}) {
    c.expect(t->shape() == Shape{1, 1, h, w}, label + " " + name + " has shape " + to_string(t->shape()));
    const auto v = t->to_vector();
    const bool in_range = std::all_of(v.begin(), v.end(), [](double x) { return x > 0.0 && x < 1.0; });
    c.expect(in_range, label + " " + name + " leaves (0,1)");
  }
  std::string scales;
  for (const auto& f : features.maps) scales += "(" + std::to_string(f.size(2)) + "," + std::to_string(f.size(3)) + ")";
  c.note(label + " " + scales);
}

Outcome shape_contract() {
  Checks c;
  SaliencyModel toy(ModelConfig::toy(), 1);
  check_contract(c, toy, 96, 128, "toy");
  check_contract(c, large_model(), 288, 384, "large");
  return c.outcome();
}

// ---- 5: encoder residual path and window attention ----

Outcome encoder_fidelity() {
  Checks c;
  NoGradGuard no_grad;
  Rng rng(2);
  TransformerEncoder enc(16, 32, 4, 2, 4, 6, 8, rng);
  for (auto& layer : enc.layers) {
    for (nn::Linear* l : {&layer.msa.q, &layer.msa.k, &layer.msa.v, &layer.msa.out, &layer.mlp.fc1, &layer.mlp.fc2}) {
      l->weight.mutable_buffer().fill(0.0);
      if (l->bias.defined()) l->bias.mutable_buffer().fill(0.0);
    }
  }
  const Tensor x = create({2, 16, 6, 8}, init::Normal{0, 1, 3});
  const Tensor tokens = reshape(nn::to_channels_last(enc.proj.forward(x)), {2, 48, 32});
  const Tensor expected = nn::to_channels_first(reshape(tokens + repeat(enc.pos, 2), {2, 6, 8, 32}));
  c.expect(enc.forward(x).to_vector() == expected.to_vector(), "zeroed encoder differs from projection + POS");

  Rng wrng(7);
  nn::WindowAttention wa(8, 2, 4, 0, wrng);
  wa.relative_bias = zeros(wa.relative_bias.shape());
  const Tensor grid = create({2, 4, 4, 8}, init::Normal{0, 1, 8});
  const Tensor global = reshape(wa.msa.forward(reshape(grid, {2, 16, 8})), {2, 4, 4, 8});
  const auto a = wa.forward(grid).to_vector(), b = global.to_vector();
  double diff = 0;
  for (std::size_t i = 0; i < a.size(); ++i) diff = std::max(diff, std::abs(a[i] - b[i]));
  c.expect(diff < 1e-5, "full-map window vs global MSA differs by " + fmt("%.3g", diff));
  c.note("residual path bitwise equal");
  c.note("window vs MSA max diff " + fmt("%.2g", diff));
  return c.outcome();
}

// ---- 6: overfit capacity ----

Outcome overfit_capacity() {
  Checks c;
  TempDir dir;
  SynthConfig sc;
  sc.count = 4;
  sc.seed = 7;
  const DatasetManifest manifest = synthesize_dataset(dir.path().string(), sc);
  LoaderOptions lo;
  lo.batch_size = 4;
  lo.seed = 1;
  const SaliencyDataset ds(manifest, lo);
  SaliencyModel model(ModelConfig::toy(), 3);
  const std::int64_t params = model.count_parameters().total;
  c.expect(params <= 2'000'000, "toy model has " + std::to_string(params) + " parameters");

  TrainConfig main = quiet(TrainConfig::main_defaults());
  main.max_epochs = 200;
  main.lr = 3e-3;
  main.lr_step = 100;
  main.patience = 200;
  main.stop_when = [](const EpochRecord& r) { return r.per_map[0].cc >= 0.95 && r.per_map[1].cc >= 0.95; };
  const auto t0 = std::chrono::steady_clock::now();
  const TrainingLog main_log = train_main(model, ds, ds, main);
  const double main_time = seconds_since(t0);
  const EpochRecord& last = main_log.epochs.back();
  c.expect(last.per_map[0].cc >= 0.95 && last.per_map[1].cc >= 0.95,
           "decoder CC " + fmt("%.3f", last.per_map[0].cc) + "/" + fmt("%.3f", last.per_map[1].cc) +
               " after 200 epochs");
  c.expect(main_time < 600.0, "main run took " + fmt("%.0f s", main_time));
  c.note(std::to_string(params) + " params");
  c.note("decoders CC " + fmt("%.3f", last.per_map[0].cc) + "/" + fmt("%.3f", last.per_map[1].cc) + " at epoch " +
         std::to_string(last.epoch + 1) + " (" + fmt("%.0f s", main_time) + ")");

  TrainConfig merge = quiet(TrainConfig::merge_defaults());
  merge.max_epochs = 300;
  merge.lr = 3e-3;
  merge.lr_step = 100;
  merge.patience = 300;
  merge.stop_when = [](const EpochRecord& r) { return r.val.cc >= 0.95; };
  const auto t1 = std::chrono::steady_clock::now();
  const TrainingLog merge_log = train_merge(model, ds, ds, merge);
  const EpochRecord& merged = merge_log.epochs.back();
  c.expect(merged.val.cc >= 0.95, "merged CC " + fmt("%.3f", merged.val.cc) + " after 300 epochs");
  c.note("merged CC " + fmt("%.3f", merged.val.cc) + " at epoch " + std::to_string(merged.epoch + 1) + " (" +
         fmt("%.0f s", seconds_since(t1)) + ")");
  return c.outcome();
}

// ---- 7: training mechanics ----

struct ScriptedLoop {
  Tensor param = from_values({1}, {0.0}).set_requires_grad(true);
  AdamW opt{{{"p", param}}, {}};
  LoopState state;
  std::vector<double> lrs;

  void run(TrainConfig config, const std::vector<double>& val_losses) {
    EpochHooks hooks;
    hooks.train = [&](std::int64_t) {
      lrs.push_back(opt.lr());
      return 1.0;
    };
    hooks.validate = [&](std::int64_t e) {
      ValidationResult v;
      v.loss = val_losses.at(static_cast<std::size_t>(e));
      return v;
    };
    run_epochs(quiet(std::move(config)), opt, hooks, state);
  }
};

Outcome training_mechanics() {
  Checks c;
  {
    // Improves through epoch 3, then flat: epochs 4..8 are the five stagnant ones.
    std::vector<double> losses{1.0, 0.9, 0.8, 0.7};
    losses.resize(40, 0.7);
    ScriptedLoop loop;
    TrainConfig config = TrainConfig::main_defaults();
    config.max_epochs = 40;
    loop.run(config, losses);
    c.expect(loop.state.log.stopped_early && loop.state.log.epochs.size() == 9,
             "stopped after " + std::to_string(loop.state.log.epochs.size()) + " epochs, expected 9");
    c.note("early stop after epoch " + std::to_string(loop.state.log.epochs.size()) + " (best " +
           std::to_string(loop.state.log.best_epoch + 1) + ")");
  }
  {
    std::vector<double> losses;
    for (int e = 0; e < 35; ++e) losses.push_back(1.0 - 0.01 * e);
    ScriptedLoop loop;
    TrainConfig config = TrainConfig::main_defaults();
    config.max_epochs = 35;
    loop.run(config, losses);
    double worst = 0;
    for (std::size_t e = 0; e < loop.lrs.size(); ++e) {
      const double want = config.lr * std::pow(0.5, static_cast<double>(e / 10));
      worst = std::max(worst, std::abs(loop.lrs[e] - want) / want);
    }
    c.expect(loop.lrs.size() == 35 && worst < 1e-12, "lr deviates from 0.5^floor(e/10) by " + fmt("%.3g", worst));
    c.note("lr schedule over 35 epochs exact");
  }
  {
    TempDir data, out;
    SynthConfig sc;
    sc.count = 4;
    sc.height = 40;
    sc.width = 48;
    sc.seed = 21;
    const DatasetManifest manifest = synthesize_dataset(data.path().string(), sc);
    LoaderOptions lo;
    lo.batch_size = 2;
    lo.seed = 9;
    lo.augment = true;
    lo.preprocess.height = 32;
    lo.preprocess.width = 32;
    const SaliencyDataset ds(manifest, lo);
    ModelConfig mc = ModelConfig::toy();
    mc.height = 32;
    mc.width = 32;
    TrainConfig tc = quiet(TrainConfig::main_defaults());
    tc.batch_size = 2;
    tc.lr = 1e-3;
    tc.max_epochs = 4;

    SaliencyModel full(mc, 1);
    const TrainingLog uninterrupted = train_main(full, ds, ds, tc);

    SaliencyModel first(mc, 1);
    tc.max_epochs = 3;
    tc.out_dir = out.file("part");
    train_main(first, ds, ds, tc);

    SaliencyModel resumed(mc, 99);
    tc.max_epochs = 4;
    tc.resume = out.file("part/last.ckpt");
    const TrainingLog continued = train_main(resumed, ds, ds, tc);
    const double diff = std::abs(continued.epochs.back().train_loss - uninterrupted.epochs.back().train_loss);
    c.expect(continued.epochs.size() == 4 && diff <= 1e-6, "resumed epoch-4 loss differs by " + fmt("%.3g", diff));
    c.note("resume next-epoch loss diff " + fmt("%.2g", diff));
  }
  return c.outcome();
}

// ---- 8: parameter accounting ----

Outcome parameter_accounting() {
  Checks c;
  const ParameterCounts n = large_model().count_parameters();
  const double backbone_ratio = static_cast<double>(n.backbone) / 28e6;
  const double merge_ratio = static_cast<double>(n.merge) / 400e3;
  c.expect(n.total == n.backbone + n.encoders + n.decoders + n.merge, "component counts do not sum to the total");
  c.expect(std::abs(backbone_ratio - 1.0) <= 0.15, "backbone " + std::to_string(n.backbone) + " outside 28M +-15%");
  c.expect(std::abs(merge_ratio - 1.0) <= 0.5, "merge head " + std::to_string(n.merge) + " outside 400K +-50%");
  c.note("backbone " + std::to_string(n.backbone) + " (" + fmt("%+.1f%%", 100 * (backbone_ratio - 1)) + " vs 28M)");
  c.note("encoders " + std::to_string(n.encoders));
  c.note("decoders " + std::to_string(n.decoders));
  c.note("merge " + std::to_string(n.merge) + " (" + fmt("%+.1f%%", 100 * (merge_ratio - 1)) + " vs 400K)");
  c.note("total " + std::to_string(n.total));
  return c.outcome();
}

// ---- 9: end-to-end command line pipeline ----

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct PipelineRun {
  bool ok = true;
  std::string error;
  double cc_map1 = 0, cc_map2 = 0;
  std::vector<std::string> predictions;
};

PipelineRun run_pipeline(const fs::path& root) {
  PipelineRun r;
  const auto step = [&](const std::vector<std::string>& args) {
    if (!r.ok) return;
    std::ostringstream out, err;
    if (cli::run(args, out, err) != cli::kExitOk) {
      r.ok = false;
      r.error = args.front() + " failed: " + err.str();
    }
  };
  const std::string data = (root / "data").string(), run = (root / "run").string(), pred = (root / "pred").string();
  step({"synthesize", "--seed", "7", "--count", "4", "--out", data});
  step({"train", "--seed", "7", "--data", data, "--out", run, "--set", "data.augment=false", "--set",
        "train.max_epochs=60", "--set", "train.patience=60", "--set", "train.lr=0.003", "--set", "train.lr_step=100"});
  std::vector<std::string> predict{"predict", "--checkpoint", run + "/best.ckpt", "--out", pred};
  for (int i = 0; i < 4; ++i) predict.push_back(data + "/images/train/synth_000" + std::to_string(i) + ".ppm");
  step(predict);
  for (const auto& [suffix, cc] : {std::pair{"_map1", &r.cc_map1}, std::pair{"_map2", &r.cc_map2}}) {
    const std::string ev = (root / ("eval" + std::string(suffix))).string();
    step({"eval", pred, data + "/maps/train", "--fixations", data + "/fixations/train", "--pred-suffix", suffix,
          "--out", ev});
    if (r.ok) *cc = nlohmann::json::parse(read_bytes(fs::path(ev) / "metrics.json"))["cc"].get<double>();
  }
  if (r.ok) {
    for (const auto& e : fs::directory_iterator(pred)) r.predictions.push_back(e.path().filename().string());
    std::sort(r.predictions.begin(), r.predictions.end());
  }
  return r;
}

Outcome end_to_end() {
  Checks c;
  TempDir a, b;
  const auto t0 = std::chrono::steady_clock::now();
  const PipelineRun first = run_pipeline(a.path());
  const PipelineRun second = run_pipeline(b.path());
  c.expect(first.ok && second.ok, first.ok ? second.error : first.error);
  if (!first.ok || !second.ok) return c.outcome();
  c.expect(first.predictions.size() == 8, std::to_string(first.predictions.size()) + " prediction files, expected 8");
  bool identical = first.predictions == second.predictions;
  for (const auto& name : first.predictions) {
    identical &= read_bytes(a.path() / "pred" / name) == read_bytes(b.path() / "pred" / name);
  }
  identical &= read_bytes(a.path() / "run/best.ckpt") == read_bytes(b.path() / "run/best.ckpt");
  c.expect(identical, "repeated runs produced different bytes");
  c.expect(first.cc_map1 >= 0.9 && first.cc_map2 >= 0.9,
           "train-split CC " + fmt("%.3f", first.cc_map1) + "/" + fmt("%.3f", first.cc_map2));
  c.note("train-split CC " + fmt("%.3f", first.cc_map1) + "/" + fmt("%.3f", first.cc_map2));
  c.note("two runs byte-identical");
  c.note(fmt("%.0f s", seconds_since(t0)));
  return c.outcome();
}

}  // namespace
}  // namespace mdsvit

int main(int argc, char** argv) {
  using namespace mdsvit;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient suite", gradient_suite},
      {"metric identities", metric_identities},
      {"AUC oracle equivalence", auc_oracle},
      {"architecture shape contract", shape_contract},
      {"encoder equation fidelity", encoder_fidelity},
      {"overfit capacity", overfit_capacity},
      {"training mechanics", training_mechanics},
      {"parameter accounting", parameter_accounting},
      {"end-to-end smoke", end_to_end},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(number)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << number << ". " << criteria[i].first << ": " << o.detail
              << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
