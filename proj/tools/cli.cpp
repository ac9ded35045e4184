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

#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "mdsvit/autograd.hpp"
#include "mdsvit/error.hpp"
#include "mdsvit/grad_suite.hpp"
#include "mdsvit/image_io.hpp"
#include "mdsvit/nn/functional.hpp"
#include "mdsvit/ops.hpp"
#include "mdsvit/synthetic.hpp"
#include "mdsvit/trainer.hpp"

namespace mdsvit::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

enum class Kind { text, integer, number, boolean };

struct KeySpec {
  Kind kind;
  json fallback;
};

const std::map<std::string, KeySpec>& key_specs() {
  static const std::map<std::string, KeySpec> specs = [] {
    const TrainConfig t = TrainConfig::main_defaults();
    const TrainConfig m = TrainConfig::merge_defaults();
    const AugmentConfig a;
    const SynthConfig s;
    std::map<std::string, KeySpec> k{
        {"seed", {Kind::integer, 0}},
        {"model.preset", {Kind::text, "toy"}},
        {"model.height", {Kind::integer, 0}},
        {"model.width", {Kind::integer, 0}},
        {"data.root", {Kind::text, ""}},
        {"data.train_split", {Kind::text, "train"}},
        {"data.val_split", {Kind::text, "val"}},
        {"data.augment", {Kind::boolean, true}},
        {"augment.p_flip", {Kind::number, a.p_flip}},
        {"augment.p_blur", {Kind::number, a.p_blur}},
        {"augment.blur_sigma_min", {Kind::number, a.blur_sigma_min}},
        {"augment.blur_sigma_max", {Kind::number, a.blur_sigma_max}},
        {"augment.p_jitter", {Kind::number, a.p_jitter}},
        {"augment.brightness", {Kind::number, a.brightness}},
        {"augment.contrast", {Kind::number, a.contrast}},
        {"augment.saturation", {Kind::number, a.saturation}},
        {"augment.sharpness", {Kind::number, a.sharpness}},
        {"loss.kl", {Kind::number, t.loss.kl}},
        {"loss.cc", {Kind::number, t.loss.cc}},
        {"loss.sim", {Kind::number, t.loss.sim}},
        {"train.resume", {Kind::text, ""}},
        {"merge.checkpoint", {Kind::text, ""}},
        {"merge.resume", {Kind::text, ""}},
        {"predict.mode", {Kind::text, "dual"}},
        {"predict.format", {Kind::text, "pgm"}},
        {"synth.count", {Kind::integer, s.count}},
        {"synth.height", {Kind::integer, s.height}},
        {"synth.width", {Kind::integer, s.width}},
        {"synth.split", {Kind::text, s.split}},
        {"synth.max_blobs", {Kind::integer, s.max_blobs}},
    };
    for (const auto& [prefix, c] : {std::pair{std::string("train"), t}, std::pair{std::string("merge"), m}}) {
      k[prefix + ".max_epochs"] = {Kind::integer, c.max_epochs};
      k[prefix + ".batch_size"] = {Kind::integer, c.batch_size};
      k[prefix + ".lr"] = {Kind::number, c.lr};
      k[prefix + ".weight_decay"] = {Kind::number, c.weight_decay};
      k[prefix + ".lr_step"] = {Kind::integer, c.lr_step};
      k[prefix + ".lr_gamma"] = {Kind::number, c.lr_gamma};
      k[prefix + ".patience"] = {Kind::integer, c.patience};
    }
    return k;
  }();
  return specs;
}

std::string joined(const std::vector<std::string>& items) {
  std::string s;
  for (const auto& i : items) s += (s.empty() ? "" : ", ") + i;
  return s;
}

}  // namespace

RunConfig::RunConfig() {
  for (const auto& [key, spec] : key_specs()) values_[key] = spec.fallback;
}

std::vector<std::string> RunConfig::valid_keys() {
  std::vector<std::string> keys;
  for (const auto& [key, spec] : key_specs()) keys.push_back(key);
  return keys;
}

void RunConfig::set(const std::string& key, const json& value) {
  const auto it = key_specs().find(key);
  if (it == key_specs().end()) {
    throw ConfigError("unknown config key '" + key + "'; valid keys: " + joined(valid_keys()));
  }
  const Kind kind = it->second.kind;
  const bool ok = (kind == Kind::text && value.is_string()) ||
                  (kind == Kind::integer && value.is_number_integer()) ||
                  (kind == Kind::number && value.is_number()) || (kind == Kind::boolean && value.is_boolean());
  if (!ok) {
    static const char* names[] = {"a string", "an integer", "a number", "true or false"};
    throw ConfigError("config key '" + key + "' expects " + names[static_cast<int>(kind)] + ", got " + value.dump());
  }
  values_[key] = value;
}

void RunConfig::set_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  const auto it = key_specs().find(key);
  if (it != key_specs().end() && it->second.kind == Kind::text) {
    set(key, text);
    return;
  }
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  set(key, value);
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config file " + path + " cannot be opened");
  const json j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ConfigError("config file " + path + " is not a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (value.is_object()) {
      throw ConfigError("config file " + path + ": use flat dotted keys (e.g. \"train.lr\"), not nested objects");
    }
    set(key, value);
  }
}

std::string RunConfig::str(const std::string& key) const { return values_.at(key).get<std::string>(); }
long long RunConfig::integer(const std::string& key) const { return values_.at(key).get<long long>(); }
double RunConfig::number(const std::string& key) const { return values_.at(key).get<double>(); }
bool RunConfig::flag(const std::string& key) const { return values_.at(key).get<bool>(); }

std::string RunConfig::to_json() const {
  ojson j;
  for (const auto& [key, value] : values_) j[key] = value;
  return j.dump(2);
}

namespace {

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text << '\n';
  if (!out) throw Error(path.string() + ": write failed");
}

ModelConfig model_config(const RunConfig& rc) {
  ModelConfig c = ModelConfig::preset_named(rc.str("model.preset"));
  if (rc.integer("model.height") > 0) c.height = rc.integer("model.height");
  if (rc.integer("model.width") > 0) c.width = rc.integer("model.width");
  c.validate();
  return c;
}

// The requested resolution must match the checkpoint's; weights such as the
// position embeddings are tied to it.
void check_resolution(const RunConfig& rc, const ModelConfig& built) {
  const long long h = rc.integer("model.height"), w = rc.integer("model.width");
  if ((h > 0 && h != built.height) || (w > 0 && w != built.width)) {
    throw ConfigError("checkpoint was built for " + std::to_string(built.height) + "x" + std::to_string(built.width) +
                      " inputs but " + std::to_string(h > 0 ? h : built.height) + "x" +
                      std::to_string(w > 0 ? w : built.width) +
                      " was requested; position embeddings are resolution specific, so the model must be rebuilt "
                      "and retrained at the new size");
  }
}

TrainConfig train_config(const RunConfig& rc, const std::string& prefix, const std::string& out_dir,
                         std::ostream& err) {
  TrainConfig t = prefix == "merge" ? TrainConfig::merge_defaults() : TrainConfig::main_defaults();
  t.max_epochs = rc.integer(prefix + ".max_epochs");
  t.batch_size = rc.integer(prefix + ".batch_size");
  t.lr = rc.number(prefix + ".lr");
  t.weight_decay = rc.number(prefix + ".weight_decay");
  t.lr_step = rc.integer(prefix + ".lr_step");
  t.lr_gamma = rc.number(prefix + ".lr_gamma");
  t.patience = rc.integer(prefix + ".patience");
  t.loss = {rc.number("loss.sim"), rc.number("loss.cc"), rc.number("loss.kl")};
  t.out_dir = out_dir;
  t.resume = rc.str(prefix + ".resume");
  t.log = [&err](const std::string& line) { err << line << std::endl; };
  t.validate();
  return t;
}

AugmentConfig augment_config(const RunConfig& rc) {
  AugmentConfig a;
  a.p_flip = rc.number("augment.p_flip");
  a.p_blur = rc.number("augment.p_blur");
  a.blur_sigma_min = rc.number("augment.blur_sigma_min");
  a.blur_sigma_max = rc.number("augment.blur_sigma_max");
  a.p_jitter = rc.number("augment.p_jitter");
  a.brightness = rc.number("augment.brightness");
  a.contrast = rc.number("augment.contrast");
  a.saturation = rc.number("augment.saturation");
  a.sharpness = rc.number("augment.sharpness");
  a.validate();
  return a;
}

struct Datasets {
  std::optional<SaliencyDataset> train, val;
};

Datasets load_datasets(const RunConfig& rc, const ModelConfig& model, std::int64_t batch_size, std::ostream& err) {
  const std::string root = rc.str("data.root");
  if (root.empty()) throw ConfigError("no dataset root given (use --data or --set data.root=DIR)");
  if (!fs::is_directory(root)) throw ConfigError("dataset root " + root + " does not exist");
  const std::string train_split = rc.str("data.train_split"), val_split = rc.str("data.val_split");

  LoaderOptions opts;
  opts.batch_size = batch_size;
  opts.seed = static_cast<std::uint64_t>(rc.integer("seed"));
  opts.preprocess.height = model.height;
  opts.preprocess.width = model.width;
  opts.augment = rc.flag("data.augment");
  opts.augmentation = augment_config(rc);

  const DatasetManifest train_manifest = load_manifest(root, train_split);
  DatasetManifest val_manifest;
  if (fs::is_directory(fs::path(root) / "images" / val_split)) {
    val_manifest = load_manifest(root, val_split);
  } else {
    err << "warning: no '" << val_split << "' split under " << root << "; validating on '" << train_split << "'"
        << std::endl;
    val_manifest = train_manifest;
  }
  LoaderOptions val_opts = opts;
  val_opts.shuffle = false;
  val_opts.augment = false;
  Datasets d;
  d.train.emplace(train_manifest, opts);
  d.val.emplace(val_manifest, val_opts);
  return d;
}

ojson parsed(const std::string& text) { return ojson::parse(text); }

void report_best(const TrainingLog& log, const std::vector<std::string>& names, const fs::path& path,
                 std::ostream& out) {
  ojson j;
  j["best_epoch"] = log.best_epoch;
  j["val_loss"] = log.best_val_loss;
  for (const auto& r : log.epochs) {
    if (r.epoch != log.best_epoch) continue;
    for (std::size_t i = 0; i < names.size() && i < r.per_map.size(); ++i) {
      j[names[i]] = parsed(r.per_map[i].to_json());
      out << names[i] << ":\n" << r.per_map[i].to_text();
    }
  }
  write_file(path, j.dump(2));
}

int cmd_train(const RunConfig& rc, const fs::path& out_dir, std::ostream& out, std::ostream& err) {
  const ModelConfig mc = model_config(rc);
  const TrainConfig tc = train_config(rc, "train", out_dir.string(), err);
  Datasets d = load_datasets(rc, mc, tc.batch_size, err);
  fs::create_directories(out_dir);
  write_file(out_dir / "config.json", rc.to_json());
  SaliencyModel model(mc, static_cast<std::uint64_t>(rc.integer("seed")));
  const TrainingLog log = train_main(model, *d.train, *d.val, tc);
  report_best(log, {"map1", "map2"}, out_dir / "metrics.json", out);
  return kExitOk;
}

int cmd_train_merge(const RunConfig& rc, const fs::path& out_dir, std::ostream& out, std::ostream& err) {
  const std::string ckpt_path = rc.str("merge.checkpoint");
  if (ckpt_path.empty()) throw ConfigError("train-merge needs the main-model checkpoint (--checkpoint FILE)");
  if (!fs::exists(ckpt_path)) throw ConfigError("checkpoint " + ckpt_path + " does not exist");
  const Checkpoint ck = load_checkpoint(ckpt_path);
  SaliencyModel model = model_from_checkpoint(ck);
  check_resolution(rc, model.config());
  const TrainConfig tc = train_config(rc, "merge", out_dir.string(), err);
  Datasets d = load_datasets(rc, model.config(), tc.batch_size, err);
  fs::create_directories(out_dir);
  write_file(out_dir / "merge_config.json", rc.to_json());
  const TrainingLog log = train_merge(model, *d.train, *d.val, tc);
  report_best(log, {"merged"}, out_dir / "merge_metrics.json", out);
  return kExitOk;
}

Tensor three_channels(const Tensor& image) {
  if (image.size(0) == 3) return image;
  return concat({image, image, image}, 0);
}

Tensor single_channel(const Tensor& image) {
  if (image.size(0) == 1) return image;
  return reshape(mean(image, {0}), {1, image.size(1), image.size(2)});
}

Tensor resize_chw(const Tensor& chw, std::int64_t h, std::int64_t w) {
  if (chw.size(1) == h && chw.size(2) == w) return chw;
  const Tensor r = nn::resize_bilinear(reshape(chw, {1, chw.size(0), chw.size(1), chw.size(2)}), h, w);
  return reshape(r, {chw.size(0), h, w});
}

int cmd_predict(const RunConfig& rc, const std::vector<std::string>& images, const std::string& ckpt_path,
                const fs::path& out_dir, std::ostream& out, std::ostream& err) {
  if (ckpt_path.empty()) throw ConfigError("predict needs a checkpoint (--checkpoint FILE)");
  if (!fs::exists(ckpt_path)) throw ConfigError("checkpoint " + ckpt_path + " does not exist");
  if (images.empty()) throw ConfigError("predict needs at least one image");
  const std::string mode = rc.str("predict.mode"), format = rc.str("predict.format");
  if (mode != "dual" && mode != "merged") throw ConfigError("predict.mode must be dual or merged, got '" + mode + "'");
  if (format != "pgm" && format != "png") throw ConfigError("predict.format must be pgm or png, got '" + format + "'");
  for (const auto& path : images)
    if (!fs::exists(path)) throw ConfigError("image " + path + " does not exist");

  const Checkpoint ck = load_checkpoint(ckpt_path);
  SaliencyModel model = model_from_checkpoint(ck);
  check_resolution(rc, model.config());
  if (mode == "merged" && ck.stage != "merge") {
    err << "warning: " << ckpt_path << " comes from the main run; its merge head is untrained" << std::endl;
  }
  model.set_training(false);
  NoGradGuard no_grad;
  const PreprocessConfig pre;
  fs::create_directories(out_dir);
  for (const auto& path : images) {
    const Tensor image = three_channels(decode_image(path));
    const std::int64_t h = image.size(1), w = image.size(2);
    const Tensor x = normalize_image(resize_chw(image, model.config().height, model.config().width), pre.mean, pre.std);
    const SaliencyMaps maps = model.forward(reshape(x, {1, 3, x.size(1), x.size(2)}),
                                            mode == "merged" ? ForwardMode::merged : ForwardMode::dual);
    std::vector<std::pair<std::string, Tensor>> outputs{{"map1", maps.map1}, {"map2", maps.map2}};
    if (mode == "merged") outputs.emplace_back("merged", maps.merged);
    const std::string stem = fs::path(path).stem().string();
    for (const auto& [name, map] : outputs) {
      const Tensor m = resize_chw(reshape(map, {1, map.size(2), map.size(3)}), h, w);
      const fs::path target = out_dir / (stem + "_" + name + "." + format);
      encode_image(target.string(), m);
      out << target.string() << '\n';
    }
  }
  return kExitOk;
}

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".pgm" || ext == ".ppm" || ext == ".png";
}

std::map<std::string, fs::path> images_by_stem(const fs::path& dir, const std::string& suffix) {
  if (!fs::is_directory(dir)) throw ConfigError("directory " + dir.string() + " does not exist");
  std::map<std::string, fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file() || !is_image_file(e.path())) continue;
    std::string stem = e.path().stem().string();
    if (!suffix.empty()) {
      if (stem.size() <= suffix.size() || stem.compare(stem.size() - suffix.size(), suffix.size(), suffix) != 0) continue;
      stem.resize(stem.size() - suffix.size());
    }
    out[stem] = e.path();
  }
  return out;
}

int cmd_eval(const std::string& pred_dir, const std::string& gt_dir, const std::string& fix_dir,
             const std::string& suffix, const fs::path& out_dir, std::ostream& out, std::ostream& err) {
  const auto preds = images_by_stem(pred_dir, suffix);
  const auto gts = images_by_stem(gt_dir, "");
  std::map<std::string, fs::path> fixations;
  if (!fix_dir.empty()) fixations = images_by_stem(fix_dir, "");
  std::vector<Tensor> p, g, f;
  std::vector<std::string> unmatched;
  for (const auto& [stem, path] : gts) {
    const auto it = preds.find(stem);
    if (it == preds.end()) {
      unmatched.push_back(stem);
      continue;
    }
    const Tensor gt = single_channel(decode_image(path.string()));
    g.push_back(gt);
    p.push_back(resize_chw(single_channel(decode_image(it->second.string())), gt.size(1), gt.size(2)));
    if (!fix_dir.empty()) {
      const auto fit = fixations.find(stem);
      if (fit == fixations.end()) throw ConfigError("no fixation map for '" + stem + "' in " + fix_dir);
      f.push_back(single_channel(decode_image(fit->second.string())));
    }
  }
  if (g.empty()) {
    throw ConfigError("no prediction in " + pred_dir + " shares a basename with the ground truth in " + gt_dir +
                      (suffix.empty() ? "" : " (prediction suffix '" + suffix + "')"));
  }
  if (!unmatched.empty()) {
    err << "warning: " << unmatched.size() << " ground-truth map(s) without a prediction: " << joined(unmatched)
        << std::endl;
  }
  const MetricReport report = evaluate(p, g, f);
  out << report.to_text();
  fs::create_directories(out_dir);
  write_file(out_dir / "metrics.json", report.to_json());
  return kExitOk;
}

int cmd_synthesize(const RunConfig& rc, const fs::path& out_dir, std::ostream& out) {
  SynthConfig s;
  s.count = rc.integer("synth.count");
  s.height = rc.integer("synth.height");
  s.width = rc.integer("synth.width");
  s.split = rc.str("synth.split");
  s.max_blobs = rc.integer("synth.max_blobs");
  s.seed = static_cast<std::uint64_t>(rc.integer("seed"));
  const DatasetManifest m = synthesize_dataset(out_dir.string(), s);
  out << "wrote " << m.entries.size() << " samples to " << out_dir.string() << " (split '" << s.split << "')\n";
  return kExitOk;
}

int cmd_grad_check(const std::string& filter, std::ostream& out, std::ostream& err) {
  const GradSuiteResult r = run_grad_suite(filter);
  out << r.table();
  out << r.reports.size() << " case(s), " << differentiable_ops().size() << " registered op(s)\n";
  if (r.all_passed()) return kExitOk;
  std::vector<std::string> failed = r.failures();
  failed.insert(failed.end(), r.uncovered.begin(), r.uncovered.end());
  err << "gradient check failed: " << joined(failed) << std::endl;
  return kExitFailure;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Saliency prediction with a windowed-attention backbone and dual decoders", "mdsvit"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, out_dir = "mdsvit_out";
  std::vector<std::string> sets;
  std::optional<long long> seed;
  app.add_option("--config", config_path, "Flat JSON config file with dotted keys");
  app.add_option("--set", sets, "Override one config key (key=value); repeatable")->expected(1)->take_all();
  app.add_option("--seed", seed, "Seed for initialization, shuffling, augmentation and synthesis");
  app.add_option("--out", out_dir, "Output directory (default mdsvit_out)");

  std::string data_root, checkpoint, mode, format, fixations, suffix, filter, resume;
  std::vector<std::string> images;
  std::string pred_dir, gt_dir;
  std::optional<long long> count, height, width;
  std::string split;

  auto* train = app.add_subcommand("train", "Train the dual-decoder model");
  train->add_option("--data", data_root, "Dataset root");
  train->add_option("--resume", resume, "Continue from a last.ckpt");

  auto* merge = app.add_subcommand("train-merge", "Train the merge head on a frozen main model");
  merge->add_option("--data", data_root, "Dataset root");
  merge->add_option("--checkpoint", checkpoint, "Main-model checkpoint (best.ckpt)");
  merge->add_option("--resume", resume, "Continue from a merge_last.ckpt");

  auto* eval = app.add_subcommand("eval", "Score predicted maps against ground truth");
  eval->add_option("predictions", pred_dir, "Directory of predicted maps")->required();
  eval->add_option("ground_truth", gt_dir, "Directory of ground-truth maps")->required();
  eval->add_option("--fixations", fixations, "Directory of binary fixation maps for AUC");
  eval->add_option("--pred-suffix", suffix, "Suffix after the basename of prediction files (e.g. _merged)");

  auto* predict = app.add_subcommand("predict", "Write saliency heatmaps for images");
  predict->add_option("images", images, "Input images (PPM/PGM/PNG)")->required();
  predict->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  predict->add_option("--mode", mode, "dual or merged");
  predict->add_option("--format", format, "pgm or png");

  auto* synth = app.add_subcommand("synthesize", "Generate a synthetic dataset");
  synth->add_option("--count", count, "Number of samples");
  synth->add_option("--height", height, "Image height");
  synth->add_option("--width", width, "Image width");
  synth->add_option("--split", split, "Split name");

  auto* grad = app.add_subcommand("grad-check", "Run the finite-difference gradient suite");
  grad->add_option("--filter", filter, "Only cases whose name contains this text");

  std::vector<const char*> argv{"mdsvit"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    RunConfig rc;
    if (!config_path.empty()) rc.load_file(config_path);
    for (const auto& s : sets) rc.set_assignment(s);
    if (seed) rc.set("seed", *seed);
    if (!data_root.empty()) rc.set("data.root", data_root);
    if (!mode.empty()) rc.set("predict.mode", mode);
    if (!format.empty()) rc.set("predict.format", format);
    if (count) rc.set("synth.count", *count);
    if (height) rc.set("synth.height", *height);
    if (width) rc.set("synth.width", *width);
    if (!split.empty()) rc.set("synth.split", split);
    if (rc.integer("seed") < 0) throw ConfigError("seed must be non-negative");

    if (*train) {
      if (!resume.empty()) rc.set("train.resume", resume);
      return cmd_train(rc, out_dir, out, err);
    }
    if (*merge) {
      if (!checkpoint.empty()) rc.set("merge.checkpoint", checkpoint);
      if (!resume.empty()) rc.set("merge.resume", resume);
      return cmd_train_merge(rc, out_dir, out, err);
    }
    if (*eval) return cmd_eval(pred_dir, gt_dir, fixations, suffix, out_dir, out, err);
    if (*predict) return cmd_predict(rc, images, checkpoint, out_dir, out, err);
    if (*synth) return cmd_synthesize(rc, out_dir, out);
    if (*grad) return cmd_grad_check(filter, out, err);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << std::endl;
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << std::endl;
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace mdsvit::cli
