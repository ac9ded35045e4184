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

#include "mdsvit/trainer.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <map>
#include <sstream>

#include <json.hpp>

#include "mdsvit/autograd.hpp"
#include "mdsvit/error.hpp"
#include "mdsvit/ops.hpp"

namespace mdsvit {

static_assert(std::endian::native == std::endian::little, "checkpoint payloads assume a little-endian host");

namespace {

using ojson = nlohmann::ordered_json;
namespace fs = std::filesystem;

constexpr char kMagic[4] = {'M', 'D', 'S', 'V'};

void emit(const TrainConfig& config, const std::string& line) {
  if (config.log) {
    config.log(line);
  } else {
    std::cerr << line << '\n';
  }
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// JSON has no inf/nan; they travel as null.
ojson finite_or_null(double v) { return std::isfinite(v) ? ojson(v) : ojson(nullptr); }
double number_or(const ojson& j, double fallback) { return j.is_null() ? fallback : j.get<double>(); }

std::uint32_t crc_of(const void* data, std::size_t n) {
  return static_cast<std::uint32_t>(crc32(crc32(0L, Z_NULL, 0), static_cast<const Bytef*>(data), static_cast<uInt>(n)));
}

template <class T>
void put(std::vector<std::uint8_t>& out, T v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

template <class T>
T get(const std::vector<std::uint8_t>& in, std::size_t at) {
  T v;
  std::memcpy(&v, in.data() + at, sizeof(T));
  return v;
}

ojson report_json(const MetricReport& r) {
  return {{"auc", finite_or_null(r.auc)}, {"kl", finite_or_null(r.kl)}, {"cc", finite_or_null(r.cc)},
          {"sim", finite_or_null(r.sim)}, {"n_samples", r.n_samples}};
}

MetricReport report_from(const ojson& j) {
  const double nan = std::nan("");
  return {number_or(j.at("auc"), nan), number_or(j.at("kl"), nan), number_or(j.at("cc"), nan),
          number_or(j.at("sim"), nan), j.at("n_samples").get<std::int64_t>()};
}

ojson log_json(const TrainingLog& log) {
  ojson epochs = ojson::array();
  for (const auto& r : log.epochs) {
    ojson per_map = ojson::array();
    for (const auto& m : r.per_map) per_map.push_back(report_json(m));
    epochs.push_back({{"epoch", r.epoch},
                      {"lr", finite_or_null(r.lr)},
                      {"train_loss", finite_or_null(r.train_loss)},
                      {"val_loss", finite_or_null(r.val_loss)},
                      {"val", report_json(r.val)},
                      {"per_map", per_map}});
  }
  return {{"best_epoch", log.best_epoch},
          {"best_val_loss", finite_or_null(log.best_val_loss)},
          {"stopped_early", log.stopped_early},
          {"epochs", epochs}};
}

TrainingLog log_from(const ojson& j) {
  const double inf = std::numeric_limits<double>::infinity(), nan = std::nan("");
  TrainingLog log;
  log.best_epoch = j.at("best_epoch").get<std::int64_t>();
  log.best_val_loss = number_or(j.at("best_val_loss"), inf);
  log.stopped_early = j.at("stopped_early").get<bool>();
  for (const auto& e : j.at("epochs")) {
    EpochRecord r;
    r.epoch = e.at("epoch").get<std::int64_t>();
    r.lr = number_or(e.at("lr"), nan);
    r.train_loss = number_or(e.at("train_loss"), nan);
    r.val_loss = number_or(e.at("val_loss"), nan);
    r.val = report_from(e.at("val"));
    for (const auto& m : e.at("per_map")) r.per_map.push_back(report_from(m));
    log.epochs.push_back(std::move(r));
  }
  return log;
}

ojson parse_or_empty(const std::string& text) { return text.empty() ? ojson::object() : ojson::parse(text); }

MetricReport mean_report(const std::vector<MetricReport>& reports) {
  MetricReport out;
  for (const auto& r : reports) {
    out.auc += r.auc;
    out.kl += r.kl;
    out.cc += r.cc;
    out.sim += r.sim;
  }
  const double n = static_cast<double>(reports.size());
  out.auc /= n;
  out.kl /= n;
  out.cc /= n;
  out.sim /= n;
  out.n_samples = reports.front().n_samples;
  return out;
}

// [B, 1, H, W] -> B tensors of [1, H, W].
void split_into(const Tensor& batch, std::vector<Tensor>& out) {
  for (std::int64_t i = 0; i < batch.size(0); ++i) {
    out.push_back(reshape(slice(batch, 0, i, 1), {batch.size(1), batch.size(2), batch.size(3)}));
  }
}

std::string join_ids(const std::vector<std::string>& ids) {
  std::string s;
  for (const auto& id : ids) s += (s.empty() ? "" : ", ") + id;
  return s;
}

void check_loss(double loss, std::int64_t epoch, std::int64_t batch, const Batch& b) {
  if (!std::isfinite(loss)) {
    throw NumericError("non-finite training loss (" + num(loss) + ") at epoch " + std::to_string(epoch) + ", batch " +
                       std::to_string(batch) + " (samples: " + join_ids(b.ids) + ")");
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error(path.string() + ": write failed");
}

// State shared by both training stages.
class Run {
 public:
  Run(std::string stage, std::string file_prefix, SaliencyModel& model, AdamW& optimizer, const TrainConfig& config,
      std::uint64_t data_seed)
      : stage_(std::move(stage)), prefix_(std::move(file_prefix)), model_(model), opt_(optimizer), config_(config),
        data_seed_(data_seed) {
    state_.early_stop.patience = config.patience;
    if (!config.out_dir.empty()) fs::create_directories(config.out_dir);
    if (!config.resume.empty()) resume(load_checkpoint(config.resume));
  }

  LoopState& state() { return state_; }

  void on_epoch_end(const LoopState& s, bool improved) {
    const auto& r = s.log.epochs.back();
    emit(config_, stage_ + " epoch " + std::to_string(r.epoch + 1) + "/" + std::to_string(config_.max_epochs) +
                      " lr " + num(r.lr) + " train_loss " + num(r.train_loss) + " val_loss " + num(r.val_loss) +
                      " val_cc " + num(r.val.cc) + (improved ? " *" : ""));
    if (config_.out_dir.empty()) return;
    const fs::path dir(config_.out_dir);
    const Checkpoint ck = snapshot(s);
    save_checkpoint((dir / (prefix_ + "last.ckpt")).string(), ck);
    if (improved) save_checkpoint((dir / (prefix_ + "best.ckpt")).string(), ck);
    write_text(dir / (prefix_ + "log.csv"), s.log.to_csv());
  }

 private:
  Checkpoint snapshot(const LoopState& s) const {
    Checkpoint ck;
    ck.stage = stage_;
    ck.model_config = model_.config().to_json();
    ck.train_config = config_.to_json();
    ck.epoch = s.next_epoch - 1;
    ck.data_seed = data_seed_;
    ck.optimizer_step = opt_.step_count();
    ck.early_stop = s.early_stop;
    ck.log = s.log;
    for (auto& [name, t] : module_state(model_)) ck.tensors.emplace_back("model." + name, t);
    for (auto& entry : opt_.state_tensors()) ck.tensors.push_back(entry);
    return ck;
  }

  void resume(const Checkpoint& ck) {
    if (ck.stage != stage_) {
      throw ConfigError("resume: " + config_.resume + " is a " + ck.stage + " checkpoint, expected " + stage_);
    }
    if (ojson::parse(ck.model_config) != ojson::parse(model_.config().to_json())) {
      throw ConfigError("resume: model configuration differs from " + config_.resume);
    }
    if (ck.data_seed != data_seed_) {
      throw ConfigError("resume: data seed " + std::to_string(data_seed_) + " differs from the checkpoint's " +
                        std::to_string(ck.data_seed));
    }
    load_module_state(model_, ck.with_prefix("model."));
    opt_.load_state(ck.optimizer_step, ck.tensors);
    state_.log = ck.log;
    state_.early_stop = ck.early_stop;
    state_.early_stop.patience = config_.patience;
    state_.next_epoch = ck.epoch + 1;
    emit(config_, stage_ + ": resuming after epoch " + std::to_string(ck.epoch + 1) + " from " + config_.resume);
  }

  std::string stage_, prefix_;
  SaliencyModel& model_;
  AdamW& opt_;
  const TrainConfig& config_;
  std::uint64_t data_seed_;
  LoopState state_;
};

// Clears requires_grad on a set of parameters for the lifetime of the guard.
class FreezeGuard {
 public:
  explicit FreezeGuard(nn::Module& m) {
    for (auto& [name, t] : nn::named_parameters(m)) {
      saved_.emplace_back(t, t.requires_grad());
      t.zero_grad();
      t.set_requires_grad(false);
    }
  }
  ~FreezeGuard() {
    for (auto& [t, flag] : saved_) t.set_requires_grad(flag);
  }
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  std::vector<std::pair<Tensor, bool>> saved_;
};

}  // namespace

AdamW::AdamW(NamedTensors params, AdamWConfig config) : params_(std::move(params)), config_(config) {
  if (config_.lr < 0 || config_.weight_decay < 0 || config_.eps <= 0 || config_.beta1 < 0 || config_.beta1 >= 1 ||
      config_.beta2 < 0 || config_.beta2 >= 1) {
    throw ConfigError("AdamW: need lr >= 0, weight_decay >= 0, eps > 0 and betas in [0, 1)");
  }
  for (const auto& [name, p] : params_) {
    m_.push_back(zeros(p.shape(), p.dtype()));
    v_.push_back(zeros(p.shape(), p.dtype()));
  }
}

void AdamW::step() {
  for (const auto& [name, p] : params_) {
    if (!p.has_grad()) continue;
    const Buffer& g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!std::isfinite(g.get(i))) {
        throw NumericError("non-finite gradient in parameter '" + name + "' (element " + std::to_string(i) + ")");
      }
    }
  }
  ++step_;
  const double b1 = config_.beta1, b2 = config_.beta2, lr = config_.lr;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  const double decay = 1.0 - lr * config_.weight_decay;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor& p = params_[k].second;
    if (!p.has_grad()) continue;
    dispatch(p.dtype(), [&]<class T>() {
      auto w = p.mutable_data<T>();
      auto m = m_[k].mutable_data<T>();
      auto v = v_[k].mutable_data<T>();
      const auto g = p.grad_buffer().span<T>();
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = g[i];
        const double mi = b1 * m[i] + (1.0 - b1) * gi;
        const double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        const double update = (mi / c1) / (std::sqrt(vi / c2) + config_.eps);
        w[i] = static_cast<T>(decay * w[i] - lr * update);
      }
    });
  }
}

NamedTensors AdamW::state_tensors() const {
  NamedTensors out;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    out.emplace_back("adam.m." + params_[k].first, m_[k]);
    out.emplace_back("adam.v." + params_[k].first, v_[k]);
  }
  return out;
}

void AdamW::load_state(std::int64_t step_count, const NamedTensors& tensors) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : tensors) by_name[name] = &t;
  auto restore = [&](const std::string& name, Tensor& dst) {
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw CheckpointError("optimizer state '" + name + "' missing");
    if (it->second->shape() != dst.shape()) {
      throw CheckpointError("optimizer state '" + name + "' has shape " + to_string(it->second->shape()) +
                            ", expected " + to_string(dst.shape()));
    }
    dst.mutable_buffer() = it->second->buffer().cast(dst.dtype());
  };
  for (std::size_t k = 0; k < params_.size(); ++k) {
    restore("adam.m." + params_[k].first, m_[k]);
    restore("adam.v." + params_[k].first, v_[k]);
  }
  step_ = step_count;
}

double StepLR::lr(std::int64_t epoch) const {
  return base_lr * std::pow(gamma, static_cast<double>(epoch / step_size));
}

bool EarlyStopping::update(double val_loss) {
  if (val_loss < best - min_delta) {
    best = val_loss;
    since_improvement = 0;
    return true;
  }
  ++since_improvement;
  return false;
}

std::string TrainingLog::to_csv() const {
  std::ostringstream out;
  out << "epoch,lr,train_loss,val_loss,val_auc,val_cc,val_sim,val_kl\n";
  out.precision(10);
  for (const auto& r : epochs) {
    out << r.epoch << ',' << r.lr << ',' << r.train_loss << ',' << r.val_loss << ',' << r.val.auc << ',' << r.val.cc
        << ',' << r.val.sim << ',' << r.val.kl << '\n';
  }
  return out.str();
}

TrainConfig TrainConfig::main_defaults() { return TrainConfig{}; }

TrainConfig TrainConfig::merge_defaults() {
  TrainConfig c;
  c.lr = 1e-5;
  c.weight_decay = 0.01;
  c.batch_size = 64;
  return c;
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("train: " + what);
  };
  require(max_epochs >= 1, "max_epochs must be >= 1");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(lr > 0 && std::isfinite(lr), "lr must be positive");
  require(weight_decay >= 0, "weight_decay must be >= 0");
  require(lr_step >= 1, "lr_step must be >= 1");
  require(lr_gamma > 0 && lr_gamma <= 1, "lr_gamma must be in (0, 1]");
  require(patience >= 1, "patience must be >= 1");
  require(loss.kl >= 0 && loss.cc >= 0 && loss.sim >= 0, "loss weights must be non-negative");
}

std::string TrainConfig::to_json() const {
  ojson j;
  j["max_epochs"] = max_epochs;
  j["batch_size"] = batch_size;
  j["lr"] = lr;
  j["weight_decay"] = weight_decay;
  j["lr_step"] = lr_step;
  j["lr_gamma"] = lr_gamma;
  j["patience"] = patience;
  j["loss"] = {{"kl", loss.kl}, {"cc", loss.cc}, {"sim", loss.sim}};
  return j.dump();
}

NamedTensors Checkpoint::with_prefix(const std::string& prefix) const {
  NamedTensors out;
  for (const auto& [name, t] : tensors) {
    if (name.compare(0, prefix.size(), prefix) == 0) out.emplace_back(name.substr(prefix.size()), t);
  }
  return out;
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  std::vector<std::vector<float>> payloads;
  ojson listing = ojson::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : ckpt.tensors) {
    const Tensor f = t.dtype() == DType::f32 ? t : t.to(DType::f32);
    const auto span = f.data<float>();
    payloads.emplace_back(span.begin(), span.end());
    const std::uint64_t bytes = span.size() * sizeof(float);
    listing.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}, {"bytes", bytes}});
    offset += bytes + sizeof(std::uint32_t);
  }
  ojson header;
  header["stage"] = ckpt.stage;
  header["epoch"] = ckpt.epoch;
  header["data_seed"] = ckpt.data_seed;
  header["optimizer_step"] = ckpt.optimizer_step;
  header["early_stop"] = {{"patience", ckpt.early_stop.patience},
                          {"min_delta", ckpt.early_stop.min_delta},
                          {"best", finite_or_null(ckpt.early_stop.best)},
                          {"since_improvement", ckpt.early_stop.since_improvement}};
  header["model_config"] = parse_or_empty(ckpt.model_config);
  header["train_config"] = parse_or_empty(ckpt.train_config);
  header["log"] = log_json(ckpt.log);
  header["tensors"] = listing;
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put<std::uint32_t>(out, ckpt.version);
  put<std::uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  put<std::uint32_t>(out, crc_of(text.data(), text.size()));
  for (const auto& p : payloads) {
    const auto* bytes = reinterpret_cast<const std::uint8_t*>(p.data());
    out.insert(out.end(), bytes, bytes + p.size() * sizeof(float));
    put<std::uint32_t>(out, crc_of(p.data(), p.size() * sizeof(float)));
  }
  return out;
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes, const std::string& name) {
  auto integrity = [&](const std::string& what) -> CheckpointError {
    return CheckpointError(name + ": integrity check failed: " + what);
  };
  constexpr std::size_t kPrefix = 4 + 4 + 8;
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw CheckpointError(name + ": not a checkpoint (missing MDSV magic)");
  }
  if (bytes.size() < kPrefix) throw integrity("file truncated inside the preamble");
  const auto version = get<std::uint32_t>(bytes, 4);
  if (version != kCheckpointVersion) {
    throw CheckpointError(name + ": incompatible checkpoint version " + std::to_string(version) +
                          " (this build reads version " + std::to_string(kCheckpointVersion) + ")");
  }
  const auto header_len = get<std::uint64_t>(bytes, 8);
  if (header_len > bytes.size() - kPrefix || bytes.size() - kPrefix - header_len < 4) {
    throw integrity("file truncated inside the header");
  }
  const std::string text(bytes.begin() + kPrefix, bytes.begin() + static_cast<std::ptrdiff_t>(kPrefix + header_len));
  if (crc_of(text.data(), text.size()) != get<std::uint32_t>(bytes, kPrefix + header_len)) {
    throw integrity("header checksum mismatch");
  }
  const std::size_t payload_start = kPrefix + header_len + 4;

  Checkpoint ck;
  ck.version = version;
  try {
    const auto h = ojson::parse(text);
    ck.stage = h.at("stage").get<std::string>();
    ck.epoch = h.at("epoch").get<std::int64_t>();
    ck.data_seed = h.at("data_seed").get<std::uint64_t>();
    ck.optimizer_step = h.at("optimizer_step").get<std::int64_t>();
    const auto& es = h.at("early_stop");
    ck.early_stop.patience = es.at("patience").get<std::int64_t>();
    ck.early_stop.min_delta = es.at("min_delta").get<double>();
    ck.early_stop.best = number_or(es.at("best"), std::numeric_limits<double>::infinity());
    ck.early_stop.since_improvement = es.at("since_improvement").get<std::int64_t>();
    ck.model_config = h.at("model_config").dump();
    ck.train_config = h.at("train_config").dump();
    ck.log = log_from(h.at("log"));

    std::size_t expected_end = payload_start;
    for (const auto& entry : h.at("tensors")) {
      const auto tname = entry.at("name").get<std::string>();
      const auto shape = entry.at("shape").get<Shape>();
      const auto offset = entry.at("offset").get<std::uint64_t>();
      const auto nbytes = entry.at("bytes").get<std::uint64_t>();
      std::uint64_t numel = 1;
      for (auto d : shape) numel *= static_cast<std::uint64_t>(d);
      if (numel * sizeof(float) != nbytes) throw integrity("tensor '" + tname + "' size disagrees with its shape");
      if (offset > bytes.size() - payload_start || bytes.size() - payload_start - offset < nbytes + 4) {
        throw integrity("file truncated in tensor '" + tname + "'");
      }
      const std::size_t at = payload_start + offset;
      if (crc_of(bytes.data() + at, nbytes) != get<std::uint32_t>(bytes, at + nbytes)) {
        throw integrity("checksum mismatch in tensor '" + tname + "'");
      }
      Buffer buf(DType::f32, numel);
      std::memcpy(buf.span<float>().data(), bytes.data() + at, nbytes);
      ck.tensors.emplace_back(tname, from_buffer(shape, std::move(buf)));
      expected_end = std::max<std::size_t>(expected_end, at + nbytes + 4);
    }
    if (expected_end != bytes.size()) {
      throw integrity(std::to_string(bytes.size() - expected_end) + " unexpected trailing bytes");
    }
  } catch (const nlohmann::json::exception& e) {
    throw integrity(std::string("malformed header: ") + e.what());
  }
  return ck;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const auto bytes = serialize_checkpoint(ckpt);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw CheckpointError(path + ": cannot open for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError(path + ": write failed");
  }
  fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(path + ": cannot open");
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes, path);
}

NamedTensors module_state(nn::Module& module) {
  NamedTensors out;
  module.visit("", [&](const std::string& name, Tensor& t, bool) { out.emplace_back(name, t); });
  return out;
}

void load_module_state(nn::Module& module, const NamedTensors& state) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : state) by_name[name] = &t;
  module.visit("", [&](const std::string& name, Tensor& t, bool) {
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw CheckpointError("checkpoint lacks tensor '" + name + "'");
    if (it->second->shape() != t.shape()) {
      throw CheckpointError("tensor '" + name + "' has shape " + to_string(it->second->shape()) + " in the checkpoint, " +
                            to_string(t.shape()) + " in the model");
    }
    t.mutable_buffer() = it->second->buffer().cast(t.dtype());
  });
}

SaliencyModel model_from_checkpoint(const Checkpoint& ckpt) {
  SaliencyModel model(ModelConfig::from_json(ckpt.model_config), 0);
  load_module_state(model, ckpt.with_prefix("model."));
  return model;
}

void run_epochs(const TrainConfig& config, AdamW& optimizer, const EpochHooks& hooks, LoopState& state) {
  const StepLR schedule{config.lr, config.lr_step, config.lr_gamma};
  for (std::int64_t e = state.next_epoch; e < config.max_epochs; ++e) {
    if (state.early_stop.should_stop()) break;
    EpochRecord r;
    r.epoch = e;
    r.lr = schedule.lr(e);
    optimizer.set_lr(r.lr);
    r.train_loss = hooks.train(e);
    const ValidationResult v = hooks.validate(e);
    r.val_loss = v.loss;
    r.val = v.report;
    r.per_map = v.per_map;
    const bool improved = state.early_stop.update(v.loss);
    if (improved) {
      state.log.best_epoch = e;
      state.log.best_val_loss = v.loss;
    }
    state.log.epochs.push_back(std::move(r));
    state.next_epoch = e + 1;
    state.log.stopped_early = state.early_stop.should_stop() && e + 1 < config.max_epochs;
    if (hooks.on_epoch_end) hooks.on_epoch_end(state, improved);
    if (config.stop_when && config.stop_when(state.log.epochs.back())) break;
  }
}

TrainingLog train_main(SaliencyModel& model, const SaliencyDataset& train, const SaliencyDataset& val,
                       const TrainConfig& config) {
  config.validate();
  ModuleView main([&](const std::string& prefix, const nn::TensorVisitor& fn) { model.visit_main(prefix, fn); });
  AdamW opt(nn::named_parameters(main), {config.lr, 0.9, 0.999, 1e-8, config.weight_decay});
  Run run("main", "", model, opt, config, train.options().seed);

  EpochHooks hooks;
  hooks.train = [&](std::int64_t epoch) {
    model.set_training(true);
    double total = 0.0;
    std::int64_t b = 0;
    for (const auto& idx : train.epoch_order(epoch, config.batch_size)) {
      const Batch batch = train.make_batch(idx, epoch);
      nn::zero_grad(main);
      const SaliencyMaps maps = model.forward(batch.images, ForwardMode::dual);
      const Tensor loss =
          combined_loss(maps.map1, batch.saliency, config.loss) + combined_loss(maps.map2, batch.saliency, config.loss);
      const double value = loss.item();
      check_loss(value, epoch, b++, batch);
      backward(loss);
      opt.step();
      total += value * static_cast<double>(idx.size());
    }
    return total / static_cast<double>(train.size());
  };
  hooks.validate = [&](std::int64_t) {
    NoGradGuard no_grad;
    model.set_training(false);
    double total = 0.0;
    std::vector<Tensor> p1, p2, gts, fix;
    bool all_fix = true;
    for (const auto& idx : val.epoch_order(0, config.batch_size)) {
      const Batch batch = val.make_batch(idx, 0);
      const SaliencyMaps maps = model.forward(batch.images, ForwardMode::dual);
      const Tensor loss =
          combined_loss(maps.map1, batch.saliency, config.loss) + combined_loss(maps.map2, batch.saliency, config.loss);
      total += loss.item() * static_cast<double>(idx.size());
      split_into(maps.map1, p1);
      split_into(maps.map2, p2);
      split_into(batch.saliency, gts);
      if (batch.fixations.defined()) {
        split_into(batch.fixations, fix);
      } else {
        all_fix = false;
      }
    }
    if (!all_fix) fix.clear();
    ValidationResult v;
    v.loss = total / static_cast<double>(val.size());
    v.per_map = {evaluate(p1, gts, fix), evaluate(p2, gts, fix)};
    v.report = mean_report(v.per_map);
    return v;
  };
  hooks.on_epoch_end = [&](const LoopState& s, bool improved) { run.on_epoch_end(s, improved); };

  run_epochs(config, opt, hooks, run.state());
  return run.state().log;
}

TrainingLog train_merge(SaliencyModel& model, const SaliencyDataset& train, const SaliencyDataset& val,
                        const TrainConfig& config) {
  config.validate();
  ModuleView main([&](const std::string& prefix, const nn::TensorVisitor& fn) { model.visit_main(prefix, fn); });
  ModuleView merge([&](const std::string& prefix, const nn::TensorVisitor& fn) {
    model.merge.visit(nn::join_name(prefix, "merge"), fn);
  });
  const std::int64_t batch_size = std::min(config.batch_size, train.size());
  if (batch_size < config.batch_size) {
    emit(config, "warning: merge batch size " + std::to_string(config.batch_size) + " exceeds the " +
                     std::to_string(train.size()) + " training samples; using " + std::to_string(batch_size));
  }
  AdamW opt(nn::named_parameters(merge), {config.lr, 0.9, 0.999, 1e-8, config.weight_decay});
  Run run("merge", "merge_", model, opt, config, train.options().seed);
  FreezeGuard frozen(main);

  // Decoder maps of the frozen model. Without augmentation they never change,
  // so each sample is computed once.
  struct Cached {
    Tensor map1, map2;
  };
  auto decode = [&](const Batch& batch) {
    NoGradGuard no_grad;
    model.set_training(false);
    const SaliencyMaps maps = model.forward(batch.images, ForwardMode::dual);
    return Cached{maps.map1.detach(), maps.map2.detach()};
  };
  auto make_cache = [&](const SaliencyDataset& ds) {
    std::vector<Cached> cache;
    if (ds.options().augment) return cache;
    std::vector<std::int64_t> all(static_cast<std::size_t>(ds.size()));
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<std::int64_t>(i);
    for (std::size_t i = 0; i < all.size(); i += static_cast<std::size_t>(batch_size)) {
      const auto end = std::min(all.size(), i + static_cast<std::size_t>(batch_size));
      const std::vector<std::int64_t> chunk(all.begin() + static_cast<std::ptrdiff_t>(i),
                                            all.begin() + static_cast<std::ptrdiff_t>(end));
      const Cached c = decode(ds.make_batch(chunk, 0));
      for (std::int64_t k = 0; k < c.map1.size(0); ++k) {
        cache.push_back({slice(c.map1, 0, k, 1), slice(c.map2, 0, k, 1)});
      }
    }
    return cache;
  };
  const std::vector<Cached> train_cache = make_cache(train);
  const std::vector<Cached> val_cache = make_cache(val);
  auto maps_for = [&](const std::vector<Cached>& cache, const std::vector<std::int64_t>& idx, const Batch& batch) {
    if (cache.empty()) return decode(batch);
    std::vector<Tensor> m1, m2;
    for (auto i : idx) {
      m1.push_back(cache[static_cast<std::size_t>(i)].map1);
      m2.push_back(cache[static_cast<std::size_t>(i)].map2);
    }
    return Cached{concat(m1, 0), concat(m2, 0)};
  };

  EpochHooks hooks;
  hooks.train = [&](std::int64_t epoch) {
    double total = 0.0;
    std::int64_t b = 0;
    for (const auto& idx : train.epoch_order(epoch, batch_size)) {
      const Batch batch = train.make_batch(idx, epoch);
      const Cached in = maps_for(train_cache, idx, batch);
      model.merge.set_training(true);
      nn::zero_grad(merge);
      const Tensor loss = combined_loss(model.merge.forward(in.map1, in.map2), batch.saliency, config.loss);
      const double value = loss.item();
      check_loss(value, epoch, b++, batch);
      backward(loss);
      opt.step();
      total += value * static_cast<double>(idx.size());
    }
    return total / static_cast<double>(train.size());
  };
  hooks.validate = [&](std::int64_t) {
    NoGradGuard no_grad;
    double total = 0.0;
    std::vector<Tensor> preds, gts, fix;
    bool all_fix = true;
    for (const auto& idx : val.epoch_order(0, batch_size)) {
      const Batch batch = val.make_batch(idx, 0);
      const Cached in = maps_for(val_cache, idx, batch);
      model.merge.set_training(false);
      const Tensor merged = model.merge.forward(in.map1, in.map2);
      total += combined_loss(merged, batch.saliency, config.loss).item() * static_cast<double>(idx.size());
      split_into(merged, preds);
      split_into(batch.saliency, gts);
      if (batch.fixations.defined()) {
        split_into(batch.fixations, fix);
      } else {
        all_fix = false;
      }
    }
    if (!all_fix) fix.clear();
    ValidationResult v;
    v.loss = total / static_cast<double>(val.size());
    v.report = evaluate(preds, gts, fix);
    v.per_map = {v.report};
    return v;
  };
  hooks.on_epoch_end = [&](const LoopState& s, bool improved) { run.on_epoch_end(s, improved); };

  run_epochs(config, opt, hooks, run.state());
  return run.state().log;
}

}  // namespace mdsvit
