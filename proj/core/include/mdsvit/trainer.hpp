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
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "mdsvit/data.hpp"
#include "mdsvit/losses.hpp"
#include "mdsvit/model.hpp"

namespace mdsvit {

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// Adam with bias correction and decoupled weight decay. Parameters whose
/// gradient was never allocated are skipped for that step.
class AdamW {
 public:
  AdamW(NamedTensors params, AdamWConfig config);

  /// Throws NumericError naming the first parameter with a non-finite gradient;
  /// no parameter is modified in that case.
  void step();

  void set_lr(double lr) { config_.lr = lr; }
  double lr() const { return config_.lr; }
  std::int64_t step_count() const { return step_; }
  const AdamWConfig& config() const { return config_; }
  const NamedTensors& params() const { return params_; }

  /// Moment buffers named "adam.m.<param>" and "adam.v.<param>".
  NamedTensors state_tensors() const;
  /// Restores moments from tensors named as in state_tensors(); throws
  /// CheckpointError on missing names or shape mismatches.
  void load_state(std::int64_t step_count, const NamedTensors& tensors);

 private:
  NamedTensors params_;
  std::vector<Tensor> m_, v_;
  AdamWConfig config_;
  std::int64_t step_ = 0;
};

/// lr(e) = base_lr * gamma^floor(e / step_size).
struct StepLR {
  double base_lr = 1e-4;
  std::int64_t step_size = 10;
  double gamma = 0.5;

  double lr(std::int64_t epoch) const;
};

struct EarlyStopping {
  std::int64_t patience = 5;
  double min_delta = 1e-6;
  double best = std::numeric_limits<double>::infinity();
  std::int64_t since_improvement = 0;

  /// Records one validation loss; returns true when it improved on the best
  /// by more than min_delta.
  bool update(double val_loss);
  bool should_stop() const { return since_improvement >= patience; }
};

struct EpochRecord {
  std::int64_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  /// Metrics behind the CSV columns: the mean over `per_map` for the main
  /// run, the merged map for the merge run.
  MetricReport val;
  std::vector<MetricReport> per_map;
};

struct TrainingLog {
  std::vector<EpochRecord> epochs;
  std::int64_t best_epoch = -1;
  double best_val_loss = std::numeric_limits<double>::infinity();
  bool stopped_early = false;

  /// Header "epoch,lr,train_loss,val_loss,val_auc,val_cc,val_sim,val_kl".
  std::string to_csv() const;
};

struct TrainConfig {
  std::int64_t max_epochs = 15;
  std::int64_t batch_size = 4;
  double lr = 1e-4;
  double weight_decay = 0.0;
  std::int64_t lr_step = 10;
  double lr_gamma = 0.5;
  std::int64_t patience = 5;
  LossWeights loss;
  /// Directory for checkpoints and the CSV log; empty writes nothing.
  std::string out_dir;
  /// Checkpoint to continue from; empty starts fresh.
  std::string resume;
  /// Receives progress lines and warnings; null writes to stderr.
  std::function<void(const std::string&)> log;
  /// Ends training after an epoch for which it returns true.
  std::function<bool(const EpochRecord&)> stop_when;

  static TrainConfig main_defaults();
  /// lr 1e-5, weight decay 0.01, batch 64.
  static TrainConfig merge_defaults();

  /// Throws ConfigError on non-positive sizes or rates.
  void validate() const;
  /// Hyperparameters only (no paths or callbacks).
  std::string to_json() const;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::string stage;         // "main" or "merge"
  std::string model_config;  // ModelConfig::to_json()
  std::string train_config;  // TrainConfig::to_json()
  std::int64_t epoch = -1;   // last completed epoch
  std::uint64_t data_seed = 0;
  std::int64_t optimizer_step = 0;
  EarlyStopping early_stop;
  TrainingLog log;
  /// Model state under "model.<name>", optimizer moments under "adam.*".
  NamedTensors tensors;

  /// Tensors whose name starts with `prefix`, with the prefix removed.
  NamedTensors with_prefix(const std::string& prefix) const;
};

/// "MDSV", u32 version, u64 header length, JSON header, u32 header CRC32,
/// then each tensor as little-endian f32 followed by its CRC32.
std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
/// Throws CheckpointError on a foreign magic, an unsupported version, a
/// length mismatch or a checksum failure.
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes, const std::string& name = "<memory>");
/// Writes to a temporary file first and renames it into place.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

/// Parameters and buffers of a module, in visiting order.
NamedTensors module_state(nn::Module& module);
/// Copies values by name (converting dtype). Throws CheckpointError when a
/// name is missing or a shape differs.
void load_module_state(nn::Module& module, const NamedTensors& state);
/// Rebuilds a model from a checkpoint's config echo and weights.
SaliencyModel model_from_checkpoint(const Checkpoint& ckpt);

struct ValidationResult {
  double loss = 0.0;
  MetricReport report;
  std::vector<MetricReport> per_map;
};

/// Progress of the epoch loop; checkpoints carry it across processes.
struct LoopState {
  TrainingLog log;
  EarlyStopping early_stop;
  std::int64_t next_epoch = 0;
};

struct EpochHooks {
  /// Runs one training epoch and returns the mean sample loss.
  std::function<double(std::int64_t epoch)> train;
  std::function<ValidationResult(std::int64_t epoch)> validate;
  /// Called after each epoch has been recorded.
  std::function<void(const LoopState& state, bool improved)> on_epoch_end;
};

/// Shared scheduler/early-stop machinery: sets the optimizer lr from StepLR,
/// trains, validates and records each epoch until max_epochs or patience.
void run_epochs(const TrainConfig& config, AdamW& optimizer, const EpochHooks& hooks, LoopState& state);

/// Trains everything except the merge head on combined_loss(map1, gt) +
/// combined_loss(map2, gt). Writes last.ckpt, best.ckpt and log.csv when
/// out_dir is set. Throws NumericError naming epoch and batch on a
/// non-finite loss.
TrainingLog train_main(SaliencyModel& model, const SaliencyDataset& train, const SaliencyDataset& val,
                       const TrainConfig& config);

/// Trains the merge head on combined_loss(merge(map1, map2), gt) with the
/// rest of the model frozen in eval mode. The batch size shrinks to the
/// dataset size (with a warning) when larger. Files are prefixed "merge_".
TrainingLog train_merge(SaliencyModel& model, const SaliencyDataset& train, const SaliencyDataset& val,
                        const TrainConfig& config);

}  // namespace mdsvit
