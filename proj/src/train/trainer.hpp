// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "data/dataset.hpp"
#include "model/model.hpp"
#include "train/optim.hpp"

namespace semcc {

enum class StageLoss { kCd, kCc, kJoint };

struct StageSpec {
  std::string name;   // "stage1", "stage2", "stage3", "joint", "cc"
  std::string split;  // "cd", "cc" or "cd_cc"
  StageLoss loss = StageLoss::kCd;
  std::vector<ParamGroup> groups;  // trainable groups (frozen base weights excluded)
};

/// Ordered per-epoch stages for the configured stage mode.
std::vector<StageSpec> stage_schedule(const TrainConfig& cfg);

/// Names of the parameters a stage may modify in `epoch` (token embeddings
/// are trainable only during the first embed_warmup_epochs epochs).
std::set<std::string> stage_trainable(const SemanticCc<float>& model, const StageSpec& stage, int epoch);

struct StageStats {
  std::string name;
  int steps = 0;
  int samples = 0;
  double mean_loss = 0.0;
  // Parameters whose values changed during the stage vs. the trainable set.
  std::vector<std::string> changed_frozen, unchanged_trainable;
  int n_trainable = 0, n_changed = 0;
};

struct EpochStats {
  int epoch = 0;
  std::vector<StageStats> stages;
  nlohmann::json val;  // empty unless a validation pass ran
};

struct TrainerOptions {
  std::string out_dir;         // checkpoints, loss log and curves; empty = in-memory only
  std::string dataset_digest;  // recorded in manifests and reports
  std::ostream* progress = nullptr;
};

class Trainer {
 public:
  Trainer(SemanticCc<float>& model, const Dataset& data, TrainerOptions opts = {});

  /// Runs every stage of one epoch (0-based) and returns its statistics.
  EpochStats run_epoch(int epoch);
  /// All configured epochs with checkpoints, logs and curves.
  std::vector<EpochStats> train();

  long total_steps() const { return total_steps_; }
  long step() const { return step_; }
  /// Every logged step: {"epoch","stage","step","id","loss","lr"}.
  const std::vector<nlohmann::json>& loss_log() const { return log_; }

 private:
  double sample_loss(const StageSpec& stage, const SampleRecord& r, int epoch, ForwardCtx& ctx);
  std::vector<std::string> stage_ids(const StageSpec& stage, int epoch) const;
  void write_log_line(const nlohmann::json& j);

  SemanticCc<float>& model_;
  const Dataset& data_;
  TrainerOptions opts_;
  std::vector<StageSpec> stages_;
  AdamState adam_;
  long step_ = 0;
  long total_steps_ = 0;
  std::vector<nlohmann::json> log_;
  std::unique_ptr<std::ofstream> log_file_;
};

}  // namespace semcc
