// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "data/dataset.hpp"
#include "metrics/metrics.hpp"
#include "model/model.hpp"

namespace semcc {

/// Worker count from SEMCC_THREADS (default: hardware concurrency, at least 1).
int worker_threads();

template <typename T>
Tensor<T> mask_tensor(const std::vector<std::uint8_t>& mask, int size);

struct SamplePrediction {
  std::string id;
  std::string caption;
  int template_idx = 0;
  std::vector<std::uint8_t> mask;
  double delta_abs = 0.0;  // mean |delta F_cc| over the four templates
  bool no_change = false;  // ground-truth mask is empty
};

struct EvalOutput {
  std::vector<SamplePrediction> samples;
  bool has_captions = false, has_masks = false;
  CaptionScores cc;
  CdMetrics cd;
  double delta_no_change = 0.0, delta_change = 0.0;
  int n_no_change = 0, n_change = 0;
};

/// Single-pair inference.
SamplePrediction predict(const SemanticCc<float>& model, const std::vector<std::uint8_t>& img_a,
                         const std::vector<std::uint8_t>& img_b, int size);

/// Runs both tasks on `ids` (at most `max_samples` when > 0) in parallel and
/// reduces in id order, so the result does not depend on the worker count.
EvalOutput evaluate(const SemanticCc<float>& model, const Dataset& data, const std::vector<std::string>& ids,
                    int max_samples = 0);

/// Metrics plus provenance: config hash, git describe, dataset digest.
nlohmann::json eval_report(const EvalOutput& out, const std::string& config_hash, const std::string& dataset_digest);

}  // namespace semcc
