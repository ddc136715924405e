// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace semcc {

struct EncoderConfig {
  int image_size = 64;
  int patch_size = 4;
  int embed_dim = 64;
  int depth = 8;
  int heads = 4;
  int mlp_ratio = 2;
  int window_size = 2;
  std::vector<int> global_layers = {2, 4, 6, 8};  // 1-based
  int cd_channels = 32;
  bool bcsf = true;
  int lora_rank = 16;
  double lora_alpha = 32.0;
  double lora_dropout = 0.05;
  // Per-image, per-channel standardization of the [0, 1] input before the patch embedding.
  bool standardize_input = true;
  // Frozen positional table on the token grid: fixed 2D sin-cos at unit
  // scale, or random normal with std 0.02.
  std::string pos_embed = "sincos";  // sincos | random

  int grid() const { return image_size / (patch_size * 4); }
  int tokens() const { return grid() * grid(); }
};

struct NeckConfig {
  bool enabled = true;
  int units = 3;
  int heads = 4;
  int mlp_ratio = 2;
  std::string inter_task = "similarity";  // similarity | cross_attention | off
  bool cd_to_cc = true;
  bool cc_to_cd = true;
  bool output_sigmoid = true;
};

struct CdDecoderConfig {
  int pyramid_channels = 64;
  int refine_channels = 16;
};

struct CcDecoderConfig {
  int n_queries = 8;
  int qformer_blocks = 2;
  int qformer_heads = 4;
  int d_lm = 128;
  int lm_layers = 4;
  int lm_heads = 4;
  int lm_mlp_ratio = 2;
  int max_len = 32;
  int lora_rank = 16;
  double lora_alpha = 32.0;
  double lora_dropout = 0.05;
  double dropout = 0.0;
  bool enhancer_act = true;
  bool enhancer_sub = true;
  std::string enhancer_position = "post";  // post | pre
  bool tie_gates = false;
  int embed_warmup_epochs = 5;
};

struct TrainConfig {
  std::string stage_mode = "3-stage";  // 3-stage | 2-stage | 1-stage | cc-only
  double lambda_cd = 0.5;
  double lr = 1e-4;
  int warmup_steps = 1000;
  int epochs = 40;
  int batch_size = 1;
  std::uint64_t seed = 0;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 1.0;
  bool stage1_adapters = true;
  // Optional caps on samples drawn per stage and epoch (0 = whole split).
  int max_cd_samples = 0;
  int max_cc_samples = 0;
  int max_joint_samples = 0;
  int keep_checkpoints = 1;
  // Validation pass every N epochs (0 = never) on at most val_samples ids (0 = all).
  int eval_every = 5;
  int val_samples = 0;
};

struct RunConfig {
  EncoderConfig encoder;
  NeckConfig neck;
  CdDecoderConfig cd_decoder;
  CcDecoderConfig cc_decoder;
  TrainConfig train;
  std::string data_path;

  /// Validates cross-field invariants; throws ConfigError.
  void validate() const;
  nlohmann::json to_json() const;
  /// Defaults overridden by `j`; unknown keys are rejected.
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::string& path);
  /// Stable 16-hex-digit hash of every field except data_path.
  std::string hash() const;
};

}  // namespace semcc
