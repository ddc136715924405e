// SPDX-License-Identifier: Apache-2.0
#include "model/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>

#include "tensor/errors.hpp"
#include "tensor/rng.hpp"

namespace semcc {

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(EncoderConfig, image_size, patch_size, embed_dim, depth, heads,
                                                mlp_ratio, window_size, global_layers, cd_channels, bcsf, lora_rank,
                                                lora_alpha, lora_dropout, standardize_input, pos_embed)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(NeckConfig, enabled, units, heads, mlp_ratio, inter_task, cd_to_cc,
                                                cc_to_cd, output_sigmoid)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(CdDecoderConfig, pyramid_channels, refine_channels)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(CcDecoderConfig, n_queries, qformer_blocks, qformer_heads, d_lm,
                                                lm_layers, lm_heads, lm_mlp_ratio, max_len, lora_rank, lora_alpha,
                                                lora_dropout, dropout, enhancer_act, enhancer_sub, enhancer_position,
                                                tie_gates, embed_warmup_epochs)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TrainConfig, stage_mode, lambda_cd, lr, warmup_steps, epochs,
                                                batch_size, seed, weight_decay, beta1, beta2, adam_eps, grad_clip,
                                                stage1_adapters, max_cd_samples, max_cc_samples, max_joint_samples,
                                                keep_checkpoints, eval_every, val_samples)

namespace {

void reject_unknown(const nlohmann::json& given, const nlohmann::json& known, const std::string& path) {
  if (!given.is_object()) return;
  for (auto it = given.begin(); it != given.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!known.contains(it.key())) throw ConfigError("unknown key '" + key + "'");
    if (known[it.key()].is_object()) {
      if (!it.value().is_object()) throw ConfigError("key '" + key + "' must be an object");
      reject_unknown(it.value(), known[it.key()], key);
    }
  }
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

}  // namespace

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j;
  j["encoder"] = encoder;
  j["neck"] = neck;
  j["cd_decoder"] = cd_decoder;
  j["cc_decoder"] = cc_decoder;
  j["train"] = train;
  j["data"] = {{"path", data_path}};
  return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
  RunConfig cfg;
  reject_unknown(j, cfg.to_json(), "");
  try {
    if (j.contains("encoder")) cfg.encoder = j["encoder"].get<EncoderConfig>();
    if (j.contains("neck")) cfg.neck = j["neck"].get<NeckConfig>();
    if (j.contains("cd_decoder")) cfg.cd_decoder = j["cd_decoder"].get<CdDecoderConfig>();
    if (j.contains("cc_decoder")) cfg.cc_decoder = j["cc_decoder"].get<CcDecoderConfig>();
    if (j.contains("train")) cfg.train = j["train"].get<TrainConfig>();
    if (j.contains("data") && j["data"].contains("path")) cfg.data_path = j["data"]["path"].get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad value: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed JSON in " + path + ": " + e.what());
  }
  return from_json(j);
}

void RunConfig::validate() const {
  const auto& e = encoder;
  require(e.patch_size >= 1 && e.image_size % (e.patch_size * 4) == 0,
          "image_size must be a multiple of 4*patch_size");
  require(e.embed_dim >= 2 && e.heads >= 1 && e.embed_dim % e.heads == 0, "encoder embed_dim must divide by heads");
  require(e.depth >= 1, "encoder depth must be >= 1");
  require(e.pos_embed == "sincos" || e.pos_embed == "random", "encoder pos_embed must be 'sincos' or 'random'");
  require(e.pos_embed != "sincos" || e.embed_dim % 4 == 0, "sin-cos pos_embed needs embed_dim divisible by 4");
  require(e.window_size >= 1 && e.grid() % e.window_size == 0, "window_size must divide the token grid");
  require(e.cd_channels >= 1 && e.cd_channels < e.embed_dim, "cd_channels must be in [1, embed_dim)");
  require(!e.global_layers.empty(), "at least one global layer is required");
  std::set<int> seen;
  for (int g : e.global_layers) {
    require(g >= 1 && g <= e.depth, "global layer index " + std::to_string(g) + " outside 1..depth");
    require(seen.insert(g).second, "duplicate global layer index");
  }
  require(e.lora_rank >= 0 && e.lora_rank <= e.embed_dim, "encoder lora_rank exceeds embed_dim");
  require(e.lora_dropout >= 0 && e.lora_dropout < 1, "lora_dropout must be in [0,1)");

  require(neck.units >= 0, "neck units must be >= 0");
  require(neck.heads >= 1 && e.embed_dim % neck.heads == 0 && e.cd_channels % neck.heads == 0,
          "neck heads must divide embed_dim and cd_channels");
  require(neck.inter_task == "similarity" || neck.inter_task == "cross_attention" || neck.inter_task == "off",
          "neck.inter_task must be similarity, cross_attention or off");

  require(cd_decoder.pyramid_channels >= 1 && cd_decoder.refine_channels >= 1, "cd_decoder widths must be >= 1");

  const auto& c = cc_decoder;
  require(c.n_queries >= 1 && c.qformer_blocks >= 1, "q-former needs >= 1 query and block");
  require(c.qformer_heads >= 1 && e.embed_dim % c.qformer_heads == 0, "qformer_heads must divide embed_dim");
  require(c.d_lm >= 1 && c.lm_heads >= 1 && c.d_lm % c.lm_heads == 0, "lm_heads must divide d_lm");
  require(c.lm_layers >= 1, "lm_layers must be >= 1");
  require(c.max_len >= 1, "max_len must be >= 1");
  require(c.lora_rank >= 0 && c.lora_rank <= c.d_lm, "cc lora_rank exceeds d_lm");
  require(c.enhancer_act || c.enhancer_sub, "enhancer needs activation, subtraction or both");
  require(c.enhancer_position == "post" || c.enhancer_position == "pre", "enhancer_position must be post or pre");
  require(c.embed_warmup_epochs >= 0, "embed_warmup_epochs must be >= 0");

  const auto& t = train;
  require(t.stage_mode == "3-stage" || t.stage_mode == "2-stage" || t.stage_mode == "1-stage" ||
              t.stage_mode == "cc-only",
          "stage_mode must be 3-stage, 2-stage, 1-stage or cc-only");
  require(t.lambda_cd >= 0, "lambda_cd must be >= 0");
  require(t.lr > 0, "lr must be positive");
  require(t.warmup_steps >= 0, "warmup_steps must be >= 0");
  require(t.epochs >= 1, "epochs must be >= 1");
  require(t.batch_size >= 1, "batch_size must be >= 1");
  require(t.grad_clip >= 0, "grad_clip must be >= 0");
  require(t.keep_checkpoints >= 1, "keep_checkpoints must be >= 1");
  require(t.eval_every >= 0 && t.val_samples >= 0, "eval_every and val_samples must be >= 0");
  require(t.max_cd_samples >= 0 && t.max_cc_samples >= 0 && t.max_joint_samples >= 0, "sample caps must be >= 0");
}

std::string RunConfig::hash() const {
  nlohmann::json j = to_json();
  j.erase("data");
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
  return buf;
}

}  // namespace semcc
