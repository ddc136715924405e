// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <string>

#include <json.hpp>

#include "model/model.hpp"

namespace semcc {

/// "encoder/blocks/0/attn/q/lora_a" -> "encoder__blocks__0__attn__q__lora_a".
std::string param_file_name(const std::string& name);

/// Writes manifest.json, config.json and one tensor file per parameter.
/// `info` (epoch, step, metrics...) is merged into the manifest. The
/// directory is written under a temporary name and renamed into place.
void save_checkpoint(const SemanticCc<float>& model, const std::string& dir, const nlohmann::json& info);

struct LoadedCheckpoint {
  std::unique_ptr<SemanticCc<float>> model;
  nlohmann::json manifest;
};

/// Rebuilds the model from config.json and loads every tensor. Refuses
/// (ConfigError, both hashes in the message) when the stored config hash does
/// not match config.json or `expected_hash` when given.
LoadedCheckpoint load_checkpoint(const std::string& dir, const std::string& expected_hash = "");

}  // namespace semcc
