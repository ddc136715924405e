// SPDX-License-Identifier: Apache-2.0
#include "train/checkpoint.hpp"

#include <filesystem>
#include <fstream>

namespace semcc {

namespace fs = std::filesystem;

std::string param_file_name(const std::string& name) {
  std::string out;
  for (char c : name) {
    if (c == '/') {
      out += "__";
    } else {
      out += c;
    }
  }
  return out;
}

void save_checkpoint(const SemanticCc<float>& model, const std::string& dir, const nlohmann::json& info) {
  const fs::path final_dir(dir);
  const fs::path tmp = final_dir.string() + ".tmp";
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  nlohmann::json manifest = info;
  manifest["format"] = "semcc-checkpoint-1";
  manifest["config_hash"] = model.config().hash();
  manifest["git_describe"] = SEMCC_GIT_DESCRIBE;
  nlohmann::json names = nlohmann::json::array();
  for (const auto& p : model.params.all()) {
    save_tensor((tmp / param_file_name(p.name)).string(), p.value);
    names.push_back(p.name);
  }
  manifest["parameters"] = names;
  {
    std::ofstream os(tmp / "manifest.json");
    os << manifest.dump(2) << "\n";
    std::ofstream cs(tmp / "config.json");
    cs << model.config().to_json().dump(2) << "\n";
    if (!os || !cs) throw DataError("cannot write checkpoint metadata in " + tmp.string());
  }
  fs::remove_all(final_dir);
  fs::rename(tmp, final_dir);
}

LoadedCheckpoint load_checkpoint(const std::string& dir, const std::string& expected_hash) {
  const fs::path root(dir);
  auto read_json = [&](const char* file) {
    std::ifstream is(root / file);
    if (!is) throw DataError("checkpoint " + dir + " has no " + file);
    try {
      return nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("malformed ") + file + " in " + dir + ": " + e.what());
    }
  };
  LoadedCheckpoint out;
  out.manifest = read_json("manifest.json");
  const RunConfig cfg = RunConfig::from_json(read_json("config.json"));
  const std::string stored = out.manifest.value("config_hash", std::string());
  if (stored != cfg.hash()) {
    throw ConfigError("checkpoint config hash " + stored + " does not match its config.json hash " + cfg.hash());
  }
  if (!expected_hash.empty() && expected_hash != stored) {
    throw ConfigError("checkpoint config hash " + stored + " does not match expected config hash " + expected_hash);
  }
  out.model = std::make_unique<SemanticCc<float>>(cfg);
  for (auto& p : out.model->params.all()) {
    const fs::path file = root / param_file_name(p.name);
    if (!fs::exists(file)) throw DataError("checkpoint " + dir + " lacks parameter '" + p.name + "'");
    Tensor<float> t = load_tensor<float>(file.string());
    if (t.shape() != p.value.shape()) {
      throw DataError("parameter '" + p.name + "' has shape " + shape_str(t.shape()) + " in checkpoint, expected " +
                      shape_str(p.value.shape()));
    }
    std::copy(t.data().begin(), t.data().end(), p.value.data().begin());
  }
  return out;
}

}  // namespace semcc
