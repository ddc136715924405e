// SPDX-License-Identifier: Apache-2.0
// semcc command-line tool. Talks to the library only through semcc.h.
#include <cstdint>
#include <cstdio>
#include <iostream>
#include <memory>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "semcc/semcc.h"

namespace {

struct Owned {
  char* s = nullptr;
  ~Owned() { semcc_free_string(s); }
};

struct ModelHandle {
  semcc_model* m = nullptr;
  ~ModelHandle() { semcc_model_free(m); }
};

int fail(semcc_status st) {
  std::cerr << "semcc: " << semcc_last_error() << "\n";
  return static_cast<int>(st);
}

void print_line(const char* line, void*) {
  std::cout << line << "\n" << std::flush;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semantic change captioning and change detection on synthetic bi-temporal scenes"};
  app.set_version_flag("--version", std::string(semcc_version()));
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset directory");
  std::uint64_t seed = 0;
  std::string out;
  semcc_split_sizes sizes{1500, 1500, 500, 200, 200};
  int size = 64;
  bool force = false;
  gen->add_option("--seed", seed, "Generator seed")->capture_default_str();
  gen->add_option("--out", out, "Output directory")->required();
  gen->add_option("--n-cd", sizes.n_cd, "Samples with masks only")->capture_default_str();
  gen->add_option("--n-cc", sizes.n_cc, "Samples with captions only")->capture_default_str();
  gen->add_option("--n-both", sizes.n_both, "Samples with masks and captions")->capture_default_str();
  gen->add_option("--n-val", sizes.n_val, "Validation samples")->capture_default_str();
  gen->add_option("--n-test", sizes.n_test, "Test samples")->capture_default_str();
  gen->add_option("--size", size, "Image side in pixels")->capture_default_str();
  gen->add_flag("--force", force, "Replace a non-empty output directory");

  // train
  auto* train = app.add_subcommand("train", "Train the model per a config file");
  std::string config, data;
  train->add_option("--config", config, "JSON config (defaults when omitted)");
  train->add_option("--data", data, "Dataset directory")->required();
  train->add_option("--out", out, "Run directory")->required();

  // eval
  auto* ev = app.add_subcommand("eval", "Write a metrics report for one split");
  std::string ckpt, report, split = "test";
  ev->add_option("--ckpt", ckpt, "Checkpoint directory")->required();
  ev->add_option("--data", data, "Dataset directory")->required();
  ev->add_option("--report", report, "Report path (JSON)")->required();
  ev->add_option("--split", split, "cd, cc, cd_cc, val or test")->capture_default_str();
  ev->add_option("--config", config, "Refuse the checkpoint unless its config hash matches this file");

  // caption / detect
  std::string img_a, img_b, out_mask;
  auto* cap = app.add_subcommand("caption", "Caption the change between two images");
  cap->add_option("--ckpt", ckpt, "Checkpoint directory")->required();
  cap->add_option("--img-a", img_a, "Earlier image (PNG)")->required();
  cap->add_option("--img-b", img_b, "Later image (PNG)")->required();
  cap->add_option("--config", config, "Refuse the checkpoint unless its config hash matches this file");
  auto* det = app.add_subcommand("detect", "Write the predicted change mask");
  det->add_option("--ckpt", ckpt, "Checkpoint directory")->required();
  det->add_option("--img-a", img_a, "Earlier image (PNG)")->required();
  det->add_option("--img-b", img_b, "Later image (PNG)")->required();
  det->add_option("--out-mask", out_mask, "Output mask (PNG, 0/255)")->required();
  det->add_option("--config", config, "Refuse the checkpoint unless its config hash matches this file");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  bool f64 = false;
  int instances = 20;
  gc->add_flag("--f64", f64, "Run in double precision");
  gc->add_option("--seed", seed, "Instance seed")->capture_default_str();
  gc->add_option("--instances", instances, "Random instances per check")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  const char* cfg = config.empty() ? nullptr : config.c_str();
  if (gen->parsed()) {
    Owned summary;
    const semcc_status st = semcc_generate_dataset(out.c_str(), seed, sizes, size, force ? 1 : 0, &summary.s);
    if (st != SEMCC_OK) return fail(st);
    const auto j = nlohmann::json::parse(summary.s);
    for (const char* k : {"cd", "cc", "cd_cc", "val", "test"}) std::cout << k << " " << j["splits"][k] << "\n";
    std::cout << "digest " << j["digest"].get<std::string>() << "\n";
    return 0;
  }
  if (train->parsed()) {
    const semcc_status st = semcc_train(cfg, data.c_str(), out.c_str(), print_line, nullptr);
    return st == SEMCC_OK ? 0 : fail(st);
  }
  if (gc->parsed()) {
    const semcc_status st = semcc_gradcheck(f64 ? 1 : 0, seed, instances, print_line, nullptr);
    return st == SEMCC_OK ? 0 : fail(st);
  }

  ModelHandle model;
  if (const semcc_status st = semcc_model_load(ckpt.c_str(), cfg, &model.m); st != SEMCC_OK) return fail(st);
  if (ev->parsed()) {
    Owned rep;
    const semcc_status st = semcc_evaluate(model.m, data.c_str(), split.c_str(), report.c_str(), &rep.s);
    if (st != SEMCC_OK) return fail(st);
    std::cout << nlohmann::json::parse(rep.s)["table"].get<std::string>();
    return 0;
  }
  if (cap->parsed()) {
    Owned caption;
    const semcc_status st = semcc_caption(model.m, img_a.c_str(), img_b.c_str(), &caption.s);
    if (st != SEMCC_OK) return fail(st);
    std::cout << caption.s << "\n";
    return 0;
  }
  const semcc_status st = semcc_detect(model.m, img_a.c_str(), img_b.c_str(), out_mask.c_str());
  return st == SEMCC_OK ? 0 : fail(st);
}
