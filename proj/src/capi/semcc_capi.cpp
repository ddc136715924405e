// SPDX-License-Identifier: Apache-2.0
// extern "C" surface over the C++ core. Every entry point converts exceptions
// into a status code plus a thread-local message.
#include "semcc/semcc.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <ostream>
#include <streambuf>
#include <string>

#include <json.hpp>

#include "data/dataset.hpp"
#include "data/png_io.hpp"
#include "gradcheck/gradcheck.hpp"
#include "train/checkpoint.hpp"
#include "train/evaluate.hpp"
#include "train/trainer.hpp"

namespace fs = std::filesystem;

struct semcc_model {
  std::unique_ptr<semcc::SemanticCc<float>> model;
  nlohmann::json manifest;
};

namespace {

thread_local std::string g_last_error;

// Forwards complete lines written to an ostream to a semcc_line_fn.
class LineBuf : public std::streambuf {
 public:
  LineBuf(semcc_line_fn fn, void* user) : fn_(fn), user_(user) {}
  ~LineBuf() override { flush_line(); }

 protected:
  int overflow(int ch) override {
    if (ch == traits_type::eof()) return 0;
    if (ch == '\n') {
      flush_line();
    } else {
      line_.push_back(static_cast<char>(ch));
    }
    return ch;
  }

 private:
  void flush_line() {
    if (!line_.empty() && fn_) fn_(line_.c_str(), user_);
    line_.clear();
  }
  semcc_line_fn fn_;
  void* user_;
  std::string line_;
};

template <typename F>
semcc_status guarded(F&& f) {
  g_last_error.clear();
  try {
    return f();
  } catch (const semcc::Error& e) {
    g_last_error = e.what();
    return static_cast<semcc_status>(e.code());
  } catch (const nlohmann::json::exception& e) {
    g_last_error = std::string("configuration error: ") + e.what();
    return SEMCC_ERR_CONFIG;
  } catch (const fs::filesystem_error& e) {
    g_last_error = std::string("data error: ") + e.what();
    return SEMCC_ERR_DATA;
  } catch (const std::exception& e) {
    g_last_error = std::string("internal error: ") + e.what();
    return SEMCC_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "internal error: unknown exception";
    return SEMCC_ERR_INTERNAL;
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void require(const void* p, const char* what) {
  if (!p) throw semcc::ContractError(std::string(what) + " must not be NULL");
}

semcc::RunConfig config_or_default(const char* path) {
  return path ? semcc::RunConfig::load(path) : semcc::RunConfig{};
}

std::vector<std::uint8_t> read_rgb(const char* path, int size) {
  semcc::Image8 img = semcc::read_png(path, 3);
  if (img.width != size || img.height != size) {
    throw semcc::DataError(std::string(path) + " is " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                           ", model expects " + std::to_string(size) + "x" + std::to_string(size));
  }
  return std::move(img.pixels);
}

const std::vector<std::string>& split_ids(const semcc::Dataset& ds, const std::string& split) {
  if (split == "cd") return ds.splits.cd;
  if (split == "cc") return ds.splits.cc;
  if (split == "cd_cc") return ds.splits.cd_cc;
  if (split == "val") return ds.splits.val;
  if (split == "test") return ds.splits.test;
  throw semcc::ConfigError("unknown split '" + split + "' (cd, cc, cd_cc, val, test)");
}

}  // namespace

extern "C" {

const char* semcc_last_error(void) { return g_last_error.c_str(); }

const char* semcc_version(void) { return "semcc 0.1.0 (" SEMCC_GIT_DESCRIBE ")"; }

void semcc_free_string(char* s) { std::free(s); }

semcc_status semcc_generate_dataset(const char* out_dir, uint64_t seed, semcc_split_sizes sizes, int image_size,
                                    int force, char** summary_json) {
  return guarded([&] {
    require(out_dir, "out_dir");
    const fs::path dir(out_dir);
    if (fs::exists(dir)) {
      if (!fs::is_directory(dir)) throw semcc::DataError(std::string(out_dir) + " exists and is not a directory");
      if (!fs::is_empty(dir)) {
        if (!force) throw semcc::DataError(std::string(out_dir) + " is not empty (pass --force to replace it)");
        fs::remove_all(dir);
      }
    }
    if (sizes.n_cd < 1 || sizes.n_cc < 1 || sizes.n_both < 1 || sizes.n_val < 1 || sizes.n_test < 1) {
      throw semcc::ConfigError("every split needs at least one sample");
    }
    if (image_size < 32 || image_size % 16 != 0) {
      throw semcc::ConfigError("image size must be a multiple of 16 and at least 32, got " +
                               std::to_string(image_size));
    }
    const semcc::SplitSizes sz{sizes.n_cd, sizes.n_cc, sizes.n_both, sizes.n_val, sizes.n_test};
    const semcc::Dataset ds = semcc::generate_dataset(seed, sz, image_size);
    semcc::save_dataset(ds, out_dir);
    if (summary_json) {
      nlohmann::json j;
      j["splits"] = {{"cd", ds.splits.cd.size()},   {"cc", ds.splits.cc.size()},
                     {"cd_cc", ds.splits.cd_cc.size()}, {"val", ds.splits.val.size()},
                     {"test", ds.splits.test.size()}};
      j["digest"] = semcc::dataset_digest(out_dir);
      *summary_json = dup_string(j.dump());
    }
    return SEMCC_OK;
  });
}

semcc_status semcc_dataset_digest(const char* dir, char** digest) {
  return guarded([&] {
    require(dir, "dir");
    require(digest, "digest");
    *digest = dup_string(semcc::dataset_digest(dir));
    return SEMCC_OK;
  });
}

semcc_status semcc_config_hash(const char* config_path, char** hash) {
  return guarded([&] {
    require(hash, "hash");
    *hash = dup_string(config_or_default(config_path).hash());
    return SEMCC_OK;
  });
}

semcc_status semcc_train(const char* config_path, const char* data_dir, const char* out_dir, semcc_line_fn progress,
                         void* user) {
  return guarded([&] {
    require(data_dir, "data_dir");
    require(out_dir, "out_dir");
    semcc::RunConfig cfg = config_or_default(config_path);
    cfg.data_path = data_dir;
    const semcc::Dataset ds = semcc::load_dataset(data_dir);
    semcc::SemanticCc<float> model(cfg);
    LineBuf buf(progress, user);
    std::ostream os(&buf);
    semcc::TrainerOptions opts;
    opts.out_dir = out_dir;
    opts.dataset_digest = semcc::dataset_digest(data_dir);
    opts.progress = progress ? &os : nullptr;
    semcc::Trainer trainer(model, ds, opts);
    trainer.train();
    return SEMCC_OK;
  });
}

semcc_status semcc_model_load(const char* ckpt_dir, const char* expected_config_path, semcc_model** out) {
  return guarded([&] {
    require(ckpt_dir, "ckpt_dir");
    require(out, "out");
    *out = nullptr;
    const std::string expected = expected_config_path ? semcc::RunConfig::load(expected_config_path).hash() : "";
    semcc::LoadedCheckpoint ck = semcc::load_checkpoint(ckpt_dir, expected);
    *out = new semcc_model{std::move(ck.model), std::move(ck.manifest)};
    return SEMCC_OK;
  });
}

void semcc_model_free(semcc_model* model) { delete model; }

semcc_status semcc_model_config_hash(const semcc_model* model, char** hash) {
  return guarded([&] {
    require(model, "model");
    require(hash, "hash");
    *hash = dup_string(model->model->config().hash());
    return SEMCC_OK;
  });
}

semcc_status semcc_evaluate(const semcc_model* model, const char* data_dir, const char* split,
                            const char* report_path, char** report_json) {
  return guarded([&] {
    require(model, "model");
    require(data_dir, "data_dir");
    const semcc::Dataset ds = semcc::load_dataset(data_dir);
    const std::string which = split ? split : "test";
    const semcc::EvalOutput ev = semcc::evaluate(*model->model, ds, split_ids(ds, which));
    nlohmann::json rep = semcc::eval_report(ev, model->model->config().hash(), semcc::dataset_digest(data_dir));
    rep["split"] = which;
    const std::string text = rep.dump(2);
    if (report_path) {
      const fs::path p(report_path);
      if (p.has_parent_path()) fs::create_directories(p.parent_path());
      std::ofstream os(p);
      os << text << "\n";
      if (!os) throw semcc::DataError(std::string("cannot write report ") + report_path);
    }
    if (report_json) *report_json = dup_string(text);
    return SEMCC_OK;
  });
}

semcc_status semcc_caption(const semcc_model* model, const char* img_a, const char* img_b, char** caption) {
  return guarded([&] {
    require(model, "model");
    require(img_a, "img_a");
    require(img_b, "img_b");
    require(caption, "caption");
    const int size = model->model->config().encoder.image_size;
    const semcc::SamplePrediction p = semcc::predict(*model->model, read_rgb(img_a, size), read_rgb(img_b, size), size);
    *caption = dup_string(p.caption);
    return SEMCC_OK;
  });
}

semcc_status semcc_detect(const semcc_model* model, const char* img_a, const char* img_b, const char* out_mask) {
  return guarded([&] {
    require(model, "model");
    require(img_a, "img_a");
    require(img_b, "img_b");
    require(out_mask, "out_mask");
    const int size = model->model->config().encoder.image_size;
    const semcc::SamplePrediction p = semcc::predict(*model->model, read_rgb(img_a, size), read_rgb(img_b, size), size);
    semcc::Image8 m{size, size, 1, p.mask};
    for (auto& v : m.pixels) v = v ? 255 : 0;
    semcc::write_png(out_mask, m);
    return SEMCC_OK;
  });
}

semcc_status semcc_gradcheck(int f64, uint64_t seed, int instances, semcc_line_fn progress, void* user) {
  return guarded([&] {
    if (instances < 1) throw semcc::ConfigError("instances must be >= 1");
    LineBuf buf(progress, user);
    std::ostream os(&buf);
    semcc::GradcheckOptions opts;
    opts.instances = instances;
    opts.seed = seed;
    opts.out = progress ? &os : nullptr;
    const auto results = f64 ? semcc::run_gradcheck<double>(opts) : semcc::run_gradcheck<float>(opts);
    int failed = 0;
    for (const auto& r : results) failed += r.failures > 0;
    os.flush();
    if (failed > 0) {
      g_last_error = "numeric error: " + std::to_string(failed) + " of " + std::to_string(results.size()) +
                     " gradient checks failed";
      return SEMCC_ERR_NUMERIC;
    }
    return SEMCC_OK;
  });
}

}  // extern "C"
