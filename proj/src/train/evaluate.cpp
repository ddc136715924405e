// SPDX-License-Identifier: Apache-2.0
#include "train/evaluate.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>

namespace semcc {

int worker_threads() {
  if (const char* env = std::getenv("SEMCC_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

template <typename T>
Tensor<T> mask_tensor(const std::vector<std::uint8_t>& mask, int size) {
  if (mask.size() != static_cast<std::size_t>(size) * size) throw DimensionError("mask extent does not match image");
  Tensor<T> t({1, size, size});
  for (std::size_t i = 0; i < mask.size(); ++i) t.ptr()[i] = static_cast<T>(mask[i]);
  return t;
}

template Tensor<float> mask_tensor<float>(const std::vector<std::uint8_t>&, int);
template Tensor<double> mask_tensor<double>(const std::vector<std::uint8_t>&, int);

SamplePrediction predict(const SemanticCc<float>& model, const std::vector<std::uint8_t>& img_a,
                         const std::vector<std::uint8_t>& img_b, int size) {
  NoGradScope<float> no_grad;
  ForwardCtx ctx;
  const FeaturePair<float> f = model.features(image_tensor<float>(img_a, size), image_tensor<float>(img_b, size), ctx);
  SamplePrediction out;
  out.mask = logits_to_mask(model.cd_logits(f));
  const CaptionCandidate cand = model.cc_decoder.generate(f.f1_cc, f.f2_cc, ctx);
  out.caption = model.vocab().decode(cand.tokens);
  out.template_idx = cand.template_idx;
  double acc = 0.0;
  const auto& templates = model.cc_decoder.templates();
  for (const auto& tmpl : templates) {
    const Tensor<float> d = model.cc_decoder.delta_features(f.f1_cc, f.f2_cc, tmpl, ctx);
    double s = 0.0;
    for (float v : d.data()) s += std::fabs(v);
    acc += s / static_cast<double>(d.numel());
  }
  out.delta_abs = acc / static_cast<double>(templates.size());
  return out;
}

EvalOutput evaluate(const SemanticCc<float>& model, const Dataset& data, const std::vector<std::string>& ids,
                    int max_samples) {
  std::vector<std::string> use = ids;
  if (max_samples > 0 && static_cast<int>(use.size()) > max_samples) use.resize(max_samples);
  if (use.empty()) throw ConfigError("evaluation split is empty");
  if (data.size != model.config().encoder.image_size) {
    throw ConfigError("dataset image size " + std::to_string(data.size) + " differs from model image size " +
                      std::to_string(model.config().encoder.image_size));
  }
  EvalOutput out;
  out.samples.resize(use.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  auto work = [&]() {
    for (std::size_t i = next++; i < use.size(); i = next++) {
      try {
        const SampleRecord& r = data.at(use[i]);
        SamplePrediction p = predict(model, r.img_a, r.img_b, r.size);
        p.id = r.id;
        if (r.mask) p.no_change = std::all_of(r.mask->begin(), r.mask->end(), [](std::uint8_t v) { return v == 0; });
        out.samples[i] = std::move(p);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!error) error = std::current_exception();
        next = use.size();
      }
    }
  };
  const int threads = std::min<int>(worker_threads(), static_cast<int>(use.size()));
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);

  CaptionEvalSet cc_set;
  ConfusionCounts counts;
  double dn = 0.0, dc = 0.0;
  for (std::size_t i = 0; i < use.size(); ++i) {
    const SampleRecord& r = data.at(use[i]);
    const SamplePrediction& p = out.samples[i];
    if (r.captions) cc_set.push_back({r.id, p.caption, *r.captions});
    if (r.mask) {
      counts += confusion(p.mask, *r.mask);
      out.has_masks = true;
      if (p.no_change) {
        dn += p.delta_abs;
        ++out.n_no_change;
      } else {
        dc += p.delta_abs;
        ++out.n_change;
      }
    }
  }
  if (!cc_set.empty()) {
    out.has_captions = true;
    out.cc = caption_scores(cc_set);
  }
  if (out.has_masks) out.cd = cd_metrics(counts);
  if (out.n_no_change > 0) out.delta_no_change = dn / out.n_no_change;
  if (out.n_change > 0) out.delta_change = dc / out.n_change;
  return out;
}

nlohmann::json eval_report(const EvalOutput& out, const std::string& config_hash, const std::string& dataset_digest) {
  nlohmann::json j = metrics_json(out.cc, out.cd);
  j["samples"] = out.samples.size();
  j["has_captions"] = out.has_captions;
  j["has_masks"] = out.has_masks;
  j["delta_f_abs"] = {{"no_change", out.delta_no_change},
                      {"change", out.delta_change},
                      {"n_no_change", out.n_no_change},
                      {"n_change", out.n_change}};
  j["provenance"] = {{"config_hash", config_hash},
                     {"git_describe", SEMCC_GIT_DESCRIBE},
                     {"dataset_digest", dataset_digest}};
  nlohmann::json caps = nlohmann::json::array();
  for (const auto& s : out.samples) caps.push_back({{"id", s.id}, {"caption", s.caption}, {"template", s.template_idx}});
  j["captions"] = caps;
  j["table"] = metrics_table(out.cc, out.cd);
  return j;
}

}  // namespace semcc
