// SPDX-License-Identifier: Apache-2.0
#include "model/model.hpp"

#include <set>

#include "data/dataset.hpp"

namespace semcc {

namespace {

NeckConfig effective_neck(const RunConfig& cfg) {
  NeckConfig n = cfg.neck;
  if (cfg.train.stage_mode == "cc-only") n.enabled = false;
  return n;
}

bool starts_with(const std::string& s, const char* prefix) { return s.rfind(prefix, 0) == 0; }

}  // namespace

Vocabulary standard_vocabulary() {
  std::set<std::string> words;
  for (const auto& text : default_prompt_texts()) {
    for (const auto& t : tokenize(text)) {
      if (t != Vocabulary::kImgToken) words.insert(t);
    }
  }
  for (const auto& w : caption_lexicon()) words.insert(w);
  return Vocabulary({words.begin(), words.end()});
}

template <typename T>
Tensor<T> image_tensor(const std::vector<std::uint8_t>& hwc, int size) {
  const std::size_t n = static_cast<std::size_t>(size) * size;
  if (hwc.size() != n * 3) {
    throw DimensionError("image buffer of " + std::to_string(hwc.size()) + " bytes for a " + std::to_string(size) +
                         "x" + std::to_string(size) + " RGB image");
  }
  Tensor<T> out({3, size, size});
  T* p = out.ptr();
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) p[c * n + i] = static_cast<T>(hwc[i * 3 + c]) / T(255);
  }
  return out;
}

ParamGroup param_group(const std::string& name) {
  if (starts_with(name, "encoder/bcsf/")) return ParamGroup::kBcsf;
  if (starts_with(name, "encoder/cd_reduce")) return ParamGroup::kCdReduce;
  if (starts_with(name, "encoder/")) {
    return name.find("/lora_") != std::string::npos ? ParamGroup::kEncoderAdapter : ParamGroup::kEncoderBase;
  }
  if (starts_with(name, "neck/")) return ParamGroup::kNeck;
  if (starts_with(name, "cd_decoder/")) return ParamGroup::kCdDecoder;
  if (name == "cc_decoder/lm/token_embed") return ParamGroup::kCcEmbedding;
  if (starts_with(name, "cc_decoder/")) return ParamGroup::kCcDecoder;
  throw ContractError("parameter '" + name + "' belongs to no group");
}

const char* group_name(ParamGroup g) {
  switch (g) {
    case ParamGroup::kEncoderBase: return "encoder_base";
    case ParamGroup::kEncoderAdapter: return "encoder_lora";
    case ParamGroup::kBcsf: return "bcsf";
    case ParamGroup::kCdReduce: return "cd_reduce";
    case ParamGroup::kNeck: return "neck";
    case ParamGroup::kCdDecoder: return "cd_decoder";
    case ParamGroup::kCcDecoder: return "cc_decoder";
    case ParamGroup::kCcEmbedding: return "cc_token_embed";
  }
  return "?";
}

template <typename T>
SemanticCc<T>::SemanticCc(const RunConfig& cfg)
    : params(cfg.train.seed),
      cfg_((cfg.validate(), cfg)),
      vocab_(standard_vocabulary()),
      encoder(params, cfg.encoder),
      neck(params, effective_neck(cfg), cfg.encoder.embed_dim, cfg.encoder.cd_channels, cfg.encoder.tokens()),
      cd_decoder(params, cfg.cd_decoder, cfg.encoder),
      cc_decoder(params, cfg.cc_decoder, cfg.encoder.embed_dim, vocab_) {}

template <typename T>
FeaturePair<T> SemanticCc<T>::features(const Tensor<T>& i1, const Tensor<T>& i2, ForwardCtx& ctx) const {
  return neck(encoder.encode(i1, i2, ctx), ctx);
}

template Tensor<float> image_tensor<float>(const std::vector<std::uint8_t>&, int);
template Tensor<double> image_tensor<double>(const std::vector<std::uint8_t>&, int);
template class SemanticCc<float>;
template class SemanticCc<double>;

}  // namespace semcc
