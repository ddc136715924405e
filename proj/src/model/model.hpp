// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "model/cc_decoder.hpp"
#include "model/cd_decoder.hpp"
#include "model/config.hpp"
#include "model/encoder.hpp"
#include "model/neck.hpp"

namespace semcc {

/// Prompt words plus every word the caption generator can emit.
Vocabulary standard_vocabulary();

/// Interleaved RGB bytes [size, size, 3] -> [3, size, size] scaled to [0, 1].
template <typename T>
Tensor<T> image_tensor(const std::vector<std::uint8_t>& hwc, int size);

/// Parameter groups used by the stage schedules and the freeze ledger.
enum class ParamGroup { kEncoderBase, kEncoderAdapter, kBcsf, kCdReduce, kNeck, kCdDecoder, kCcDecoder, kCcEmbedding };
ParamGroup param_group(const std::string& name);
const char* group_name(ParamGroup g);

/// Encoder, aggregation neck and both task decoders over one parameter store.
template <typename T>
class SemanticCc {
 public:
  explicit SemanticCc(const RunConfig& cfg);
  SemanticCc(const SemanticCc&) = delete;
  SemanticCc& operator=(const SemanticCc&) = delete;

  /// Encoder followed by the neck.
  FeaturePair<T> features(const Tensor<T>& i1, const Tensor<T>& i2, ForwardCtx& ctx) const;
  /// [1, H, W] change logits.
  Tensor<T> cd_logits(const FeaturePair<T>& f) const { return cd_decoder(f.f1_cd, f.f2_cd); }

  const RunConfig& config() const { return cfg_; }
  const Vocabulary& vocab() const { return vocab_; }

  ParameterStore<T> params;

 private:
  RunConfig cfg_;
  Vocabulary vocab_;

 public:
  Encoder<T> encoder;
  Neck<T> neck;
  CdDecoder<T> cd_decoder;
  CcDecoder<T> cc_decoder;
};

}  // namespace semcc
