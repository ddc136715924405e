// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>

#include "model/config.hpp"
#include "model/nn.hpp"

namespace semcc {

/// Four maps at H/4, H/8, H/16, H/32, each [P, s, s].
template <typename T>
using Pyramid = std::array<Tensor<T>, 4>;

template <typename T>
struct ConvParams {
  Tensor<T> kernel, bias;
};

/// SimpleFPN-style change-detection decoder with a single-logit head.
template <typename T>
class CdDecoder {
 public:
  CdDecoder(ParameterStore<T>& ps, const CdDecoderConfig& cfg, const EncoderConfig& enc);

  /// f1, f2: [n, cd_channels] token maps of the two phases.
  Pyramid<T> simple_fpn(const Tensor<T>& f1, const Tensor<T>& f2) const;
  /// Returns logits [1, H, W].
  Tensor<T> fuse_predict(const Pyramid<T>& p) const;
  Tensor<T> operator()(const Tensor<T>& f1, const Tensor<T>& f2) const { return fuse_predict(simple_fpn(f1, f2)); }

  ConvParams<T> up4a, up4b, up8;  // transposed 2x2 kernels [C, O, 2, 2]
  ConvParams<T> down32;           // 3x3 stride 2
  std::array<ConvParams<T>, 4> lateral;  // 1x1 projections to P
  std::array<ConvParams<T>, 4> refine;   // 3x3 refinement P -> R
  ConvParams<T> head;                    // 1x1, 4R -> 1

 private:
  int grid_, image_size_;
};

/// Mean pixel-wise binary cross-entropy; target values must be 0 or 1.
template <typename T>
Tensor<T> cd_loss(const Tensor<T>& logits, const Tensor<T>& target) {
  return bce_with_logits(logits, target);
}

/// Thresholds sigmoid(logit) at 0.5.
template <typename T>
std::vector<std::uint8_t> logits_to_mask(const Tensor<T>& logits) {
  std::vector<std::uint8_t> m(logits.numel());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = logits[i] > T(0) ? 1 : 0;
  return m;
}

}  // namespace semcc
