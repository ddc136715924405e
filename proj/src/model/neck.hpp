// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "model/config.hpp"
#include "model/encoder.hpp"
#include "model/nn.hpp"

namespace semcc {

/// Cross-task exchange: x1 (width d1) receives information from x2 (width d2).
/// Rows of both inputs are paired position-wise.
template <typename T>
class InterTaskAttention {
 public:
  InterTaskAttention() = default;
  InterTaskAttention(ParameterStore<T>& ps, const std::string& name, int d1, int d2, const NeckConfig& cfg);

  /// sigmoid(proj([x1, align(x2 * sigmoid(x1^T W x2))])) per row, before the
  /// residual gain. `phase_mask` restricts the cross-attention variant to
  /// rows of the same phase.
  Tensor<T> operator()(const Tensor<T>& x1, const Tensor<T>& x2, const AttentionMask& phase_mask,
                       ForwardCtx& ctx) const;
  /// Per-row bilinear similarity s_i = x1_i^T W x2_i, shape [n, 1].
  Tensor<T> similarity(const Tensor<T>& x1, const Tensor<T>& x2) const;

  bool cross_attention = false;
  bool output_sigmoid = true;
  Tensor<T> bilinear;  // [d1, d2]
  Proj<T> q, k;        // cross-attention variant only
  Proj<T> align;       // d2 -> d1, no bias
  Proj<T> proj;        // 2 d1 -> d1
  Tensor<T> gain;      // [d1], zero-initialised residual gain
};

template <typename T>
class NeckUnit {
 public:
  NeckUnit(ParameterStore<T>& ps, const std::string& name, int c, int cd, const NeckConfig& cfg);
  /// cc: [2n, c], cd: [2n, cd], phases stacked along rows.
  std::pair<Tensor<T>, Tensor<T>> operator()(const Tensor<T>& cc, const Tensor<T>& cd, const AttentionMask& phase_mask,
                                             ForwardCtx& ctx) const;

  SelfBlock<T> intra_cc, intra_cd;
  InterTaskAttention<T> cd_to_cc, cc_to_cd;

 private:
  NeckConfig cfg_;
};

template <typename T>
class Neck {
 public:
  Neck(ParameterStore<T>& ps, const NeckConfig& cfg, int c, int cd, int tokens);
  FeaturePair<T> operator()(const FeaturePair<T>& in, ForwardCtx& ctx) const;

  std::vector<NeckUnit<T>>& units() { return units_; }

 private:
  NeckConfig cfg_;
  int tokens_;
  std::vector<NeckUnit<T>> units_;
  AttentionMask phase_mask_;
};

}  // namespace semcc
