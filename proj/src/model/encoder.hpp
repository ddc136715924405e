// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <vector>

#include "model/config.hpp"
#include "model/nn.hpp"

namespace semcc {

/// Token maps are stored as [h*w, channels] in row-major (y, x) order, which
/// is the same memory layout as [h, w, channels].
template <typename T>
struct FeaturePair {
  Tensor<T> f1_cc, f2_cc;  // [n, c]
  Tensor<T> f1_cd, f2_cd;  // [n, cd_channels]
};

/// gate[i] = sigmoid(proj([x_i, y_i])); returns x scaled row-wise by gate.
template <typename T>
Tensor<T> spatial_filter(const Tensor<T>& x, const Tensor<T>& y, const Tensor<T>& weight, const Tensor<T>& bias);

/// Per-channel gate from the flattened spatial vectors of x and y
/// (x^T and y^T concatenated, [c, 2n] -> [c, 1]); returns x scaled per channel.
template <typename T>
Tensor<T> channel_filter(const Tensor<T>& x, const Tensor<T>& y, const Tensor<T>& weight, const Tensor<T>& bias);

template <typename T>
class Ffn {
 public:
  Ffn() = default;
  Ffn(ParameterStore<T>& ps, const std::string& name, int dim, int hidden);
  Tensor<T> operator()(const Tensor<T>& x, ForwardCtx& ctx) const { return fc2(gelu(fc1(x, ctx)), ctx); }
  Proj<T> fc1, fc2;
};

/// Bi-temporal change semantic filter.
template <typename T>
class Bcsf {
 public:
  Bcsf() = default;
  Bcsf(ParameterStore<T>& ps, const std::string& name, int dim, int tokens);
  /// f_k + FFN_sf(SF(f_k, f_other)) + FFN_cf_k(CF_k(f_k, f_other)).
  std::pair<Tensor<T>, Tensor<T>> operator()(const Tensor<T>& f1, const Tensor<T>& f2, ForwardCtx& ctx) const;

  int tokens = 0;
  Proj<T> spatial;             // 2c -> 1, shared by both phases
  Proj<T> channel1, channel2;  // 2n -> 1, one per phase
  Ffn<T> ffn_sf, ffn_cf1, ffn_cf2;
  // Diagnostic: replace every FFN by the identity.
  bool identity_ffn = false;
};

/// Siamese ViT-style encoder: patch embedding, two 2x2 patch merges, windowed
/// and global pre-norm blocks with LoRA on attention, BCSF after each global
/// layer, and a learned reduction to the CD tier.
template <typename T>
class Encoder {
 public:
  Encoder(ParameterStore<T>& ps, const EncoderConfig& cfg);

  /// i1, i2: [3, H, W] in [0, 1].
  FeaturePair<T> encode(const Tensor<T>& i1, const Tensor<T>& i2, ForwardCtx& ctx) const;

  const EncoderConfig& config() const { return cfg_; }
  std::vector<Bcsf<T>>& bcsf() { return bcsf_; }
  const std::vector<SelfBlock<T>>& blocks() const { return blocks_; }

 private:
  EncoderConfig cfg_;
  Proj<T> patch_embed_, merge1_, merge2_;
  Tensor<T> pos_embed_;
  std::vector<SelfBlock<T>> blocks_;
  std::vector<Bcsf<T>> bcsf_;
  std::vector<int> bcsf_after_;  // block index (0-based) -> bcsf slot or -1
  Proj<T> cd_reduce_;

  std::shared_ptr<const std::vector<int>> patchify_idx_, merge1_idx_, merge2_idx_;
  AttentionMask local_mask_, global_mask_;
};

}  // namespace semcc
