// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "tensor/tensor.hpp"

namespace semcc {

// Differentiable primitives. Every op records a backward closure on the
// current tape when one of its tensor inputs requires grad. There is no
// broadcasting: apart from the trailing-axis bias of linear/conv and the
// explicit row/column gates below, operand shapes must match exactly.

/// Which (query, key) pairs may attend to each other.
struct AttentionMask {
  enum class Kind { kNone, kCausal, kGroups };
  Kind kind = Kind::kNone;
  std::vector<int> q_groups;  // kGroups: allowed iff q_groups[i] == k_groups[j]
  std::vector<int> k_groups;

  static AttentionMask none() { return {}; }
  /// Query row i sits at absolute position i + (m - n); it sees keys up to there.
  static AttentionMask causal() { return {Kind::kCausal, {}, {}}; }
  static AttentionMask groups(std::vector<int> q, std::vector<int> k) {
    return {Kind::kGroups, std::move(q), std::move(k)};
  }
  bool allowed(int i, int j, int n, int m) const {
    switch (kind) {
      case Kind::kNone: return true;
      case Kind::kCausal: return j <= i + (m - n);
      case Kind::kGroups: return q_groups[i] == k_groups[j];
    }
    return true;
  }
};

/// Identifies one dropout application: masks are a pure function of
/// (seed, stream, element index).
struct DropoutKey {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
};

// --- elementwise -----------------------------------------------------------
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& x, T s);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T> Tensor<T> gelu(const Tensor<T>& x);
template <typename T> Tensor<T> dropout(const Tensor<T>& x, double p, DropoutKey key);

// --- normalisation / reductions ---------------------------------------------
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, double eps = 1e-5);
/// Softmax over the last axis.
template <typename T> Tensor<T> softmax(const Tensor<T>& x);
template <typename T> Tensor<T> log_softmax(const Tensor<T>& x);
template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x);
/// sum_i x_i * w_i with constant weights, accumulated in double.
template <typename T> Tensor<T> weighted_sum(const Tensor<T>& x, const std::vector<double>& w);

// --- structural --------------------------------------------------------------
template <typename T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);
/// 2-D transpose.
template <typename T> Tensor<T> transpose(const Tensor<T>& x);
template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& xs, int axis);
/// Narrow [begin, end) along `axis`.
template <typename T> Tensor<T> slice(const Tensor<T>& x, int axis, int begin, int end);
template <typename T> Tensor<T> gather_rows(const Tensor<T>& x, const std::vector<int>& rows);
/// Flat gather: out.flat[i] = x.flat[index[i]], viewed with `shape`.
template <typename T>
Tensor<T> gather(const Tensor<T>& x, std::shared_ptr<const std::vector<int>> index, Shape shape);

// --- neural ------------------------------------------------------------------
/// x[..., in] * weight[out, in]^T + bias[out].  `bias` may be undefined.
template <typename T> Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);
enum class Padding { kZero, kReplicate };
/// Cross-correlation of x[C,H,W] with kernel[O,C,k,k]; bias[O] optional.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias, int stride, int pad,
                 Padding padding = Padding::kZero);
/// 2x2 stride-2 transposed convolution: x[C,H,W], kernel[C,O,2,2] -> [O,2H,2W].
template <typename T>
Tensor<T> conv_transpose2x2(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias);
/// Scaled dot-product attention, q[n,d], k[m,d], v[m,dv], softmax over m.
template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                    const AttentionMask& mask = AttentionMask::none());
/// Head-split attention: columns of q/k/v are partitioned into `heads` slices.
template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, int heads,
                               const AttentionMask& mask = AttentionMask::none());
/// y[i, j] = x[i, j] * gate[i]  (gate has n elements).
template <typename T> Tensor<T> scale_rows(const Tensor<T>& x, const Tensor<T>& gate);
/// y[i, j] = x[i, j] * gate[j]  (gate has d elements).
template <typename T> Tensor<T> scale_cols(const Tensor<T>& x, const Tensor<T>& gate);
/// out[i] = <a_i, b_i>, shape [n, 1].
template <typename T> Tensor<T> rowwise_dot(const Tensor<T>& a, const Tensor<T>& b);
/// Half-pixel bilinear resize of x[C,H,W] (edge clamped).
template <typename T> Tensor<T> resize_bilinear(const Tensor<T>& x, int out_h, int out_w);
template <typename T> Tensor<T> embedding(const Tensor<T>& table, const std::vector<int>& ids);

// --- losses ------------------------------------------------------------------
/// Mean binary cross-entropy of sigmoid(logits) against a {0,1} target.
template <typename T> Tensor<T> bce_with_logits(const Tensor<T>& logits, const Tensor<T>& target);
/// Mean cross-entropy of logits[L,V] over positions whose target != ignore_index.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<int>& targets, int ignore_index);

}  // namespace semcc
