// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "tensor/ops.hpp"

namespace semcc {

/// Per-forward state: training mode and the dropout stream counter.
struct ForwardCtx {
  bool training = false;
  // Skip adapters and filters: the frozen backbone path.
  bool plain = false;
  std::uint64_t seed = 0;
  std::uint64_t counter = 0;

  DropoutKey next_key() { return {seed, counter++}; }
};

enum class Init { kZeros, kOnes, kNormal, kXavier, kLoraA };

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  // Permanently frozen (random base weights). Never trainable in any stage.
  bool frozen = false;
  bool decay = true;
};

/// Owns every parameter of a model, keyed by unique hierarchical name.
/// Initial values are a pure function of (seed, name).
template <typename T>
class ParameterStore {
 public:
  explicit ParameterStore(std::uint64_t seed = 0) : seed_(seed) {}
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;

  Tensor<T> create(const std::string& name, Shape shape, Init init, double stddev = 0.02, bool frozen = false);

  std::vector<Parameter<T>>& all() { return params_; }
  const std::vector<Parameter<T>>& all() const { return params_; }
  Parameter<T>* find(const std::string& name);
  const Parameter<T>* find(const std::string& name) const;

  /// requires_grad := !frozen && pred(name) for every parameter.
  void set_trainable(const std::function<bool(const std::string&)>& pred);
  void zero_grad();
  std::size_t numel() const;

 private:
  std::uint64_t seed_;
  std::vector<Parameter<T>> params_;
  std::map<std::string, std::size_t> index_;
};

// output = x W^T + b + (alpha / r) * (drop(x) A^T) B^T
template <typename T>
Tensor<T> lora_linear(const Tensor<T>& x, const Tensor<T>& base_weight, const Tensor<T>& base_bias,
                      const Tensor<T>& a, const Tensor<T>& b, double alpha, double dropout_p, ForwardCtx& ctx);

struct ProjOptions {
  bool bias = true;
  bool frozen = false;
  bool zero_init = false;
  int lora_rank = 0;
  double lora_alpha = 0.0;
  double lora_dropout = 0.0;
};

/// Linear map with an optional low-rank adapter.
template <typename T>
class Proj {
 public:
  Proj() = default;
  Proj(ParameterStore<T>& ps, const std::string& name, int in, int out, const ProjOptions& opt = {});
  Tensor<T> operator()(const Tensor<T>& x, ForwardCtx& ctx) const;

  int in = 0, out = 0;
  Tensor<T> weight, bias, lora_a, lora_b;
  double lora_alpha = 0.0, lora_dropout = 0.0;
};

template <typename T>
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterStore<T>& ps, const std::string& name, int dim, bool frozen = false);
  Tensor<T> operator()(const Tensor<T>& x) const { return layer_norm(x, gamma, beta); }

  Tensor<T> gamma, beta;
};

struct BlockOptions {
  int heads = 4;
  int mlp_hidden = 128;
  bool frozen_base = false;
  int lora_rank = 0;
  double lora_alpha = 0.0;
  double lora_dropout = 0.0;
  // Zero-initialise the attention output and second MLP layer so the block
  // starts as the identity.
  bool zero_init_out = false;
  double dropout = 0.0;
};

/// Pre-norm transformer block: x + attn(ln1(x)); then + mlp(ln2(x)).
template <typename T>
class SelfBlock {
 public:
  SelfBlock() = default;
  SelfBlock(ParameterStore<T>& ps, const std::string& name, int dim, const BlockOptions& opt);
  Tensor<T> operator()(const Tensor<T>& x, const AttentionMask& mask, ForwardCtx& ctx) const;

  /// Incremental causal step: x holds the new rows only; keys/values of all
  /// previous rows are appended to the caches.
  Tensor<T> step(const Tensor<T>& x, Tensor<T>& k_cache, Tensor<T>& v_cache, ForwardCtx& ctx) const;

  int heads = 1;
  double dropout = 0.0;
  LayerNorm<T> ln1, ln2;
  Proj<T> q, k, v, o, fc1, fc2;

 private:
  Tensor<T> mlp(const Tensor<T>& x, ForwardCtx& ctx) const;
};

/// Pre-norm cross-attention block: queries attend to a context sequence.
template <typename T>
class CrossBlock {
 public:
  CrossBlock() = default;
  CrossBlock(ParameterStore<T>& ps, const std::string& name, int dim, const BlockOptions& opt);
  Tensor<T> operator()(const Tensor<T>& x, const Tensor<T>& context, ForwardCtx& ctx) const;

  int heads = 1;
  LayerNorm<T> ln_q, ln_ctx, ln2;
  Proj<T> q, k, v, o, fc1, fc2;
};

}  // namespace semcc
