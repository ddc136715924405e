// SPDX-License-Identifier: Apache-2.0
#include "model/nn.hpp"

#include <cmath>

#include "tensor/rng.hpp"

namespace semcc {

template <typename T>
Tensor<T> ParameterStore<T>::create(const std::string& name, Shape shape, Init init, double stddev, bool frozen) {
  if (index_.count(name) != 0) throw ContractError("duplicate parameter name " + name);
  Tensor<T> t(shape);
  CounterRng rng(seed_ ^ fnv1a(name));
  const int fan_out = shape[0];
  const int fan_in = shape.size() > 1 ? static_cast<int>(shape_numel(shape) / shape[0]) : shape[0];
  auto d = t.data();
  switch (init) {
    case Init::kZeros: break;
    case Init::kOnes: std::fill(d.begin(), d.end(), T(1)); break;
    case Init::kNormal:
      for (auto& v : d) v = static_cast<T>(rng.normal() * stddev);
      break;
    case Init::kXavier: {
      const double a = std::sqrt(6.0 / (fan_in + fan_out));
      for (auto& v : d) v = static_cast<T>(rng.uniform(-a, a));
      break;
    }
    case Init::kLoraA: {
      const double a = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (auto& v : d) v = static_cast<T>(rng.uniform(-a, a));
      break;
    }
  }
  t.set_requires_grad(!frozen);
  index_[name] = params_.size();
  params_.push_back({name, t, frozen, shape.size() >= 2});
  return t;
}

template <typename T>
Parameter<T>* ParameterStore<T>::find(const std::string& name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

template <typename T>
const Parameter<T>* ParameterStore<T>::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

template <typename T>
void ParameterStore<T>::set_trainable(const std::function<bool(const std::string&)>& pred) {
  for (auto& p : params_) p.value.set_requires_grad(!p.frozen && pred(p.name));
}

template <typename T>
void ParameterStore<T>::zero_grad() {
  for (auto& p : params_) p.value.zero_grad();
}

template <typename T>
std::size_t ParameterStore<T>::numel() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

template <typename T>
Tensor<T> lora_linear(const Tensor<T>& x, const Tensor<T>& base_weight, const Tensor<T>& base_bias,
                      const Tensor<T>& a, const Tensor<T>& b, double alpha, double dropout_p, ForwardCtx& ctx) {
  const int r = a.dim(0);
  const int in = base_weight.dim(1), out = base_weight.dim(0);
  if (r < 1 || r > std::min(in, out)) {
    throw ConfigError("LoRA rank " + std::to_string(r) + " invalid for a " + std::to_string(out) + "x" +
                      std::to_string(in) + " map");
  }
  if (a.dim(1) != in || b.dim(0) != out || b.dim(1) != r) {
    throw DimensionError("lora_linear: A " + shape_str(a.shape()) + ", B " + shape_str(b.shape()) + " for base " +
                         shape_str(base_weight.shape()));
  }
  Tensor<T> base = linear(x, base_weight, base_bias);
  Tensor<T> xd = ctx.training ? dropout(x, dropout_p, ctx.next_key()) : x;
  Tensor<T> delta = linear(linear(xd, a, Tensor<T>()), b, Tensor<T>());
  return add(base, scale(delta, static_cast<T>(alpha / r)));
}

template <typename T>
Proj<T>::Proj(ParameterStore<T>& ps, const std::string& name, int in_, int out_, const ProjOptions& opt)
    : in(in_), out(out_), lora_alpha(opt.lora_alpha), lora_dropout(opt.lora_dropout) {
  weight = ps.create(name + "/weight", {out, in}, opt.zero_init ? Init::kZeros : Init::kXavier, 0.0, opt.frozen);
  if (opt.bias) bias = ps.create(name + "/bias", {out}, Init::kZeros, 0.0, opt.frozen);
  if (opt.lora_rank > 0) {
    if (opt.lora_rank > std::min(in, out)) {
      throw ConfigError("LoRA rank " + std::to_string(opt.lora_rank) + " exceeds min(" + std::to_string(in) + ", " +
                        std::to_string(out) + ") for " + name);
    }
    lora_a = ps.create(name + "/lora_a", {opt.lora_rank, in}, Init::kLoraA);
    lora_b = ps.create(name + "/lora_b", {out, opt.lora_rank}, Init::kZeros);
  }
}

template <typename T>
Tensor<T> Proj<T>::operator()(const Tensor<T>& x, ForwardCtx& ctx) const {
  if (lora_a.defined() && !ctx.plain) {
    return lora_linear(x, weight, bias, lora_a, lora_b, lora_alpha, lora_dropout, ctx);
  }
  return linear(x, weight, bias);
}

template <typename T>
LayerNorm<T>::LayerNorm(ParameterStore<T>& ps, const std::string& name, int dim, bool frozen) {
  gamma = ps.create(name + "/gamma", {dim}, Init::kOnes, 0.0, frozen);
  beta = ps.create(name + "/beta", {dim}, Init::kZeros, 0.0, frozen);
}

namespace {

ProjOptions attn_proj(const BlockOptions& opt, bool zero) {
  ProjOptions p;
  p.frozen = opt.frozen_base;
  p.zero_init = zero;
  p.lora_rank = opt.lora_rank;
  p.lora_alpha = opt.lora_alpha;
  p.lora_dropout = opt.lora_dropout;
  return p;
}

ProjOptions mlp_proj(const BlockOptions& opt, bool zero) {
  ProjOptions p;
  p.frozen = opt.frozen_base;
  p.zero_init = zero;
  return p;
}

}  // namespace

template <typename T>
SelfBlock<T>::SelfBlock(ParameterStore<T>& ps, const std::string& name, int dim, const BlockOptions& opt)
    : heads(opt.heads), dropout(opt.dropout) {
  ln1 = LayerNorm<T>(ps, name + "/ln1", dim, opt.frozen_base);
  q = Proj<T>(ps, name + "/attn/q", dim, dim, attn_proj(opt, false));
  k = Proj<T>(ps, name + "/attn/k", dim, dim, attn_proj(opt, false));
  v = Proj<T>(ps, name + "/attn/v", dim, dim, attn_proj(opt, false));
  o = Proj<T>(ps, name + "/attn/out", dim, dim, attn_proj(opt, opt.zero_init_out));
  ln2 = LayerNorm<T>(ps, name + "/ln2", dim, opt.frozen_base);
  fc1 = Proj<T>(ps, name + "/mlp/fc1", dim, opt.mlp_hidden, mlp_proj(opt, false));
  fc2 = Proj<T>(ps, name + "/mlp/fc2", opt.mlp_hidden, dim, mlp_proj(opt, opt.zero_init_out));
}

template <typename T>
Tensor<T> SelfBlock<T>::mlp(const Tensor<T>& x, ForwardCtx& ctx) const {
  Tensor<T> h = gelu(fc1(ln2(x), ctx));
  Tensor<T> y = fc2(h, ctx);
  if (ctx.training && dropout > 0) y = semcc::dropout(y, dropout, ctx.next_key());
  return add(x, y);
}

template <typename T>
Tensor<T> SelfBlock<T>::operator()(const Tensor<T>& x, const AttentionMask& mask, ForwardCtx& ctx) const {
  Tensor<T> h = ln1(x);
  Tensor<T> a = o(multi_head_attention(q(h, ctx), k(h, ctx), v(h, ctx), heads, mask), ctx);
  if (ctx.training && dropout > 0) a = semcc::dropout(a, dropout, ctx.next_key());
  return mlp(add(x, a), ctx);
}

template <typename T>
Tensor<T> SelfBlock<T>::step(const Tensor<T>& x, Tensor<T>& k_cache, Tensor<T>& v_cache, ForwardCtx& ctx) const {
  Tensor<T> h = ln1(x);
  Tensor<T> kn = k(h, ctx), vn = v(h, ctx);
  k_cache = k_cache.defined() ? concat<T>({k_cache, kn}, 0) : kn;
  v_cache = v_cache.defined() ? concat<T>({v_cache, vn}, 0) : vn;
  Tensor<T> a = o(multi_head_attention(q(h, ctx), k_cache, v_cache, heads, AttentionMask::causal()), ctx);
  return mlp(add(x, a), ctx);
}

template <typename T>
CrossBlock<T>::CrossBlock(ParameterStore<T>& ps, const std::string& name, int dim, const BlockOptions& opt)
    : heads(opt.heads) {
  ln_q = LayerNorm<T>(ps, name + "/ln_q", dim, opt.frozen_base);
  ln_ctx = LayerNorm<T>(ps, name + "/ln_ctx", dim, opt.frozen_base);
  q = Proj<T>(ps, name + "/attn/q", dim, dim, attn_proj(opt, false));
  k = Proj<T>(ps, name + "/attn/k", dim, dim, attn_proj(opt, false));
  v = Proj<T>(ps, name + "/attn/v", dim, dim, attn_proj(opt, false));
  o = Proj<T>(ps, name + "/attn/out", dim, dim, attn_proj(opt, opt.zero_init_out));
  ln2 = LayerNorm<T>(ps, name + "/ln2", dim, opt.frozen_base);
  fc1 = Proj<T>(ps, name + "/mlp/fc1", dim, opt.mlp_hidden, mlp_proj(opt, false));
  fc2 = Proj<T>(ps, name + "/mlp/fc2", opt.mlp_hidden, dim, mlp_proj(opt, opt.zero_init_out));
}

template <typename T>
Tensor<T> CrossBlock<T>::operator()(const Tensor<T>& x, const Tensor<T>& context, ForwardCtx& ctx) const {
  Tensor<T> hq = ln_q(x);
  Tensor<T> hc = ln_ctx(context);
  Tensor<T> a = o(multi_head_attention(q(hq, ctx), k(hc, ctx), v(hc, ctx), heads), ctx);
  Tensor<T> y = add(x, a);
  return add(y, fc2(gelu(fc1(ln2(y), ctx)), ctx));
}

template class ParameterStore<float>;
template class ParameterStore<double>;
template Tensor<float> lora_linear(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&,
                                   const Tensor<float>&, const Tensor<float>&, double, double, ForwardCtx&);
template Tensor<double> lora_linear(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&,
                                    const Tensor<double>&, const Tensor<double>&, double, double, ForwardCtx&);
template class Proj<float>;
template class Proj<double>;
template class LayerNorm<float>;
template class LayerNorm<double>;
template class SelfBlock<float>;
template class SelfBlock<double>;
template class CrossBlock<float>;
template class CrossBlock<double>;

}  // namespace semcc
