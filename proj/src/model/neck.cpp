// SPDX-License-Identifier: Apache-2.0
#include "model/neck.hpp"

namespace semcc {

template <typename T>
InterTaskAttention<T>::InterTaskAttention(ParameterStore<T>& ps, const std::string& name, int d1, int d2,
                                          const NeckConfig& cfg)
    : cross_attention(cfg.inter_task == "cross_attention"), output_sigmoid(cfg.output_sigmoid) {
  if (cross_attention) {
    q = Proj<T>(ps, name + "/q", d1, d1);
    k = Proj<T>(ps, name + "/k", d2, d1);
  } else {
    bilinear = ps.create(name + "/bilinear", {d1, d2}, Init::kNormal, 1.0 / std::sqrt(static_cast<double>(d1 * d2)));
  }
  ProjOptions nb;
  nb.bias = false;
  align = Proj<T>(ps, name + "/align", d2, d1, nb);
  proj = Proj<T>(ps, name + "/proj", 2 * d1, d1);
  gain = ps.create(name + "/gain", {d1}, Init::kZeros);
}

template <typename T>
Tensor<T> InterTaskAttention<T>::similarity(const Tensor<T>& x1, const Tensor<T>& x2) const {
  if (x1.dim(0) != x2.dim(0)) {
    throw DimensionError("inter-task attention: token counts " + shape_str(x1.shape()) + " vs " +
                         shape_str(x2.shape()));
  }
  return rowwise_dot(x1, linear(x2, bilinear, Tensor<T>()));
}

template <typename T>
Tensor<T> InterTaskAttention<T>::operator()(const Tensor<T>& x1, const Tensor<T>& x2, const AttentionMask& phase_mask,
                                            ForwardCtx& ctx) const {
  if (x1.dim(0) != x2.dim(0)) {
    throw DimensionError("inter-task attention: token counts " + shape_str(x1.shape()) + " vs " +
                         shape_str(x2.shape()));
  }
  Tensor<T> delta;
  if (cross_attention) {
    delta = attention(q(x1, ctx), k(x2, ctx), align(x2, ctx), phase_mask);
  } else {
    delta = align(scale_rows(x2, sigmoid(similarity(x1, x2))), ctx);
  }
  Tensor<T> out = proj(concat<T>({x1, delta}, 1), ctx);
  return output_sigmoid ? sigmoid(out) : out;
}

template <typename T>
NeckUnit<T>::NeckUnit(ParameterStore<T>& ps, const std::string& name, int c, int cd, const NeckConfig& cfg)
    : cfg_(cfg) {
  BlockOptions bo;
  bo.heads = cfg.heads;
  bo.zero_init_out = true;
  bo.mlp_hidden = cfg.mlp_ratio * c;
  intra_cc = SelfBlock<T>(ps, name + "/intra_cc", c, bo);
  bo.mlp_hidden = cfg.mlp_ratio * cd;
  intra_cd = SelfBlock<T>(ps, name + "/intra_cd", cd, bo);
  if (cfg.inter_task != "off") {
    if (cfg.cd_to_cc) cd_to_cc = InterTaskAttention<T>(ps, name + "/cd_to_cc", c, cd, cfg);
    if (cfg.cc_to_cd) cc_to_cd = InterTaskAttention<T>(ps, name + "/cc_to_cd", cd, c, cfg);
  }
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> NeckUnit<T>::operator()(const Tensor<T>& cc, const Tensor<T>& cd,
                                                        const AttentionMask& phase_mask, ForwardCtx& ctx) const {
  Tensor<T> a = intra_cc(cc, phase_mask, ctx);
  Tensor<T> b = intra_cd(cd, phase_mask, ctx);
  if (cfg_.inter_task == "off") return {a, b};
  Tensor<T> a_out = a, b_out = b;
  if (cfg_.cd_to_cc) a_out = add(a, scale_cols(cd_to_cc(a, b, phase_mask, ctx), cd_to_cc.gain));
  if (cfg_.cc_to_cd) b_out = add(b, scale_cols(cc_to_cd(b, a, phase_mask, ctx), cc_to_cd.gain));
  return {a_out, b_out};
}

template <typename T>
Neck<T>::Neck(ParameterStore<T>& ps, const NeckConfig& cfg, int c, int cd, int tokens) : cfg_(cfg), tokens_(tokens) {
  if (cfg.enabled) {
    for (int u = 0; u < cfg.units; ++u) units_.emplace_back(ps, "neck/unit" + std::to_string(u), c, cd, cfg);
  }
  std::vector<int> phase(2 * tokens);
  for (int i = 0; i < 2 * tokens; ++i) phase[i] = i / tokens;
  phase_mask_ = AttentionMask::groups(phase, phase);
}

template <typename T>
FeaturePair<T> Neck<T>::operator()(const FeaturePair<T>& in, ForwardCtx& ctx) const {
  if (units_.empty() || ctx.plain) return in;
  const int n = tokens_;
  Tensor<T> cc = concat<T>({in.f1_cc, in.f2_cc}, 0);
  Tensor<T> cd = concat<T>({in.f1_cd, in.f2_cd}, 0);
  for (const auto& unit : units_) std::tie(cc, cd) = unit(cc, cd, phase_mask_, ctx);
  FeaturePair<T> out;
  out.f1_cc = slice(cc, 0, 0, n);
  out.f2_cc = slice(cc, 0, n, 2 * n);
  out.f1_cd = slice(cd, 0, 0, n);
  out.f2_cd = slice(cd, 0, n, 2 * n);
  return out;
}

template class InterTaskAttention<float>;
template class InterTaskAttention<double>;
template class NeckUnit<float>;
template class NeckUnit<double>;
template class Neck<float>;
template class Neck<double>;

}  // namespace semcc
