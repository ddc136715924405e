// SPDX-License-Identifier: Apache-2.0
#include "train/optim.hpp"

#include <cmath>
#include <numbers>

namespace semcc {

double total_loss(double l_cc, double l_cd, double lambda) {
  if (!std::isfinite(l_cc) || !std::isfinite(l_cd)) {
    throw NumericError("non-finite loss term (l_cc=" + std::to_string(l_cc) + ", l_cd=" + std::to_string(l_cd) + ")");
  }
  return l_cc + lambda * l_cd;
}

double lr_at(long step, long total_steps, const TrainConfig& cfg) {
  if (step < 0) throw ContractError("negative step");
  const long warm = cfg.warmup_steps;
  if (step < warm) return cfg.lr * static_cast<double>(step) / static_cast<double>(warm);
  if (total_steps <= warm) return cfg.lr;
  const double progress = std::min(1.0, static_cast<double>(step - warm) / static_cast<double>(total_steps - warm));
  return cfg.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

void adamw_step(ParameterStore<float>& ps, AdamState& state, double lr, const TrainConfig& cfg) {
  for (auto& p : ps.all()) {
    if (p.frozen || !p.value.requires_grad() || !p.value.has_grad()) continue;
    for (float g : p.value.grad()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter '" + p.name + "'");
    }
  }
  const double b1 = cfg.beta1, b2 = cfg.beta2;
  for (auto& p : ps.all()) {
    if (p.frozen || !p.value.requires_grad() || !p.value.has_grad()) continue;
    AdamSlot& s = state.slots[p.name];
    const std::size_t n = p.value.numel();
    if (s.m.empty()) {
      s.m.assign(n, 0.0f);
      s.v.assign(n, 0.0f);
    }
    ++s.t;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(s.t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(s.t));
    const double wd = p.decay ? cfg.weight_decay : 0.0;
    auto g = p.value.grad();
    float* w = p.value.ptr();
    for (std::size_t i = 0; i < n; ++i) {
      const double gi = g[i];
      const double m = b1 * s.m[i] + (1 - b1) * gi;
      const double v = b2 * s.v[i] + (1 - b2) * gi * gi;
      s.m[i] = static_cast<float>(m);
      s.v[i] = static_cast<float>(v);
      const double update = (m / c1) / (std::sqrt(v / c2) + cfg.adam_eps) + wd * w[i];
      w[i] = static_cast<float>(w[i] - lr * update);
    }
  }
}

double clip_grad_norm(ParameterStore<float>& ps, double max_norm) {
  double sq = 0.0;
  for (auto& p : ps.all()) {
    if (!p.value.requires_grad() || !p.value.has_grad()) continue;
    for (float g : p.value.grad()) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const float scale = static_cast<float>(max_norm / (norm + 1e-12));
    for (auto& p : ps.all()) {
      if (!p.value.requires_grad() || !p.value.has_grad()) continue;
      for (float& g : p.value.grad_buffer()) g *= scale;
    }
  }
  return norm;
}

}  // namespace semcc
