// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

#include "model/config.hpp"
#include "model/nn.hpp"

namespace semcc {

/// L = l_cc + lambda * l_cd; throws NumericError on a non-finite input.
double total_loss(double l_cc, double l_cd, double lambda);

/// Linear warmup 0 -> lr over warmup_steps, then half-cosine to 0 at total_steps.
double lr_at(long step, long total_steps, const TrainConfig& cfg);

struct AdamSlot {
  std::vector<float> m, v;
  long t = 0;
};

/// First and second moments per parameter name. Bias correction uses the
/// per-parameter update count, so groups trained in later stages start fresh.
struct AdamState {
  std::map<std::string, AdamSlot> slots;
};

/// Decoupled AdamW over every parameter that requires grad. Decay applies to
/// matrices only (Parameter::decay). Throws NumericError naming the first
/// parameter with a non-finite gradient.
void adamw_step(ParameterStore<float>& ps, AdamState& state, double lr, const TrainConfig& cfg);

/// Scales all trainable gradients so their global L2 norm is at most
/// max_norm (0 disables). Returns the norm before clipping.
double clip_grad_norm(ParameterStore<float>& ps, double max_norm);

}  // namespace semcc
