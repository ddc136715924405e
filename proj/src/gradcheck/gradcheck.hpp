// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "tensor/ops.hpp"
#include "tensor/rng.hpp"

namespace semcc {

/// Central-difference step and pass threshold for the max-norm relative error.
template <typename T>
struct GradcheckTolerance;
template <>
struct GradcheckTolerance<float> {
  static constexpr double eps = 5e-3;
  static constexpr double tol = 1e-3;
};
template <>
struct GradcheckTolerance<double> {
  static constexpr double eps = 1e-6;
  static constexpr double tol = 1e-6;
};

/// max_i |analytic_i - numeric_i| / max(max_i |analytic_i|, max_i |numeric_i|)
/// over the probed coordinates of every input. `loss` must rebuild the graph
/// from `inputs` on every call. At most `max_coords` coordinates per input
/// are probed (0 = all), chosen with `rng`.
template <typename T>
double gradient_error(const std::function<Tensor<T>()>& loss, std::vector<Tensor<T>> inputs, double eps,
                      int max_coords, CounterRng& rng);

struct GradcheckResult {
  std::string name;
  int instances = 0;
  int failures = 0;
  double worst = 0.0;
};

struct GradcheckOptions {
  int instances = 20;
  std::uint64_t seed = 0;
  bool composite = true;
  std::ostream* out = nullptr;  // one line per check when set
};

/// Every differentiable op plus the randomized composite pipeline.
template <typename T>
std::vector<GradcheckResult> run_gradcheck(const GradcheckOptions& opts);

}  // namespace semcc
