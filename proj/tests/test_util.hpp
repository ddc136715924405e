// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>

#include "model/config.hpp"
#include "tensor/rng.hpp"
#include "tensor/tensor.hpp"

namespace semcc::testing {

/// Removed on scope exit.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() / ("semcc_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string str() const { return path.string(); }
};

/// A 32-pixel model with every mechanism enabled, cheap enough for unit tests.
inline RunConfig small_config() {
  RunConfig cfg;
  auto& e = cfg.encoder;
  e.image_size = 32;
  e.patch_size = 2;
  e.embed_dim = 16;
  e.depth = 4;
  e.heads = 2;
  e.window_size = 1;
  e.global_layers = {2, 4};
  e.cd_channels = 8;
  e.lora_rank = 4;
  e.lora_alpha = 8;
  cfg.neck.units = 2;
  cfg.neck.heads = 2;
  cfg.cd_decoder.pyramid_channels = 8;
  cfg.cd_decoder.refine_channels = 4;
  auto& c = cfg.cc_decoder;
  c.n_queries = 3;
  c.qformer_blocks = 1;
  c.qformer_heads = 2;
  c.d_lm = 16;
  c.lm_layers = 2;
  c.lm_heads = 2;
  c.max_len = 12;
  c.lora_rank = 4;
  c.lora_alpha = 8;
  return cfg;
}

template <typename T>
bool bitwise_equal(const Tensor<T>& a, const Tensor<T>& b) {
  return a.shape() == b.shape() && std::memcmp(a.ptr(), b.ptr(), a.numel() * sizeof(T)) == 0;
}

/// Overwrites every element with N(0, stddev^2) draws.
template <typename T>
void fill_normal(Tensor<T>& t, std::uint64_t seed, double stddev = 1.0) {
  CounterRng rng(seed);
  for (auto& v : t.data()) v = static_cast<T>(rng.normal() * stddev);
}

template <typename T>
Tensor<T> random_tensor(Shape shape, std::uint64_t seed, double stddev = 1.0) {
  Tensor<T> t(std::move(shape));
  fill_normal(t, seed, stddev);
  return t;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  return m;
}

}  // namespace semcc::testing
