// SPDX-License-Identifier: Apache-2.0
#include "model/encoder.hpp"

#include <cmath>

namespace semcc {

template <typename T>
Tensor<T> spatial_filter(const Tensor<T>& x, const Tensor<T>& y, const Tensor<T>& weight, const Tensor<T>& bias) {
  if (x.shape() != y.shape()) {
    throw DimensionError("spatial_filter: " + shape_str(x.shape()) + " vs " + shape_str(y.shape()));
  }
  Tensor<T> gate = sigmoid(linear(concat<T>({x, y}, 1), weight, bias));
  return scale_rows(x, gate);
}

template <typename T>
Tensor<T> channel_filter(const Tensor<T>& x, const Tensor<T>& y, const Tensor<T>& weight, const Tensor<T>& bias) {
  if (x.shape() != y.shape()) {
    throw DimensionError("channel_filter: " + shape_str(x.shape()) + " vs " + shape_str(y.shape()));
  }
  if (weight.dim(1) != 2 * x.dim(0)) {
    throw ConfigError("channel filter built for " + std::to_string(weight.dim(1) / 2) + " tokens, got " +
                      std::to_string(x.dim(0)));
  }
  Tensor<T> gate = sigmoid(linear(concat<T>({transpose(x), transpose(y)}, 1), weight, bias));
  return scale_cols(x, gate);
}

template <typename T>
Ffn<T>::Ffn(ParameterStore<T>& ps, const std::string& name, int dim, int hidden) {
  fc1 = Proj<T>(ps, name + "/fc1", dim, hidden);
  ProjOptions out;
  out.zero_init = true;
  fc2 = Proj<T>(ps, name + "/fc2", hidden, dim, out);
}

template <typename T>
Bcsf<T>::Bcsf(ParameterStore<T>& ps, const std::string& name, int dim, int tokens_) : tokens(tokens_) {
  spatial = Proj<T>(ps, name + "/spatial", 2 * dim, 1);
  channel1 = Proj<T>(ps, name + "/channel1", 2 * tokens, 1);
  channel2 = Proj<T>(ps, name + "/channel2", 2 * tokens, 1);
  ffn_sf = Ffn<T>(ps, name + "/ffn_sf", dim, 2 * dim);
  ffn_cf1 = Ffn<T>(ps, name + "/ffn_cf1", dim, 2 * dim);
  ffn_cf2 = Ffn<T>(ps, name + "/ffn_cf2", dim, 2 * dim);
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> Bcsf<T>::operator()(const Tensor<T>& f1, const Tensor<T>& f2, ForwardCtx& ctx) const {
  if (f1.shape() != f2.shape()) throw DimensionError("bcsf: " + shape_str(f1.shape()) + " vs " + shape_str(f2.shape()));
  auto ffn = [&](const Ffn<T>& f, const Tensor<T>& v) { return identity_ffn ? v : f(v, ctx); };
  Tensor<T> sf1 = spatial_filter(f1, f2, spatial.weight, spatial.bias);
  Tensor<T> sf2 = spatial_filter(f2, f1, spatial.weight, spatial.bias);
  Tensor<T> cf1 = channel_filter(f1, f2, channel1.weight, channel1.bias);
  Tensor<T> cf2 = channel_filter(f2, f1, channel2.weight, channel2.bias);
  Tensor<T> o1 = add(add(f1, ffn(ffn_sf, sf1)), ffn(ffn_cf1, cf1));
  Tensor<T> o2 = add(add(f2, ffn(ffn_sf, sf2)), ffn(ffn_cf2, cf2));
  return {o1, o2};
}

template <typename T>
Encoder<T>::Encoder(ParameterStore<T>& ps, const EncoderConfig& cfg) : cfg_(cfg) {
  const int c = cfg.embed_dim;
  const int p = cfg.patch_size;
  const int H = cfg.image_size;
  const int g0 = H / p;
  const int n = cfg.tokens();

  ProjOptions base;
  base.frozen = true;
  patch_embed_ = Proj<T>(ps, "encoder/patch_embed", 3 * p * p, c, base);
  merge1_ = Proj<T>(ps, "encoder/merge1", 4 * c, c, base);
  merge2_ = Proj<T>(ps, "encoder/merge2", 4 * c, c, base);
  pos_embed_ = ps.create("encoder/pos_embed", {n, c}, Init::kNormal, 0.02, true);
  if (cfg.pos_embed == "sincos") {
    // First half of the channels encodes the row, second half the column;
    // each half holds sin and cos over c/4 geometric frequencies.
    const int g = cfg.grid();
    const int f = c / 4;
    T* pe = pos_embed_.ptr();
    for (int y = 0; y < g; ++y) {
      for (int x = 0; x < g; ++x) {
        T* row = pe + static_cast<std::size_t>(y * g + x) * c;
        for (int k = 0; k < f; ++k) {
          const double omega = std::pow(10000.0, -static_cast<double>(k) / f);
          row[k] = static_cast<T>(std::sin(y * omega));
          row[f + k] = static_cast<T>(std::cos(y * omega));
          row[2 * f + k] = static_cast<T>(std::sin(x * omega));
          row[3 * f + k] = static_cast<T>(std::cos(x * omega));
        }
      }
    }
  }

  BlockOptions bo;
  bo.heads = cfg.heads;
  bo.mlp_hidden = cfg.mlp_ratio * c;
  bo.frozen_base = true;
  bo.lora_rank = cfg.lora_rank;
  bo.lora_alpha = cfg.lora_alpha;
  bo.lora_dropout = cfg.lora_dropout;
  bcsf_after_.assign(cfg.depth, -1);
  for (int l = 0; l < cfg.depth; ++l) {
    blocks_.emplace_back(ps, "encoder/blocks/" + std::to_string(l), c, bo);
  }
  for (std::size_t s = 0; s < cfg.global_layers.size(); ++s) {
    const int l = cfg.global_layers[s] - 1;
    bcsf_after_[l] = static_cast<int>(s);
    if (cfg.bcsf) bcsf_.emplace_back(ps, "encoder/bcsf/" + std::to_string(s), c, n);
  }
  cd_reduce_ = Proj<T>(ps, "encoder/cd_reduce", c, cfg.cd_channels);

  // Both phases are stacked along the token axis: images [6, H, W] -> rows.
  auto patch = std::make_shared<std::vector<int>>();
  patch->reserve(2 * g0 * g0 * 3 * p * p);
  for (int ph = 0; ph < 2; ++ph) {
    for (int py = 0; py < g0; ++py) {
      for (int px = 0; px < g0; ++px) {
        for (int ch = 0; ch < 3; ++ch) {
          for (int dy = 0; dy < p; ++dy) {
            for (int dx = 0; dx < p; ++dx) {
              patch->push_back(((ph * 3 + ch) * H + py * p + dy) * H + px * p + dx);
            }
          }
        }
      }
    }
  }
  patchify_idx_ = patch;
  auto merge = [c](int g) {
    auto idx = std::make_shared<std::vector<int>>();
    const int h = g / 2;
    for (int ph = 0; ph < 2; ++ph) {
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < h; ++x) {
          for (int a = 0; a < 2; ++a) {
            for (int b = 0; b < 2; ++b) {
              const int row = ph * g * g + (2 * y + a) * g + 2 * x + b;
              for (int ch = 0; ch < c; ++ch) idx->push_back(row * c + ch);
            }
          }
        }
      }
    }
    return idx;
  };
  merge1_idx_ = merge(g0);
  merge2_idx_ = merge(g0 / 2);

  const int g = cfg.grid();
  const int w = cfg.window_size;
  const int windows = (g / w) * (g / w);
  std::vector<int> local, global;
  for (int ph = 0; ph < 2; ++ph) {
    for (int y = 0; y < g; ++y) {
      for (int x = 0; x < g; ++x) {
        local.push_back(ph * windows + (y / w) * (g / w) + x / w);
        global.push_back(ph);
      }
    }
  }
  local_mask_ = AttentionMask::groups(local, local);
  global_mask_ = AttentionMask::groups(global, global);
}

template <typename T>
FeaturePair<T> Encoder<T>::encode(const Tensor<T>& i1, const Tensor<T>& i2, ForwardCtx& ctx) const {
  const int H = cfg_.image_size;
  const Shape want{3, H, H};
  if (i1.shape() != want || i2.shape() != want) {
    throw ConfigError("encoder expects images of shape " + shape_str(want) + ", got " + shape_str(i1.shape()) +
                      " and " + shape_str(i2.shape()));
  }
  const int c = cfg_.embed_dim;
  const int p = cfg_.patch_size;
  const int g0 = H / p;
  const int n = cfg_.tokens();

  Tensor<T> images = concat<T>({i1, i2}, 0);
  if (cfg_.standardize_input) {
    // Zero mean, unit variance per image and channel: removes the global
    // photometric offset and the shared background level.
    const Tensor<T> ones({H * H}, T(1)), zeros({H * H});
    images = reshape(layer_norm(reshape(images, {6, H * H}), ones, zeros), {6, H, H});
  }
  Tensor<T> x = gather(images, patchify_idx_, {2 * g0 * g0, 3 * p * p});
  x = patch_embed_(x, ctx);
  x = merge1_(gather(x, merge1_idx_, {2 * g0 * g0 / 4, 4 * c}), ctx);
  x = merge2_(gather(x, merge2_idx_, {2 * n, 4 * c}), ctx);
  x = add(x, concat<T>({pos_embed_, pos_embed_}, 0));

  for (int l = 0; l < cfg_.depth; ++l) {
    const int slot = bcsf_after_[l];
    x = blocks_[l](x, slot >= 0 ? global_mask_ : local_mask_, ctx);
    if (slot >= 0 && cfg_.bcsf && !ctx.plain) {
      auto [a, b] = bcsf_[slot](slice(x, 0, 0, n), slice(x, 0, n, 2 * n), ctx);
      x = concat<T>({a, b}, 0);
    }
  }
  FeaturePair<T> out;
  out.f1_cc = slice(x, 0, 0, n);
  out.f2_cc = slice(x, 0, n, 2 * n);
  Tensor<T> cd = cd_reduce_(x, ctx);
  out.f1_cd = slice(cd, 0, 0, n);
  out.f2_cd = slice(cd, 0, n, 2 * n);
  return out;
}

template Tensor<float> spatial_filter(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&,
                                      const Tensor<float>&);
template Tensor<double> spatial_filter(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&,
                                       const Tensor<double>&);
template Tensor<float> channel_filter(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&,
                                      const Tensor<float>&);
template Tensor<double> channel_filter(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&,
                                       const Tensor<double>&);
template class Ffn<float>;
template class Ffn<double>;
template class Bcsf<float>;
template class Bcsf<double>;
template class Encoder<float>;
template class Encoder<double>;

}  // namespace semcc
