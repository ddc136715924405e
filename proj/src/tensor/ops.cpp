// SPDX-License-Identifier: Apache-2.0
#include "tensor/ops.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <numbers>

#include "tensor/rng.hpp"

namespace semcc {

namespace {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Map = Eigen::Map<MatRM<T>>;
template <typename T>
using CMap = Eigen::Map<const MatRM<T>>;
template <typename T>
using StrideMap = Eigen::Map<MatRM<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using CStrideMap = Eigen::Map<const MatRM<T>, 0, Eigen::OuterStride<>>;

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                         " differ");
  }
}

template <typename T>
void require_rank(const Tensor<T>& x, int rank, const char* op) {
  if (x.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_str(x.shape()));
  }
}

template <typename T>
T sigmoid_scalar(T v) {
  // Clamped so the result stays strictly inside (0, 1) for every finite input.
  constexpr T lo = std::numeric_limits<T>::min();
  constexpr T hi = T(1) - std::numeric_limits<T>::epsilon() / T(2);
  T s = v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
  return std::clamp(s, lo, hi);
}

template <typename T>
Tensor<T> undefined() {
  return Tensor<T>();
}

}  // namespace

// ---------------------------------------------------------------------------
// elementwise

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  Tensor<T> out(a.shape());
  const T* pa = a.ptr();
  const T* pb = b.ptr();
  T* po = out.ptr();
  for (std::size_t i = 0; i < out.numel(); ++i) po[i] = pa[i] + pb[i];
  if (auto* tape = detail::recording({&a, &b})) {
    detail::mark_node(out, tape);
    tape->record([a, b, out]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      if (a.requires_grad()) {
        auto ga = a.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out.ptr()[i] = a[i] - b[i];
  if (auto* tape = detail::recording({&a, &b})) {
    detail::mark_node(out, tape);
    tape->record([a, b, out]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      if (a.requires_grad()) {
        auto ga = a.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out.ptr()[i] = a[i] * b[i];
  if (auto* tape = detail::recording({&a, &b})) {
    detail::mark_node(out, tape);
    tape->record([a, b, out]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      if (a.requires_grad()) {
        auto ga = a.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T s) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out.ptr()[i] = x[i] * s;
  if (auto* tape = detail::recording({&x})) {
    detail::mark_node(out, tape);
    tape->record([x, out, s]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * s;
    });
  }
  return out;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out.ptr()[i] = sigmoid_scalar(x[i]);
  if (auto* tape = detail::recording({&x})) {
    detail::mark_node(out, tape);
    tape->record([x, out]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) {
        T s = out[i];
        gx[i] += g[i] * s * (T(1) - s);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  constexpr T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    T v = x[i];
    out.ptr()[i] = T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2));
  }
  if (auto* tape = detail::recording({&x})) {
    detail::mark_node(out, tape);
    tape->record([x, out]() mutable {
      if (!out.has_grad()) return;
      constexpr T inv_sqrt2pi = T(1) / (std::numbers::sqrt2_v<T> * T(1.7724538509055160273));
      auto g = out.grad();
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) {
        T v = x[i];
        T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
        T pdf = inv_sqrt2pi * std::exp(T(-0.5) * v * v);
        gx[i] += g[i] * (cdf + v * pdf);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, DropoutKey key) {
  if (p <= 0.0) return x;
  if (p >= 1.0) throw ConfigError("dropout probability must be < 1");
  CounterRng rng(key.seed ^ mix64(key.stream));
  const T keep_scale = T(1.0 / (1.0 - p));
  std::vector<T> mask(x.numel());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = rng.uniform_at(i) >= p ? keep_scale : T(0);
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out.ptr()[i] = x[i] * mask[i];
  if (auto* tape = detail::recording({&x})) {
    detail::mark_node(out, tape);
    tape->record([x, out, mask = std::move(mask)]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// normalisation / reductions

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, double eps) {
  const int d = x.dim(-1);
  if (static_cast<int>(gamma.numel()) != d || static_cast<int>(beta.numel()) != d) {
    throw DimensionError("layer_norm: x " + shape_str(x.shape()) + " vs gamma " + shape_str(gamma.shape()));
  }
  const std::size_t rows = x.numel() / d;
  Tensor<T> out(x.shape());
  std::vector<T> xhat(x.numel());
  std::vector<T> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.ptr() + r * d;
    T mu = 0;
    for (int j = 0; j < d; ++j) mu += xr[j];
    mu /= T(d);
    T var = 0;
    for (int j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= T(d);
    T inv = T(1) / std::sqrt(var + T(eps));
    inv_std[r] = inv;
    for (int j = 0; j < d; ++j) {
      T h = (xr[j] - mu) * inv;
      xhat[r * d + j] = h;
      out.ptr()[r * d + j] = h * gamma[j] + beta[j];
    }
  }
  if (auto* tape = detail::recording({&x, &gamma, &beta})) {
    detail::mark_node(out, tape);
    tape->record([x, gamma, beta, out, xhat = std::move(xhat), inv_std = std::move(inv_std), d, rows]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      if (gamma.requires_grad() || beta.requires_grad()) {
        std::vector<T> dg(d, T(0)), db(d, T(0));
        for (std::size_t r = 0; r < rows; ++r) {
          for (int j = 0; j < d; ++j) {
            dg[j] += g[r * d + j] * xhat[r * d + j];
            db[j] += g[r * d + j];
          }
        }
        if (gamma.requires_grad()) {
          auto gg = gamma.grad_buffer();
          for (int j = 0; j < d; ++j) gg[j] += dg[j];
        }
        if (beta.requires_grad()) {
          auto gb = beta.grad_buffer();
          for (int j = 0; j < d; ++j) gb[j] += db[j];
        }
      }
      if (x.requires_grad()) {
        auto gx = x.grad_buffer();
        for (std::size_t r = 0; r < rows; ++r) {
          T mean_dh = 0, mean_dh_h = 0;
          for (int j = 0; j < d; ++j) {
            T dh = g[r * d + j] * gamma[j];
            mean_dh += dh;
            mean_dh_h += dh * xhat[r * d + j];
          }
          mean_dh /= T(d);
          mean_dh_h /= T(d);
          for (int j = 0; j < d; ++j) {
            T dh = g[r * d + j] * gamma[j];
            gx[r * d + j] += inv_std[r] * (dh - mean_dh - xhat[r * d + j] * mean_dh_h);
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x) {
  const int d = x.dim(-1);
  const std::size_t rows = x.numel() / d;
  Tensor<T> out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.ptr() + r * d;
    T* orow = out.ptr() + r * d;
    T mx = *std::max_element(xr, xr + d);
    T s = 0;
    for (int j = 0; j < d; ++j) {
      orow[j] = std::exp(xr[j] - mx);
      s += orow[j];
    }
    for (int j = 0; j < d; ++j) orow[j] /= s;
  }
  if (auto* tape = detail::recording({&x})) {
    detail::mark_node(out, tape);
    tape->record([x, out, d, rows]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto gx = x.grad_buffer();
      for (std::size_t r = 0; r < rows; ++r) {
        T dot = 0;
        for (int j = 0; j < d; ++j) dot += g[r * d + j] * out[r * d + j];
        for (int j = 0; j < d; ++j) gx[r * d + j] += out[r * d + j] * (g[r * d + j] - dot);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> log_softmax(const Tensor<T>& x) {
  const int d = x.dim(-1);
  const std::size_t rows = x.numel() / d;
  Tensor<T> out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.ptr() + r * d;
    T mx = *std::max_element(xr, xr + d);
    T s = 0;
    for (int j = 0; j < d; ++j) s += std::exp(xr[j] - mx);
    T lse = mx + std::log(s);
    for (int j = 0; j < d; ++j) out.ptr()[r * d + j] = xr[j] - lse;
  }
  if (auto* tape = detail::recording({&x})) {
    detail::mark_node(out, tape);
    tape->record([x, out, d, rows]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto gx = x.grad_buffer();
      for (std::size_t r = 0; r < rows; ++r) {
        T gs = 0;
        for (int j = 0; j < d; ++j) gs += g[r * d + j];
        for (int j = 0; j < d; ++j) gx[r * d + j] += g[r * d + j] - std::exp(out[r * d + j]) * gs;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  double acc = 0;
  for (std::size_t i = 0; i < x.numel(); ++i) acc += static_cast<double>(x[i]);
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc));
  if (auto* tape = detail::recording({&x})) {
    detail::mark_node(out, tape);
    tape->record([x, out]() mutable {
      if (!out.has_grad()) return;
      T g = out.grad()[0];
      for (auto& v : x.grad_buffer()) v += g;
    });
  }
  return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> weighted_sum(const Tensor<T>& x, const std::vector<double>& w) {
  if (w.size() != x.numel()) {
    throw DimensionError("weighted_sum: " + std::to_string(w.size()) + " weights for " + shape_str(x.shape()));
  }
  double acc = 0;
  for (std::size_t i = 0; i < x.numel(); ++i) acc += static_cast<double>(x[i]) * w[i];
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc));
  if (auto* tape = detail::recording({&x})) {
    detail::mark_node(out, tape);
    tape->record([x, out, w]() mutable {
      if (!out.has_grad()) return;
      T g = out.grad()[0];
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g * static_cast<T>(w[i]);
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// structural

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  Tensor<T> out(std::move(shape), std::vector<T>(x.data().begin(), x.data().end()));
  if (auto* tape = detail::recording({&x})) {
    detail::mark_node(out, tape);
    tape->record([x, out]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
  require_rank(x, 2, "transpose");
  const int a = x.dim(0), b = x.dim(1);
  Tensor<T> out(Shape{b, a});
  Map<T>(out.ptr(), b, a) = CMap<T>(x.ptr(), a, b).transpose();
  if (auto* tape = detail::recording({&x})) {
    detail::mark_node(out, tape);
    tape->record([x, out, a, b]() mutable {
      if (!out.has_grad()) return;
      Map<T>(x.grad_buffer().data(), a, b) += CMap<T>(out.grad().data(), b, a).transpose();
    });
  }
  return out;
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& xs, int axis) {
  if (xs.empty()) throw ContractError("concat of zero tensors");
  const int rank = xs[0].rank();
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) throw DimensionError("concat axis out of range for " + shape_str(xs[0].shape()));
  Shape shape = xs[0].shape();
  int total = 0;
  for (const auto& x : xs) {
    if (x.rank() != rank) throw DimensionError("concat rank mismatch: " + shape_str(x.shape()) + " vs " + shape_str(shape));
    for (int i = 0; i < rank; ++i) {
      if (i != axis && x.dim(i) != shape[i]) {
        throw DimensionError("concat extent mismatch: " + shape_str(x.shape()) + " vs " + shape_str(shape));
      }
    }
    total += x.dim(axis);
  }
  shape[axis] = total;
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= shape[i];
  for (int i = axis + 1; i < rank; ++i) inner *= shape[i];
  Tensor<T> out(shape);
  const std::size_t out_row = total * inner;
  std::size_t offset = 0;
  for (const auto& x : xs) {
    const std::size_t blk = x.dim(axis) * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(x.ptr() + o * blk, blk, out.ptr() + o * out_row + offset);
    }
    offset += blk;
  }
  std::vector<const Tensor<T>*> ptrs;
  bool any = false;
  for (const auto& x : xs) any = any || x.requires_grad();
  Tape<T>* tape = any ? current_tape<T>() : nullptr;
  if (tape != nullptr) {
    detail::mark_node(out, tape);
    tape->record([xs, out, outer, inner, out_row, axis]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      std::size_t off = 0;
      for (auto& x : xs) {
        const std::size_t blk = x.dim(axis) * inner;
        if (x.requires_grad()) {
          auto gx = x.grad_buffer();
          for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t i = 0; i < blk; ++i) gx[o * blk + i] += g[o * out_row + off + i];
          }
        }
        off += blk;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, int axis, int begin, int end) {
  const int rank = x.rank();
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank || begin < 0 || end > x.dim(axis) || begin >= end) {
    throw DimensionError("slice [" + std::to_string(begin) + "," + std::to_string(end) + ") on axis " +
                         std::to_string(axis) + " of " + shape_str(x.shape()));
  }
  Shape shape = x.shape();
  shape[axis] = end - begin;
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= shape[i];
  for (int i = axis + 1; i < rank; ++i) inner *= shape[i];
  const std::size_t in_row = x.dim(axis) * inner;
  const std::size_t out_row = (end - begin) * inner;
  const std::size_t start = begin * inner;
  Tensor<T> out(shape);
  for (std::size_t o = 0; o < outer; ++o) std::copy_n(x.ptr() + o * in_row + start, out_row, out.ptr() + o * out_row);
  if (auto* tape = detail::recording({&x})) {
    detail::mark_node(out, tape);
    tape->record([x, out, outer, in_row, out_row, start]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto gx = x.grad_buffer();
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < out_row; ++i) gx[o * in_row + start + i] += g[o * out_row + i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, const std::vector<int>& rows) {
  if (rows.empty()) throw DimensionError("gather_rows with no indices");
  const int n = x.dim(0);
  const std::size_t width = x.numel() / n;
  Shape shape = x.shape();
  shape[0] = static_cast<int>(rows.size());
  Tensor<T> out(shape);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] < 0 || rows[r] >= n) throw DimensionError("gather_rows index " + std::to_string(rows[r]) + " out of range");
    std::copy_n(x.ptr() + rows[r] * width, width, out.ptr() + r * width);
  }
  if (auto* tape = detail::recording({&x})) {
    detail::mark_node(out, tape);
    tape->record([x, out, rows, width]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto gx = x.grad_buffer();
      for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t i = 0; i < width; ++i) gx[rows[r] * width + i] += g[r * width + i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> gather(const Tensor<T>& x, std::shared_ptr<const std::vector<int>> index, Shape shape) {
  if (shape_numel(shape) != index->size()) {
    throw DimensionError("gather: " + std::to_string(index->size()) + " indices for shape " + shape_str(shape));
  }
  const int n = static_cast<int>(x.numel());
  Tensor<T> out(std::move(shape));
  const auto& idx = *index;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= n) throw DimensionError("gather index out of range for " + shape_str(x.shape()));
    out.ptr()[i] = x[idx[i]];
  }
  if (auto* tape = detail::recording({&x})) {
    detail::mark_node(out, tape);
    tape->record([x, out, index]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto gx = x.grad_buffer();
      const auto& id = *index;
      for (std::size_t i = 0; i < id.size(); ++i) gx[id[i]] += g[i];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// neural

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  require_rank(weight, 2, "linear weight");
  const int in = weight.dim(1), outf = weight.dim(0);
  if (x.dim(-1) != in) {
    throw DimensionError("linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                         shape_str(weight.shape()));
  }
  if (bias.defined() && static_cast<int>(bias.numel()) != outf) {
    throw DimensionError("linear: bias " + shape_str(bias.shape()) + " vs weight " + shape_str(weight.shape()));
  }
  const int rows = static_cast<int>(x.numel() / in);
  Shape shape = x.shape();
  shape.back() = outf;
  Tensor<T> out(shape);
  Map<T> Y(out.ptr(), rows, outf);
  Y.noalias() = CMap<T>(x.ptr(), rows, in) * CMap<T>(weight.ptr(), outf, in).transpose();
  if (bias.defined()) Y.rowwise() += CMap<T>(bias.ptr(), 1, outf).row(0);
  if (auto* tape = detail::recording({&x, &weight, &bias})) {
    detail::mark_node(out, tape);
    tape->record([x, weight, bias, out, rows, in, outf]() mutable {
      if (!out.has_grad()) return;
      CMap<T> G(out.grad().data(), rows, outf);
      if (x.requires_grad()) {
        Map<T>(x.grad_buffer().data(), rows, in).noalias() += G * CMap<T>(weight.ptr(), outf, in);
      }
      if (weight.requires_grad()) {
        Map<T>(weight.grad_buffer().data(), outf, in).noalias() += G.transpose() * CMap<T>(x.ptr(), rows, in);
      }
      if (bias.defined() && bias.requires_grad()) {
        Map<T>(bias.grad_buffer().data(), 1, outf) += G.colwise().sum();
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias, int stride, int pad,
                 Padding padding) {
  require_rank(x, 3, "conv2d input");
  require_rank(kernel, 4, "conv2d kernel");
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const int O = kernel.dim(0), k = kernel.dim(2);
  if (kernel.dim(1) != C || kernel.dim(3) != k) {
    throw DimensionError("conv2d: kernel " + shape_str(kernel.shape()) + " vs input " + shape_str(x.shape()));
  }
  if (stride < 1 || pad < 0) throw DimensionError("conv2d: invalid stride/pad");
  if (k > H + 2 * pad || k > W + 2 * pad) {
    throw DimensionError("conv2d: kernel " + shape_str(kernel.shape()) + " larger than padded input " +
                         shape_str(x.shape()));
  }
  if (bias.defined() && static_cast<int>(bias.numel()) != O) throw DimensionError("conv2d: bias size");
  const int Ho = (H + 2 * pad - k) / stride + 1;
  const int Wo = (W + 2 * pad - k) / stride + 1;
  const int K = C * k * k;
  const int P = Ho * Wo;
  const bool replicate = padding == Padding::kReplicate;
  // im2col: cols[(c,ky,kx), (oy,ox)]
  AlignedVector<T> cols(static_cast<std::size_t>(K) * P, T(0));
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* crow = cols.data() + static_cast<std::size_t>((c * k + ky) * k + kx) * P;
        for (int oy = 0; oy < Ho; ++oy) {
          int iy = oy * stride + ky - pad;
          if (replicate) iy = std::clamp(iy, 0, H - 1);
          if (iy < 0 || iy >= H) continue;
          for (int ox = 0; ox < Wo; ++ox) {
            int ix = ox * stride + kx - pad;
            if (replicate) ix = std::clamp(ix, 0, W - 1);
            if (ix < 0 || ix >= W) continue;
            crow[oy * Wo + ox] = x[(static_cast<std::size_t>(c) * H + iy) * W + ix];
          }
        }
      }
    }
  }
  Tensor<T> out(Shape{O, Ho, Wo});
  Map<T> Y(out.ptr(), O, P);
  Y.noalias() = CMap<T>(kernel.ptr(), O, K) * CMap<T>(cols.data(), K, P);
  if (bias.defined()) Y.colwise() += CMap<T>(bias.ptr(), O, 1).col(0);
  if (auto* tape = detail::recording({&x, &kernel, &bias})) {
    detail::mark_node(out, tape);
    tape->record([x, kernel, bias, out, cols = std::move(cols), C, H, W, O, k, stride, pad, Ho, Wo, K, P, replicate]() mutable {
      if (!out.has_grad()) return;
      CMap<T> G(out.grad().data(), O, P);
      if (kernel.requires_grad()) {
        Map<T>(kernel.grad_buffer().data(), O, K).noalias() += G * CMap<T>(cols.data(), K, P).transpose();
      }
      if (bias.defined() && bias.requires_grad()) {
        Map<T>(bias.grad_buffer().data(), O, 1) += G.rowwise().sum();
      }
      if (x.requires_grad()) {
        MatRM<T> dcols = CMap<T>(kernel.ptr(), O, K).transpose() * G;
        auto gx = x.grad_buffer();
        for (int c = 0; c < C; ++c) {
          for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
              const T* crow = dcols.data() + static_cast<std::size_t>((c * k + ky) * k + kx) * P;
              for (int oy = 0; oy < Ho; ++oy) {
                int iy = oy * stride + ky - pad;
                if (replicate) iy = std::clamp(iy, 0, H - 1);
                if (iy < 0 || iy >= H) continue;
                for (int ox = 0; ox < Wo; ++ox) {
                  int ix = ox * stride + kx - pad;
                  if (replicate) ix = std::clamp(ix, 0, W - 1);
                  if (ix < 0 || ix >= W) continue;
                  gx[(static_cast<std::size_t>(c) * H + iy) * W + ix] += crow[oy * Wo + ox];
                }
              }
            }
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> conv_transpose2x2(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias) {
  require_rank(x, 3, "conv_transpose2x2 input");
  require_rank(kernel, 4, "conv_transpose2x2 kernel");
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const int O = kernel.dim(1);
  if (kernel.dim(0) != C || kernel.dim(2) != 2 || kernel.dim(3) != 2) {
    throw DimensionError("conv_transpose2x2: kernel " + shape_str(kernel.shape()) + " vs input " +
                         shape_str(x.shape()));
  }
  if (bias.defined() && static_cast<int>(bias.numel()) != O) throw DimensionError("conv_transpose2x2: bias size");
  const int P = H * W;
  // Z[p, (o,a,b)] = sum_c x[c,p] * K[c,(o,a,b)]
  MatRM<T> Z = CMap<T>(x.ptr(), C, P).transpose() * CMap<T>(kernel.ptr(), C, O * 4);
  Tensor<T> out(Shape{O, 2 * H, 2 * W});
  T* po = out.ptr();
  for (int i = 0; i < H; ++i) {
    for (int j = 0; j < W; ++j) {
      const T* z = Z.data() + static_cast<std::size_t>(i * W + j) * O * 4;
      for (int o = 0; o < O; ++o) {
        const T b0 = bias.defined() ? bias[o] : T(0);
        for (int a = 0; a < 2; ++a) {
          for (int b = 0; b < 2; ++b) {
            po[(static_cast<std::size_t>(o) * 2 * H + 2 * i + a) * 2 * W + 2 * j + b] = z[o * 4 + a * 2 + b] + b0;
          }
        }
      }
    }
  }
  if (auto* tape = detail::recording({&x, &kernel, &bias})) {
    detail::mark_node(out, tape);
    tape->record([x, kernel, bias, out, C, H, W, O, P]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      MatRM<T> dZ(P, O * 4);
      for (int i = 0; i < H; ++i) {
        for (int j = 0; j < W; ++j) {
          T* z = dZ.data() + static_cast<std::size_t>(i * W + j) * O * 4;
          for (int o = 0; o < O; ++o) {
            for (int a = 0; a < 2; ++a) {
              for (int b = 0; b < 2; ++b) {
                z[o * 4 + a * 2 + b] = g[(static_cast<std::size_t>(o) * 2 * H + 2 * i + a) * 2 * W + 2 * j + b];
              }
            }
          }
        }
      }
      if (kernel.requires_grad()) {
        Map<T>(kernel.grad_buffer().data(), C, O * 4).noalias() += CMap<T>(x.ptr(), C, P) * dZ;
      }
      if (x.requires_grad()) {
        Map<T>(x.grad_buffer().data(), C, P).noalias() += CMap<T>(kernel.ptr(), C, O * 4) * dZ.transpose();
      }
      if (bias.defined() && bias.requires_grad()) {
        auto gb = bias.grad_buffer();
        for (int o = 0; o < O; ++o) {
          T s = 0;
          for (int p = 0; p < P; ++p) s += dZ(p, o * 4) + dZ(p, o * 4 + 1) + dZ(p, o * 4 + 2) + dZ(p, o * 4 + 3);
          gb[o] += s;
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, int heads,
                               const AttentionMask& mask) {
  require_rank(q, 2, "attention q");
  require_rank(k, 2, "attention k");
  require_rank(v, 2, "attention v");
  const int n = q.dim(0), m = k.dim(0);
  const int D = q.dim(1), Dv = v.dim(1);
  if (m == 0 || v.dim(0) == 0) throw DimensionError("attention: empty context");
  if (k.dim(1) != D || v.dim(0) != m) {
    throw DimensionError("attention: q " + shape_str(q.shape()) + ", k " + shape_str(k.shape()) + ", v " +
                         shape_str(v.shape()));
  }
  if (heads < 1 || D % heads != 0 || Dv % heads != 0) {
    throw DimensionError("attention: widths " + std::to_string(D) + "/" + std::to_string(Dv) +
                         " not divisible by " + std::to_string(heads) + " heads");
  }
  if (mask.kind == AttentionMask::Kind::kGroups &&
      (static_cast<int>(mask.q_groups.size()) != n || static_cast<int>(mask.k_groups.size()) != m)) {
    throw DimensionError("attention: group mask sizes do not match q/k rows");
  }
  const int dq = D / heads, dv = Dv / heads;
  const T sc = T(1) / std::sqrt(static_cast<T>(dq));
  // Additive mask shared by all heads.
  MatRM<T> bias_mask;
  const bool masked = mask.kind != AttentionMask::Kind::kNone;
  if (masked) {
    bias_mask.setZero(n, m);
    for (int i = 0; i < n; ++i) {
      bool any = false;
      for (int j = 0; j < m; ++j) {
        if (mask.allowed(i, j, n, m)) {
          any = true;
        } else {
          bias_mask(i, j) = -std::numeric_limits<T>::infinity();
        }
      }
      if (!any) throw ContractError("attention: query row " + std::to_string(i) + " has no visible key");
    }
  }
  std::vector<MatRM<T>> probs(heads);
  Tensor<T> out(Shape{n, Dv});
  for (int h = 0; h < heads; ++h) {
    CStrideMap<T> Qh(q.ptr() + h * dq, n, dq, Eigen::OuterStride<>(D));
    CStrideMap<T> Kh(k.ptr() + h * dq, m, dq, Eigen::OuterStride<>(D));
    CStrideMap<T> Vh(v.ptr() + h * dv, m, dv, Eigen::OuterStride<>(Dv));
    MatRM<T>& Pm = probs[h];
    Pm.noalias() = (Qh * Kh.transpose()) * sc;
    if (masked) Pm += bias_mask;
    for (int i = 0; i < n; ++i) {
      auto row = Pm.row(i);
      const T mx = row.maxCoeff();
      row = (row.array() - mx).exp();
      row /= row.sum();
    }
    StrideMap<T>(out.ptr() + h * dv, n, dv, Eigen::OuterStride<>(Dv)).noalias() = Pm * Vh;
  }
  if (auto* tape = detail::recording({&q, &k, &v})) {
    detail::mark_node(out, tape);
    tape->record([q, k, v, out, probs = std::move(probs), heads, n, m, D, Dv, dq, dv, sc]() mutable {
      if (!out.has_grad()) return;
      const T* g = out.grad().data();
      T* gq = q.requires_grad() ? q.grad_buffer().data() : nullptr;
      T* gk = k.requires_grad() ? k.grad_buffer().data() : nullptr;
      T* gv = v.requires_grad() ? v.grad_buffer().data() : nullptr;
      for (int h = 0; h < heads; ++h) {
        CStrideMap<T> Qh(q.ptr() + h * dq, n, dq, Eigen::OuterStride<>(D));
        CStrideMap<T> Kh(k.ptr() + h * dq, m, dq, Eigen::OuterStride<>(D));
        CStrideMap<T> Vh(v.ptr() + h * dv, m, dv, Eigen::OuterStride<>(Dv));
        CStrideMap<T> Gh(g + h * dv, n, dv, Eigen::OuterStride<>(Dv));
        const MatRM<T>& Pm = probs[h];
        if (gv != nullptr) StrideMap<T>(gv + h * dv, m, dv, Eigen::OuterStride<>(Dv)).noalias() += Pm.transpose() * Gh;
        if (gq == nullptr && gk == nullptr) continue;
        MatRM<T> dP = Gh * Vh.transpose();
        // dS = P * (dP - rowsum(dP * P))
        Eigen::Matrix<T, Eigen::Dynamic, 1> rs = (dP.array() * Pm.array()).rowwise().sum();
        MatRM<T> dS = Pm.array() * (dP.array().colwise() - rs.array());
        dS *= sc;
        if (gq != nullptr) StrideMap<T>(gq + h * dq, n, dq, Eigen::OuterStride<>(D)).noalias() += dS * Kh;
        if (gk != nullptr) StrideMap<T>(gk + h * dq, m, dq, Eigen::OuterStride<>(D)).noalias() += dS.transpose() * Qh;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, const AttentionMask& mask) {
  return multi_head_attention(q, k, v, 1, mask);
}

template <typename T>
Tensor<T> scale_rows(const Tensor<T>& x, const Tensor<T>& gate) {
  require_rank(x, 2, "scale_rows");
  const int n = x.dim(0), d = x.dim(1);
  if (static_cast<int>(gate.numel()) != n) {
    throw DimensionError("scale_rows: gate " + shape_str(gate.shape()) + " vs x " + shape_str(x.shape()));
  }
  Tensor<T> out(x.shape());
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) out.ptr()[i * d + j] = x[i * d + j] * gate[i];
  }
  if (auto* tape = detail::recording({&x, &gate})) {
    detail::mark_node(out, tape);
    tape->record([x, gate, out, n, d]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      if (x.requires_grad()) {
        auto gx = x.grad_buffer();
        for (int i = 0; i < n; ++i) {
          for (int j = 0; j < d; ++j) gx[i * d + j] += g[i * d + j] * gate[i];
        }
      }
      if (gate.requires_grad()) {
        auto gg = gate.grad_buffer();
        for (int i = 0; i < n; ++i) {
          T s = 0;
          for (int j = 0; j < d; ++j) s += g[i * d + j] * x[i * d + j];
          gg[i] += s;
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> scale_cols(const Tensor<T>& x, const Tensor<T>& gate) {
  require_rank(x, 2, "scale_cols");
  const int n = x.dim(0), d = x.dim(1);
  if (static_cast<int>(gate.numel()) != d) {
    throw DimensionError("scale_cols: gate " + shape_str(gate.shape()) + " vs x " + shape_str(x.shape()));
  }
  Tensor<T> out(x.shape());
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) out.ptr()[i * d + j] = x[i * d + j] * gate[j];
  }
  if (auto* tape = detail::recording({&x, &gate})) {
    detail::mark_node(out, tape);
    tape->record([x, gate, out, n, d]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      if (x.requires_grad()) {
        auto gx = x.grad_buffer();
        for (int i = 0; i < n; ++i) {
          for (int j = 0; j < d; ++j) gx[i * d + j] += g[i * d + j] * gate[j];
        }
      }
      if (gate.requires_grad()) {
        auto gg = gate.grad_buffer();
        for (int i = 0; i < n; ++i) {
          for (int j = 0; j < d; ++j) gg[j] += g[i * d + j] * x[i * d + j];
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> rowwise_dot(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a, 2, "rowwise_dot");
  require_same_shape(a, b, "rowwise_dot");
  const int n = a.dim(0), d = a.dim(1);
  Tensor<T> out(Shape{n, 1});
  for (int i = 0; i < n; ++i) {
    T s = 0;
    for (int j = 0; j < d; ++j) s += a[i * d + j] * b[i * d + j];
    out.ptr()[i] = s;
  }
  if (auto* tape = detail::recording({&a, &b})) {
    detail::mark_node(out, tape);
    tape->record([a, b, out, n, d]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      if (a.requires_grad()) {
        auto ga = a.grad_buffer();
        for (int i = 0; i < n; ++i) {
          for (int j = 0; j < d; ++j) ga[i * d + j] += g[i] * b[i * d + j];
        }
      }
      if (b.requires_grad()) {
        auto gb = b.grad_buffer();
        for (int i = 0; i < n; ++i) {
          for (int j = 0; j < d; ++j) gb[i * d + j] += g[i] * a[i * d + j];
        }
      }
    });
  }
  return out;
}

namespace {

struct ResizeAxis {
  std::vector<int> i0, i1;
  std::vector<double> w1;  // weight of i1; i0 gets 1 - w1
};

ResizeAxis resize_axis(int in, int out) {
  ResizeAxis ax;
  ax.i0.resize(out);
  ax.i1.resize(out);
  ax.w1.resize(out);
  const double s = static_cast<double>(in) / out;
  for (int p = 0; p < out; ++p) {
    double src = (p + 0.5) * s - 0.5;
    if (src < 0) src = 0;
    int lo = static_cast<int>(std::floor(src));
    if (lo > in - 1) lo = in - 1;
    ax.i0[p] = lo;
    ax.i1[p] = std::min(lo + 1, in - 1);
    ax.w1[p] = ax.i1[p] == lo ? 0.0 : src - lo;
  }
  return ax;
}

}  // namespace

template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& x, int out_h, int out_w) {
  require_rank(x, 3, "resize_bilinear");
  if (out_h <= 0 || out_w <= 0) {
    throw DimensionError("resize_bilinear: target extent " + std::to_string(out_h) + "x" + std::to_string(out_w));
  }
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  if (H == out_h && W == out_w) return x;
  const ResizeAxis ay = resize_axis(H, out_h), ax = resize_axis(W, out_w);
  Tensor<T> out(Shape{C, out_h, out_w});
  for (int c = 0; c < C; ++c) {
    const T* xc = x.ptr() + static_cast<std::size_t>(c) * H * W;
    T* oc = out.ptr() + static_cast<std::size_t>(c) * out_h * out_w;
    for (int y = 0; y < out_h; ++y) {
      const T wy = static_cast<T>(ay.w1[y]);
      const T* r0 = xc + ay.i0[y] * W;
      const T* r1 = xc + ay.i1[y] * W;
      for (int xx = 0; xx < out_w; ++xx) {
        const T wx = static_cast<T>(ax.w1[xx]);
        const T top = r0[ax.i0[xx]] * (T(1) - wx) + r0[ax.i1[xx]] * wx;
        const T bot = r1[ax.i0[xx]] * (T(1) - wx) + r1[ax.i1[xx]] * wx;
        oc[y * out_w + xx] = top * (T(1) - wy) + bot * wy;
      }
    }
  }
  if (auto* tape = detail::recording({&x})) {
    detail::mark_node(out, tape);
    tape->record([x, out, ay, ax, C, H, W, out_h, out_w]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto gx = x.grad_buffer();
      for (int c = 0; c < C; ++c) {
        T* gc = gx.data() + static_cast<std::size_t>(c) * H * W;
        const T* goc = g.data() + static_cast<std::size_t>(c) * out_h * out_w;
        for (int y = 0; y < out_h; ++y) {
          const T wy = static_cast<T>(ay.w1[y]);
          for (int xx = 0; xx < out_w; ++xx) {
            const T wx = static_cast<T>(ax.w1[xx]);
            const T gv = goc[y * out_w + xx];
            gc[ay.i0[y] * W + ax.i0[xx]] += gv * (T(1) - wy) * (T(1) - wx);
            gc[ay.i0[y] * W + ax.i1[xx]] += gv * (T(1) - wy) * wx;
            gc[ay.i1[y] * W + ax.i0[xx]] += gv * wy * (T(1) - wx);
            gc[ay.i1[y] * W + ax.i1[xx]] += gv * wy * wx;
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> embedding(const Tensor<T>& table, const std::vector<int>& ids) {
  require_rank(table, 2, "embedding");
  return gather_rows(table, ids);
}

// ---------------------------------------------------------------------------
// losses

template <typename T>
Tensor<T> bce_with_logits(const Tensor<T>& logits, const Tensor<T>& target) {
  if (logits.numel() != target.numel()) {
    throw DimensionError("bce: logits " + shape_str(logits.shape()) + " vs target " + shape_str(target.shape()));
  }
  for (std::size_t i = 0; i < target.numel(); ++i) {
    if (target[i] != T(0) && target[i] != T(1)) throw DataError("validation error: BCE target outside {0,1}");
  }
  const std::size_t n = logits.numel();
  double acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = logits[i], y = target[i];
    acc += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
  }
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc / static_cast<double>(n)));
  if (auto* tape = detail::recording({&logits})) {
    detail::mark_node(out, tape);
    tape->record([logits, target, out, n]() mutable {
      if (!out.has_grad()) return;
      const T g = out.grad()[0] / static_cast<T>(n);
      auto gl = logits.grad_buffer();
      for (std::size_t i = 0; i < n; ++i) gl[i] += g * (sigmoid_scalar(logits[i]) - target[i]);
    });
  }
  return out;
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<int>& targets, int ignore_index) {
  require_rank(logits, 2, "cross_entropy");
  const int L = logits.dim(0), V = logits.dim(1);
  if (static_cast<int>(targets.size()) != L) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                         shape_str(logits.shape()));
  }
  std::vector<T> probs(static_cast<std::size_t>(L) * V);
  double acc = 0;
  int count = 0;
  for (int r = 0; r < L; ++r) {
    if (targets[r] == ignore_index) continue;
    if (targets[r] < 0 || targets[r] >= V) throw DimensionError("cross_entropy: target id out of range");
    const T* lr = logits.ptr() + static_cast<std::size_t>(r) * V;
    const T mx = *std::max_element(lr, lr + V);
    double s = 0;
    for (int j = 0; j < V; ++j) {
      const T e = std::exp(lr[j] - mx);
      probs[static_cast<std::size_t>(r) * V + j] = e;
      s += e;
    }
    for (int j = 0; j < V; ++j) probs[static_cast<std::size_t>(r) * V + j] /= static_cast<T>(s);
    acc -= static_cast<double>(lr[targets[r]] - mx) - std::log(s);
    ++count;
  }
  if (count == 0) throw ContractError("cross_entropy: every target position is ignored");
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc / count));
  if (auto* tape = detail::recording({&logits})) {
    detail::mark_node(out, tape);
    tape->record([logits, targets, out, probs = std::move(probs), L, V, count, ignore_index]() mutable {
      if (!out.has_grad()) return;
      const T g = out.grad()[0] / static_cast<T>(count);
      auto gl = logits.grad_buffer();
      for (int r = 0; r < L; ++r) {
        if (targets[r] == ignore_index) continue;
        for (int j = 0; j < V; ++j) gl[static_cast<std::size_t>(r) * V + j] += g * probs[static_cast<std::size_t>(r) * V + j];
        gl[static_cast<std::size_t>(r) * V + targets[r]] -= g;
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------

#define SEMCC_INSTANTIATE_OPS(T)                                                                        \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                           \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                           \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                           \
  template Tensor<T> scale(const Tensor<T>&, T);                                                        \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                         \
  template Tensor<T> gelu(const Tensor<T>&);                                                            \
  template Tensor<T> dropout(const Tensor<T>&, double, DropoutKey);                                     \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double);          \
  template Tensor<T> softmax(const Tensor<T>&);                                                         \
  template Tensor<T> log_softmax(const Tensor<T>&);                                                     \
  template Tensor<T> sum(const Tensor<T>&);                                                             \
  template Tensor<T> mean(const Tensor<T>&);                                                            \
  template Tensor<T> weighted_sum(const Tensor<T>&, const std::vector<double>&);                        \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                                  \
  template Tensor<T> transpose(const Tensor<T>&);                                                       \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, int);                                        \
  template Tensor<T> slice(const Tensor<T>&, int, int, int);                                            \
  template Tensor<T> gather_rows(const Tensor<T>&, const std::vector<int>&);                            \
  template Tensor<T> gather(const Tensor<T>&, std::shared_ptr<const std::vector<int>>, Shape);          \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int, Padding);   \
  template Tensor<T> conv_transpose2x2(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);           \
  template Tensor<T> attention(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const AttentionMask&); \
  template Tensor<T> multi_head_attention(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int,    \
                                          const AttentionMask&);                                        \
  template Tensor<T> scale_rows(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> scale_cols(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> rowwise_dot(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> resize_bilinear(const Tensor<T>&, int, int);                                       \
  template Tensor<T> embedding(const Tensor<T>&, const std::vector<int>&);                              \
  template Tensor<T> bce_with_logits(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> cross_entropy(const Tensor<T>&, const std::vector<int>&, int);

SEMCC_INSTANTIATE_OPS(float)
SEMCC_INSTANTIATE_OPS(double)

#undef SEMCC_INSTANTIATE_OPS

}  // namespace semcc
