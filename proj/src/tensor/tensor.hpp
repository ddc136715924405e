// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tensor/errors.hpp"

namespace semcc {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

/// Fixed 64-byte alignment for tensor storage. Vectorised kernels take
/// different peeling paths for different base alignments, which changes the
/// summation order; pinning the alignment keeps results bitwise reproducible.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }
  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

template <typename T>
class Tape;

template <typename T>
struct TensorImpl {
  Shape shape;
  AlignedVector<T> data;
  AlignedVector<T> grad;  // sized lazily on first accumulation
  bool requires_grad = false;
  const Tape<T>* tape = nullptr;  // producing tape; null for leaves
};

/// Dense row-major tensor handle. Copies share storage; use clone() for a
/// deep copy. A tensor that requires grad and is produced while a tape is
/// active becomes a node of that tape.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T(0)) : impl_(std::make_shared<TensorImpl<T>>()) {
    for (int d : shape) {
      if (d <= 0) throw DimensionError("non-positive extent in shape " + shape_str(shape));
    }
    impl_->data.assign(shape_numel(shape), fill);
    impl_->shape = std::move(shape);
  }

  Tensor(Shape shape, std::vector<T> values) : impl_(std::make_shared<TensorImpl<T>>()) {
    for (int d : shape) {
      if (d <= 0) throw DimensionError("non-positive extent in shape " + shape_str(shape));
    }
    if (shape_numel(shape) != values.size()) {
      throw DimensionError("shape " + shape_str(shape) + " does not match " + std::to_string(values.size()) +
                           " values");
    }
    impl_->shape = std::move(shape);
    impl_->data.assign(values.begin(), values.end());
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), T(0)); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), T(1)); }
  static Tensor scalar(T v) { return Tensor(Shape{1}, v); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  int dim(int i) const { return impl_->shape[i < 0 ? impl_->shape.size() + i : i]; }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<T> data() { return impl_->data; }
  std::span<const T> data() const { return impl_->data; }
  T* ptr() { return impl_->data.data(); }
  const T* ptr() const { return impl_->data.data(); }
  T operator[](std::size_t i) const { return impl_->data[i]; }

  T item() const {
    if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
    return impl_->data[0];
  }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on) {
    impl_->requires_grad = on;
    if (!on) impl_->grad.clear();
  }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const T> grad() const { return impl_->grad; }
  /// Gradient buffer, allocated (zero-filled) on first use. Handles share
  /// storage, so this is available through const copies too.
  std::span<T> grad_buffer() const {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), T(0));
    return impl_->grad;
  }
  void zero_grad() {
    if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), T(0));
  }

  /// Deep copy detached from any tape.
  Tensor clone() const {
    Tensor out(shape());
    std::copy(impl_->data.begin(), impl_->data.end(), out.impl_->data.begin());
    return out;
  }

  /// True if any element is NaN or infinite.
  bool has_nonfinite() const {
    return std::any_of(impl_->data.begin(), impl_->data.end(), [](T v) { return !std::isfinite(v); });
  }

  bool same_storage(const Tensor& o) const { return impl_ == o.impl_; }
  TensorImpl<T>* impl() const { return impl_.get(); }

 private:
  std::shared_ptr<TensorImpl<T>> impl_;
};

/// Ordered record of backward closures for ops executed while it was current.
template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::function<void()> fn) { entries_.push_back(std::move(fn)); }
  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

  /// Seeds d(loss)/d(loss) = 1 and replays closures in reverse order. The
  /// tape is cleared afterwards.
  void backward(Tensor<T>& loss) {
    loss.grad_buffer()[0] += T(1);
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
    entries_.clear();
  }

 private:
  std::vector<std::function<void()>> entries_;
};

template <typename T>
Tape<T>*& current_tape() {
  thread_local Tape<T>* tape = nullptr;
  return tape;
}

/// Makes `tape` current for the lifetime of the scope.
template <typename T>
class TapeScope {
 public:
  explicit TapeScope(Tape<T>& tape) : prev_(current_tape<T>()) { current_tape<T>() = &tape; }
  ~TapeScope() { current_tape<T>() = prev_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<T>* prev_;
};

/// Suspends recording (inference inside a training scope).
template <typename T>
class NoGradScope {
 public:
  NoGradScope() : prev_(current_tape<T>()) { current_tape<T>() = nullptr; }
  ~NoGradScope() { current_tape<T>() = prev_; }
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape<T>* prev_;
};

/// Populates grads of every tensor reachable from `loss` on the current tape.
template <typename T>
void backward(Tensor<T> loss) {
  if (loss.numel() != 1) throw ContractError("backward needs a scalar loss, got shape " + shape_str(loss.shape()));
  if (!loss.requires_grad()) return;
  Tape<T>* tape = current_tape<T>();
  if (tape == nullptr || loss.impl()->tape != tape) {
    throw ContractError("loss was not produced on the current tape");
  }
  tape->backward(loss);
}

namespace detail {

/// Returns the current tape if any of `inputs` requires grad, else null.
template <typename T>
Tape<T>* recording(std::initializer_list<const Tensor<T>*> inputs) {
  Tape<T>* tape = current_tape<T>();
  if (tape == nullptr) return nullptr;
  for (const Tensor<T>* t : inputs) {
    if (t != nullptr && t->defined() && t->requires_grad()) return tape;
  }
  return nullptr;
}

template <typename T>
void mark_node(Tensor<T>& out, Tape<T>* tape) {
  out.set_requires_grad(true);
  out.impl()->tape = tape;
}

}  // namespace detail

// Raw tensor files: magic "SEMCCT01", u32 rank, rank x u32 extents, then a
// little-endian f32 payload in row-major order.
void save_tensor_file(const std::string& path, const Shape& shape, std::span<const float> values);
std::pair<Shape, std::vector<float>> load_tensor_file(const std::string& path);

template <typename T>
void save_tensor(const std::string& path, const Tensor<T>& t) {
  std::vector<float> f(t.data().begin(), t.data().end());
  save_tensor_file(path, t.shape(), f);
}

template <typename T>
Tensor<T> load_tensor(const std::string& path) {
  auto [shape, values] = load_tensor_file(path);
  return Tensor<T>(shape, std::vector<T>(values.begin(), values.end()));
}

}  // namespace semcc
