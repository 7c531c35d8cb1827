#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <new>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "cade/error.hpp"

namespace cade {

using Dims = std::vector<std::size_t>;

/// 64-byte aligned storage, so vectorized kernels split work the same way
/// regardless of where the heap places a buffer.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() noexcept = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }

  template <typename U>
  friend bool operator==(const AlignedAllocator&, const AlignedAllocator<U>&) noexcept {
    return true;
  }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

inline std::size_t element_count(const Dims& dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string dims_string(const Dims& dims) {
  std::ostringstream out;
  for (std::size_t i = 0; i < dims.size(); ++i) out << (i ? "x" : "") << dims[i];
  return out.str();
}

/// Dense row-major n-dimensional array. Every extent is at least one, except
/// that a leading batch extent of zero is allowed for empty batches.
template <typename Real>
class Tensor {
 public:
  using value_type = Real;

  Tensor() = default;

  explicit Tensor(Dims dims, Real fill = Real{0}) : dims_(std::move(dims)) {
    check_dims(dims_);
    data_.assign(element_count(dims_), fill);
  }

  Tensor(Dims dims, const std::vector<Real>& data)
      : Tensor(std::move(dims), AlignedVector<Real>(data.begin(), data.end())) {}

  Tensor(Dims dims, AlignedVector<Real> data) : dims_(std::move(dims)), data_(std::move(data)) {
    check_dims(dims_);
    if (element_count(dims_) != data_.size()) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match dims " + dims_string(dims_));
    }
  }

  const Dims& dims() const noexcept { return dims_; }
  std::size_t dim(std::size_t axis) const { return dims_.at(axis); }
  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<Real> values() noexcept { return data_; }
  std::span<const Real> values() const noexcept { return data_; }
  Real* data() noexcept { return data_.data(); }
  const Real* data() const noexcept { return data_.data(); }
  AlignedVector<Real>& storage() noexcept { return data_; }
  const AlignedVector<Real>& storage() const noexcept { return data_; }

  Real& operator[](std::size_t i) noexcept { return data_[i]; }
  const Real& operator[](std::size_t i) const noexcept { return data_[i]; }

  Real& at(std::size_t i, std::size_t j) { return data_[i * dims_[1] + j]; }
  const Real& at(std::size_t i, std::size_t j) const { return data_[i * dims_[1] + j]; }
  Real& at(std::size_t c, std::size_t i, std::size_t j) {
    return data_[(c * dims_[1] + i) * dims_[2] + j];
  }
  const Real& at(std::size_t c, std::size_t i, std::size_t j) const {
    return data_[(c * dims_[1] + i) * dims_[2] + j];
  }

  /// Same data, new extents; the element count must be preserved.
  Tensor reshaped(Dims dims) const {
    if (element_count(dims) != data_.size()) {
      throw ShapeError("cannot reshape " + dims_string(dims_) + " to " + dims_string(dims));
    }
    return Tensor(std::move(dims), data_);
  }

  /// Copy of the i-th slab along the leading axis.
  Tensor slab(std::size_t i) const {
    if (dims_.size() < 2 || i >= dims_[0]) throw ShapeError("slab index out of range");
    Dims inner(dims_.begin() + 1, dims_.end());
    const std::size_t n = element_count(inner);
    return Tensor(std::move(inner),
                  AlignedVector<Real>(data_.begin() + static_cast<std::ptrdiff_t>(i * n),
                                    data_.begin() + static_cast<std::ptrdiff_t>((i + 1) * n)));
  }

  std::span<Real> slab_values(std::size_t i) {
    const std::size_t n = data_.size() / dims_[0];
    return std::span<Real>(data_).subspan(i * n, n);
  }
  std::span<const Real> slab_values(std::size_t i) const {
    const std::size_t n = data_.size() / dims_[0];
    return std::span<const Real>(data_).subspan(i * n, n);
  }

  void fill(Real v) { std::fill(data_.begin(), data_.end(), v); }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(dims_, AlignedVector<Other>(data_.begin(), data_.end()));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.dims_ == b.dims_ && a.data_ == b.data_;
  }

 private:
  static void check_dims(const Dims& dims) {
    for (std::size_t i = 0; i < dims.size(); ++i) {
      if (dims[i] == 0 && !(i == 0 && dims.size() > 1)) {
        throw ShapeError("tensor extents must be positive, got " + dims_string(dims));
      }
    }
  }

  Dims dims_;
  AlignedVector<Real> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace cade
