#pragma once

#include <algorithm>
#include <cstddef>
#include <initializer_list>
#include <new>
#include <span>
#include <string>
#include <vector>

#include "mssp/errors.hpp"

namespace mssp {

using Dims = std::vector<std::size_t>;

std::string dims_to_string(const Dims& dims);

/// Allocates on 64-byte boundaries so vectorized kernels see the same
/// alignment, and therefore the same summation order, on every run.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }
  friend bool operator==(const AlignedAllocator&, const AlignedAllocator&) { return true; }
};

/// Dense row-major array of rank 1..4. Activations are channels-last
/// (H×W×C or N×H×W×C); convolution kernels are k×k×Cin×Cout.
template <typename T>
class Tensor {
 public:
  using value_type = T;
  using Storage = std::vector<T, AlignedAllocator<T>>;

  Tensor() = default;
  explicit Tensor(Dims dims, T fill = T{});
  Tensor(Dims dims, std::vector<T> data);

  const Dims& dims() const noexcept { return dims_; }
  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  T* raw() noexcept { return data_.data(); }
  const T* raw() const noexcept { return data_.data(); }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  /// Bounds-checked multi-index access; the number of indices must equal rank.
  template <typename... Idx>
  T& at(Idx... idx) {
    return data_[offset({static_cast<std::size_t>(idx)...})];
  }
  template <typename... Idx>
  const T& at(Idx... idx) const {
    return data_[offset({static_cast<std::size_t>(idx)...})];
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  /// Same data, different extents. Total size must be preserved.
  Tensor reshaped(Dims dims) const;

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(dims_);
    std::copy(data_.begin(), data_.end(), out.data().begin());
    return out;
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.dims_ == b.dims_ && a.data_ == b.data_;
  }

 private:
  std::size_t offset(std::initializer_list<std::size_t> idx) const;

  Dims dims_;
  Storage data_;
};

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

/// A rank-3 or rank-4 activation viewed as N×H×W×C (rank 3 means N = 1).
struct Nhwc {
  std::size_t n = 0, h = 0, w = 0, c = 0;
  std::size_t pixels() const noexcept { return n * h * w; }
  std::size_t size() const noexcept { return n * h * w * c; }
};

template <typename T>
Nhwc as_nhwc(const Tensor<T>& t, const char* what);

/// Builds activation dims of the same rank as `like` with new spatial/channel extents.
Dims activation_dims(const Dims& like, std::size_t n, std::size_t h, std::size_t w,
                     std::size_t c);

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template Nhwc as_nhwc(const Tensor<float>&, const char*);
extern template Nhwc as_nhwc(const Tensor<double>&, const char*);

}  // namespace mssp
