#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mssp/errors.hpp"

namespace mssp {

/// Single-channel H×W raster, row-major.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(std::size_t height, std::size_t width, T fill = T{})
      : height_(height), width_(width), data_(height * width, fill) {}

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  bool same_shape(const auto& other) const noexcept {
    return height_ == other.height() && width_ == other.width();
  }

  T& operator()(std::size_t y, std::size_t x) noexcept { return data_[y * width_ + x]; }
  const T& operator()(std::size_t y, std::size_t x) const noexcept { return data_[y * width_ + x]; }
  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  T& at(std::size_t y, std::size_t x) {
    check(y, x);
    return data_[y * width_ + x];
  }
  const T& at(std::size_t y, std::size_t x) const {
    check(y, x);
    return data_[y * width_ + x];
  }

  /// Edge-replicated read: coordinates outside the raster clamp to the border.
  const T& clamped(std::ptrdiff_t y, std::ptrdiff_t x) const noexcept {
    const auto cy = std::clamp<std::ptrdiff_t>(y, 0, static_cast<std::ptrdiff_t>(height_) - 1);
    const auto cx = std::clamp<std::ptrdiff_t>(x, 0, static_cast<std::ptrdiff_t>(width_) - 1);
    return data_[static_cast<std::size_t>(cy) * width_ + static_cast<std::size_t>(cx)];
  }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  void check(std::size_t y, std::size_t x) const {
    if (y >= height_ || x >= width_) {
      throw ShapeError("pixel (" + std::to_string(y) + "," + std::to_string(x) +
                       ") outside " + std::to_string(height_) + "x" + std::to_string(width_));
    }
  }

  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<T> data_;
};

using Image = Grid<float>;
using Mask = Grid<std::uint8_t>;  // 0 or 1

/// Reads a binary PGM (P5), 8- or 16-bit, scaled to [0,1].
Image load_image(const std::filesystem::path& path);
/// Writes `plane` as P5 after clamping to [0,1]; `bits` is 8 or 16.
void save_image(const Image& plane, const std::filesystem::path& path, int bits = 16);

/// Reads a P5 mask. Every pixel must be 0 or maxval, otherwise DomainError.
Mask load_mask(const std::filesystem::path& path);
/// Writes an 8-bit mask as 0/255.
void save_mask(const Mask& mask, const std::filesystem::path& path);

/// Throws DomainError unless every pixel is 0 or 1.
void require_binary(const Mask& mask, const char* what);

}  // namespace mssp
