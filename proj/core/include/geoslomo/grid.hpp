#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "geoslomo/errors.hpp"

namespace geoslomo {

/// Row-major H x W grid of float32 intensities. This is the storage type of
/// frames, flow components and visibility maps outside the network code.
class Grid {
 public:
  Grid() = default;
  Grid(std::size_t height, std::size_t width, float fill = 0.0f)
      : height_(height), width_(width), data_(height * width, fill) {}
  Grid(std::size_t height, std::size_t width, std::vector<float> data)
      : height_(height), width_(width), data_(std::move(data)) {
    if (data_.size() != height_ * width_) {
      throw ContractError("Grid: payload size does not match height*width");
    }
  }

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  float& operator()(std::size_t row, std::size_t col) noexcept {
    return data_[row * width_ + col];
  }
  float operator()(std::size_t row, std::size_t col) const noexcept {
    return data_[row * width_ + col];
  }

  std::span<float> values() noexcept { return data_; }
  std::span<const float> values() const noexcept { return data_; }
  const std::vector<float>& storage() const noexcept { return data_; }

  bool same_shape(const Grid& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_;
  }

  bool all_finite() const noexcept;

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<float> data_;
};

/// Integer pixel position; x = column, y = row.
struct PixelCoord {
  std::size_t row = 0;
  std::size_t col = 0;
};

inline void require_same_shape(const Grid& a, const Grid& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ContractError(std::string(what) + ": grid shapes differ (" +
                        std::to_string(a.height()) + "x" + std::to_string(a.width()) +
                        " vs " + std::to_string(b.height()) + "x" +
                        std::to_string(b.width()) + ")");
  }
}

}  // namespace geoslomo
