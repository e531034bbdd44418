#pragma once

#include <string>

#include "geoslomo/grid.hpp"

namespace geoslomo {

/// Per-pixel displacement in pixels. u is the column (x) component, v the
/// row (y) component. A flow F warps an image I to I(p + F(p)).
class FlowField {
 public:
  FlowField() = default;
  FlowField(Grid u, Grid v) : u_(std::move(u)), v_(std::move(v)) {
    require_same_shape(u_, v_, "FlowField");
    if (!u_.all_finite() || !v_.all_finite()) {
      throw ValidationError("FlowField: non-finite displacement");
    }
  }

  static FlowField zeros(std::size_t height, std::size_t width) {
    return FlowField(Grid(height, width), Grid(height, width));
  }
  static FlowField uniform(std::size_t height, std::size_t width, float dx, float dy) {
    return FlowField(Grid(height, width, dx), Grid(height, width, dy));
  }

  const Grid& u() const noexcept { return u_; }
  const Grid& v() const noexcept { return v_; }
  std::size_t height() const noexcept { return u_.height(); }
  std::size_t width() const noexcept { return u_.width(); }

  friend bool operator==(const FlowField&, const FlowField&) = default;

 private:
  Grid u_;
  Grid v_;
};

/// Per-pixel blend weight, clamped into [eps, 1 - eps] on construction.
class VisibilityMap {
 public:
  static constexpr float kEpsilon = 1e-6f;

  VisibilityMap() = default;
  explicit VisibilityMap(Grid weights);

  const Grid& weights() const noexcept { return w_; }
  std::size_t height() const noexcept { return w_.height(); }
  std::size_t width() const noexcept { return w_.width(); }

 private:
  Grid w_;
};

/// Normalized time between the two input frames.
class BlendTime {
 public:
  explicit BlendTime(double t) : t_(t) {
    if (!(t >= 0.0 && t <= 1.0)) {
      throw ParameterError("t", "blend time must lie in [0, 1], got " + std::to_string(t));
    }
  }
  double value() const noexcept { return t_; }

 private:
  double t_;
};

}  // namespace geoslomo
