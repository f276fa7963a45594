#pragma once

#include <array>
#include <cstddef>
#include <numbers>
#include <string>

#include "maflow/errors.hpp"

namespace maflow {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Uniform periodic grid over [0, 2pi)^{2n}, row-major storage, complex
// dimension n in {1, 2}. Axis a has shape[a] points and spacing 2pi/shape[a].
class GridGeometry {
 public:
  static constexpr int kMaxAxes = 4;

  GridGeometry() = default;

  GridGeometry(int n, std::array<int, kMaxAxes> shape) : n_(n) {
    if (n != 1 && n != 2)
      throw ConfigError("GridGeometry: complex dimension must be 1 or 2, got " +
                        std::to_string(n));
    real_dim_ = 2 * n;
    npoints_ = 1;
    for (int a = 0; a < real_dim_; ++a) {
      const int s = shape[a];
      if (s < 8 || s % 2 != 0)
        throw ConfigError("GridGeometry: shape entries must be even and >= 8, axis " +
                          std::to_string(a) + " has " + std::to_string(s));
      shape_[a] = s;
      spacing_[a] = kTwoPi / s;
      npoints_ *= static_cast<std::size_t>(s);
    }
    // row-major strides: last axis contiguous
    std::size_t stride = 1;
    for (int a = real_dim_ - 1; a >= 0; --a) {
      stride_[a] = stride;
      stride *= static_cast<std::size_t>(shape_[a]);
    }
  }

  int n() const { return n_; }
  int real_dim() const { return real_dim_; }
  int shape(int axis) const { return shape_[axis]; }
  double spacing(int axis) const { return spacing_[axis]; }
  double min_spacing() const {
    double h = spacing_[0];
    for (int a = 1; a < real_dim_; ++a) h = h < spacing_[a] ? h : spacing_[a];
    return h;
  }
  std::size_t stride(int axis) const { return stride_[axis]; }
  std::size_t npoints() const { return npoints_; }

  void multi_index(std::size_t p, std::array<int, kMaxAxes>& idx) const {
    for (int a = real_dim_ - 1; a >= 0; --a) {
      idx[a] = static_cast<int>(p % static_cast<std::size_t>(shape_[a]));
      p /= static_cast<std::size_t>(shape_[a]);
    }
  }

  std::size_t flat_index(const std::array<int, kMaxAxes>& idx) const {
    std::size_t p = 0;
    for (int a = 0; a < real_dim_; ++a)
      p += static_cast<std::size_t>(idx[a]) * stride_[a];
    return p;
  }

  void coords(std::size_t p, std::array<double, kMaxAxes>& x) const {
    std::array<int, kMaxAxes> idx{};
    multi_index(p, idx);
    for (int a = 0; a < real_dim_; ++a) x[a] = idx[a] * spacing_[a];
  }

  std::string point_string(std::size_t p) const {
    std::array<int, kMaxAxes> idx{};
    multi_index(p, idx);
    std::string s = "(";
    for (int a = 0; a < real_dim_; ++a) {
      if (a) s += ",";
      s += std::to_string(idx[a]);
    }
    return s + ")";
  }

  bool operator==(const GridGeometry& o) const {
    if (n_ != o.n_) return false;
    for (int a = 0; a < real_dim_; ++a)
      if (shape_[a] != o.shape_[a]) return false;
    return true;
  }
  bool operator!=(const GridGeometry& o) const { return !(*this == o); }

  // Enumerates 1D lines along `axis`: fn(base_offset) where points of the
  // line are base_offset + k*stride(axis), k in [0, shape(axis)).
  template <class Fn>
  void for_each_line(int axis, Fn&& fn) const {
    const std::size_t nlines = npoints_ / static_cast<std::size_t>(shape_[axis]);
    for (std::size_t l = 0; l < nlines; ++l) fn(line_base(axis, l));
  }

  std::size_t num_lines(int axis) const {
    return npoints_ / static_cast<std::size_t>(shape_[axis]);
  }

  // Base flat index of the l-th line along `axis` (deterministic ordering).
  std::size_t line_base(int axis, std::size_t l) const {
    std::size_t base = 0;
    std::size_t rem = l;
    for (int a = real_dim_ - 1; a >= 0; --a) {
      if (a == axis) continue;
      const std::size_t s = static_cast<std::size_t>(shape_[a]);
      base += (rem % s) * stride_[a];
      rem /= s;
    }
    return base;
  }

 private:
  int n_ = 0;
  int real_dim_ = 0;
  std::array<int, kMaxAxes> shape_{};
  std::array<double, kMaxAxes> spacing_{};
  std::array<std::size_t, kMaxAxes> stride_{};
  std::size_t npoints_ = 0;
};

inline GridGeometry make_grid(int n, std::array<int, 4> shape) {
  return GridGeometry(n, shape);
}

inline GridGeometry make_square_grid(int n, int points_per_axis) {
  std::array<int, 4> shape{};
  for (int a = 0; a < 2 * n; ++a) shape[a] = points_per_axis;
  return GridGeometry(n, shape);
}

}  // namespace maflow
