#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <vector>

#include "maflow/grid.hpp"
#include "maflow/parallel.hpp"

namespace maflow {

using cplx = std::complex<double>;

// Value-semantic grid field. Copies carry their geometry; binary operations
// require matching geometries.
template <class T>
class Field {
 public:
  Field() = default;
  explicit Field(const GridGeometry& g) : geom_(g), v_(g.npoints(), T{}) {}
  Field(const GridGeometry& g, const T& init) : geom_(g), v_(g.npoints(), init) {}

  const GridGeometry& geom() const { return geom_; }
  std::size_t size() const { return v_.size(); }
  T* data() { return v_.data(); }
  const T* data() const { return v_.data(); }
  T& operator[](std::size_t p) { return v_[p]; }
  const T& operator[](std::size_t p) const { return v_[p]; }

  bool same_geometry(const Field& o) const { return geom_ == o.geom_; }

 private:
  GridGeometry geom_;
  std::vector<T> v_;
};

using ScalarField = Field<double>;
using ComplexField = Field<cplx>;

namespace detail {
inline void require_same_geom(const GridGeometry& a, const GridGeometry& b,
                              const char* what) {
  if (!(a == b)) throw ConfigError(std::string(what) + ": geometry mismatch");
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Pointwise construction and algebra

template <class Fn>
ScalarField make_scalar_field(const GridGeometry& g, Fn&& fn) {
  ScalarField f(g);
  std::array<double, GridGeometry::kMaxAxes> x{};
  for (std::size_t p = 0; p < g.npoints(); ++p) {
    g.coords(p, x);
    f[p] = fn(x);
  }
  return f;
}

template <class T>
Field<T>& operator+=(Field<T>& a, const Field<T>& b) {
  detail::require_same_geom(a.geom(), b.geom(), "operator+=");
  parallel_for(a.size(), [&](std::size_t p) { a[p] += b[p]; });
  return a;
}

template <class T>
Field<T>& operator-=(Field<T>& a, const Field<T>& b) {
  detail::require_same_geom(a.geom(), b.geom(), "operator-=");
  parallel_for(a.size(), [&](std::size_t p) { a[p] -= b[p]; });
  return a;
}

template <class T, class S>
Field<T>& operator*=(Field<T>& a, const S& s) {
  parallel_for(a.size(), [&](std::size_t p) { a[p] *= s; });
  return a;
}

template <class T>
Field<T> operator+(Field<T> a, const Field<T>& b) { a += b; return a; }
template <class T>
Field<T> operator-(Field<T> a, const Field<T>& b) { a -= b; return a; }

inline ScalarField& shift(ScalarField& a, double c) {
  parallel_for(a.size(), [&](std::size_t p) { a[p] += c; });
  return a;
}

// dst += c * src
template <class T, class S>
void axpy(Field<T>& dst, const S& c, const Field<T>& src) {
  detail::require_same_geom(dst.geom(), src.geom(), "axpy");
  parallel_for(dst.size(), [&](std::size_t p) { dst[p] += c * src[p]; });
}

// ---------------------------------------------------------------------------
// NaN policy: every public operation may call this to fail fast with the
// offending grid location.

inline void check_finite(const ScalarField& f, const char* what) {
  const std::size_t n = f.size();
  for (std::size_t p = 0; p < n; ++p) {
    if (!std::isfinite(f[p]))
      throw NumericError(std::string(what) + ": non-finite value at point " +
                         f.geom().point_string(p));
  }
}

inline void check_finite(const ComplexField& f, const char* what) {
  const std::size_t n = f.size();
  for (std::size_t p = 0; p < n; ++p) {
    if (!std::isfinite(f[p].real()) || !std::isfinite(f[p].imag()))
      throw NumericError(std::string(what) + ": non-finite value at point " +
                         f.geom().point_string(p));
  }
}

// ---------------------------------------------------------------------------
// 4th-order central differences on the periodic grid. Difference form keeps
// constants annihilated exactly.

namespace detail {

template <class T>
void stencil_d1_line(const T* in, T* out, int count, std::size_t stride, double h) {
  const double c = 1.0 / (12.0 * h);
  auto at = [&](int k) -> const T& {
    int w = k;
    if (w < 0) w += count;
    else if (w >= count) w -= count;
    return in[static_cast<std::size_t>(w) * stride];
  };
  for (int i = 0; i < count; ++i) {
    const T d1 = at(i + 1) - at(i - 1);
    const T d2 = at(i + 2) - at(i - 2);
    out[static_cast<std::size_t>(i) * stride] = (8.0 * d1 - d2) * c;
  }
}

template <class T>
void stencil_d2_line(const T* in, T* out, int count, std::size_t stride, double h) {
  const double c = 1.0 / (12.0 * h * h);
  auto at = [&](int k) -> const T& {
    int w = k;
    if (w < 0) w += count;
    else if (w >= count) w -= count;
    return in[static_cast<std::size_t>(w) * stride];
  };
  for (int i = 0; i < count; ++i) {
    const T s1 = at(i + 1) + at(i - 1);
    const T s2 = at(i + 2) + at(i - 2);
    const T f0 = at(i);
    out[static_cast<std::size_t>(i) * stride] = (16.0 * s1 - s2 - 30.0 * f0) * c;
  }
}

template <class T, int Order>
Field<T> apply_axis_stencil(const Field<T>& f, int axis) {
  const GridGeometry& g = f.geom();
  Field<T> out(g);
  const int count = g.shape(axis);
  const std::size_t stride = g.stride(axis);
  const double h = g.spacing(axis);
  const std::size_t nlines = g.num_lines(axis);
  parallel_for(nlines, [&](std::size_t l) {
    const std::size_t base = g.line_base(axis, l);
    if constexpr (Order == 1)
      stencil_d1_line(f.data() + base, out.data() + base, count, stride, h);
    else
      stencil_d2_line(f.data() + base, out.data() + base, count, stride, h);
  });
  return out;
}

}  // namespace detail

template <class T>
Field<T> derivative(const Field<T>& f, int axis) {
  return detail::apply_axis_stencil<T, 1>(f, axis);
}

template <class T>
Field<T> second_derivative(const Field<T>& f, int axis) {
  return detail::apply_axis_stencil<T, 2>(f, axis);
}

// ---------------------------------------------------------------------------
// Reductions. All use fixed chunking so results do not depend on the worker
// count; min/max scans are sequential (cheap and trivially deterministic).

inline double max_value(const ScalarField& f) {
  check_finite(f, "max_value");
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < f.size(); ++p) m = std::max(m, f[p]);
  return m;
}

inline double min_value(const ScalarField& f) {
  check_finite(f, "min_value");
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < f.size(); ++p) m = std::min(m, f[p]);
  return m;
}

inline double sup_norm(const ScalarField& f) {
  check_finite(f, "sup_norm");
  double m = 0.0;
  for (std::size_t p = 0; p < f.size(); ++p) m = std::max(m, std::abs(f[p]));
  return m;
}

inline double oscillation(const ScalarField& f) {
  check_finite(f, "oscillation");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t p = 0; p < f.size(); ++p) {
    lo = std::min(lo, f[p]);
    hi = std::max(hi, f[p]);
  }
  return hi - lo;
}

inline std::size_t argmin(const ScalarField& f) {
  std::size_t arg = 0;
  for (std::size_t p = 1; p < f.size(); ++p)
    if (f[p] < f[arg]) arg = p;
  return arg;
}

}  // namespace maflow
