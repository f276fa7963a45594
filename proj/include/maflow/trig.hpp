#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "maflow/field.hpp"

namespace maflow {

// Trigonometric polynomial sum_k coef_k * sin/cos(<wave_k, x>). Band-limited
// recipes keep the quadrature on the periodic grid exact.
struct TrigTerm {
  double coef = 0.0;
  bool is_sin = true;
  std::array<int, 4> wave{};

  bool operator==(const TrigTerm&) const = default;
};

struct TrigPoly {
  std::vector<TrigTerm> terms;

  bool operator==(const TrigPoly&) const = default;
  bool empty() const { return terms.empty(); }

  double operator()(const std::array<double, 4>& x, int real_dim) const {
    double v = 0.0;
    for (const TrigTerm& t : terms) {
      double phase = 0.0;
      for (int a = 0; a < real_dim; ++a) phase += t.wave[a] * x[a];
      v += t.coef * (t.is_sin ? std::sin(phase) : std::cos(phase));
    }
    return v;
  }

  ScalarField evaluate(const GridGeometry& g) const {
    const int d = g.real_dim();
    return make_scalar_field(g, [&](const std::array<double, 4>& x) {
      return (*this)(x, d);
    });
  }
};

inline TrigPoly trig_poly(std::initializer_list<TrigTerm> terms) {
  TrigPoly p;
  p.terms.assign(terms);
  return p;
}

}  // namespace maflow
