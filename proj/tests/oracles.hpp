// Test-only oracles, independent of the library's discrete operators.
#pragma once

#include "maflow/maflow.hpp"

namespace maflow::oracles {

// Closed-form unitary frame of the rotated model (G = Id, theta = A sin(w x0),
// rotation in the (d1, d2) coordinate plane):
//   e1 = (d0 - i cos(th) d1 - i sin(th) d2) / sqrt(2)
//   e2 = (-sin(th) d1 + cos(th) d2 - i d3) / sqrt(2)
// derived by hand from the (1,0)-projector and Gram-Schmidt in build order.
struct RotatedFrame {
  double amplitude = 0.3;
  int wave = 1;

  double theta(double x0) const { return amplitude * std::sin(wave * x0); }
  double dtheta(double x0) const { return amplitude * wave * std::cos(wave * x0); }

  Eigen::Vector4cd e(int i, double x0) const {
    const double c = std::cos(theta(x0)), s = std::sin(theta(x0));
    const double r = 1.0 / std::sqrt(2.0);
    if (i == 0) return {r, cplx(0, -c) * r, cplx(0, -s) * r, 0.0};
    return {0.0, -s * r, c * r, cplx(0, -1) * r};
  }

  Eigen::Vector4cd de(int i, double x0) const {
    const double c = std::cos(theta(x0)), s = std::sin(theta(x0));
    const double dt = dtheta(x0);
    const double r = 1.0 / std::sqrt(2.0);
    if (i == 0) return {0.0, cplx(0, s * dt) * r, cplx(0, -c * dt) * r, 0.0};
    return {0.0, -c * dt * r, -s * dt * r, 0.0};
  }

  // [e_i, ebar_j]^{(0,1)} coefficients in {ebar_k}; all coefficient fields
  // depend on x0 only, so the bracket reduces to X^0 Y' - Y^0 X'.
  Eigen::Vector2cd bracket01(int i, int j, double x0,
                             const Eigen::Matrix4d& J) const {
    const Eigen::Vector4cd X = e(i, x0);
    const Eigen::Vector4cd Y = e(j, x0).conjugate();
    const Eigen::Vector4cd dX = de(i, x0);
    const Eigen::Vector4cd dY = de(j, x0).conjugate();
    const Eigen::Vector4cd br = X[0] * dY - Y[0] * dX;
    const Eigen::Vector4cd br01 = 0.5 * (br + cplx(0, 1) * (J * br));
    Eigen::Vector2cd coeffs;
    for (int k = 0; k < 2; ++k)
      coeffs[k] = (br01.transpose() * e(k, x0))(0, 0);
    return coeffs;
  }
};

// RMS over grid points of a per-point error functional.
template <class Fn>
double rms_error(const GridGeometry& g, Fn&& err_at) {
  double s = 0.0;
  for (std::size_t p = 0; p < g.npoints(); ++p) {
    const double e = err_at(p);
    s += e * e;
  }
  return std::sqrt(s / static_cast<double>(g.npoints()));
}

// RMS distance of discrete bracket coefficients from the closed form.
inline double bracket_rms_error_vs_analytic(const Model<2>& m) {
  RotatedFrame fr{m.spec.amplitude, m.spec.wave};
  std::array<double, 4> x{};
  return rms_error(m.geom, [&](std::size_t p) {
    m.geom.coords(p, x);
    double worst = 0.0;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        worst = std::max(worst, (m.brackets01[i][j][p] -
                                 fr.bracket01(i, j, x[0], m.J[p]))
                                    .cwiseAbs()
                                    .maxCoeff());
    return worst;
  });
}

// RMS distance of discrete brackets from the double-resolution model
// restricted to coarse points (fine shape = 2 * coarse shape).
template <int N>
double bracket_rms_error_vs_fine(const Model<N>& coarse, const Model<N>& fine) {
  std::array<int, 4> idx{};
  return rms_error(coarse.geom, [&](std::size_t p) {
    coarse.geom.multi_index(p, idx);
    std::array<int, 4> fidx = idx;
    for (int a = 0; a < 2 * N; ++a) fidx[a] *= 2;
    const std::size_t q = fine.geom.flat_index(fidx);
    double worst = 0.0;
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < N; ++j)
        worst = std::max(worst, (coarse.brackets01[i][j][p] -
                                 fine.brackets01[i][j][q])
                                    .cwiseAbs()
                                    .maxCoeff());
    return worst;
  });
}

// Probe potential with enough mixed modes to excite the Hermitian deficit.
inline ScalarField deficit_probe(const GridGeometry& g) {
  return make_scalar_field(g, [](const std::array<double, 4>& x) {
    return 0.2 * std::sin(x[0]) * std::cos(x[2]) + 0.1 * std::sin(x[1] + x[3]);
  });
}

inline double two_point_rate(double err_coarse, double err_fine, double h_ratio) {
  return std::log(err_coarse / err_fine) / std::log(h_ratio);
}

}  // namespace maflow::oracles
