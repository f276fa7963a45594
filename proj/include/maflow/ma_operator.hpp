#pragma once

#include "maflow/model.hpp"

namespace maflow {

// Positivity threshold for "g-tilde > 0": distinguishes genuine degeneracy
// from roundoff.
inline constexpr double kEpsPos = 1e-10;

template <int N>
using HermitianField = Field<typename Model<N>::HermMat>;

template <int N>
struct DbarHessianResult {
  HermitianField<N> H;          // symmetrized
  double presym_deficit = 0.0;  // sup |H - H^dagger| before symmetrization
  ScalarField presym_dev;       // pointwise |H - H^dagger| before symmetrization
};

// (ddbar phi)(e_i, ebar_j) = e_i(ebar_j(phi)) - [e_i, ebar_j]^{(0,1)}(phi),
// by nested frame derivatives, then symmetrized; the pre-symmetrization
// deviation is recorded. phi must be real-valued.
template <int N>
DbarHessianResult<N> dbar_hessian(const ScalarField& phi, const Model<N>& m) {
  detail::require_same_geom(phi.geom(), m.geom, "dbar_hessian");
  const GridGeometry& g = m.geom;
  constexpr int D = 2 * N;
  using HermMat = typename Model<N>::HermMat;

  // e_k(phi); ebar_k(phi) = conj(e_k(phi)) for real phi
  std::array<ComplexField, N> ephi = frame_gradient(phi, m);

  // derivatives of ebar_j(phi) along each axis
  std::array<std::array<ComplexField, D>, N> debar;
  for (int j = 0; j < N; ++j) {
    ComplexField ebar_j(g);
    parallel_for(g.npoints(), [&](std::size_t p) { ebar_j[p] = std::conj(ephi[j][p]); });
    for (int a = 0; a < D; ++a) debar[j][a] = derivative(ebar_j, a);
  }

  DbarHessianResult<N> out;
  out.H = HermitianField<N>(g);
  out.presym_dev = ScalarField(g);
  parallel_for(g.npoints(), [&](std::size_t p) {
    const auto& E = m.frame[p];
    HermMat h;
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < N; ++j) {
        cplx acc = 0.0;
        for (int a = 0; a < D; ++a) acc += E(i, a) * debar[j][a][p];
        if (m.has_brackets) {
          const auto& c = m.brackets01[i][j][p];
          for (int k = 0; k < N; ++k) acc -= c[k] * std::conj(ephi[k][p]);
        }
        h(i, j) = acc;
      }
    out.presym_dev[p] = (h - h.adjoint().eval()).cwiseAbs().maxCoeff();
    out.H[p] = 0.5 * (h + h.adjoint().eval());
  });
  for (std::size_t p = 0; p < g.npoints(); ++p)
    out.presym_deficit = std::max(out.presym_deficit, out.presym_dev[p]);
  return out;
}

template <int N>
struct GTildeResult {
  HermitianField<N> mat;  // identity + ddbar-Hessian in the unitary frame
  ScalarField min_eig;
  double min_eig_grid = 0.0;
  std::size_t argmin = 0;
  double presym_deficit = 0.0;
};

namespace detail {

template <int N>
double min_eigenvalue(const typename Model<N>::HermMat& h) {
  if constexpr (N == 1) {
    return h(0, 0).real();
  } else {
    const double a = h(0, 0).real();
    const double d = h(1, 1).real();
    const double mid = 0.5 * (a + d);
    const double rad = std::sqrt(0.25 * (a - d) * (a - d) + std::norm(h(0, 1)));
    return mid - rad;
  }
}

template <int N>
typename Model<N>::HermMat herm_inverse(const typename Model<N>::HermMat& h) {
  using HermMat = typename Model<N>::HermMat;
  if constexpr (N == 1) {
    HermMat inv;
    inv(0, 0) = 1.0 / h(0, 0).real();
    return inv;
  } else {
    const double det = h(0, 0).real() * h(1, 1).real() - std::norm(h(0, 1));
    HermMat inv;
    inv(0, 0) = h(1, 1).real() / det;
    inv(1, 1) = h(0, 0).real() / det;
    inv(0, 1) = -h(0, 1) / det;
    inv(1, 0) = -h(1, 0) / det;
    return inv;
  }
}

template <int N>
double herm_log_det(const typename Model<N>::HermMat& h) {
  if constexpr (N == 1) {
    return std::log(h(0, 0).real());
  } else {
    return std::log(h(0, 0).real() * h(1, 1).real() - std::norm(h(0, 1)));
  }
}

}  // namespace detail

template <int N>
GTildeResult<N> g_tilde(const ScalarField& phi, const Model<N>& m) {
  auto hess = dbar_hessian(phi, m);
  GTildeResult<N> out;
  out.presym_deficit = hess.presym_deficit;
  out.mat = std::move(hess.H);
  out.min_eig = ScalarField(m.geom);
  parallel_for(m.geom.npoints(), [&](std::size_t p) {
    out.mat[p] += Model<N>::HermMat::Identity();
    out.min_eig[p] = detail::min_eigenvalue<N>(out.mat[p]);
  });
  out.argmin = argmin(out.min_eig);
  out.min_eig_grid = out.min_eig[out.argmin];
  return out;
}

template <int N>
void require_positive(const GTildeResult<N>& gt, const char* what) {
  if (!(gt.min_eig_grid > kEpsPos))
    throw PositivityError(std::string(what) +
                              ": g-tilde positivity failed at point " +
                              gt.mat.geom().point_string(gt.argmin) +
                              ", min eigenvalue " + std::to_string(gt.min_eig_grid),
                          gt.argmin, gt.min_eig_grid);
}

template <int N>
ScalarField log_det_ratio(const GTildeResult<N>& gt) {
  require_positive(gt, "log_det_ratio");
  ScalarField out(gt.mat.geom());
  parallel_for(out.size(), [&](std::size_t p) {
    out[p] = detail::herm_log_det<N>(gt.mat[p]);
  });
  check_finite(out, "log_det_ratio");
  return out;
}

template <int N>
ScalarField log_det_ratio(const ScalarField& phi, const Model<N>& m) {
  return log_det_ratio(g_tilde(phi, m));
}

// Trace of the ddbar-Hessian in the unitary frame (g^{ij} = delta).
template <int N>
ScalarField canonical_laplacian(const ScalarField& phi, const Model<N>& m) {
  auto hess = dbar_hessian(phi, m);
  ScalarField out(m.geom);
  parallel_for(out.size(), [&](std::size_t p) {
    out[p] = hess.H[p].trace().real();
  });
  check_finite(out, "canonical_laplacian");
  return out;
}

// Pointwise inverse of a positive Hermitian field.
template <int N>
HermitianField<N> herm_inverse_field(const HermitianField<N>& h) {
  HermitianField<N> out(h.geom());
  parallel_for(h.size(), [&](std::size_t p) {
    out[p] = detail::herm_inverse<N>(h[p]);
  });
  return out;
}

template <int N>
double sup_inverse_trace(const GTildeResult<N>& gt) {
  require_positive(gt, "sup_inverse_trace");
  double sup = 0.0;
  for (std::size_t p = 0; p < gt.mat.size(); ++p)
    sup = std::max(sup, detail::herm_inverse<N>(gt.mat[p]).trace().real());
  return sup;
}

// L(u) = gtilde^{ij} (ddbar u)(e_i, ebar_j) = tr(gtilde^{-1} ddbar u); the
// linearization of the log-determinant. Real for Hermitian inputs; the
// imaginary residue is asserted at roundoff level.
template <int N>
ScalarField linearized_L(const ScalarField& u, const HermitianField<N>& gt_inv,
                         const Model<N>& m) {
  auto hess = dbar_hessian(u, m);
  ScalarField out(m.geom);
  parallel_for(out.size(), [&](std::size_t p) {
    out[p] = (gt_inv[p] * hess.H[p]).trace().real();
  });
  check_finite(out, "linearized_L");
  return out;
}

template <int N>
ScalarField linearized_L(const ScalarField& u, const ScalarField& phi,
                         const Model<N>& m) {
  auto gt = g_tilde(phi, m);
  require_positive(gt, "linearized_L");
  return linearized_L(u, herm_inverse_field<N>(gt.mat), m);
}

// |df|^2_gtilde = f^dagger gtilde^{-1} f with f = (e_i(f)); requires a
// positive Hermitian field. Imaginary residue asserted below 1e-13 * scale.
template <int N>
ScalarField gradient_norm_sq(const ScalarField& f, const HermitianField<N>& gt_inv,
                             const Model<N>& m) {
  auto ef = frame_gradient(f, m);
  ScalarField out(f.geom());
  double max_imag = 0.0;
  double max_abs = 0.0;
  for (std::size_t p = 0; p < f.size(); ++p) {
    typename Model<N>::CoefVec v;
    for (int i = 0; i < N; ++i) v[i] = ef[i][p];
    const cplx s = (v.adjoint() * (gt_inv[p] * v))(0, 0);
    out[p] = s.real();
    max_imag = std::max(max_imag, std::abs(s.imag()));
    max_abs = std::max(max_abs, std::abs(s.real()));
  }
  if (max_imag > 1e-13 * (1.0 + max_abs))
    throw NumericError("gradient_norm_sq: Hermitian pairing has imaginary residue " +
                       std::to_string(max_imag));
  check_finite(out, "gradient_norm_sq");
  return out;
}

}  // namespace maflow
