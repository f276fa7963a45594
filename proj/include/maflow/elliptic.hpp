#pragma once

#include "maflow/ma_operator.hpp"

namespace maflow {

// F such that (phi_star - mean(phi_star), b = 0) solves the elliptic problem.
template <int N>
ScalarField manufactured_F(const ScalarField& phi_star, const Model<N>& m) {
  return log_det_ratio(phi_star, m);
}

// log det ratio(phi) - F - b
template <int N>
ScalarField residual(const ScalarField& phi, double b, const ScalarField& F,
                     const Model<N>& m) {
  ScalarField r = log_det_ratio(phi, m);
  r -= F;
  shift(r, -b);
  return r;
}

struct EllipticConfig {
  double tol = 1e-10;
  int max_iter = 50;
  double krylov_forcing = 1e-3;  // relative tolerance of the inner solve
  int krylov_max_iter = 900;

  bool operator==(const EllipticConfig&) const = default;
};

struct NewtonIterationRow {
  int iter = 0;
  double residual_sup = 0.0;
  double step_length = 0.0;
  double b = 0.0;
};

struct EllipticSolution {
  ScalarField phi;  // volume mean zero
  double b = 0.0;
  double residual_sup = 0.0;
  int iterations = 0;
  bool converged = false;
  std::string message;
  std::vector<NewtonIterationRow> log;
};

namespace detail {

// The nested first-derivative stencils annihilate the per-axis Nyquist
// parity modes exactly, so the discrete equation cannot see them; they are
// gauge freedom, and the Krylov basis can amplify roundoff noise there
// without changing the residual. Fix the gauge by projecting them to zero.
template <int N>
void remove_parity_nulls(ScalarField& f) {
  const GridGeometry& g = f.geom();
  constexpr int D = 2 * N;
  const double inv_n = 1.0 / static_cast<double>(g.npoints());
  std::array<int, 4> idx{};
  for (int mask = 1; mask < (1 << D); ++mask) {
    double acc = 0.0;
    for (std::size_t p = 0; p < g.npoints(); ++p) {
      g.multi_index(p, idx);
      int bits = 0;
      for (int a = 0; a < D; ++a)
        if (mask & (1 << a)) bits ^= idx[a] & 1;
      acc += bits ? -f[p] : f[p];
    }
    acc *= inv_n;
    if (acc == 0.0) continue;
    for (std::size_t p = 0; p < g.npoints(); ++p) {
      g.multi_index(p, idx);
      int bits = 0;
      for (int a = 0; a < D; ++a)
        if (mask & (1 << a)) bits ^= idx[a] & 1;
      f[p] -= bits ? -acc : acc;
    }
  }
}

// Unknown vector of the bordered system: a grid field plus the constant b.
struct BorderedVec {
  ScalarField f;
  double s = 0.0;
};

inline double bdot(const BorderedVec& a, const BorderedVec& b) {
  const double fdot =
      parallel_sum(a.f.size(), [&](std::size_t p) { return a.f[p] * b.f[p]; });
  return fdot + a.s * b.s;
}

inline void baxpy(BorderedVec& y, double c, const BorderedVec& x) {
  parallel_for(y.f.size(), [&](std::size_t p) { y.f[p] += c * x.f[p]; });
  y.s += c * x.s;
}

inline double bnorm(const BorderedVec& a) { return std::sqrt(bdot(a, a)); }

// Diagonal of the linearized operator: per-axis second-derivative diagonal of
// the nested 4th-order stencil is -(65/72)/h^2, weighted by the frame/metric
// coefficient of d_a d_a in L.
template <int N>
ScalarField jacobi_diagonal(const HermitianField<N>& gt_inv, const Model<N>& m) {
  constexpr int D = 2 * N;
  const GridGeometry& g = m.geom;
  std::array<double, D> hw;
  for (int a = 0; a < D; ++a) {
    const double h = g.spacing(a);
    hw[a] = (65.0 / 72.0) / (h * h);
  }
  ScalarField diag(g);
  parallel_for(g.npoints(), [&](std::size_t p) {
    const auto& E = m.frame[p];
    double d = 0.0;
    for (int a = 0; a < D; ++a) {
      const auto u = E.col(a);
      d += hw[a] * (u.adjoint() * (gt_inv[p] * u))(0, 0).real();
    }
    diag[p] = -d;
  });
  return diag;
}

// Matrix-free restarted GMRES on the bordered system
//   [ L   -1 ] [dphi]   [rhs_f]
//   [ w^T  0 ] [ db ] = [rhs_s]
// with right Jacobi preconditioning of the field block. The minimum-residual
// property keeps the iteration monotone even though the nested-stencil L has
// near-null high-frequency modes. Returns the achieved relative residual.
template <int N>
double bordered_gmres(const HermitianField<N>& gt_inv, const Model<N>& m,
                      const BorderedVec& rhs, BorderedVec& x, double rel_tol,
                      int max_iter, int restart = 60) {
  const GridGeometry& g = m.geom;
  const ScalarField diag = jacobi_diagonal(gt_inv, m);

  auto apply = [&](const BorderedVec& v) {
    BorderedVec out;
    out.f = linearized_L(v.f, gt_inv, m);
    parallel_for(out.f.size(), [&](std::size_t p) { out.f[p] -= v.s; });
    out.s = mean(v.f, m.quad);
    return out;
  };
  auto precondition = [&](const BorderedVec& v) {
    BorderedVec out;
    out.f = ScalarField(g);
    parallel_for(out.f.size(), [&](std::size_t p) { out.f[p] = v.f[p] / diag[p]; });
    out.s = v.s;
    return out;
  };

  x.f = ScalarField(g);
  x.s = 0.0;
  const double bnrm = bnorm(rhs);
  if (bnrm == 0.0) return 0.0;

  BorderedVec r = rhs;  // r = rhs - A x with x = 0
  double beta = bnrm;
  int total = 0;

  std::vector<BorderedVec> basis;
  std::vector<double> hess((restart + 1) * restart, 0.0);
  auto H = [&](int i, int j) -> double& { return hess[i * restart + j]; };

  while (beta > rel_tol * bnrm && total < max_iter) {
    basis.clear();
    std::fill(hess.begin(), hess.end(), 0.0);
    BorderedVec v0 = r;
    const double inv_beta = 1.0 / beta;
    parallel_for(v0.f.size(), [&](std::size_t p) { v0.f[p] *= inv_beta; });
    v0.s *= inv_beta;
    basis.push_back(std::move(v0));

    std::vector<double> gvec(restart + 1, 0.0), cs(restart, 0.0), sn(restart, 0.0);
    gvec[0] = beta;
    int j = 0;
    for (; j < restart && total < max_iter; ++j, ++total) {
      BorderedVec w = apply(precondition(basis[j]));
      for (int i = 0; i <= j; ++i) {
        H(i, j) = bdot(w, basis[i]);
        baxpy(w, -H(i, j), basis[i]);
      }
      H(j + 1, j) = bnorm(w);
      if (H(j + 1, j) > 1e-300) {
        const double inv = 1.0 / H(j + 1, j);
        parallel_for(w.f.size(), [&](std::size_t p) { w.f[p] *= inv; });
        w.s *= inv;
        basis.push_back(std::move(w));
      }
      for (int i = 0; i < j; ++i) {
        const double t = cs[i] * H(i, j) + sn[i] * H(i + 1, j);
        H(i + 1, j) = -sn[i] * H(i, j) + cs[i] * H(i + 1, j);
        H(i, j) = t;
      }
      const double denom = std::hypot(H(j, j), H(j + 1, j));
      cs[j] = H(j, j) / denom;
      sn[j] = H(j + 1, j) / denom;
      H(j, j) = denom;
      H(j + 1, j) = 0.0;
      gvec[j + 1] = -sn[j] * gvec[j];
      gvec[j] = cs[j] * gvec[j];
      if (std::abs(gvec[j + 1]) <= rel_tol * bnrm) {
        ++j;
        ++total;
        break;
      }
      if (static_cast<int>(basis.size()) == j + 1) {  // lucky breakdown
        ++j;
        ++total;
        break;
      }
    }
    // back substitution for the inner least squares
    std::vector<double> y(j, 0.0);
    for (int i = j - 1; i >= 0; --i) {
      double s = gvec[i];
      for (int k = i + 1; k < j; ++k) s -= H(i, k) * y[k];
      y[i] = s / H(i, i);
    }
    BorderedVec z{ScalarField(g), 0.0};
    for (int i = 0; i < j; ++i) baxpy(z, y[i], basis[i]);
    const BorderedVec dz = precondition(z);
    baxpy(x, 1.0, dz);

    r = rhs;
    const BorderedVec ax = apply(x);
    baxpy(r, -1.0, ax);
    beta = bnorm(r);
  }
  return beta / bnrm;
}

}  // namespace detail

// Damped Newton iteration on R(phi, b) = log det ratio(phi) - F - b with the
// constraint mean(phi) = 0; the constant b is a genuine solver unknown of the
// bordered linear system. Line search backtracks until g-tilde stays positive
// and the sup residual decreases.
template <int N>
EllipticSolution newton_solve(const ScalarField& F, const Model<N>& m,
                              const EllipticConfig& cfg = {}) {
  const GridGeometry& g = m.geom;
  EllipticSolution sol;
  sol.phi = ScalarField(g);
  {
    ScalarField r0 = residual(sol.phi, 0.0, F, m);
    sol.b = mean(r0, m.quad);
  }
  ScalarField R = residual(sol.phi, sol.b, F, m);
  sol.residual_sup = sup_norm(R);
  sol.log.push_back({0, sol.residual_sup, 0.0, sol.b});

  for (int it = 1; it <= cfg.max_iter; ++it) {
    if (sol.residual_sup <= cfg.tol) {
      sol.converged = true;
      sol.iterations = it - 1;
      return sol;
    }
    auto gt = g_tilde(sol.phi, m);
    require_positive(gt, "newton_solve");
    const auto gt_inv = herm_inverse_field<N>(gt.mat);

    detail::BorderedVec rhs;
    rhs.f = R;
    rhs.f *= -1.0;
    rhs.s = 0.0;
    detail::BorderedVec delta;
    detail::bordered_gmres(gt_inv, m, rhs, delta, cfg.krylov_forcing,
                           cfg.krylov_max_iter);
    detail::remove_parity_nulls<N>(delta.f);

    double step_len = 0.0;
    bool accepted = false;
    for (double s = 1.0; s >= std::ldexp(1.0, -30); s *= 0.5) {
      ScalarField phi_try = sol.phi;
      axpy(phi_try, s, delta.f);
      shift(phi_try, -mean(phi_try, m.quad));
      const double b_try = sol.b + s * delta.s;
      try {
        ScalarField R_try = residual(phi_try, b_try, F, m);
        const double rs_try = sup_norm(R_try);
        if (rs_try < sol.residual_sup) {
          sol.phi = std::move(phi_try);
          sol.b = b_try;
          R = std::move(R_try);
          sol.residual_sup = rs_try;
          step_len = s;
          accepted = true;
          break;
        }
      } catch (const PositivityError&) {
        // step leaves the admissible cone; keep backtracking
      }
    }
    if (!accepted) {
      sol.iterations = it;
      sol.converged = false;
      sol.message = "line search failed at residual_sup = " +
                    std::to_string(sol.residual_sup);
      return sol;
    }
    sol.log.push_back({it, sol.residual_sup, step_len, sol.b});
    sol.iterations = it;
  }
  sol.converged = sol.residual_sup <= cfg.tol;
  if (!sol.converged) sol.message = "max_iter exhausted";
  return sol;
}

}  // namespace maflow
