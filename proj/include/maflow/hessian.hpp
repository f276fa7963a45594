#pragma once

#include "maflow/ma_operator.hpp"

namespace maflow {

// Christoffel symbols of the model metric, by finite differences of G.
// Gamma^c_{ab} = 1/2 Ginv^{cd} (d_a G_{db} + d_b G_{da} - d_d G_{ab}).
template <int N>
struct Christoffels {
  static constexpr int D = 2 * N;
  std::array<Field<typename Model<N>::RealMat>, D> gamma;  // gamma[c](a,b)
  bool identically_zero = false;
};

template <int N>
Christoffels<N> compute_christoffels(const Model<N>& m) {
  constexpr int D = 2 * N;
  using RealMat = typename Model<N>::RealMat;
  const GridGeometry& g = m.geom;
  std::array<Field<RealMat>, D> dG;
  for (int d = 0; d < D; ++d) dG[d] = derivative(m.G, d);

  Christoffels<N> ch;
  for (int c = 0; c < D; ++c) ch.gamma[c] = Field<RealMat>(g);
  parallel_for(g.npoints(), [&](std::size_t p) {
    for (int c = 0; c < D; ++c) {
      RealMat out;
      for (int a = 0; a < D; ++a)
        for (int b = 0; b < D; ++b) {
          double s = 0.0;
          for (int d = 0; d < D; ++d)
            s += m.Ginv[p](c, d) *
                 (dG[a][p](d, b) + dG[b][p](d, a) - dG[d][p](a, b));
          out(a, b) = 0.5 * s;
        }
      ch.gamma[c][p] = out;
    }
  });
  double sup = 0.0;
  for (int c = 0; c < D; ++c)
    for (std::size_t p = 0; p < g.npoints(); ++p)
      sup = std::max(sup, ch.gamma[c][p].cwiseAbs().maxCoeff());
  ch.identically_zero = sup <= 1e-14;
  return ch;
}

template <int N>
struct LcHessianResult {
  Field<typename Model<N>::RealMat> hess;  // phi_{;ab}
  ScalarField lambda1;     // largest eigenvalue w.r.t. g
  ScalarField lambda_sum;  // sum of eigenvalues
  ScalarField laplace;     // tr(Ginv hess) = Laplace-Beltrami of phi
};

// Levi-Civita Hessian phi_{;ab} = d_a d_b phi - Gamma^c_{ab} d_c phi with
// eigenvalues taken relative to g (generalized eigenproblem).
template <int N>
LcHessianResult<N> levi_civita_hessian(const ScalarField& phi, const Model<N>& m,
                                       const Christoffels<N>& ch) {
  constexpr int D = 2 * N;
  using RealMat = typename Model<N>::RealMat;
  const GridGeometry& g = m.geom;

  std::array<ScalarField, D> d1;
  for (int a = 0; a < D; ++a) d1[a] = derivative(phi, a);
  // d2[a][b] for a <= b; mixed derivatives shared across the symmetric pair
  std::array<std::array<ScalarField, D>, D> d2;
  for (int a = 0; a < D; ++a) {
    d2[a][a] = second_derivative(phi, a);
    for (int b = a + 1; b < D; ++b) d2[a][b] = derivative(d1[a], b);
  }

  LcHessianResult<N> out;
  out.hess = Field<RealMat>(g);
  out.lambda1 = ScalarField(g);
  out.lambda_sum = ScalarField(g);
  out.laplace = ScalarField(g);
  parallel_for(g.npoints(), [&](std::size_t p) {
    RealMat h;
    for (int a = 0; a < D; ++a)
      for (int b = a; b < D; ++b) {
        double v = d2[a][b][p];
        if (!ch.identically_zero)
          for (int c = 0; c < D; ++c) v -= ch.gamma[c][p](a, b) * d1[c][p];
        h(a, b) = v;
        h(b, a) = v;
      }
    out.hess[p] = h;
    Eigen::GeneralizedSelfAdjointEigenSolver<RealMat> es(h, m.G[p],
                                                         Eigen::EigenvaluesOnly);
    const auto& ev = es.eigenvalues();
    out.lambda1[p] = ev(D - 1);
    out.lambda_sum[p] = ev.sum();
    out.laplace[p] = (m.Ginv[p] * h).trace();
  });
  return out;
}

// ---------------------------------------------------------------------------
// Monitored estimate quantities along a flow (or any (phi, phi_t) pair).

struct MonitorRow {
  double t = 0;
  double sup_phit = 0;     // sup |phi_t|
  double sup_env = 0;      // sup phi_t
  double inf_env = 0;      // inf phi_t
  double osc_phi = 0;      // oscillation of the normalized potential
  double grad_sq_sup = 0;  // sup |d phi|^2_g
  double hess_sup = 0;     // sup lambda_1 of the Levi-Civita Hessian
  double lap_c_min = 0;    // inf canonical Laplacian
  double gtilde_min = 0;
  double theta = 0;  // oscillation of phi_t
  // not part of the CSV record: eigen/trace consistency of the Hessian
  double trace_identity_gap = 0;
};

struct MonitorReport {
  std::vector<MonitorRow> rows;
  double lemma_bound = 0;  // sup|log det ratio(phi_0)| + sup|F|
};

template <int N>
class FlowMonitor {
 public:
  explicit FlowMonitor(const Model<N>& m)
      : model_(&m), christoffels_(compute_christoffels(m)) {}

  MonitorRow row(double t, const ScalarField& phi, const ScalarField& phi_t,
                 double gtilde_min) const {
    const Model<N>& m = *model_;
    MonitorRow r;
    r.t = t;
    r.sup_phit = sup_norm(phi_t);
    r.sup_env = max_value(phi_t);
    r.inf_env = min_value(phi_t);
    r.theta = r.sup_env - r.inf_env;
    r.osc_phi = oscillation(phi);
    r.grad_sq_sup = max_value(gradient_norm_sq(phi, m));
    auto lc = levi_civita_hessian(phi, m, christoffels_);
    r.hess_sup = max_value(lc.lambda1);
    double gap = 0.0;
    for (std::size_t p = 0; p < lc.laplace.size(); ++p)
      gap = std::max(gap, std::abs(lc.lambda_sum[p] - lc.laplace[p]) /
                              (1.0 + std::abs(lc.laplace[p])));
    r.trace_identity_gap = gap;
    r.lap_c_min = min_value(canonical_laplacian(phi, m));
    r.gtilde_min = gtilde_min;
    return r;
  }

  const Christoffels<N>& christoffels() const { return christoffels_; }

 private:
  const Model<N>* model_;
  Christoffels<N> christoffels_;
};

}  // namespace maflow
