#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "maflow/field.hpp"
#include "maflow/trig.hpp"

namespace maflow {

// Volume-weighted quadrature on the grid; weights sum to ~1 by construction.
struct Quadrature {
  ScalarField weights;
  double total = 0.0;
};

inline double mean(const ScalarField& f, const Quadrature& q) {
  detail::require_same_geom(f.geom(), q.weights.geom(), "mean");
  const double s =
      parallel_sum(f.size(), [&](std::size_t p) { return f[p] * q.weights[p]; });
  return s / q.total;
}

enum class ModelKind { FlatIntegrable, RotatedJ };

struct ModelSpec {
  ModelKind kind = ModelKind::FlatIntegrable;
  int n = 1;
  std::array<int, 4> shape{};
  double amplitude = 0.0;  // rotation angle amplitude (rotated_J only)
  int wave = 1;            // wave number of the rotation angle along x_1

  bool operator==(const ModelSpec&) const = default;
};

// Discrete compact almost Hermitian model (M, omega, J) on a periodic grid:
// pointwise J with J^2 = -I, compatible metric g, a g-unitary frame of
// T^{1,0}M, and the Lie-bracket structure coefficients of that frame.
// Immutable after build_model; safe for concurrent reads.
template <int N>
struct Model {
  static_assert(N == 1 || N == 2, "complex dimension must be 1 or 2");
  static constexpr int kRealDim = 2 * N;

  using RealMat = Eigen::Matrix<double, kRealDim, kRealDim>;
  using HermMat = Eigen::Matrix<cplx, N, N>;
  using FrameMat = Eigen::Matrix<cplx, N, kRealDim>;  // row i = e_i coefficients
  using CoefVec = Eigen::Matrix<cplx, N, 1>;
  using VecC = Eigen::Matrix<cplx, kRealDim, 1>;
  using VecField = Field<VecC>;

  ModelSpec spec;
  GridGeometry geom;
  Field<RealMat> J;
  Field<RealMat> G;
  Field<RealMat> Ginv;
  ScalarField vol;  // density with integral 1
  Quadrature quad;
  Field<FrameMat> frame;
  // brackets01[i][j] : coefficients of [e_i, ebar_j]^{(0,1)} in {ebar_k}
  // brackets10[i][j] : coefficients of [e_i, ebar_j]^{(1,0)} in {e_k}
  std::array<std::array<Field<CoefVec>, N>, N> brackets01;
  std::array<std::array<Field<CoefVec>, N>, N> brackets10;

  bool has_brackets = false;  // flat model: identically zero, skip the term

  typename Model::VecC frame_vector(std::size_t p, int i) const {
    return frame[p].row(i).transpose();
  }
};

// ---------------------------------------------------------------------------
// Complex vector field calculus (coordinate coefficients)

// [X,Y]^a = X^b d_b Y^a - Y^b d_b X^a, derivatives of the coefficient fields
// by 4th-order central differences.
template <int D>
Field<Eigen::Matrix<cplx, D, 1>> lie_bracket(
    const Field<Eigen::Matrix<cplx, D, 1>>& X,
    const Field<Eigen::Matrix<cplx, D, 1>>& Y) {
  detail::require_same_geom(X.geom(), Y.geom(), "lie_bracket");
  const GridGeometry& g = X.geom();
  using Vec = Eigen::Matrix<cplx, D, 1>;
  std::vector<Field<Vec>> dX, dY;
  dX.reserve(D);
  dY.reserve(D);
  for (int b = 0; b < D; ++b) {
    dX.push_back(derivative(X, b));
    dY.push_back(derivative(Y, b));
  }
  Field<Vec> out(g);
  parallel_for(g.npoints(), [&](std::size_t p) {
    Vec acc = Vec::Zero();
    for (int b = 0; b < D; ++b) acc += X[p][b] * dY[b][p] - Y[p][b] * dX[b][p];
    out[p] = acc;
  });
  return out;
}

// (0,1) and (1,0) projections: the -i / +i eigenspace parts of J.
template <int N>
typename Model<N>::VecField project_01(const typename Model<N>::VecField& V,
                                       const Model<N>& m) {
  typename Model<N>::VecField out(V.geom());
  parallel_for(V.size(), [&](std::size_t p) {
    out[p] = 0.5 * (V[p] + cplx(0, 1) * (m.J[p] * V[p]));
  });
  return out;
}

template <int N>
typename Model<N>::VecField project_10(const typename Model<N>::VecField& V,
                                       const Model<N>& m) {
  typename Model<N>::VecField out(V.geom());
  parallel_for(V.size(), [&](std::size_t p) {
    out[p] = 0.5 * (V[p] - cplx(0, 1) * (m.J[p] * V[p]));
  });
  return out;
}

// V(f) = sum_a V^a d_a f for a complex vector field given in coordinates.
template <int N, class T>
ComplexField frame_derivative(const Field<T>& f, const typename Model<N>::VecField& V) {
  detail::require_same_geom(f.geom(), V.geom(), "frame_derivative");
  const GridGeometry& g = f.geom();
  constexpr int D = 2 * N;
  std::vector<Field<T>> df;
  df.reserve(D);
  for (int a = 0; a < D; ++a) df.push_back(derivative(f, a));
  ComplexField out(g);
  parallel_for(g.npoints(), [&](std::size_t p) {
    cplx acc = 0.0;
    for (int a = 0; a < D; ++a) acc += V[p][a] * cplx(df[a][p]);
    out[p] = acc;
  });
  return out;
}

// e_i(f) for all frame vectors at once (shares the coordinate derivatives).
template <int N>
std::array<ComplexField, N> frame_gradient(const ScalarField& f, const Model<N>& m) {
  constexpr int D = 2 * N;
  std::array<ScalarField, D> df;
  for (int a = 0; a < D; ++a) df[a] = derivative(f, a);
  std::array<ComplexField, N> out;
  for (int i = 0; i < N; ++i) out[i] = ComplexField(f.geom());
  parallel_for(f.geom().npoints(), [&](std::size_t p) {
    const auto& E = m.frame[p];
    for (int i = 0; i < N; ++i) {
      cplx acc = 0.0;
      for (int a = 0; a < D; ++a) acc += E(i, a) * df[a][p];
      out[i][p] = acc;
    }
  });
  return out;
}

// |df|^2_g = sum_i |e_i(f)|^2 in the g-unitary frame.
template <int N>
ScalarField gradient_norm_sq(const ScalarField& f, const Model<N>& m) {
  auto ef = frame_gradient(f, m);
  ScalarField out(f.geom());
  parallel_for(f.size(), [&](std::size_t p) {
    double s = 0.0;
    for (int i = 0; i < N; ++i) s += std::norm(ef[i][p]);
    out[p] = s;
  });
  check_finite(out, "gradient_norm_sq");
  return out;
}

// ---------------------------------------------------------------------------
// Model construction

namespace detail {

template <int D>
Eigen::Matrix<double, D, D> standard_j() {
  Eigen::Matrix<double, D, D> j = Eigen::Matrix<double, D, D>::Zero();
  for (int k = 0; k < D / 2; ++k) {
    j(2 * k + 1, 2 * k) = 1.0;   // J d_{2k} = d_{2k+1}
    j(2 * k, 2 * k + 1) = -1.0;  // J d_{2k+1} = -d_{2k}
  }
  return j;
}

// Hermitian pairing <V,W> = g(V, conj W) = V^T G conj(W).
template <class VecC, class RealMat>
cplx herm_pair(const VecC& v, const VecC& w, const RealMat& g) {
  return (v.transpose() * (g * w.conjugate()))(0, 0);
}

}  // namespace detail

template <int N>
Model<N> build_model(const ModelSpec& spec) {
  if (spec.n != N)
    throw ConfigError("build_model: spec.n does not match template dimension");
  if (spec.kind == ModelKind::RotatedJ && N == 1)
    throw ConfigError(
        "build_model: rotated_J requires n=2 (every almost complex structure "
        "in real dimension 2 is integrable)");
  if (spec.amplitude < 0.0)
    throw ConfigError("build_model: amplitude must be >= 0");

  Model<N> m;
  m.spec = spec;
  m.geom = GridGeometry(N, spec.shape);
  const GridGeometry& g = m.geom;
  constexpr int D = 2 * N;
  using RealMat = typename Model<N>::RealMat;
  using VecC = typename Model<N>::VecC;

  m.J = Field<RealMat>(g);
  m.G = Field<RealMat>(g);
  m.Ginv = Field<RealMat>(g);
  m.vol = ScalarField(g);

  const RealMat j0 = detail::standard_j<D>();
  const bool rotated = spec.kind == ModelKind::RotatedJ;

  std::array<double, 4> x{};
  for (std::size_t p = 0; p < g.npoints(); ++p) {
    RealMat jp;
    if (!rotated || spec.amplitude == 0.0) {
      jp = j0;
    } else {
      g.coords(p, x);
      const double th = spec.amplitude * std::sin(spec.wave * x[0]);
      // rotation by th in the (d_2, d_3) coordinate plane
      RealMat rot = RealMat::Identity();
      rot(1, 1) = std::cos(th);
      rot(1, 2) = -std::sin(th);
      rot(2, 1) = std::sin(th);
      rot(2, 2) = std::cos(th);
      jp = rot * j0 * rot.transpose();
    }
    m.J[p] = jp;
    // compatible metric by averaging the flat metric h = Id
    RealMat gp = 0.5 * (RealMat::Identity() + jp.transpose() * jp);
    Eigen::SelfAdjointEigenSolver<RealMat> es(gp);
    if (es.eigenvalues().minCoeff() < 1e-8)
      throw InvariantViolation("build_model: metric not positive definite at " +
                               g.point_string(p));
    m.G[p] = gp;
    m.Ginv[p] = gp.inverse();
    m.vol[p] = std::sqrt(gp.determinant());
  }

  // normalize the volume density to total integral 1
  double cell = 1.0;
  for (int a = 0; a < D; ++a) cell *= g.spacing(a);
  const double z =
      parallel_sum(g.npoints(), [&](std::size_t p) { return m.vol[p] * cell; });
  parallel_for(g.npoints(), [&](std::size_t p) { m.vol[p] /= z; });
  m.quad.weights = ScalarField(g);
  parallel_for(g.npoints(), [&](std::size_t p) { m.quad.weights[p] = m.vol[p] * cell; });
  m.quad.total = parallel_sum(g.npoints(), [&](std::size_t p) { return m.quad.weights[p]; });

  // unitary frame: (1,0)-projections of d_0, d_2, ... then Gram-Schmidt in
  // that order under the Hermitian pairing g(V, conj W)
  m.frame = Field<typename Model<N>::FrameMat>(g);
  parallel_for(g.npoints(), [&](std::size_t p) {
    const RealMat& jp = m.J[p];
    const RealMat& gp = m.G[p];
    std::array<VecC, N> e;
    for (int i = 0; i < N; ++i) {
      VecC raw = VecC::Zero();
      raw[2 * i] = 1.0;
      VecC v = 0.5 * (raw - cplx(0, 1) * (jp * raw));
      for (int k = 0; k < i; ++k) v -= detail::herm_pair(v, e[k], gp) * e[k];
      const double nrm2 = detail::herm_pair(v, v, gp).real();
      if (!(nrm2 > 1e-12))
        throw InvariantViolation("build_model: degenerate frame at " +
                                 g.point_string(p));
      e[i] = v / std::sqrt(nrm2);
    }
    for (int i = 0; i < N; ++i) m.frame[p].row(i) = e[i].transpose();
  });

  // bracket structure coefficients of the frame
  std::array<Field<typename Model<N>::FrameMat>, D> dframe;
  for (int b = 0; b < D; ++b) dframe[b] = derivative(m.frame, b);
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) {
      m.brackets01[i][j] = Field<typename Model<N>::CoefVec>(g);
      m.brackets10[i][j] = Field<typename Model<N>::CoefVec>(g);
    }
  double bracket_sup = 0.0;
  for (int i = 0; i < N; ++i) {
    for (int j = 0; j < N; ++j) {
      auto& b01 = m.brackets01[i][j];
      auto& b10 = m.brackets10[i][j];
      parallel_for(g.npoints(), [&](std::size_t p) {
        const auto& E = m.frame[p];
        VecC x = E.row(i).transpose();
        VecC y = E.row(j).transpose().conjugate();
        VecC br = VecC::Zero();
        for (int b = 0; b < D; ++b) {
          const VecC dyb = dframe[b][p].row(j).transpose().conjugate();
          const VecC dxb = dframe[b][p].row(i).transpose();
          br += x[b] * dyb - y[b] * dxb;
        }
        const RealMat& jp = m.J[p];
        const RealMat& gp = m.G[p];
        const VecC br01 = 0.5 * (br + cplx(0, 1) * (jp * br));
        const VecC br10 = 0.5 * (br - cplx(0, 1) * (jp * br));
        for (int k = 0; k < N; ++k) {
          const VecC ek = E.row(k).transpose();
          b01[p][k] = (br01.transpose() * (gp * ek))(0, 0);
          b10[p][k] = (br10.transpose() * (gp * ek.conjugate()))(0, 0);
        }
      });
      for (std::size_t p = 0; p < g.npoints(); ++p)
        bracket_sup = std::max(bracket_sup, b01[p].cwiseAbs().maxCoeff());
    }
  }
  m.has_brackets = bracket_sup > 1e-13;
  return m;
}

// ---------------------------------------------------------------------------
// Nijenhuis tensor: N(X,Y) = [JX,JY] - J[JX,Y] - J[X,JY] - [X,Y], evaluated
// on the coordinate frame pairs; returns the pointwise g-norm aggregate.

template <int N>
struct NijenhuisResult {
  ScalarField field;
  double sup = 0.0;
};

template <int N>
NijenhuisResult<N> nijenhuis_norm(const Model<N>& m) {
  const GridGeometry& g = m.geom;
  constexpr int D = 2 * N;
  using VecC = typename Model<N>::VecC;
  using VecField = typename Model<N>::VecField;

  std::array<VecField, D> basis;   // constant coordinate fields
  std::array<VecField, D> jbasis;  // J d_a
  for (int a = 0; a < D; ++a) {
    VecC unit = VecC::Zero();
    unit[a] = 1.0;
    basis[a] = VecField(g, unit);
    jbasis[a] = VecField(g);
    parallel_for(g.npoints(), [&](std::size_t p) {
      jbasis[a][p] = m.J[p].col(a).template cast<cplx>();
    });
  }

  ScalarField acc(g);
  for (int a = 0; a < D; ++a) {
    for (int b = a + 1; b < D; ++b) {
      VecField t1 = lie_bracket<D>(jbasis[a], jbasis[b]);
      VecField t2 = lie_bracket<D>(jbasis[a], basis[b]);
      VecField t3 = lie_bracket<D>(basis[a], jbasis[b]);
      // [d_a, d_b] = 0 for coordinate fields
      parallel_for(g.npoints(), [&](std::size_t p) {
        const VecC nij = t1[p] - m.J[p] * t2[p] - m.J[p] * t3[p];
        acc[p] += (nij.transpose() * (m.G[p] * nij.conjugate()))(0, 0).real();
      });
    }
  }
  NijenhuisResult<N> out;
  out.field = ScalarField(g);
  parallel_for(g.npoints(), [&](std::size_t p) {
    out.field[p] = std::sqrt(std::max(0.0, acc[p]));
  });
  out.sup = max_value(out.field);
  return out;
}

// ---------------------------------------------------------------------------
// Invariant suite (shared by tests and the verify-model command)

struct CheckResult {
  std::string name;
  bool ok = false;
  double measured = 0.0;
  double threshold = 0.0;
  std::string location;
};

template <int N>
std::vector<CheckResult> check_model_invariants(const Model<N>& m) {
  const GridGeometry& g = m.geom;
  constexpr int D = 2 * N;
  using RealMat = typename Model<N>::RealMat;
  std::vector<CheckResult> out;

  auto record = [&](const std::string& name, double measured, double threshold,
                    std::size_t worst_p, bool ok_is_below = true) {
    CheckResult r;
    r.name = name;
    r.measured = measured;
    r.threshold = threshold;
    r.ok = ok_is_below ? measured <= threshold : measured >= threshold;
    r.location = g.point_string(worst_p);
    out.push_back(r);
  };

  auto sup_scan = [&](auto&& eval) {
    double worst = -1.0;
    std::size_t worst_p = 0;
    for (std::size_t p = 0; p < g.npoints(); ++p) {
      const double v = eval(p);
      if (v > worst) {
        worst = v;
        worst_p = p;
      }
    }
    return std::pair<double, std::size_t>(worst, worst_p);
  };

  {
    auto [v, p] = sup_scan([&](std::size_t p) {
      return (m.J[p] * m.J[p] + RealMat::Identity()).cwiseAbs().maxCoeff();
    });
    record("J_squared_is_minus_identity", v, 1e-12, p);
  }
  {
    auto [v, p] = sup_scan([&](std::size_t p) {
      return (m.J[p].transpose() * m.G[p] * m.J[p] - m.G[p]).cwiseAbs().maxCoeff();
    });
    record("metric_J_compatibility", v, 1e-12, p);
  }
  {
    double worst = std::numeric_limits<double>::infinity();
    std::size_t worst_p = 0;
    for (std::size_t p = 0; p < g.npoints(); ++p) {
      Eigen::SelfAdjointEigenSolver<RealMat> es(m.G[p]);
      const double v = es.eigenvalues().minCoeff();
      if (v < worst) {
        worst = v;
        worst_p = p;
      }
    }
    CheckResult r;
    r.name = "metric_positive_definite";
    r.measured = worst;
    r.threshold = 1e-8;
    r.ok = worst >= 1e-8;
    r.location = g.point_string(worst_p);
    out.push_back(r);
  }
  {
    auto [v, p] = sup_scan([&](std::size_t p) {
      const auto& E = m.frame[p];
      Eigen::Matrix<cplx, N, N> gram = E * m.G[p].template cast<cplx>() * E.adjoint();
      return (gram - Eigen::Matrix<cplx, N, N>::Identity()).cwiseAbs().maxCoeff();
    });
    record("frame_unitarity", v, 1e-10, p);
  }
  {
    auto [v, p] = sup_scan([&](std::size_t p) {
      const auto& E = m.frame[p];
      double worst = 0.0;
      for (int i = 0; i < N; ++i) {
        auto e = E.row(i).transpose();
        worst = std::max(worst,
                         (m.J[p].template cast<cplx>() * e - cplx(0, 1) * e)
                             .cwiseAbs()
                             .maxCoeff());
      }
      return worst;
    });
    record("frame_eigenproperty", v, 1e-10, p);
  }
  {
    // omega(V,W) = g(JV, W): antisymmetry and J-invariance on the
    // coordinate frame
    auto [v, p] = sup_scan([&](std::size_t p) {
      const RealMat omega = m.J[p].transpose() * m.G[p];
      const double antisym = (omega + omega.transpose()).cwiseAbs().maxCoeff();
      const double jinv =
          (m.J[p].transpose() * omega * m.J[p] - omega).cwiseAbs().maxCoeff();
      return std::max(antisym, jinv);
    });
    record("omega_antisymmetric_J_invariant", v, 1e-12, p);
  }
  {
    // conj([e_i, ebar_j])^{(1,0)} = -[e_j, ebar_i]^{(1,0)} in coefficients
    double worst = 0.0;
    std::size_t worst_p = 0;
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < N; ++j)
        for (std::size_t p = 0; p < g.npoints(); ++p) {
          const double v = (m.brackets10[j][i][p] +
                            m.brackets01[i][j][p].conjugate())
                               .cwiseAbs()
                               .maxCoeff();
          if (v > worst) {
            worst = v;
            worst_p = p;
          }
        }
    record("bracket_conjugation_symmetry", worst, 1e-10, worst_p);
  }
  {
    CheckResult r;
    r.name = "unit_total_volume";
    r.measured = std::abs(m.quad.total - 1.0);
    r.threshold = 1e-12;
    r.ok = r.measured <= r.threshold;
    r.location = "-";
    out.push_back(r);
  }
  return out;
}

}  // namespace maflow
