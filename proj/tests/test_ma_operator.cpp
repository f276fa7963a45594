#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "oracles.hpp"

using namespace maflow;

namespace {

ScalarField sin1(const GridGeometry& g) {
  return make_scalar_field(g, [](const std::array<double, 4>& x) {
    return std::sin(x[0]);
  });
}

}  // namespace

TEST_CASE("dbar hessian on the flat model", "[ma_operator]") {
  auto m = build_model<1>({ModelKind::FlatIntegrable, 1, {64, 64, 0, 0}});

  SECTION("zero potential gives the zero Hessian exactly") {
    auto h = dbar_hessian(ScalarField(m.geom, 4.2), m);
    for (std::size_t p = 0; p < m.geom.npoints(); ++p)
      CHECK(std::abs(h.H[p](0, 0)) == 0.0);
    CHECK(h.presym_deficit == 0.0);
  }
  SECTION("H(sin x_1) = -sin(x_1)/2 to 4th order") {
    auto h = dbar_hessian(sin1(m.geom), m);
    std::array<double, 4> x{};
    double err = 0.0;
    for (std::size_t p = 0; p < m.geom.npoints(); ++p) {
      m.geom.coords(p, x);
      err = std::max(err, std::abs(h.H[p](0, 0).real() + 0.5 * std::sin(x[0])));
      err = std::max(err, std::abs(h.H[p](0, 0).imag()));
    }
    CHECK(err < 1e-5);
    CHECK(h.presym_deficit < 1e-12);  // nested derivatives commute on flat J
  }
  SECTION("linearity to roundoff") {
    ScalarField phi = sin1(m.geom);
    ScalarField psi = make_scalar_field(m.geom, [](const std::array<double, 4>& x) {
      return std::cos(x[0] + 2.0 * x[1]);
    });
    auto ha = dbar_hessian(phi, m);
    auto hb = dbar_hessian(psi, m);
    ScalarField combo(m.geom);
    for (std::size_t p = 0; p < m.geom.npoints(); ++p)
      combo[p] = 2.0 * phi[p] - 0.5 * psi[p];
    auto hc = dbar_hessian(combo, m);
    double err = 0.0;
    for (std::size_t p = 0; p < m.geom.npoints(); ++p)
      err = std::max(err, std::abs(hc.H[p](0, 0) -
                                   (2.0 * ha.H[p](0, 0) - 0.5 * hb.H[p](0, 0))));
    CHECK(err < 1e-13);
  }
  SECTION("matches the coordinate formula (phi_xx + phi_yy)/2") {
    ScalarField phi = make_scalar_field(m.geom, [](const std::array<double, 4>& x) {
      return 0.4 * std::sin(x[0]) * std::cos(x[1]);
    });
    auto h = dbar_hessian(phi, m);
    ScalarField lap = second_derivative(phi, 0);
    lap += second_derivative(phi, 1);
    double err = 0.0;
    for (std::size_t p = 0; p < m.geom.npoints(); ++p)
      err = std::max(err, std::abs(h.H[p](0, 0).real() - 0.5 * lap[p]));
    CHECK(err < 1e-4);  // both discretizations are 4th order
  }
}

TEST_CASE("dbar hessian n=2 block formula on the flat model", "[ma_operator]") {
  auto m = build_model<2>({ModelKind::FlatIntegrable, 2, {12, 12, 12, 12}});
  ScalarField phi = make_scalar_field(m.geom, [](const std::array<double, 4>& x) {
    return 0.3 * std::sin(x[0]) * std::cos(x[2]) + 0.2 * std::sin(x[1] + x[3]);
  });
  auto h = dbar_hessian(phi, m);

  std::array<ScalarField, 4> d1;
  for (int a = 0; a < 4; ++a) d1[a] = derivative(phi, a);
  auto dd = [&](int a, int b) { return derivative(d1[a], b); };

  // e_1 = (d_0 - i d_1)/sqrt2, e_2 = (d_2 - i d_3)/sqrt2:
  // (ddbar phi)(e_1, ebar_2) = [(D0D2 + D1D3) + i (D0D3 - D1D2)] phi / 2
  ScalarField re = dd(0, 2);
  {
    ScalarField t = dd(1, 3);
    re += t;
  }
  ScalarField im = dd(0, 3);
  {
    ScalarField t = dd(1, 2);
    im -= t;
  }
  double err = 0.0;
  for (std::size_t p = 0; p < m.geom.npoints(); ++p)
    err = std::max(err, std::abs(h.H[p](0, 1) - 0.5 * cplx(re[p], im[p])));
  CHECK(err < 1e-3);  // 12^4 grid, 4th order
}

TEST_CASE("g_tilde", "[ma_operator]") {
  auto m = build_model<1>({ModelKind::FlatIntegrable, 1, {64, 64, 0, 0}});

  SECTION("identity at phi = 0") {
    auto gt = g_tilde(ScalarField(m.geom), m);
    CHECK(gt.min_eig_grid == 1.0);
    for (std::size_t p = 0; p < m.geom.npoints(); p += 33)
      CHECK(std::abs(gt.mat[p](0, 0) - cplx(1.0)) == 0.0);
  }
  SECTION("g_tilde(sin x_1) = 1 - sin(x_1)/2, min close to 1/2") {
    auto gt = g_tilde(sin1(m.geom), m);
    CHECK(gt.min_eig_grid == Catch::Approx(0.5).margin(1e-4));
    std::array<double, 4> x{};
    double err = 0.0;
    for (std::size_t p = 0; p < m.geom.npoints(); ++p) {
      m.geom.coords(p, x);
      err = std::max(err,
                     std::abs(gt.mat[p](0, 0).real() - (1.0 - 0.5 * std::sin(x[0]))));
    }
    CHECK(err < 1e-5);
  }
  SECTION("min eigenvalue invariant under constant shifts") {
    ScalarField phi = sin1(m.geom);
    auto a = g_tilde(phi, m);
    ScalarField shifted = phi;
    shift(shifted, 17.25);
    auto b = g_tilde(shifted, m);
    CHECK(a.min_eig_grid == Catch::Approx(b.min_eig_grid).margin(1e-12));
  }
}

TEST_CASE("log det ratio", "[ma_operator]") {
  auto m = build_model<1>({ModelKind::FlatIntegrable, 1, {64, 64, 0, 0}});

  SECTION("zero at phi = 0") {
    ScalarField r = log_det_ratio(ScalarField(m.geom), m);
    CHECK(sup_norm(r) == 0.0);
  }
  SECTION("log(1 - sin(x_1)/2)") {
    ScalarField r = log_det_ratio(sin1(m.geom), m);
    std::array<double, 4> x{};
    double err = 0.0;
    for (std::size_t p = 0; p < m.geom.npoints(); ++p) {
      m.geom.coords(p, x);
      err = std::max(err, std::abs(r[p] - std::log(1.0 - 0.5 * std::sin(x[0]))));
    }
    CHECK(err < 1e-4);
  }
  SECTION("constant shifts drop out to roundoff") {
    ScalarField phi = sin1(m.geom);
    ScalarField a = log_det_ratio(phi, m);
    ScalarField shifted = phi;
    shift(shifted, -3.5);
    ScalarField b = log_det_ratio(shifted, m);
    double err = 0.0;
    for (std::size_t p = 0; p < m.geom.npoints(); ++p)
      err = std::max(err, std::abs(a[p] - b[p]));
    CHECK(err < 1e-12);
  }
  SECTION("positivity failure reports the first bad point") {
    ScalarField phi = sin1(m.geom);
    phi *= 3.0;  // g_tilde = 1 - 1.5 sin x_1 < 0 somewhere
    CHECK_THROWS_AS(log_det_ratio(phi, m), PositivityError);
    try {
      log_det_ratio(phi, m);
    } catch (const PositivityError& e) {
      CHECK(e.eigenvalue < kEpsPos);
      CHECK(std::string(e.what()).find("point (") != std::string::npos);
    }
  }
}

TEST_CASE("canonical laplacian", "[ma_operator]") {
  auto m = build_model<1>({ModelKind::FlatIntegrable, 1, {64, 64, 0, 0}});

  SECTION("zero potential") {
    CHECK(sup_norm(canonical_laplacian(ScalarField(m.geom), m)) == 0.0);
  }
  SECTION("equals half the coordinate Laplacian on the flat model") {
    ScalarField phi = make_scalar_field(m.geom, [](const std::array<double, 4>& x) {
      return std::sin(x[0]) * std::sin(x[1]);
    });
    ScalarField lc = canonical_laplacian(phi, m);
    ScalarField lap = second_derivative(phi, 0);
    lap += second_derivative(phi, 1);
    double err = 0.0;
    for (std::size_t p = 0; p < m.geom.npoints(); ++p)
      err = std::max(err, std::abs(lc[p] - 0.5 * lap[p]));
    CHECK(err < 1e-4);
  }
  SECTION("bounded below by -n on the admissible cone") {
    ScalarField phi = sin1(m.geom);  // g_tilde = 1 - sin/2 > 0
    auto gt = g_tilde(phi, m);
    REQUIRE(gt.min_eig_grid > kEpsPos);
    ScalarField lc = canonical_laplacian(phi, m);
    CHECK(min_value(lc) > -1.0);
  }
}

TEST_CASE("linearized operator L", "[ma_operator]") {
  auto m = build_model<1>({ModelKind::FlatIntegrable, 1, {64, 64, 0, 0}});

  SECTION("annihilates constants exactly") {
    ScalarField phi = sin1(m.geom);
    phi *= 0.4;
    ScalarField u(m.geom, 7.5);
    ScalarField lu = linearized_L(u, phi, m);
    CHECK(sup_norm(lu) == 0.0);
  }
  SECTION("reduces to the canonical laplacian at phi = 0") {
    ScalarField u = sin1(m.geom);
    ScalarField lu = linearized_L(u, ScalarField(m.geom), m);
    std::array<double, 4> x{};
    double err = 0.0;
    for (std::size_t p = 0; p < m.geom.npoints(); ++p) {
      m.geom.coords(p, x);
      err = std::max(err, std::abs(lu[p] + 0.5 * std::sin(x[0])));
    }
    CHECK(err < 1e-5);
  }
  SECTION("is the directional derivative of the log det ratio") {
    ScalarField phi = make_scalar_field(m.geom, [](const std::array<double, 4>& x) {
      return 0.3 * std::sin(x[0]) * std::cos(x[1]);
    });
    ScalarField u = make_scalar_field(m.geom, [](const std::array<double, 4>& x) {
      return 0.5 * std::cos(x[0]) + 0.2 * std::sin(x[1]);
    });
    ScalarField lu = linearized_L(u, phi, m);
    ScalarField base = log_det_ratio(phi, m);

    std::vector<double> errs;
    for (double s : {1e-3, 1e-4, 1e-5}) {
      ScalarField probe = phi;
      axpy(probe, s, u);
      ScalarField fd = log_det_ratio(probe, m);
      fd -= base;
      fd *= 1.0 / s;
      fd -= lu;
      errs.push_back(sup_norm(fd));
    }
    // first order in the probe step
    CHECK(errs[0] < 1e-2);
    CHECK(errs[1] < errs[0]);
    CHECK(errs[0] / errs[1] == Catch::Approx(10.0).epsilon(0.5));
    CHECK(errs[2] < 2e-5);
  }
}

TEST_CASE("ellipticity: pairing mean(u L(u)) is negative on low modes",
          "[ma_operator]") {
  auto flat = build_model<1>({ModelKind::FlatIntegrable, 1, {32, 32, 0, 0}});
  auto rot = build_model<2>({ModelKind::RotatedJ, 2, {12, 12, 12, 12}, 0.3, 1});

  auto pairing_negative = [](const auto& m, const ScalarField& phi) {
    const GridGeometry& g = m.geom;
    for (int a = 0; a < g.real_dim(); ++a) {
      ScalarField u = make_scalar_field(g, [a](const std::array<double, 4>& x) {
        return std::cos(x[a]);
      });
      ScalarField lu = linearized_L(u, phi, m);
      ScalarField prod(g);
      for (std::size_t p = 0; p < g.npoints(); ++p) prod[p] = u[p] * lu[p];
      const double pair = mean(prod, m.quad);
      INFO("axis " << a << " pairing " << pair);
      CHECK(pair < 0.0);
    }
  };

  pairing_negative(flat, ScalarField(flat.geom));
  pairing_negative(flat, [&] {
    ScalarField phi = sin1(flat.geom);
    phi *= 0.2;
    return phi;
  }());
  pairing_negative(rot, ScalarField(rot.geom));
}

TEST_CASE("log det concavity on random positive Hermitian pairs", "[ma_operator]") {
  std::mt19937_64 rng(20240817);
  std::uniform_real_distribution<double> uni(-0.4, 0.4);
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::Matrix2cd a, b;
    auto fill = [&](Eigen::Matrix2cd& h) {
      const double d0 = 1.0 + uni(rng), d1 = 1.0 + uni(rng);
      const cplx off(0.5 * uni(rng), 0.5 * uni(rng));
      h << cplx(d0), off, std::conj(off), cplx(d1);
    };
    fill(a);
    fill(b);
    if (detail::min_eigenvalue<2>(a) <= 0.05 || detail::min_eigenvalue<2>(b) <= 0.05)
      continue;
    const double lam = 0.3;
    const Eigen::Matrix2cd mid = lam * a + (1.0 - lam) * b;
    const double lhs = detail::herm_log_det<2>(mid);
    const double rhs = lam * detail::herm_log_det<2>(a) +
                       (1.0 - lam) * detail::herm_log_det<2>(b);
    CHECK(lhs >= rhs - 1e-12);
  }
}

TEST_CASE("presymmetrization deficit shrinks under refinement", "[ma_operator][slow]") {
  auto c = build_model<2>({ModelKind::RotatedJ, 2, {8, 8, 8, 8}, 0.3, 1});
  auto f = build_model<2>({ModelKind::RotatedJ, 2, {16, 16, 16, 16}, 0.3, 1});
  auto hc = dbar_hessian(oracles::deficit_probe(c.geom), c);
  auto hf = dbar_hessian(oracles::deficit_probe(f.geom), f);
  INFO("deficit " << hc.presym_deficit << " -> " << hf.presym_deficit);
  CHECK(hf.presym_deficit < hc.presym_deficit / 6.0);
}
