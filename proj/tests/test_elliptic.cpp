#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"

using namespace maflow;

namespace {

ScalarField phi_star(const GridGeometry& g, double amp = 0.3) {
  return make_scalar_field(g, [amp](const std::array<double, 4>& x) {
    return amp * std::sin(x[0]) * std::cos(x[1]);
  });
}

}  // namespace

TEST_CASE("manufactured forcing", "[elliptic]") {
  auto m = build_model<1>({ModelKind::FlatIntegrable, 1, {32, 32, 0, 0}});

  SECTION("zero potential gives zero forcing") {
    CHECK(sup_norm(manufactured_F(ScalarField(m.geom), m)) == 0.0);
  }
  SECTION("closed form F = log(1 + H(phi*))") {
    ScalarField ps = phi_star(m.geom, 0.5);
    ScalarField F = manufactured_F(ps, m);
    auto h = dbar_hessian(ps, m);
    double err = 0.0;
    for (std::size_t p = 0; p < m.geom.npoints(); ++p)
      err = std::max(err, std::abs(F[p] - std::log(1.0 + h.H[p](0, 0).real())));
    CHECK(err < 1e-14);
  }
  SECTION("mean shifts of phi* drop out to roundoff") {
    ScalarField ps = phi_star(m.geom);
    ScalarField a = manufactured_F(ps, m);
    shift(ps, 42.0);
    ScalarField b = manufactured_F(ps, m);
    double err = 0.0;
    for (std::size_t p = 0; p < m.geom.npoints(); ++p)
      err = std::max(err, std::abs(a[p] - b[p]));
    CHECK(err < 1e-11);
  }
}

TEST_CASE("elliptic residual identities", "[elliptic]") {
  auto m = build_model<1>({ModelKind::FlatIntegrable, 1, {32, 32, 0, 0}});
  ScalarField ps = phi_star(m.geom);
  ScalarField F = manufactured_F(ps, m);

  SECTION("the manufactured pair solves the equation") {
    ScalarField r = residual(ps, 0.0, F, m);
    CHECK(sup_norm(r) == 0.0);  // same arithmetic path
  }
  SECTION("b enters affinely") {
    ScalarField r1 = residual(ps, 0.7, F, m);
    ScalarField r0 = residual(ps, 0.0, F, m);
    double err = 0.0;
    for (std::size_t p = 0; p < m.geom.npoints(); ++p)
      err = std::max(err, std::abs((r1[p] - r0[p]) + 0.7));
    CHECK(err < 1e-15);
  }
  SECTION("the integral formula centers the residual") {
    ScalarField phi = phi_star(m.geom, 0.2);
    ScalarField ldr = log_det_ratio(phi, m);
    ScalarField diff = ldr;
    diff -= F;
    const double b_integral = mean(diff, m.quad);
    ScalarField r = residual(phi, b_integral, F, m);
    CHECK(std::abs(mean(r, m.quad)) < 1e-12);
  }
}

TEST_CASE("newton solver on trivial data", "[elliptic]") {
  auto m = build_model<1>({ModelKind::FlatIntegrable, 1, {32, 32, 0, 0}});

  SECTION("F = 0 converges instantly") {
    auto sol = newton_solve(ScalarField(m.geom), m);
    CHECK(sol.converged);
    CHECK(sol.iterations == 0);
    CHECK(sol.b == 0.0);
    CHECK(sup_norm(sol.phi) == 0.0);
  }
  SECTION("constant F is absorbed by b") {
    auto sol = newton_solve(ScalarField(m.geom, 1.6), m);
    CHECK(sol.converged);
    CHECK(sol.iterations <= 1);
    CHECK(sol.b == Catch::Approx(-1.6).margin(1e-12));
    CHECK(sup_norm(sol.phi) < 1e-12);
  }
}

TEST_CASE("newton recovers the manufactured solution", "[elliptic]") {
  auto m = build_model<1>({ModelKind::FlatIntegrable, 1, {32, 32, 0, 0}});
  ScalarField ps = phi_star(m.geom);
  ScalarField F = manufactured_F(ps, m);
  EllipticConfig cfg;
  auto sol = newton_solve(F, m, cfg);

  REQUIRE(sol.converged);
  CHECK(sol.residual_sup <= cfg.tol);
  CHECK(std::abs(sol.b) <= cfg.tol * 10.0);

  ScalarField target = ps;
  shift(target, -mean(ps, m.quad));
  double err = 0.0;
  for (std::size_t p = 0; p < m.geom.npoints(); ++p)
    err = std::max(err, std::abs(sol.phi[p] - target[p]));
  CHECK(err < cfg.tol * 100.0);
  CHECK(std::abs(mean(sol.phi, m.quad)) < 1e-13);

  SECTION("residual history is strictly decreasing") {
    for (std::size_t k = 1; k < sol.log.size(); ++k)
      CHECK(sol.log[k].residual_sup < sol.log[k - 1].residual_sup);
  }
}

TEST_CASE("newton converges at 4th order with continuum forcing",
          "[elliptic][slow]") {
  // the discrete solutions approach the analytic phi* as the grid refines
  std::vector<double> errs;
  for (int s : {32, 64}) {
    auto m = build_model<1>({ModelKind::FlatIntegrable, 1, {s, s, 0, 0}});
    ScalarField F = make_scalar_field(m.geom, [](const std::array<double, 4>& x) {
      return std::log(1.0 - 0.3 * std::sin(x[0]) * std::cos(x[1]));
    });
    auto sol = newton_solve(F, m);
    REQUIRE(sol.converged);
    ScalarField ps = phi_star(m.geom);
    shift(ps, -mean(ps, m.quad));
    double err = 0.0;
    for (std::size_t p = 0; p < m.geom.npoints(); ++p)
      err = std::max(err, std::abs(sol.phi[p] - ps[p]));
    errs.push_back(err);
  }
  const double rate = oracles::two_point_rate(errs[0], errs[1], 2.0);
  INFO("errors " << errs[0] << " -> " << errs[1] << ", rate " << rate);
  CHECK(rate > 3.5);
  CHECK(rate < 4.5);
}

TEST_CASE("newton on the non-integrable model makes progress", "[elliptic][slow]") {
  auto m = build_model<2>({ModelKind::RotatedJ, 2, {8, 8, 8, 8}, 0.3, 1});
  ScalarField F = make_scalar_field(m.geom, [](const std::array<double, 4>& x) {
    return 0.3 * std::sin(x[0] + x[3]) + 0.2 * std::cos(x[1] - x[2]);
  });
  // coarse grids have a genuine aliasing floor; ask only for what is there
  EllipticConfig cfg;
  cfg.tol = 5e-4;
  auto sol = newton_solve(F, m, cfg);
  INFO("residual " << sol.residual_sup << " after " << sol.iterations);
  CHECK(sol.converged);
  CHECK(sol.residual_sup < 5e-4);
  CHECK(sup_norm(sol.phi) > 0.01);  // genuinely nontrivial solution
  for (std::size_t k = 1; k < sol.log.size(); ++k)
    CHECK(sol.log[k].residual_sup < sol.log[k - 1].residual_sup);
}

TEST_CASE("newton reports max_iter exhaustion honestly", "[elliptic]") {
  auto m = build_model<1>({ModelKind::FlatIntegrable, 1, {32, 32, 0, 0}});
  ScalarField F = manufactured_F(phi_star(m.geom), m);
  EllipticConfig cfg;
  cfg.max_iter = 2;
  auto sol = newton_solve(F, m, cfg);
  CHECK_FALSE(sol.converged);
  CHECK(sol.message == "max_iter exhausted");
  CHECK(sol.residual_sup > cfg.tol);
}
