#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <random>

#include "maflow/cli.hpp"

using namespace maflow;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() /
                   ("maflow_io_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

ExperimentConfig sample_config() {
  ExperimentConfig c;
  c.seed = 42;
  c.model = {ModelKind::RotatedJ, 2, {12, 12, 16, 16}, 0.3, 2};
  c.F.kind = FieldRecipe::Kind::Trig;
  c.F.terms.terms = {{0.25, true, {1, 0, 0, 1}}, {-0.125, false, {0, 2, 1, 0}}};
  c.phi0.kind = FieldRecipe::Kind::Constant;
  c.phi0.constant = 0.75;
  c.flow.t_final = 37.5;
  c.flow.conv_tol = 2e-9;
  c.flow.cfl_safety = 0.35;
  c.elliptic.tol = 3e-9;
  c.diag.harnack = {{1.0 / 3.0, 2.0, 0.5, 1.0}, {0.25, 3.0, 0.25, 0.75}};
  c.diag.harnack_m = {1, 2};
  c.out_dir = "results/run_a";
  return c;
}

}  // namespace

TEST_CASE("field dumps round-trip bit exactly", "[io]") {
  TempDir tmp;
  GridGeometry g(1, {16, 8, 0, 0});

  SECTION("scalar fields") {
    ScalarField f(g);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> uni(-5.0, 5.0);
    for (std::size_t p = 0; p < g.npoints(); ++p) f[p] = std::exp(uni(rng));
    f[3] = -0.0;
    f[5] = std::numeric_limits<double>::denorm_min();
    write_field(tmp.path / "f.field", f);
    ScalarField r = read_field<double>(tmp.path / "f.field");
    REQUIRE(r.geom() == g);
    for (std::size_t p = 0; p < g.npoints(); ++p)
      CHECK(std::memcmp(&r[p], &f[p], sizeof(double)) == 0);
  }
  SECTION("hermitian matrix fields") {
    Field<Eigen::Matrix2cd> h(GridGeometry(2, {8, 8, 8, 8}));
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    for (std::size_t p = 0; p < h.size(); ++p)
      h[p] << cplx(uni(rng), uni(rng)), cplx(uni(rng), uni(rng)),
          cplx(uni(rng), uni(rng)), cplx(uni(rng), uni(rng));
    write_field(tmp.path / "h.field", h);
    auto r = read_field<Eigen::Matrix2cd>(tmp.path / "h.field");
    for (std::size_t p = 0; p < h.size(); ++p)
      CHECK((r[p].array() == h[p].array()).all());
  }
  SECTION("component count mismatch is rejected") {
    ScalarField f(g, 1.0);
    write_field(tmp.path / "f.field", f);
    CHECK_THROWS_AS(read_field<cplx>(tmp.path / "f.field"), IoError);
  }
  SECTION("bad magic is rejected") {
    std::ofstream out(tmp.path / "bad.field", std::ios::binary);
    out << "NOTMAFLOW 1 8 8 1\n";
    out.close();
    CHECK_THROWS_AS(read_field<double>(tmp.path / "bad.field"), IoError);
  }
  SECTION("truncated payload is rejected") {
    ScalarField f(g, 2.0);
    write_field(tmp.path / "f.field", f);
    fs::resize_file(tmp.path / "f.field", 64);
    CHECK_THROWS_AS(read_field<double>(tmp.path / "f.field"), IoError);
  }
}

TEST_CASE("manifests and hex floats", "[io]") {
  TempDir tmp;
  Manifest m;
  m.add("alpha", fmt_g17(0.1 + 0.2));
  m.add("t_hex", fmt_hex(3.14159265358979312));
  m.add("note", "plain text value");
  write_manifest(tmp.path / "m.txt", m);
  Manifest r = read_manifest(tmp.path / "m.txt");
  CHECK(parse_double(r.at("alpha")) == 0.1 + 0.2);
  CHECK(parse_double(r.at("t_hex")) == 3.14159265358979312);
  CHECK(r.at("note") == "plain text value");
  CHECK_THROWS_AS(r.at("missing"), IoError);
}

TEST_CASE("config round-trips through render and parse", "[io]") {
  ExperimentConfig c = sample_config();
  const std::string text = render_config(c);
  ExperimentConfig r = parse_config(text);
  CHECK(r == c);
  CHECK(render_config(r) == text);
  CHECK(config_hash(r) == config_hash(c));
}

TEST_CASE("config parsing accepts comments and validates keys", "[io]") {
  SECTION("comments and blank lines") {
    ExperimentConfig c = parse_config(
        "# experiment\n[model]\nkind = flat_integrable\nn = 1\n\n"
        "shape = 16 16  # two axes\n[flow]\nt_final = 5\n");
    CHECK(c.model.n == 1);
    CHECK(c.model.shape[0] == 16);
    CHECK(c.flow.t_final == 5.0);
  }
  SECTION("unknown keys are rejected") {
    CHECK_THROWS_AS(parse_config("[model]\nkindd = flat_integrable\n"), ConfigError);
  }
  SECTION("malformed trig terms are rejected") {
    CHECK_THROWS_AS(
        parse_config("[model]\nn = 1\nshape = 16 16\n[F]\nrecipe = trig\n"
                     "term = 0.5 tan 1 0\n"),
        ConfigError);
    CHECK_THROWS_AS(
        parse_config("[model]\nn = 1\nshape = 16 16\n[F]\nrecipe = trig\n"
                     "term = 0.5 sin 1\n"),
        ConfigError);
  }
  SECTION("hash distinguishes configs") {
    ExperimentConfig a = sample_config();
    ExperimentConfig b = a;
    b.flow.conv_tol = 1e-8;
    CHECK(config_hash(a) != config_hash(b));
  }
}

TEST_CASE("model dumps round-trip and verify", "[io][slow]") {
  TempDir tmp;
  auto m = build_model<2>({ModelKind::RotatedJ, 2, {8, 8, 8, 8}, 0.3, 1});
  write_model(tmp.path / "model", m);
  auto r = read_model<2>(tmp.path / "model");

  CHECK(r.spec == m.spec);
  CHECK(r.has_brackets == m.has_brackets);
  for (std::size_t p = 0; p < m.geom.npoints(); p += 17) {
    CHECK((r.J[p].array() == m.J[p].array()).all());
    CHECK((r.G[p].array() == m.G[p].array()).all());
    CHECK((r.frame[p].array() == m.frame[p].array()).all());
    CHECK((r.brackets01[1][0][p].array() == m.brackets01[1][0][p].array()).all());
  }
  for (const auto& c : check_model_invariants(r)) {
    INFO(c.name);
    CHECK(c.ok);
  }
}

TEST_CASE("monitor CSV round-trips", "[io]") {
  TempDir tmp;
  MonitorReport report;
  for (int k = 0; k < 5; ++k) {
    MonitorRow r;
    r.t = 0.1 * k + 1e-17;
    r.sup_phit = std::exp(-0.37 * k);
    r.sup_env = r.sup_phit;
    r.inf_env = -0.5 * r.sup_phit;
    r.osc_phi = 0.3;
    r.grad_sq_sup = 0.11 + k;
    r.hess_sup = 0.7;
    r.lap_c_min = -0.2;
    r.gtilde_min = 0.8;
    r.theta = r.sup_env - r.inf_env;
    report.rows.push_back(r);
  }
  write_monitor_csv(tmp.path / "monitor.csv", report);
  MonitorReport r2 = read_monitor_csv(tmp.path / "monitor.csv");
  REQUIRE(r2.rows.size() == report.rows.size());
  for (std::size_t k = 0; k < r2.rows.size(); ++k) {
    CHECK(r2.rows[k].t == report.rows[k].t);
    CHECK(r2.rows[k].theta == report.rows[k].theta);
    CHECK(r2.rows[k].grad_sq_sup == report.rows[k].grad_sq_sup);
  }
}
