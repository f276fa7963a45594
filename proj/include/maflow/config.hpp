#pragma once

#include <cstdint>
#include <sstream>

#include "maflow/flow.hpp"
#include "maflow/elliptic.hpp"
#include "maflow/io.hpp"

namespace maflow {

// Named field recipes for F, phi_star and phi0.
struct FieldRecipe {
  enum class Kind { Zero, Constant, Trig, Manufactured };
  Kind kind = Kind::Zero;
  double constant = 0.0;
  TrigPoly terms;     // Trig recipe
  TrigPoly phi_star;  // Manufactured recipe: F = log det ratio(phi_star)

  bool operator==(const FieldRecipe&) const = default;
};

struct HarnackParams {
  double eps = 1.0 / 3.0;
  double alpha = 2.0;
  double t1 = 0.5;
  double t2 = 1.0;

  bool operator==(const HarnackParams&) const = default;
};

struct DiagnosticsConfig {
  std::vector<HarnackParams> harnack;
  std::vector<int> harnack_m = {1};
  double sample_dt = 0.02;
  double decay_t_start = 2.0;
  double decay_t_end = -1.0;  // <=0: fit up to the end of the run
  double contraction_floor = 1e-12;

  bool operator==(const DiagnosticsConfig&) const = default;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  ModelSpec model;
  FieldRecipe F;
  FieldRecipe phi0;
  FlowConfig flow;
  EllipticConfig elliptic;
  DiagnosticsConfig diag;
  std::string out_dir = "out";

  bool operator==(const ExperimentConfig&) const = default;
};

// ---------------------------------------------------------------------------
// Recipe evaluation

template <int N>
ScalarField evaluate_recipe(const FieldRecipe& r, const Model<N>& m) {
  switch (r.kind) {
    case FieldRecipe::Kind::Zero:
      return ScalarField(m.geom);
    case FieldRecipe::Kind::Constant: {
      return ScalarField(m.geom, r.constant);
    }
    case FieldRecipe::Kind::Trig:
      return r.terms.evaluate(m.geom);
    case FieldRecipe::Kind::Manufactured:
      return manufactured_F(r.phi_star.evaluate(m.geom), m);
  }
  throw ConfigError("evaluate_recipe: unknown kind");
}

// ---------------------------------------------------------------------------
// Flat key = value config text with [section] headers.

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

inline TrigTerm parse_trig_term(const std::string& value, int real_dim,
                                const std::string& where) {
  const auto tok = split_ws(value);
  if (static_cast<int>(tok.size()) != 2 + real_dim)
    throw ConfigError(where + ": trig term needs 'coef sin|cos k_1 .. k_" +
                      std::to_string(real_dim) + "', got '" + value + "'");
  TrigTerm t;
  t.coef = parse_double(tok[0]);
  if (tok[1] == "sin")
    t.is_sin = true;
  else if (tok[1] == "cos")
    t.is_sin = false;
  else
    throw ConfigError(where + ": expected sin or cos, got '" + tok[1] + "'");
  for (int a = 0; a < real_dim; ++a) t.wave[a] = std::stoi(tok[2 + a]);
  return t;
}

inline std::string render_trig_term(const TrigTerm& t, int real_dim) {
  std::string s = fmt_g17(t.coef);
  s += t.is_sin ? " sin" : " cos";
  for (int a = 0; a < real_dim; ++a) s += " " + std::to_string(t.wave[a]);
  return s;
}

inline const char* recipe_name(FieldRecipe::Kind k) {
  switch (k) {
    case FieldRecipe::Kind::Zero: return "zero";
    case FieldRecipe::Kind::Constant: return "constant";
    case FieldRecipe::Kind::Trig: return "trig";
    case FieldRecipe::Kind::Manufactured: return "manufactured";
  }
  return "?";
}

}  // namespace detail

inline std::string render_config(const ExperimentConfig& c) {
  const int d = 2 * c.model.n;
  std::ostringstream out;
  out << "[run]\n";
  out << "seed = " << c.seed << "\n";
  out << "\n[model]\n";
  out << "kind = "
      << (c.model.kind == ModelKind::FlatIntegrable ? "flat_integrable" : "rotated_J")
      << "\n";
  out << "n = " << c.model.n << "\n";
  out << "shape =";
  for (int a = 0; a < d; ++a) out << " " << c.model.shape[a];
  out << "\n";
  out << "amplitude = " << fmt_g17(c.model.amplitude) << "\n";
  out << "wave = " << c.model.wave << "\n";

  auto render_recipe = [&](const char* section, const FieldRecipe& r) {
    out << "\n[" << section << "]\n";
    out << "recipe = " << detail::recipe_name(r.kind) << "\n";
    if (r.kind == FieldRecipe::Kind::Constant)
      out << "value = " << fmt_g17(r.constant) << "\n";
    if (r.kind == FieldRecipe::Kind::Trig)
      for (const TrigTerm& t : r.terms.terms)
        out << "term = " << detail::render_trig_term(t, d) << "\n";
    if (r.kind == FieldRecipe::Kind::Manufactured)
      for (const TrigTerm& t : r.phi_star.terms)
        out << "phi_term = " << detail::render_trig_term(t, d) << "\n";
  };
  render_recipe("F", c.F);
  render_recipe("phi0", c.phi0);

  out << "\n[flow]\n";
  out << "cfl_safety = " << fmt_g17(c.flow.cfl_safety) << "\n";
  out << "t_final = " << fmt_g17(c.flow.t_final) << "\n";
  out << "conv_tol = " << fmt_g17(c.flow.conv_tol) << "\n";
  out << "snapshot_every = " << c.flow.snapshot_every << "\n";
  out << "monitor_every = " << c.flow.monitor_every << "\n";
  out << "traj_every = " << c.flow.traj_every << "\n";
  out << "traj_t_max = " << fmt_g17(c.flow.traj_t_max) << "\n";
  out << "require_convergence = " << (c.flow.require_convergence ? "true" : "false")
      << "\n";

  out << "\n[elliptic]\n";
  out << "tol = " << fmt_g17(c.elliptic.tol) << "\n";
  out << "max_iter = " << c.elliptic.max_iter << "\n";
  out << "krylov_forcing = " << fmt_g17(c.elliptic.krylov_forcing) << "\n";
  out << "krylov_max_iter = " << c.elliptic.krylov_max_iter << "\n";

  out << "\n[diagnostics]\n";
  for (const HarnackParams& h : c.diag.harnack)
    out << "harnack = " << fmt_g17(h.eps) << " " << fmt_g17(h.alpha) << " "
        << fmt_g17(h.t1) << " " << fmt_g17(h.t2) << "\n";
  out << "harnack_m =";
  for (int m : c.diag.harnack_m) out << " " << m;
  out << "\n";
  out << "sample_dt = " << fmt_g17(c.diag.sample_dt) << "\n";
  out << "decay_t_start = " << fmt_g17(c.diag.decay_t_start) << "\n";
  out << "decay_t_end = " << fmt_g17(c.diag.decay_t_end) << "\n";
  out << "contraction_floor = " << fmt_g17(c.diag.contraction_floor) << "\n";

  out << "\n[output]\n";
  out << "dir = " << c.out_dir << "\n";
  return out.str();
}

inline ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig c;
  c.diag.harnack_m.clear();
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  int real_dim = 2;  // fixed once [model] n/shape are seen
  bool have_dim = false;
  // deferred trig terms: real_dim may not be known yet when terms appear
  std::vector<std::pair<std::string, std::string>> deferred;

  auto where = [&] { return "config line " + std::to_string(lineno); };

  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where() + ": bad section header");
      section = line.substr(1, line.size() - 2);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(where() + ": expected key = value, got '" + line + "'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    const std::string qual = section + "." + key;

    if (qual == "run.seed") c.seed = std::stoull(value);
    else if (qual == "model.kind") {
      if (value == "flat_integrable") c.model.kind = ModelKind::FlatIntegrable;
      else if (value == "rotated_J") c.model.kind = ModelKind::RotatedJ;
      else throw ConfigError(where() + ": unknown model kind '" + value + "'");
    } else if (qual == "model.n") {
      c.model.n = std::stoi(value);
      real_dim = 2 * c.model.n;
      have_dim = true;
    } else if (qual == "model.shape") {
      const auto tok = detail::split_ws(value);
      for (std::size_t a = 0; a < tok.size() && a < 4; ++a)
        c.model.shape[a] = std::stoi(tok[a]);
      if (have_dim && static_cast<int>(tok.size()) != real_dim)
        throw ConfigError(where() + ": shape needs " + std::to_string(real_dim) +
                          " entries");
    } else if (qual == "model.amplitude") c.model.amplitude = parse_double(value);
    else if (qual == "model.wave") c.model.wave = std::stoi(value);
    else if (qual == "F.recipe" || qual == "phi0.recipe") {
      FieldRecipe& r = section == "F" ? c.F : c.phi0;
      if (value == "zero") r.kind = FieldRecipe::Kind::Zero;
      else if (value == "constant") r.kind = FieldRecipe::Kind::Constant;
      else if (value == "trig") r.kind = FieldRecipe::Kind::Trig;
      else if (value == "manufactured") r.kind = FieldRecipe::Kind::Manufactured;
      else throw ConfigError(where() + ": unknown recipe '" + value + "'");
    } else if (qual == "F.value") c.F.constant = parse_double(value);
    else if (qual == "phi0.value") c.phi0.constant = parse_double(value);
    else if (qual == "F.term" || qual == "F.phi_term" || qual == "phi0.term")
      deferred.emplace_back(qual, value);
    else if (qual == "flow.cfl_safety") c.flow.cfl_safety = parse_double(value);
    else if (qual == "flow.t_final") c.flow.t_final = parse_double(value);
    else if (qual == "flow.conv_tol") c.flow.conv_tol = parse_double(value);
    else if (qual == "flow.snapshot_every") c.flow.snapshot_every = std::stoi(value);
    else if (qual == "flow.monitor_every") c.flow.monitor_every = std::stoi(value);
    else if (qual == "flow.traj_every") c.flow.traj_every = std::stoi(value);
    else if (qual == "flow.traj_t_max") c.flow.traj_t_max = parse_double(value);
    else if (qual == "flow.require_convergence")
      c.flow.require_convergence = value == "true";
    else if (qual == "elliptic.tol") c.elliptic.tol = parse_double(value);
    else if (qual == "elliptic.max_iter") c.elliptic.max_iter = std::stoi(value);
    else if (qual == "elliptic.krylov_forcing")
      c.elliptic.krylov_forcing = parse_double(value);
    else if (qual == "elliptic.krylov_max_iter")
      c.elliptic.krylov_max_iter = std::stoi(value);
    else if (qual == "diagnostics.harnack") {
      const auto tok = detail::split_ws(value);
      if (tok.size() != 4)
        throw ConfigError(where() + ": harnack needs 'eps alpha t1 t2'");
      HarnackParams h;
      h.eps = parse_double(tok[0]);
      h.alpha = parse_double(tok[1]);
      h.t1 = parse_double(tok[2]);
      h.t2 = parse_double(tok[3]);
      c.diag.harnack.push_back(h);
    } else if (qual == "diagnostics.harnack_m") {
      for (const auto& t : detail::split_ws(value))
        c.diag.harnack_m.push_back(std::stoi(t));
    } else if (qual == "diagnostics.sample_dt") c.diag.sample_dt = parse_double(value);
    else if (qual == "diagnostics.decay_t_start")
      c.diag.decay_t_start = parse_double(value);
    else if (qual == "diagnostics.decay_t_end")
      c.diag.decay_t_end = parse_double(value);
    else if (qual == "diagnostics.contraction_floor")
      c.diag.contraction_floor = parse_double(value);
    else if (qual == "output.dir") c.out_dir = value;
    else throw ConfigError(where() + ": unknown key '" + qual + "'");
  }

  for (const auto& [qual, value] : deferred) {
    const TrigTerm t = detail::parse_trig_term(value, 2 * c.model.n, "config");
    if (qual == "F.term") c.F.terms.terms.push_back(t);
    else if (qual == "F.phi_term") c.F.phi_star.terms.push_back(t);
    else c.phi0.terms.terms.push_back(t);
  }
  if (c.diag.harnack_m.empty()) c.diag.harnack_m.push_back(1);
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

// Identifies the experiment parameters; the output location does not
// participate, so reruns into different directories share a hash.
inline std::string config_hash(const ExperimentConfig& c) {
  ExperimentConfig normalized = c;
  normalized.out_dir = "";
  return hex64(fnv1a64(render_config(normalized)));
}

}  // namespace maflow
