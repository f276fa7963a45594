#pragma once

#include <CLI11.hpp>
#include <iostream>

#include "maflow/config.hpp"

namespace maflow::cli {

namespace fs = std::filesystem;

// Exit codes: 0 pass, 2 invariant violation, 3 numerical failure,
// 4 I/O or config error.
enum ExitCode { kOk = 0, kInvariant = 2, kNumerical = 3, kIoConfig = 4 };

namespace detail {

template <class Fn>
int dispatch_n(int n, Fn&& fn) {
  if (n == 1) return fn(std::integral_constant<int, 1>{});
  if (n == 2) return fn(std::integral_constant<int, 2>{});
  throw ConfigError("complex dimension must be 1 or 2, got " + std::to_string(n));
}

inline void write_run_manifest(const fs::path& dir, const ExperimentConfig& cfg) {
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "config.rendered");
    out << render_config(cfg);
  }
  Manifest m;
  m.add("version", kVersion);
  m.add("config_hash", config_hash(cfg));
  write_manifest(dir / "manifest.txt", m);
}

template <int N>
int cmd_verify_model(const ExperimentConfig& cfg, const fs::path& out) {
  const fs::path model_dir = out / "model";
  Model<N> model;
  if (fs::exists(model_dir / "manifest.txt")) {
    model = read_model<N>(model_dir);
    std::cout << "verify-model: loaded dumped model from " << model_dir << "\n";
  } else {
    model = build_model<N>(cfg.model);
    write_model(model_dir, model);
    std::cout << "verify-model: built model and dumped to " << model_dir << "\n";
  }

  auto checks = check_model_invariants(model);
  auto nij = nijenhuis_norm(model);
  write_field(model_dir / "nijenhuis.field", nij.field);
  {
    CheckResult r;
    r.name = "nijenhuis_sup";
    r.measured = nij.sup;
    // integrable families must vanish; rotated_J is reported, not thresholded
    if (cfg.model.kind == ModelKind::FlatIntegrable || cfg.model.amplitude == 0.0) {
      r.threshold = 1e-10;
      r.ok = nij.sup <= r.threshold;
    } else {
      r.threshold = 0.0;
      r.ok = true;
    }
    r.location = "-";
    checks.push_back(r);
  }

  bool all_ok = true;
  std::ofstream report(out / "report.txt");
  for (const auto& c : checks) {
    report << (c.ok ? "PASS" : "FAIL") << " " << c.name
           << " measured=" << fmt_g17(c.measured)
           << " threshold=" << fmt_g17(c.threshold) << " at=" << c.location << "\n";
    if (!c.ok) {
      all_ok = false;
      std::cout << "FAIL " << c.name << " measured=" << fmt_g17(c.measured)
                << " threshold=" << fmt_g17(c.threshold) << " at=" << c.location
                << "\n";
    }
  }
  std::cout << "verify-model: " << (all_ok ? "all checks passed" : "violations found")
            << " (report: " << (out / "report.txt") << ")\n";
  return all_ok ? kOk : kInvariant;
}

template <int N>
int cmd_run_flow(const ExperimentConfig& cfg, const fs::path& out,
                 const std::string& resume) {
  const Model<N> model = build_model<N>(cfg.model);
  const ScalarField F = evaluate_recipe(cfg.F, model);
  const ScalarField phi0 = evaluate_recipe(cfg.phi0, model);
  const fs::path flow_dir = out / "flow";
  fs::create_directories(flow_dir);
  const std::string hash = config_hash(cfg);

  FlowMonitor<N> monitor(model);
  std::function<void(const FlowState<N>&)> sink = [&](const FlowState<N>& s) {
    write_snapshot(flow_dir / "snapshots", s, hash);
  };

  FlowResult<N> result;
  if (resume.empty()) {
    result = run(phi0, F, model, cfg.flow, monitor, sink);
  } else {
    FlowState<N> state = read_snapshot<N>(resume, F, model);
    result = run(state.phi, F, model, cfg.flow, monitor, sink, &state);
  }

  write_monitor_csv(flow_dir / "monitor.csv", result.monitor);
  write_field(flow_dir / "phi_mean.field", result.phi_mean_norm);
  write_field(flow_dir / "phi_sup.field", result.phi_sup_norm);

  Manifest res;
  res.add("converged", result.converged ? "true" : "false");
  res.add("b", result.b);
  res.add("b_hex", fmt_hex(result.b));
  res.add("b_integral", result.b_integral);
  res.add("theta_final", result.theta_final);
  res.add("t_end", result.t_end);
  res.add("steps", std::to_string(result.steps));
  res.add("lemma_bound", result.monitor.lemma_bound);
  res.add("config_hash", hash);

  try {
    const double t_end =
        cfg.diag.decay_t_end > 0.0 ? cfg.diag.decay_t_end : result.t_end;
    const DecayFit fit =
        fit_decay(theta_series(result.monitor), cfg.diag.decay_t_start, t_end);
    write_decay_csv(flow_dir / "decay.csv", fit);
    res.add("decay_eta", fit.eta);
    res.add("decay_r_squared", fit.r_squared);
  } catch (const ConfigError& e) {
    res.add("decay_fit", std::string("skipped: ") + e.what());
  }
  write_manifest(flow_dir / "result.txt", res);

  std::cout << "run-flow: " << (result.converged ? "converged" : "not converged")
            << " at t = " << fmt_g17(result.t_end)
            << ", theta = " << fmt_g17(result.theta_final)
            << ", b = " << fmt_g17(result.b) << "\n";
  if (!result.converged && cfg.flow.require_convergence) {
    std::cout << "run-flow: convergence required but not reached\n";
    return kNumerical;
  }
  return kOk;
}

template <int N>
int cmd_solve_elliptic(const ExperimentConfig& cfg, const fs::path& out) {
  const Model<N> model = build_model<N>(cfg.model);
  const ScalarField F = evaluate_recipe(cfg.F, model);
  const fs::path dir = out / "elliptic";
  fs::create_directories(dir);

  const EllipticSolution sol = newton_solve(F, model, cfg.elliptic);
  write_field(dir / "phi.field", sol.phi);
  write_newton_csv(dir / "iterations.csv", sol.log);
  Manifest res;
  res.add("converged", sol.converged ? "true" : "false");
  res.add("b", sol.b);
  res.add("b_hex", fmt_hex(sol.b));
  res.add("residual_sup", sol.residual_sup);
  res.add("iterations", std::to_string(sol.iterations));
  if (!sol.message.empty()) res.add("message", sol.message);
  res.add("config_hash", config_hash(cfg));
  write_manifest(dir / "result.txt", res);

  std::cout << "solve-elliptic: " << (sol.converged ? "converged" : "failed")
            << " in " << sol.iterations
            << " iterations, residual_sup = " << fmt_g17(sol.residual_sup)
            << ", b = " << fmt_g17(sol.b) << "\n";
  return sol.converged ? kOk : kNumerical;
}

// Trajectory from dumped snapshots, sorted by step.
template <int N>
Trajectory load_trajectory(const fs::path& snap_dir) {
  std::vector<std::pair<long, fs::path>> manifests;
  if (!fs::exists(snap_dir))
    throw IoError("no snapshots at " + snap_dir.string() + "; run run-flow first");
  for (const auto& entry : fs::directory_iterator(snap_dir)) {
    const fs::path p = entry.path();
    if (p.extension() == ".manifest") {
      const Manifest m = read_manifest(p);
      manifests.emplace_back(std::stol(m.at("step")), p);
    }
  }
  std::sort(manifests.begin(), manifests.end());
  Trajectory traj;
  for (const auto& [step, path] : manifests) {
    const Manifest m = read_manifest(path);
    fs::path field_path = path;
    field_path.replace_extension(".field");
    const double t = parse_double(m.at("t_hex"));
    if (!traj.times.empty() && t <= traj.times.back()) continue;
    traj.record(t, read_field<double>(field_path));
  }
  if (traj.times.empty()) throw IoError("no snapshots found in " + snap_dir.string());
  return traj;
}

template <int N>
int cmd_harnack(const ExperimentConfig& cfg, const fs::path& out) {
  const Model<N> model = build_model<N>(cfg.model);
  const ScalarField F = evaluate_recipe(cfg.F, model);
  const Trajectory traj = load_trajectory<N>(out / "flow" / "snapshots");
  const fs::path dir = out / "harnack";
  fs::create_directories(dir);

  std::vector<HarnackParams> params = cfg.diag.harnack;
  if (params.empty()) params.push_back(HarnackParams{});

  CsvWriter harnack_csv(dir / "harnack.csv",
                        "label,m,eps,alpha,t1,t2,ratio_power,lhs,inf_t2,rhs_core,"
                        "implied_C");
  CsvWriter contraction_csv(dir / "contraction.csv", "label,m,kappa");
  bool any_failure = false;

  for (const HarnackParams& hp : params) {
    for (int mm : cfg.diag.harnack_m) {
      const double t_start = static_cast<double>(mm - 1);
      const ScalarField u_start = rhs(traj.phi_at(t_start), F, model);
      if (oscillation(u_start) <= cfg.diag.contraction_floor) {
        harnack_csv.raw_row("vacuous_m" + std::to_string(mm) + "," +
                            std::to_string(mm) + ",,,,,,,,,");
        continue;  // constant u: the shifted solutions vanish identically
      }
      struct Variant {
        std::string label;
        ScalarField u0;
      };
      std::vector<Variant> variants;
      variants.push_back({"v" + std::to_string(mm), vm_initial<N>(u_start)});
      variants.push_back({"w" + std::to_string(mm), wm_initial<N>(u_start)});
      for (auto& var : variants) {
        HeatRun<N> hr = heat_solve(var.u0, t_start, t_start + hp.t2, traj, model,
                                   cfg.flow, cfg.diag.sample_dt);
        const HarnackCheck hc = harnack_check(hr, hp.eps, hp.alpha, hp.t1, hp.t2, model);
        harnack_csv.raw_row(var.label + "," + std::to_string(mm) + "," +
                            fmt_g17(hc.eps) + "," + fmt_g17(hc.alpha) + "," +
                            fmt_g17(hc.t1) + "," + fmt_g17(hc.t2) + "," +
                            fmt_g17(hc.ratio_power) + "," + fmt_g17(hc.lhs) + "," +
                            fmt_g17(hc.inf_t2) + "," + fmt_g17(hc.rhs_core) + "," +
                            fmt_g17(hc.implied_C));
        if (!std::isfinite(hc.implied_C)) any_failure = true;
        const ContractionResult cr =
            contraction_check(theta_series(hr), cfg.diag.contraction_floor);
        for (std::size_t k = 0; k < cr.kappa.size(); ++k)
          contraction_csv.raw_row(var.label + "," + std::to_string(cr.m[k]) + "," +
                                  fmt_g17(cr.kappa[k]));
      }
    }
    // constant-u control: implied_C must be exactly zero
    {
      HeatRun<N> hr = heat_solve(ScalarField(model.geom, 1.0), 0.0, hp.t2, traj,
                                 model, cfg.flow, cfg.diag.sample_dt);
      const HarnackCheck hc = harnack_check(hr, hp.eps, hp.alpha, hp.t1, hp.t2, model);
      harnack_csv.raw_row("const,0," + fmt_g17(hc.eps) + "," + fmt_g17(hc.alpha) +
                          "," + fmt_g17(hc.t1) + "," + fmt_g17(hc.t2) + "," +
                          fmt_g17(hc.ratio_power) + "," + fmt_g17(hc.lhs) + "," +
                          fmt_g17(hc.inf_t2) + "," + fmt_g17(hc.rhs_core) + "," +
                          fmt_g17(hc.implied_C));
      if (hc.implied_C != 0.0) any_failure = true;
    }
  }

  // flow-level contraction of theta(t) = osc(phi_t) from the monitor series
  try {
    const MonitorReport report = read_monitor_csv(out / "flow" / "monitor.csv");
    const ContractionResult cr =
        contraction_check(theta_series(report), cfg.diag.contraction_floor);
    for (std::size_t k = 0; k < cr.kappa.size(); ++k)
      contraction_csv.raw_row("flow," + std::to_string(cr.m[k]) + "," +
                              fmt_g17(cr.kappa[k]));
  } catch (const IoError&) {
    // no monitor.csv: heat-run records only
  }

  std::cout << "harnack: records written to " << dir << "\n";
  return any_failure ? kNumerical : kOk;
}

inline int cmd_decay_fit(const ExperimentConfig& cfg, const fs::path& out) {
  const MonitorReport report = read_monitor_csv(out / "flow" / "monitor.csv");
  const double t_end = cfg.diag.decay_t_end > 0.0 ? cfg.diag.decay_t_end
                                                  : report.rows.back().t;
  const DecayFit fit =
      fit_decay(theta_series(report), cfg.diag.decay_t_start, t_end);
  write_decay_csv(out / "flow" / "decay.csv", fit);
  std::cout << "decay-fit: eta = " << fmt_g17(fit.eta)
            << ", C = " << fmt_g17(fit.C)
            << ", r^2 = " << fmt_g17(fit.r_squared) << " over ["
            << fmt_g17(fit.t_start) << ", " << fmt_g17(fit.t_end) << "]\n";
  return kOk;
}

inline int cmd_compare(const fs::path& out) {
  const ScalarField phi_flow = read_field<double>(out / "flow" / "phi_mean.field");
  const ScalarField phi_newton = read_field<double>(out / "elliptic" / "phi.field");
  const Manifest flow_res = read_manifest(out / "flow" / "result.txt");
  const Manifest ell_res = read_manifest(out / "elliptic" / "result.txt");
  if (!(phi_flow.geom() == phi_newton.geom()))
    throw ConfigError("compare: flow and elliptic grids differ");

  double sup_diff = 0.0;
  for (std::size_t p = 0; p < phi_flow.size(); ++p)
    sup_diff = std::max(sup_diff, std::abs(phi_flow[p] - phi_newton[p]));
  const double b_flow = parse_double(flow_res.at("b_hex"));
  const double b_newton = parse_double(ell_res.at("b_hex"));
  const double b_diff = std::abs(b_flow - b_newton);

  fs::create_directories(out / "compare");
  CsvWriter csv(out / "compare" / "compare.csv", "sup_diff,b_flow,b_newton,b_diff");
  csv.row({sup_diff, b_flow, b_newton, b_diff});
  std::cout << "compare: sup|phi_flow - phi_newton| = " << fmt_g17(sup_diff)
            << ", |b_flow - b_newton| = " << fmt_g17(b_diff) << "\n";
  return kOk;
}

}  // namespace detail

inline int run_cli(int argc, const char* const* argv) {
  CLI::App app{"maflow: parabolic Monge-Ampere flow on almost Hermitian tori"};
  app.require_subcommand(1);

  std::string config_path, out_override, resume;
  unsigned jobs_flag = 0;

  auto add_common = [&](CLI::App* sub, bool with_resume = false) {
    sub->add_option("--config", config_path, "experiment config file")->required();
    sub->add_option("--out", out_override, "output directory (overrides config)");
    sub->add_option("--jobs", jobs_flag, "worker thread cap for data-parallel kernels");
    if (with_resume)
      sub->add_option("--resume", resume, "snapshot manifest to resume from");
  };

  CLI::App* verify = app.add_subcommand("verify-model", "build or load a model and run its invariant checks");
  CLI::App* flow = app.add_subcommand("run-flow", "integrate the parabolic flow");
  CLI::App* elliptic = app.add_subcommand("solve-elliptic", "Newton solve of the elliptic equation");
  CLI::App* harnack = app.add_subcommand("harnack", "Harnack/contraction diagnostics on a stored trajectory");
  CLI::App* decay = app.add_subcommand("decay-fit", "fit the exponential decay of theta(t)");
  CLI::App* compare = app.add_subcommand("compare", "compare stored flow and elliptic results");
  add_common(verify);
  add_common(flow, true);
  add_common(elliptic);
  add_common(harnack);
  add_common(decay);
  add_common(compare);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kIoConfig;
  }

  try {
    ExperimentConfig cfg = load_config(config_path);
    if (!out_override.empty()) cfg.out_dir = out_override;
    if (jobs_flag > 0) set_jobs(jobs_flag);
    const fs::path out = cfg.out_dir;
    detail::write_run_manifest(out, cfg);

    if (verify->parsed())
      return detail::dispatch_n(cfg.model.n, [&](auto nc) {
        return detail::cmd_verify_model<nc()>(cfg, out);
      });
    if (flow->parsed())
      return detail::dispatch_n(cfg.model.n, [&](auto nc) {
        return detail::cmd_run_flow<nc()>(cfg, out, resume);
      });
    if (elliptic->parsed())
      return detail::dispatch_n(cfg.model.n, [&](auto nc) {
        return detail::cmd_solve_elliptic<nc()>(cfg, out);
      });
    if (harnack->parsed())
      return detail::dispatch_n(cfg.model.n, [&](auto nc) {
        return detail::cmd_harnack<nc()>(cfg, out);
      });
    if (decay->parsed()) return detail::cmd_decay_fit(cfg, out);
    if (compare->parsed()) return detail::cmd_compare(out);
    return kIoConfig;
  } catch (const InvariantViolation& e) {
    std::cerr << "invariant violation: " << e.what() << "\n";
    return kInvariant;
  } catch (const BlowupError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const PositivityError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kIoConfig;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIoConfig;
  }
}

}  // namespace maflow::cli
