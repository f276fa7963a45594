#pragma once

#include <functional>
#include <utility>

#include "maflow/hessian.hpp"

namespace maflow {

struct FlowConfig {
  double cfl_safety = 0.2;
  double t_final = 10.0;
  double conv_tol = 1e-9;  // threshold on theta(t) = osc(phi_t)
  int snapshot_every = 25;
  int monitor_every = 20;
  int traj_every = 10;       // in-memory trajectory cadence (steps)
  double traj_t_max = 3.0;   // record trajectory on [0, traj_t_max]
  bool require_convergence = true;

  void validate() const {
    if (!(cfl_safety > 0.0 && cfl_safety <= 1.0))
      throw ConfigError("FlowConfig: cfl_safety must be in (0,1]");
    if (!(t_final > 0.0)) throw ConfigError("FlowConfig: t_final must be positive");
    if (!(conv_tol > 0.0)) throw ConfigError("FlowConfig: conv_tol must be positive");
    if (snapshot_every <= 0 || monitor_every <= 0 || traj_every <= 0)
      throw ConfigError("FlowConfig: cadences must be positive");
    if (!(traj_t_max > 0.0)) throw ConfigError("FlowConfig: traj_t_max must be positive");
  }

  bool operator==(const FlowConfig&) const = default;
};

// Potential snapshots along a run; piecewise-linear interpolation in time.
struct Trajectory {
  std::vector<double> times;
  std::vector<ScalarField> phi;

  void record(double t, const ScalarField& f) {
    times.push_back(t);
    phi.push_back(f);
  }

  double t_max() const { return times.empty() ? 0.0 : times.back(); }

  ScalarField phi_at(double t) const {
    if (times.empty()) throw ConfigError("Trajectory: empty");
    if (t <= times.front()) return phi.front();
    if (t >= times.back()) {
      if (t > times.back() + 1e-9)
        throw ConfigError("Trajectory: time " + std::to_string(t) +
                          " beyond recorded range " + std::to_string(times.back()));
      return phi.back();
    }
    std::size_t hi = 1;
    while (times[hi] < t) ++hi;
    const std::size_t lo = hi - 1;
    const double w = (t - times[lo]) / (times[hi] - times[lo]);
    ScalarField out = phi[lo];
    parallel_for(out.size(), [&](std::size_t p) {
      out[p] += w * (phi[hi][p] - phi[lo][p]);
    });
    return out;
  }
};

template <int N>
struct FlowState {
  double t = 0.0;
  double dt = 0.0;  // step size to attempt next
  long step = 0;
  ScalarField phi;
  ScalarField phi_t;  // rhs at the accepted phi
  double gtilde_min = 0.0;
  double sup_inv_trace = 0.0;
};

namespace detail {

template <int N>
struct RhsEval {
  ScalarField value;
  double gtilde_min = 0.0;
  double sup_inv_trace = 0.0;
  double presym_deficit = 0.0;
};

template <int N>
RhsEval<N> rhs_eval(const ScalarField& phi, const ScalarField& F, const Model<N>& m) {
  auto gt = g_tilde(phi, m);
  require_positive(gt, "flow rhs");
  RhsEval<N> out;
  out.gtilde_min = gt.min_eig_grid;
  out.sup_inv_trace = sup_inverse_trace(gt);
  out.presym_deficit = gt.presym_deficit;
  out.value = log_det_ratio(gt);
  out.value -= F;
  check_finite(out.value, "flow rhs");
  return out;
}

template <int N>
double dt_cap(const GridGeometry& g, const FlowConfig& cfg, double sup_inv_trace) {
  const double h = g.min_spacing();
  return cfg.cfl_safety * h * h / (2.0 * N * sup_inv_trace);
}

}  // namespace detail

// log det((omega + i ddbar phi)^n / omega^n) - F
template <int N>
ScalarField rhs(const ScalarField& phi, const ScalarField& F, const Model<N>& m) {
  return detail::rhs_eval(phi, F, m).value;
}

template <int N>
FlowState<N> flow_init(const ScalarField& phi0, const ScalarField& F,
                       const Model<N>& m, const FlowConfig& cfg) {
  cfg.validate();
  auto e = detail::rhs_eval(phi0, F, m);
  FlowState<N> s;
  s.phi = phi0;
  s.phi_t = std::move(e.value);
  s.gtilde_min = e.gtilde_min;
  s.sup_inv_trace = e.sup_inv_trace;
  s.dt = detail::dt_cap<N>(m.geom, cfg, e.sup_inv_trace);
  return s;
}

// One adaptive classical Runge-Kutta step. On positivity loss or NaN in any
// stage the step size halves and the step retries (at most 30 halvings); on
// acceptance dt may grow by 10% toward the parabolic cap.
template <int N>
void step(FlowState<N>& s, const ScalarField& F, const Model<N>& m,
          const FlowConfig& cfg, double dt_override = -1.0) {
  const ScalarField& k1 = s.phi_t;  // rhs of the accepted state
  double dt = dt_override > 0.0 ? std::min(dt_override, s.dt) : s.dt;
  const bool clamped = dt_override > 0.0 && dt < s.dt;

  for (int halving = 0; halving <= 30; ++halving) {
    try {
      ScalarField stage = s.phi;
      axpy(stage, 0.5 * dt, k1);
      auto k2 = detail::rhs_eval(stage, F, m);

      stage = s.phi;
      axpy(stage, 0.5 * dt, k2.value);
      auto k3 = detail::rhs_eval(stage, F, m);

      stage = s.phi;
      axpy(stage, dt, k3.value);
      auto k4 = detail::rhs_eval(stage, F, m);

      ScalarField phi_new = s.phi;
      parallel_for(phi_new.size(), [&](std::size_t p) {
        phi_new[p] += dt / 6.0 *
                      (k1[p] + 2.0 * k2.value[p] + 2.0 * k3.value[p] + k4.value[p]);
      });
      auto e_new = detail::rhs_eval(phi_new, F, m);

      s.t += dt;
      s.phi = std::move(phi_new);
      s.phi_t = std::move(e_new.value);
      s.gtilde_min = e_new.gtilde_min;
      s.sup_inv_trace = e_new.sup_inv_trace;
      s.step += 1;
      const double cap = detail::dt_cap<N>(m.geom, cfg, e_new.sup_inv_trace);
      s.dt = clamped ? std::min(s.dt, cap) : std::min(dt * 1.1, cap);
      return;
    } catch (const PositivityError&) {
      dt *= 0.5;
    } catch (const NumericError&) {
      dt *= 0.5;
    }
  }
  throw BlowupError("flow step: 30 step-size halvings exhausted at t = " +
                    std::to_string(s.t) + " (blow-up evidence)");
}

// Mean- and sup-normalizations of a potential.
inline std::pair<ScalarField, ScalarField> normalize(const ScalarField& phi,
                                                     const Quadrature& quad) {
  ScalarField mean_norm = phi;
  shift(mean_norm, -mean(phi, quad));
  ScalarField sup_normed = phi;
  shift(sup_normed, -max_value(phi));
  return {std::move(mean_norm), std::move(sup_normed)};
}

template <int N>
struct FlowResult {
  ScalarField phi_mean_norm;  // limit potential, volume mean zero
  ScalarField phi_sup_norm;   // limit potential, sup zero
  double b = 0.0;             // mean(phi_t) at the end of the run
  double b_integral = 0.0;    // mean(log det ratio(limit) - F)
  bool converged = false;
  double theta_final = 0.0;
  double t_end = 0.0;
  long steps = 0;
  MonitorReport monitor;
  Trajectory trajectory;
};

// Integrates until t_final or until theta = osc(phi_t) < conv_tol. Emits
// monitor rows at the configured cadence and records an in-memory trajectory
// for downstream diagnostics. snapshot_sink (optional) is invoked at the
// snapshot cadence with the accepted state.
template <int N>
FlowResult<N> run(const ScalarField& phi0, const ScalarField& F, const Model<N>& m,
                  const FlowConfig& cfg, const FlowMonitor<N>& monitor,
                  const std::function<void(const FlowState<N>&)>& snapshot_sink = {},
                  FlowState<N>* resume_from = nullptr) {
  cfg.validate();
  FlowResult<N> result;
  FlowState<N> s = resume_from ? *resume_from : flow_init(phi0, F, m, cfg);

  result.monitor.lemma_bound = sup_norm(log_det_ratio(phi0, m)) + sup_norm(F);

  long last_monitor_step = -1;
  auto emit_row = [&] {
    if (s.step == last_monitor_step) return;
    result.monitor.rows.push_back(monitor.row(s.t, s.phi, s.phi_t, s.gtilde_min));
    last_monitor_step = s.step;
  };
  auto record_traj = [&] {
    if (s.t <= cfg.traj_t_max + 1e-12) result.trajectory.record(s.t, s.phi);
  };

  emit_row();
  record_traj();
  if (snapshot_sink) snapshot_sink(s);

  double theta = oscillation(s.phi_t);
  bool converged = theta < cfg.conv_tol;
  while (!converged && s.t < cfg.t_final - 1e-14) {
    const double remaining = cfg.t_final - s.t;
    step(s, F, m, cfg, remaining < s.dt ? remaining : -1.0);
    if (s.step % cfg.monitor_every == 0) emit_row();
    if (s.step % cfg.traj_every == 0) record_traj();
    if (snapshot_sink && s.step % cfg.snapshot_every == 0) snapshot_sink(s);
    theta = oscillation(s.phi_t);
    converged = theta < cfg.conv_tol;
  }
  emit_row();
  if (snapshot_sink) snapshot_sink(s);

  result.converged = converged;
  result.theta_final = theta;
  result.t_end = s.t;
  result.steps = s.step;
  result.b = mean(s.phi_t, m.quad);
  auto normed = normalize(s.phi, m.quad);
  result.phi_mean_norm = std::move(normed.first);
  result.phi_sup_norm = std::move(normed.second);
  {
    ScalarField res = log_det_ratio(result.phi_mean_norm, m);
    res -= F;
    result.b_integral = mean(res, m.quad);
  }
  if (converged &&
      std::abs(result.b - result.b_integral) > 10.0 * cfg.conv_tol)
    throw NumericError(
        "flow run: converged but mean(phi_t) and the integral formula for b "
        "disagree: " +
        std::to_string(result.b) + " vs " + std::to_string(result.b_integral));
  return result;
}

template <int N>
FlowResult<N> run(const ScalarField& phi0, const ScalarField& F, const Model<N>& m,
                  const FlowConfig& cfg) {
  FlowMonitor<N> monitor(m);
  return run(phi0, F, m, cfg, monitor);
}

}  // namespace maflow
