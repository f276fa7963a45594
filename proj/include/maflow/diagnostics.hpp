#pragma once

#include <optional>

#include "maflow/flow.hpp"

namespace maflow {

// ---------------------------------------------------------------------------
// Heat-type equation du/dt = L u along a stored flow trajectory.

template <int N>
struct HeatRun {
  double t0_abs = 0.0;  // absolute flow time of local t = 0
  std::vector<double> times;  // local sample times, starting at 0
  std::vector<ScalarField> u;

  const ScalarField& u_at_sample(std::size_t k) const { return u[k]; }

  // nearest sample index to local time t (sample grid is uniform)
  std::size_t sample_index(double t) const {
    std::size_t best = 0;
    double gap = std::abs(times[0] - t);
    for (std::size_t k = 1; k < times.size(); ++k) {
      const double d = std::abs(times[k] - t);
      if (d < gap) {
        gap = d;
        best = k;
      }
    }
    if (gap > 1e-9)
      throw ConfigError("HeatRun: no sample at local time " + std::to_string(t));
    return best;
  }

  double theta(std::size_t k) const { return oscillation(u[k]); }
};

namespace detail {

template <int N>
struct HeatRhsEval {
  ScalarField value;
  double sup_inv_trace = 0.0;
};

template <int N>
HeatRhsEval<N> heat_rhs(const ScalarField& u, double t_abs, const Trajectory& traj,
                        const Model<N>& m) {
  const ScalarField phi = traj.phi_at(t_abs);
  auto gt = g_tilde(phi, m);
  require_positive(gt, "heat rhs");
  HeatRhsEval<N> out;
  out.sup_inv_trace = sup_inverse_trace(gt);
  out.value = linearized_L(u, herm_inverse_field<N>(gt.mat), m);
  check_finite(out.value, "heat rhs");
  return out;
}

}  // namespace detail

// Explicit stepping of du/dt = L(u, phi(t)) with phi interpolated linearly
// between stored snapshots; classical Runge-Kutta stages under the same
// parabolic step cap as the flow. Samples are recorded at uniform local
// times (multiples of sample_dt), hit exactly by clamping the step.
template <int N>
HeatRun<N> heat_solve(const ScalarField& u0, double t_from, double t_to,
                      const Trajectory& traj, const Model<N>& m,
                      const FlowConfig& cfg, double sample_dt) {
  if (!(t_to > t_from)) throw ConfigError("heat_solve: need t_to > t_from");
  if (!(sample_dt > 0.0)) throw ConfigError("heat_solve: sample_dt must be positive");
  check_finite(u0, "heat_solve initial data");

  HeatRun<N> run;
  run.t0_abs = t_from;
  run.times.push_back(0.0);
  run.u.push_back(u0);

  ScalarField u = u0;
  double t = 0.0;  // local time
  const double t_span = t_to - t_from;
  std::size_t next_sample = 1;
  auto k1 = detail::heat_rhs(u, t_from, traj, m);
  double dt = detail::dt_cap<N>(m.geom, cfg, k1.sup_inv_trace);

  while (t < t_span - 1e-14) {
    const double next_event =
        std::min(t_span, next_sample * sample_dt);
    double dt_try = std::min(dt, next_event - t);
    bool accepted = false;
    for (int halving = 0; halving <= 30 && !accepted; ++halving) {
      try {
        ScalarField stage = u;
        axpy(stage, 0.5 * dt_try, k1.value);
        auto k2 = detail::heat_rhs(stage, t_from + t + 0.5 * dt_try, traj, m);

        stage = u;
        axpy(stage, 0.5 * dt_try, k2.value);
        auto k3 = detail::heat_rhs(stage, t_from + t + 0.5 * dt_try, traj, m);

        stage = u;
        axpy(stage, dt_try, k3.value);
        auto k4 = detail::heat_rhs(stage, t_from + t + dt_try, traj, m);

        ScalarField u_new = u;
        parallel_for(u_new.size(), [&](std::size_t p) {
          u_new[p] += dt_try / 6.0 *
                      (k1.value[p] + 2.0 * k2.value[p] + 2.0 * k3.value[p] +
                       k4.value[p]);
        });
        auto k1_new = detail::heat_rhs(u_new, t_from + t + dt_try, traj, m);
        u = std::move(u_new);
        k1 = std::move(k1_new);
        t += dt_try;
        dt = std::min(dt * 1.1, detail::dt_cap<N>(m.geom, cfg, k1.sup_inv_trace));
        accepted = true;
      } catch (const NumericError&) {
        dt_try *= 0.5;
      } catch (const PositivityError&) {
        dt_try *= 0.5;
      }
    }
    if (!accepted)
      throw BlowupError("heat_solve: step-size halvings exhausted at local t = " +
                        std::to_string(t));
    if (std::abs(t - next_sample * sample_dt) < 1e-12) {
      run.times.push_back(next_sample * sample_dt);
      run.u.push_back(u);
      ++next_sample;
    }
  }
  if (run.times.back() < t_span - 1e-12) {
    run.times.push_back(t_span);
    run.u.push_back(u);
  }
  return run;
}

// ---------------------------------------------------------------------------
// Harnack inequality check

struct HarnackCheck {
  double eps = 0.0, alpha = 0.0, t1 = 0.0, t2 = 0.0;
  double ratio_power = 0.0;  // (t2/t1)^{n alpha / (1 - eps)}
  double lhs = 0.0;          // sup u(., t1)
  double inf_t2 = 0.0;       // inf u(., t2)
  double rhs_core = 0.0;     // inf u(., t2) * ratio_power
  double implied_C = 0.0;    // smallest C >= 0 closing the inequality
};

// sup u(t1) <= inf u(t2) (t2/t1)^{n a/(1-e)} exp(C a/(t2-t1) + C (t2-t1) a^2/(e(a-1)))
// solved for the smallest admissible C.
template <int N>
HarnackCheck harnack_check(const HeatRun<N>& run, double eps, double alpha,
                           double t1, double t2, const Model<N>&) {
  if (!(eps > 0.0 && eps < 0.5)) throw ConfigError("harnack_check: eps must be in (0,1/2)");
  if (!(alpha > 1.0)) throw ConfigError("harnack_check: alpha must be > 1");
  if (!(t2 > t1 && t1 > 0.0)) throw ConfigError("harnack_check: need t2 > t1 > 0");

  HarnackCheck out;
  out.eps = eps;
  out.alpha = alpha;
  out.t1 = t1;
  out.t2 = t2;
  const ScalarField& u1 = run.u_at_sample(run.sample_index(t1));
  const ScalarField& u2 = run.u_at_sample(run.sample_index(t2));
  out.lhs = max_value(u1);
  out.inf_t2 = min_value(u2);
  if (!(out.inf_t2 > 0.0) || !(out.lhs > 0.0))
    throw NumericError("harnack_check: u not positive at the required times (inf = " +
                       std::to_string(out.inf_t2) + ")");
  out.ratio_power = std::pow(t2 / t1, N * alpha / (1.0 - eps));
  out.rhs_core = out.inf_t2 * out.ratio_power;
  const double k =
      alpha / (t2 - t1) + (t2 - t1) * alpha * alpha / (eps * (alpha - 1.0));
  out.implied_C = std::max(0.0, std::log(out.lhs / out.rhs_core) / k);
  return out;
}

// G = t (|df|^2_gtilde - alpha df/dt) with f = log u; df/dt by centered
// differences of stored samples.
template <int N>
struct HarnackG {
  ScalarField G;
  double sup = 0.0;
};

template <int N>
HarnackG<N> harnack_G(const HeatRun<N>& run, const Trajectory& traj,
                      const Model<N>& m, double alpha, double t_local) {
  const std::size_t k = run.sample_index(t_local);
  if (k == 0 || k + 1 >= run.times.size())
    throw ConfigError("harnack_G: need an interior sample time");
  const ScalarField& u = run.u[k];
  const double t = run.times[k];
  if (!(min_value(u) > 0.0))
    throw NumericError("harnack_G: u not positive at local t = " + std::to_string(t));

  ScalarField f(u.geom());
  parallel_for(f.size(), [&](std::size_t p) { f[p] = std::log(u[p]); });

  const ScalarField& um = run.u[k - 1];
  const ScalarField& up = run.u[k + 1];
  if (!(min_value(um) > 0.0 && min_value(up) > 0.0))
    throw NumericError("harnack_G: u not positive at neighbor samples");
  const double dt2 = run.times[k + 1] - run.times[k - 1];
  ScalarField ft(u.geom());
  parallel_for(f.size(), [&](std::size_t p) {
    ft[p] = (std::log(up[p]) - std::log(um[p])) / dt2;
  });

  const ScalarField phi = traj.phi_at(run.t0_abs + t);
  auto gt = g_tilde(phi, m);
  require_positive(gt, "harnack_G");
  ScalarField grad = gradient_norm_sq(f, herm_inverse_field<N>(gt.mat), m);

  HarnackG<N> out;
  out.G = ScalarField(u.geom());
  parallel_for(f.size(), [&](std::size_t p) {
    out.G[p] = t * (grad[p] - alpha * ft[p]);
  });
  out.sup = max_value(out.G);
  return out;
}

// ---------------------------------------------------------------------------
// Oscillation decay: theta series, geometric contraction, exponential fit.

struct ThetaSeries {
  std::vector<double> t;
  std::vector<double> theta;

  // log-linear interpolation (exact for exponential decay)
  double at(double time) const {
    if (t.empty()) throw ConfigError("ThetaSeries: empty");
    if (time <= t.front()) return theta.front();
    if (time >= t.back()) return theta.back();
    std::size_t hi = 1;
    while (t[hi] < time) ++hi;
    const std::size_t lo = hi - 1;
    const double w = (time - t[lo]) / (t[hi] - t[lo]);
    if (theta[lo] > 0.0 && theta[hi] > 0.0)
      return std::exp((1.0 - w) * std::log(theta[lo]) + w * std::log(theta[hi]));
    return (1.0 - w) * theta[lo] + w * theta[hi];
  }
};

inline ThetaSeries theta_series(const MonitorReport& report) {
  ThetaSeries s;
  for (const MonitorRow& r : report.rows) {
    s.t.push_back(r.t);
    s.theta.push_back(r.theta);
  }
  return s;
}

template <int N>
ThetaSeries theta_series(const HeatRun<N>& run) {
  ThetaSeries s;
  for (std::size_t k = 0; k < run.times.size(); ++k) {
    s.t.push_back(run.times[k]);
    s.theta.push_back(oscillation(run.u[k]));
  }
  return s;
}

struct ContractionResult {
  std::vector<int> m;
  std::vector<double> kappa;  // theta(m) / theta(m-1)
  double kappa_max = 0.0;
  bool vacuous = false;  // theta below the floor everywhere
};

// kappa_m = theta(m)/theta(m-1) at integer times until theta hits the floor.
inline ContractionResult contraction_check(const ThetaSeries& s, double floor) {
  ContractionResult out;
  if (s.t.empty()) {
    out.vacuous = true;
    return out;
  }
  const int m_max = static_cast<int>(std::floor(s.t.back() + 1e-12));
  double prev = s.at(0.0);
  for (int m = 1; m <= m_max; ++m) {
    const double cur = s.at(static_cast<double>(m));
    if (!(prev > floor) || !(cur > floor)) break;
    out.m.push_back(m);
    out.kappa.push_back(cur / prev);
    out.kappa_max = std::max(out.kappa_max, cur / prev);
    prev = cur;
  }
  out.vacuous = out.kappa.empty();
  return out;
}

struct DecayFit {
  double C = 0.0;
  double eta = 0.0;
  double r_squared = 0.0;
  double t_start = 0.0;
  double t_end = 0.0;
  int rows_used = 0;
};

// Least-squares line on (t, log theta) over the window.
inline DecayFit fit_decay(const ThetaSeries& s, double t_start, double t_end) {
  double scale = 0.0;
  for (double v : s.theta) scale = std::max(scale, v);
  const double floor = 10.0 * std::numeric_limits<double>::epsilon() * scale;

  std::vector<double> ts, ys;
  for (std::size_t k = 0; k < s.t.size(); ++k) {
    if (s.t[k] < t_start || s.t[k] > t_end) continue;
    if (!(s.theta[k] > floor)) continue;
    ts.push_back(s.t[k]);
    ys.push_back(std::log(s.theta[k]));
  }
  if (ts.size() < 10)
    throw ConfigError("fit_decay: fewer than 10 usable rows in window [" +
                      std::to_string(t_start) + ", " + std::to_string(t_end) + "]");

  const double n = static_cast<double>(ts.size());
  double st = 0, sy = 0, stt = 0, sty = 0;
  for (std::size_t k = 0; k < ts.size(); ++k) {
    st += ts[k];
    sy += ys[k];
    stt += ts[k] * ts[k];
    sty += ts[k] * ys[k];
  }
  const double slope = (n * sty - st * sy) / (n * stt - st * st);
  const double intercept = (sy - slope * st) / n;

  double ss_res = 0, ss_tot = 0;
  const double ybar = sy / n;
  for (std::size_t k = 0; k < ts.size(); ++k) {
    const double fit = intercept + slope * ts[k];
    ss_res += (ys[k] - fit) * (ys[k] - fit);
    ss_tot += (ys[k] - ybar) * (ys[k] - ybar);
  }

  DecayFit out;
  out.C = std::exp(intercept);
  out.eta = -slope;
  out.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
  out.t_start = t_start;
  out.t_end = t_end;
  out.rows_used = static_cast<int>(ts.size());
  if (!std::isfinite(out.eta)) throw NumericError("fit_decay: non-finite rate");
  return out;
}

// ---------------------------------------------------------------------------
// Structural checks shared by tests and the acceptance suite.

struct EnvelopeCheck {
  bool ok = true;
  double worst_violation = 0.0;
  std::string where;
};

// sup phi_t nonincreasing / inf phi_t nondecreasing across rows, with slack
// 1e-10 * (1 + |value|).
inline EnvelopeCheck check_envelopes(const MonitorReport& report) {
  EnvelopeCheck out;
  for (std::size_t k = 1; k < report.rows.size(); ++k) {
    const auto& a = report.rows[k - 1];
    const auto& b = report.rows[k];
    const double up = b.sup_env - a.sup_env - 1e-10 * (1.0 + std::abs(a.sup_env));
    const double dn = a.inf_env - b.inf_env - 1e-10 * (1.0 + std::abs(a.inf_env));
    const double v = std::max(up, dn);
    if (v > out.worst_violation) {
      out.worst_violation = v;
      out.where = "row " + std::to_string(k) + " (t = " + std::to_string(b.t) + ")";
      out.ok = false;
    }
  }
  return out;
}

template <int N>
EnvelopeCheck check_envelopes(const HeatRun<N>& run) {
  EnvelopeCheck out;
  double prev_sup = max_value(run.u[0]);
  double prev_inf = min_value(run.u[0]);
  for (std::size_t k = 1; k < run.u.size(); ++k) {
    const double cs = max_value(run.u[k]);
    const double ci = min_value(run.u[k]);
    const double up = cs - prev_sup - 1e-10 * (1.0 + std::abs(prev_sup));
    const double dn = prev_inf - ci - 1e-10 * (1.0 + std::abs(prev_inf));
    const double v = std::max(up, dn);
    if (v > out.worst_violation) {
      out.worst_violation = v;
      out.where = "sample " + std::to_string(k);
      out.ok = false;
    }
    prev_sup = cs;
    prev_inf = ci;
  }
  return out;
}

// sup |phi_t| <= lemma_bound + slack at every row.
inline EnvelopeCheck check_phit_bound(const MonitorReport& report, double slack = 1e-8) {
  EnvelopeCheck out;
  for (std::size_t k = 0; k < report.rows.size(); ++k) {
    const double v = report.rows[k].sup_phit - report.lemma_bound - slack;
    if (v > out.worst_violation) {
      out.worst_violation = v;
      out.where = "row " + std::to_string(k);
      out.ok = false;
    }
  }
  return out;
}

// Oscillation boundedness: among rows with t >= t_min, no row exceeds
// `factor` times the maximum over the first tenth of those rows.
inline EnvelopeCheck check_oscillation_bounded(const MonitorReport& report,
                                               double t_min = 1.0,
                                               double factor = 2.0) {
  EnvelopeCheck out;
  std::vector<const MonitorRow*> rows;
  for (const auto& r : report.rows)
    if (r.t >= t_min) rows.push_back(&r);
  if (rows.size() < 2) return out;
  const std::size_t head = std::max<std::size_t>(1, rows.size() / 10);
  double ref = 0.0;
  for (std::size_t k = 0; k < head; ++k) ref = std::max(ref, rows[k]->osc_phi);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const double v = rows[k]->osc_phi - factor * ref;
    if (v > out.worst_violation) {
      out.worst_violation = v;
      out.where = "t = " + std::to_string(rows[k]->t);
      out.ok = false;
    }
  }
  return out;
}

// Positive heat solutions from the oscillation of u = phi_t at integer times:
// v_m = sup u(m-1) - u(m-1+t), w_m = u(m-1+t) - inf u(m-1).
template <int N>
ScalarField vm_initial(const ScalarField& u_start) {
  ScalarField v(u_start.geom());
  const double s = max_value(u_start);
  parallel_for(v.size(), [&](std::size_t p) { v[p] = s - u_start[p]; });
  return v;
}

template <int N>
ScalarField wm_initial(const ScalarField& u_start) {
  ScalarField w(u_start.geom());
  const double s = min_value(u_start);
  parallel_for(w.size(), [&](std::size_t p) { w[p] = u_start[p] - s; });
  return w;
}

}  // namespace maflow
