#pragma once

// Parameter recovery from recorded traces: friction law fit, equivalent
// inertia, static loads, feedforward constants, and the staged calibration
// of the three adjustment delays against measured positions.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "feedsim/cascade.hpp"
#include "feedsim/core.hpp"
#include "feedsim/engine.hpp"
#include "feedsim/plant.hpp"
#include "feedsim/trajectory.hpp"

namespace feedsim {

struct IdentReport {
  double rms = 0;
  double r_squared = 0;
  std::size_t samples = 0;
  std::vector<std::string> notes;
};

namespace detail {

// golden-section minimizer on [lo, hi]
template <class F>
double golden_min(F&& f, double lo, double hi, int iters = 120) {
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
  double f1 = f(x1), f2 = f(x2);
  for (int i = 0; i < iters; ++i) {
    if (f1 < f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - gr * (hi - lo);
      f1 = f(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + gr * (hi - lo);
      f2 = f(x2);
    }
  }
  return (lo + hi) / 2;
}

}  // namespace detail

// --- friction ---------------------------------------------------------------

struct FrictionFit {
  FrictionParams params;
  IdentReport report;
};

// Fits i = a e^{bv} + c e^{dv} on speed/current points taken at constant
// velocity. Positive and negative displacements are folded onto v > 0 (odd
// symmetry). Separable approach: coarse grid on the exponents with a linear
// solve for the amplitudes, then a deterministic Nelder-Mead refinement.
inline FrictionFit fit_friction(
    std::span<const std::pair<double, double>> points) {
  std::vector<double> v, i;
  std::size_t dropped = 0;
  for (const auto& [vk, ik] : points) {
    if (vk == 0) {
      ++dropped;
      continue;  // stiction band carries no law information
    }
    v.push_back(std::abs(vk));
    i.push_back(vk > 0 ? ik : -ik);
  }
  std::set<long long> distinct;
  for (double vk : v) distinct.insert(std::llround(vk * 1e6));
  if (distinct.size() < 8)
    throw IdentError("friction fit needs at least 8 distinct speeds, got " +
                     std::to_string(distinct.size()));

  const std::size_t n = v.size();
  struct LinFit {
    double a = 0, c = 0, sse = 0;
    bool degenerate = false;
  };
  auto solve_amplitudes = [&](double b, double d) {
    LinFit r;
    double s11 = 0, s12 = 0, s22 = 0, t1 = 0, t2 = 0;
    for (std::size_t k = 0; k < n; ++k) {
      const double x1 = std::exp(b * v[k]), x2 = std::exp(d * v[k]);
      s11 += x1 * x1;
      s12 += x1 * x2;
      s22 += x2 * x2;
      t1 += i[k] * x1;
      t2 += i[k] * x2;
    }
    const double det = s11 * s22 - s12 * s12;
    if (!(det > 1e-12 * s11 * s22)) {
      r.degenerate = true;
      r.sse = std::numeric_limits<double>::infinity();
      return r;
    }
    r.a = (t1 * s22 - t2 * s12) / det;
    r.c = (s11 * t2 - s12 * t1) / det;
    for (std::size_t k = 0; k < n; ++k) {
      const double e = r.a * std::exp(b * v[k]) + r.c * std::exp(d * v[k]) - i[k];
      r.sse += e * e;
    }
    return r;
  };
  auto sse_of = [&](double b, double d) { return solve_amplitudes(b, d).sse; };

  // coarse grid over the exponents
  double best_b = 0.0, best_d = -0.3,
         best_sse = std::numeric_limits<double>::infinity();
  for (int ib = 0; ib <= 30; ++ib) {
    const double b = -1.0 + 1.5 * ib / 30.0;
    for (int id = 0; id <= 40; ++id) {
      const double d = -1.5 + 2.0 * id / 40.0;
      if (std::abs(b - d) < 1e-3) continue;
      const double s = sse_of(b, d);
      if (s < best_sse) {
        best_sse = s;
        best_b = b;
        best_d = d;
      }
    }
  }

  // Nelder-Mead on (b, d), deterministic start at the grid winner
  struct Vert {
    double b, d, f;
  };
  auto mk = [&](double b, double d) { return Vert{b, d, sse_of(b, d)}; };
  std::array<Vert, 3> sx = {mk(best_b, best_d), mk(best_b + 0.05, best_d),
                            mk(best_b, best_d + 0.05)};
  for (int it = 0; it < 400; ++it) {
    std::sort(sx.begin(), sx.end(),
              [](const Vert& x, const Vert& y) { return x.f < y.f; });
    if (std::abs(sx[2].f - sx[0].f) <=
        1e-16 * (1.0 + std::abs(sx[0].f)))
      break;
    const double cb = (sx[0].b + sx[1].b) / 2, cd = (sx[0].d + sx[1].d) / 2;
    const Vert refl = mk(cb + (cb - sx[2].b), cd + (cd - sx[2].d));
    if (refl.f < sx[0].f) {
      const Vert exp2 = mk(cb + 2 * (cb - sx[2].b), cd + 2 * (cd - sx[2].d));
      sx[2] = exp2.f < refl.f ? exp2 : refl;
    } else if (refl.f < sx[1].f) {
      sx[2] = refl;
    } else {
      const Vert con = mk(cb + 0.5 * (sx[2].b - cb), cd + 0.5 * (sx[2].d - cd));
      if (con.f < sx[2].f) {
        sx[2] = con;
      } else {
        sx[1] = mk(sx[0].b + 0.5 * (sx[1].b - sx[0].b),
                   sx[0].d + 0.5 * (sx[1].d - sx[0].d));
        sx[2] = mk(sx[0].b + 0.5 * (sx[2].b - sx[0].b),
                   sx[0].d + 0.5 * (sx[2].d - sx[0].d));
      }
    }
  }
  std::sort(sx.begin(), sx.end(),
            [](const Vert& x, const Vert& y) { return x.f < y.f; });

  FrictionFit out;
  double b = sx[0].b, d = sx[0].d;
  LinFit lin = solve_amplitudes(b, d);

  // a vanishing amplitude leaves its exponent unidentifiable
  const double amp_scale = std::max({1.0, std::abs(lin.a), std::abs(lin.c)});
  if (lin.degenerate || std::abs(b - d) < 1e-4 ||
      std::abs(lin.a) < 1e-6 * amp_scale || std::abs(lin.c) < 1e-6 * amp_scale) {
    // single-exponential fallback (pure Coulomb/viscous data)
    auto sse1 = [&](double bb) {
      double sxx = 0, sxy = 0;
      for (std::size_t k = 0; k < n; ++k) {
        const double x = std::exp(bb * v[k]);
        sxx += x * x;
        sxy += i[k] * x;
      }
      const double a = sxy / sxx;
      double sse = 0;
      for (std::size_t k = 0; k < n; ++k) {
        const double e = a * std::exp(bb * v[k]) - i[k];
        sse += e * e;
      }
      return sse;
    };
    b = detail::golden_min(sse1, -1.5, 0.5);
    double sxx = 0, sxy = 0;
    for (std::size_t k = 0; k < n; ++k) {
      const double x = std::exp(b * v[k]);
      sxx += x * x;
      sxy += i[k] * x;
    }
    lin.a = sxy / sxx;
    lin.c = 0;
    d = 0;
    lin.sse = sse1(b);
    out.report.notes.push_back(
        "double-exponential fit degenerate; single-exponential fallback used");
  }

  if (std::abs(lin.a) > 1e4 || std::abs(lin.c) > 1e4)
    throw IdentError("friction fit diverged (best residual rms " +
                     std::to_string(std::sqrt(lin.sse / n)) + " A)");

  if (b < d) {  // canonical order: slow branch first
    std::swap(b, d);
    std::swap(lin.a, lin.c);
  }
  out.params.a = lin.a;
  out.params.b = b;
  out.params.c = lin.c;
  out.params.d = d;
  out.params.i0 = lin.a + lin.c;
  out.params.v_fit_max = *std::max_element(v.begin(), v.end());

  double mean = 0;
  for (double ik : i) mean += ik;
  mean /= static_cast<double>(n);
  double ss_tot = 0;
  for (double ik : i) ss_tot += (ik - mean) * (ik - mean);
  out.report.samples = n;
  out.report.rms = std::sqrt(lin.sse / static_cast<double>(n));
  out.report.r_squared = ss_tot > 0 ? std::max(0.0, 1.0 - lin.sse / ss_tot) : 1.0;
  if (dropped)
    out.report.notes.push_back(std::to_string(dropped) +
                               " zero-speed samples dropped");
  return out;
}

// Mean speed/current of every constant-velocity plateau in a run trace;
// accelerating samples are dropped. Feed the result to fit_friction.
inline std::vector<std::pair<double, double>> extract_constant_velocity_points(
    const Trace& trace, std::vector<std::string>* notes = nullptr) {
  trace.check_consistent();
  const auto& sv = trace.samples("sv");
  const auto& smc = trace.samples("smc");
  const auto acc = euler_d1(sv, trace.dt);

  double v_peak = 0;
  for (double x : sv) v_peak = std::max(v_peak, std::abs(x));
  const double acc_tol = std::max(1e-6, 0.02 * v_peak);  // vel-units per s
  const double v_floor = std::max(1e-3, 1e-3 * v_peak);

  std::vector<std::pair<double, double>> out;
  std::size_t k = 1, dropped = 0;
  while (k < sv.size()) {
    if (std::abs(acc[k]) < acc_tol && std::abs(sv[k]) > v_floor) {
      std::size_t start = k;
      while (k < sv.size() && std::abs(acc[k]) < acc_tol &&
             std::abs(sv[k]) > v_floor)
        ++k;
      // trim the edges of the plateau; loop transients linger there
      const std::size_t trim = 10;
      if (k - start > 2 * trim + 5) {
        double mv = 0, mi = 0;
        std::size_t cnt = 0;
        for (std::size_t j = start + trim; j < k - trim; ++j) {
          mv += sv[j];
          mi += smc[j];
          ++cnt;
        }
        out.emplace_back(mv / static_cast<double>(cnt),
                         mi / static_cast<double>(cnt));
      }
    } else {
      ++dropped;
      ++k;
    }
  }
  if (notes && dropped)
    notes->push_back(std::to_string(dropped) +
                     " accelerating/slow samples outside plateaus dropped");
  return out;
}

// --- inertia ------------------------------------------------------------------

struct InertiaEstimate {
  double j_eq = 0;
  IdentReport report;
};

// J = (K_t i - C_r) / (dOmega/dt), averaged per accelerating interval and
// then across intervals. Friction and static load must already be known.
inline InertiaEstimate estimate_inertia(const Trace& trace,
                                        const AxisParameters& p) {
  trace.check_consistent();
  const auto& sv = trace.samples("sv");
  const auto& smc = trace.samples("smc");
  const auto* sp = trace.find("sp");

  std::vector<double> omega(sv.size());
  for (std::size_t k = 0; k < sv.size(); ++k)
    omega[k] = p.omega_from_axis_vel_ui(sv[k]);
  const auto domega = euler_d1(omega, trace.dt);

  double a_peak = 0;
  for (double a : domega) a_peak = std::max(a_peak, std::abs(a));
  const double a_min = std::max(1.0, 0.05 * a_peak);

  InertiaEstimate out;
  std::vector<double> interval_means;
  std::vector<double> used_j, used_drive;
  std::size_t k = 1;
  while (k < sv.size()) {
    if (std::abs(domega[k]) < a_min) {
      ++k;
      continue;
    }
    std::size_t start = k;
    while (k < sv.size() && std::abs(domega[k]) >= a_min) ++k;
    if (k - start < 5) continue;
    double sum = 0;
    std::size_t cnt = 0;
    for (std::size_t j = start + 2; j + 2 < k; ++j) {
      if (std::abs(sv[j]) < 0.05) continue;  // stiction band
      const double pos = sp ? sp->samples[j] : 0.0;
      const double c_r = p.k_t * friction_current(p.friction, sv[j], 0, p.k_t) +
                         p.static_load_at(pos);
      const double drive = p.k_t * smc[j] - c_r;
      const double jj = drive / domega[j];
      sum += jj;
      ++cnt;
      used_j.push_back(jj);
      used_drive.push_back(drive);
    }
    if (cnt) interval_means.push_back(sum / static_cast<double>(cnt));
  }
  if (interval_means.empty())
    throw IdentError("no accelerating interval found in the trace");

  double j_eq = 0;
  for (double m : interval_means) j_eq += m;
  j_eq /= static_cast<double>(interval_means.size());
  out.j_eq = j_eq;
  out.report.samples = used_j.size();

  // torque residuals of drive = J * dOmega/dt with the pooled estimate
  double ss_res = 0, ss_tot = 0, mean_drive = 0;
  for (double dv : used_drive) mean_drive += dv;
  mean_drive /= static_cast<double>(used_drive.size());
  for (std::size_t q = 0; q < used_j.size(); ++q) {
    const double accel = used_drive[q] / used_j[q];
    const double res = used_drive[q] - j_eq * accel;
    ss_res += res * res;
    ss_tot += (used_drive[q] - mean_drive) * (used_drive[q] - mean_drive);
  }
  out.report.rms = std::sqrt(ss_res / static_cast<double>(used_j.size()));
  out.report.r_squared =
      ss_tot > 0 ? std::clamp(1.0 - ss_res / ss_tot, 0.0, 1.0) : 1.0;
  out.report.notes.push_back(std::to_string(interval_means.size()) +
                             " accelerating intervals used");
  return out;
}

// --- static load -----------------------------------------------------------------

struct StaticLoadEstimate {
  double constant = 0;       // N.m, when a single rest position was seen
  StaticLoadTable table;     // per-position torques otherwise
  IdentReport report;
};

// Resistant torque from rest captures: torque = K_t * mean current per rest
// position. Multiple positions yield an interpolation table (tilting axes).
inline StaticLoadEstimate estimate_static_load(const Trace& trace,
                                               const AxisParameters& p) {
  trace.check_consistent();
  const auto& sv = trace.samples("sv");
  const auto& smc = trace.samples("smc");
  const auto& sp = trace.samples("sp");
  for (std::size_t k = 0; k < sv.size(); ++k)
    if (std::abs(sv[k]) > 1e-3)
      throw IdentError("motion detected at sample " + std::to_string(k) +
                       " (|v| = " + std::to_string(std::abs(sv[k])) + ")");

  // cluster by position
  std::vector<std::pair<double, std::pair<double, std::size_t>>> groups;
  const double pos_tol = 1e-3;
  for (std::size_t k = 0; k < sp.size(); ++k) {
    bool found = false;
    for (auto& g : groups) {
      if (std::abs(g.first - sp[k]) <= pos_tol) {
        g.second.first += smc[k];
        g.second.second += 1;
        found = true;
        break;
      }
    }
    if (!found) groups.push_back({sp[k], {smc[k], 1}});
  }
  StaticLoadEstimate out;
  out.report.samples = sv.size();
  out.report.r_squared = 1.0;
  for (auto& g : groups)
    out.table.emplace_back(
        g.first, p.k_t * g.second.first / static_cast<double>(g.second.second));
  std::sort(out.table.begin(), out.table.end());
  out.constant = out.table.front().second;
  if (out.table.size() == 1) out.table.clear();
  return out;
}

// --- feedforward constants ---------------------------------------------------------

struct FeedforwardFit {
  double vffw = 0;
  double tffw = 0;  // kg.m^2
  IdentReport vffw_report, tffw_report;
};

namespace detail {

struct Slope {
  double slope = 0, rms = 0, r2 = 0;
};

// regression through the origin; r2 on the uncentered total sum of squares
inline Slope regress_origin(std::span<const double> x,
                            std::span<const double> y) {
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sxx += x[k] * x[k];
    sxy += x[k] * y[k];
    syy += y[k] * y[k];
  }
  if (!(sxx > 0)) throw IdentError("degenerate regressor (constant setpoint)");
  Slope s;
  s.slope = sxy / sxx;
  double ss_res = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double e = y[k] - s.slope * x[k];
    ss_res += e * e;
  }
  s.rms = std::sqrt(ss_res / static_cast<double>(x.size()));
  s.r2 = syy > 0 ? std::max(0.0, 1.0 - ss_res / syy) : 1.0;
  return s;
}

}  // namespace detail

// Recovers VFFW and TFFW by regressing the logged feedforward setpoints
// against the backward-difference derivatives of PSEC (velocity in axis
// velocity units, acceleration mapped to motor rad/s^2).
inline FeedforwardFit fit_feedforward(const Trace& trace,
                                      const AxisParameters& p) {
  trace.check_consistent();
  const auto& psec = trace.samples("psec");
  const auto& vffws = trace.samples("vffws");
  const auto& tffws = trace.samples("tffws");

  auto d1 = euler_d1(psec, trace.dt);
  for (double& x : d1) x = x / p.pos_ui_per_si() * p.vel_ui_per_si();
  auto d2 = euler_d2(psec, trace.dt);
  for (double& x : d2) x = x / p.pos_ui_per_si() / p.transmission_si();

  FeedforwardFit out;
  const auto sv = detail::regress_origin(d1, vffws);
  out.vffw = sv.slope;
  out.vffw_report.samples = psec.size();
  out.vffw_report.rms = sv.rms;
  out.vffw_report.r_squared = sv.r2;
  if (sv.r2 < 0.99)
    out.vffw_report.notes.push_back(
        "velocity feedforward not constant (R^2 < 0.99)");

  const auto st = detail::regress_origin(d2, tffws);
  out.tffw = st.slope;
  out.tffw_report.samples = psec.size();
  out.tffw_report.rms = st.rms;
  out.tffw_report.r_squared = st.r2;
  if (st.r2 < 0.99)
    out.tffw_report.notes.push_back(
        "torque feedforward not constant (R^2 < 0.99)");
  return out;
}

// --- delay calibration ----------------------------------------------------------

struct DelayCalibration {
  double alpha = 0, beta = 0, gamma = 0;  // s
  IdentReport report;
};

namespace detail {

inline bool channel_active(const Trace& t, std::string_view name) {
  const auto* c = t.find(name);
  if (!c) return false;
  for (double x : c->samples)
    if (std::abs(x) > 1e-9) return true;
  return false;
}

// reference stream at plant resolution from a t_sp-sampled psec channel
inline std::vector<double> upsample_linear(std::span<const double> x,
                                           std::size_t ratio) {
  std::vector<double> out;
  out.reserve((x.size() - 1) * ratio + 1);
  for (std::size_t k = 0; k + 1 < x.size(); ++k)
    for (std::size_t r = 0; r < ratio; ++r) {
      const double w = static_cast<double>(r) / static_cast<double>(ratio);
      out.push_back(x[k] * (1 - w) + x[k + 1] * w);
    }
  out.push_back(x.back());
  return out;
}

}  // namespace detail

// Staged least-squares recovery of (alpha, beta, gamma): alpha against a run
// without feedforward, then beta with velocity feedforward only, then gamma
// with both. Every candidate delay is a whole number of plant steps; a coarse
// grid brackets the optimum and an integer golden-section search refines it.
inline DelayCalibration calibrate_delays(const Trace& run_no_ffw,
                                         const Trace& run_vffw,
                                         const Trace& run_both,
                                         const AxisParameters& p,
                                         double plant_dt = kDefaultPlantStep) {
  using detail::channel_active;
  if (channel_active(run_no_ffw, "vffws") || channel_active(run_no_ffw, "tffws"))
    throw IdentError("run 1 must be captured without feedforward actions");
  if (!channel_active(run_vffw, "vffws") || channel_active(run_vffw, "tffws"))
    throw IdentError("run 2 must be captured with only the velocity feedforward");
  if (!channel_active(run_both, "vffws") || !channel_active(run_both, "tffws"))
    throw IdentError("run 3 must be captured with both feedforwards");

  DelayCalibration out;
  AxisParameters work = p;
  const auto n_sp = detail::steps_of(p.t_sp, plant_dt);

  const long long cap = std::llround(0.020 / plant_dt);  // search up to 20 ms
  const long long coarse = std::max<long long>(1, std::llround(0.0005 / plant_dt));

  auto objective_for = [&](const Trace& meas, bool vffw_on, bool tffw_on) {
    const auto& psec = meas.samples("psec");
    const auto& sp_meas = meas.samples("sp");
    auto fine = detail::upsample_linear(psec, n_sp);
    const std::size_t n_steps = (psec.size() - 1) * n_sp + 1;
    return [&, fine = std::move(fine), &sp_meas = sp_meas, vffw_on, tffw_on,
            n_steps](const AxisParameters& cand) {
      ControllerChoice choice;
      choice.type = ControllerChoice::Type::cascade;
      choice.cascade.vffw_on = vffw_on;
      choice.cascade.tffw_on = tffw_on;
      choice.cascade.delays_on = true;
      const std::vector<std::string> rec = {"sp"};
      const auto sim =
          simulate_axis(cand, choice, fine, n_steps, plant_dt, rec);
      const auto& sp_sim = sim.trace.samples("sp");
      double sse = 0;
      const std::size_t m = std::min(sp_sim.size(), sp_meas.size());
      for (std::size_t k = 0; k < m; ++k) {
        const double e = sp_sim[k] - sp_meas[k];
        sse += e * e;
      }
      return sse;
    };
  };

  auto search_stage = [&](auto&& objective, auto&& apply,
                          const char* stage_name) {
    auto eval = [&](long long steps) {
      AxisParameters cand = work;
      apply(cand, static_cast<double>(steps) * plant_dt);
      return objective(cand);
    };
    long long best = 0;
    double best_f = std::numeric_limits<double>::infinity();
    std::vector<std::pair<long long, double>> coarse_vals;
    for (long long c = 0; c <= cap; c += coarse) {
      const double f = eval(c);
      coarse_vals.emplace_back(c, f);
      if (f < best_f) {
        best_f = f;
        best = c;
      }
    }
    // integer golden-section refinement around the best coarse point
    long long lo = std::max<long long>(0, best - coarse);
    long long hi = std::min(cap, best + coarse);
    while (hi - lo > 2) {
      const long long m1 = lo + (hi - lo) / 3;
      const long long m2 = hi - (hi - lo) / 3;
      if (eval(m1) <= eval(m2))
        hi = m2;
      else
        lo = m1;
    }
    best = lo;
    best_f = eval(lo);
    for (long long c = lo + 1; c <= hi; ++c) {
      const double f = eval(c);
      if (f < best_f) {
        best_f = f;
        best = c;
      }
    }
    // flat-objective warning: distant coarse candidates matching the optimum
    for (const auto& [c, f] : coarse_vals) {
      if (std::llabs(c - best) > coarse &&
          f <= best_f * (1 + 1e-9) + 1e-300) {
        out.report.notes.push_back(std::string(stage_name) +
                                   ": flat objective, candidate at " +
                                   std::to_string(static_cast<double>(c) * plant_dt) +
                                   " s matches the optimum");
        break;
      }
    }
    out.report.rms += best_f;
    return static_cast<double>(best) * plant_dt;
  };

  out.alpha = search_stage(
      objective_for(run_no_ffw, false, false),
      [](AxisParameters& cand, double v) { cand.alpha = v; }, "alpha stage");
  work.alpha = out.alpha;

  out.beta = search_stage(
      objective_for(run_vffw, true, false),
      [](AxisParameters& cand, double v) { cand.beta = v; }, "beta stage");
  work.beta = out.beta;

  out.gamma = search_stage(
      objective_for(run_both, true, true),
      [](AxisParameters& cand, double v) { cand.gamma = v; }, "gamma stage");

  out.report.samples = run_no_ffw.length() + run_vffw.length() + run_both.length();
  out.report.r_squared = 1.0;
  return out;
}

}  // namespace feedsim
