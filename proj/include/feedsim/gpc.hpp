#pragma once

// Generalized predictive control: CARIMA prediction model, Diophantine
// predictor chain, offline RST synthesis, and the runtime controller that
// replaces the proportional position loop.
//
// Model convention: A(q^-1) y(t) = B(q^-1) u(t) + xi(t)/Delta with A monic,
// C = 1, and dead time absorbed as leading zeros of B (b0 = 0). For the
// position loop y is the axis position (mm | deg) and u the velocity
// setpoint (m/min | rpm), both at the position-loop period.

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "feedsim/cascade.hpp"
#include "feedsim/core.hpp"
#include "feedsim/plant.hpp"

namespace feedsim {

namespace poly {

// Coefficient sequences in the backward-shift operator: p[k] multiplies q^-k.
using Poly = std::vector<double>;

inline Poly mul(const Poly& a, const Poly& b) {
  if (a.empty() || b.empty()) return {};
  Poly out(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
  return out;
}

inline void add_scaled(Poly& a, const Poly& b, double s) {
  if (a.size() < b.size()) a.resize(b.size(), 0.0);
  for (std::size_t i = 0; i < b.size(); ++i) a[i] += s * b[i];
}

inline double eval_at_one(const Poly& p) {
  double s = 0;
  for (double c : p) s += c;
  return s;
}

inline std::complex<double> eval(const Poly& p, std::complex<double> z_inv) {
  std::complex<double> acc = 0, pw = 1;
  for (double c : p) {
    acc += c * pw;
    pw *= z_inv;
  }
  return acc;
}

inline Poly trim(Poly p, double eps = 0.0) {
  while (p.size() > 1 && std::abs(p.back()) <= eps) p.pop_back();
  return p;
}

}  // namespace poly

struct CarimaModel {
  poly::Poly a;       // monic
  poly::Poly b;       // b[0] == 0 (at least one step of dead time)
  double period = 0;  // s

  void validate() const {
    if (a.empty() || a.front() != 1.0)
      throw SynthesisError("CARIMA model: A must be monic");
    bool nonzero = false;
    for (double c : b) nonzero |= c != 0.0;
    if (!nonzero) throw SynthesisError("CARIMA model: B must not be zero");
    if (!b.empty() && b.front() != 0.0)
      throw SynthesisError("CARIMA model: B needs a leading zero (dead time)");
    if (!(period > 0)) throw SynthesisError("CARIMA model: period must be positive");
  }
};

// Defaults are the winners of a tuning sweep on the 150 mm circle scenario;
// a short control horizon leaves an acceleration-proportional tracking
// residual, so Nu has to stay comparable to the output horizon.
struct GpcTuning {
  int n1 = 1;          // minimum output prediction horizon
  int n2 = 15;         // maximum output prediction horizon
  int nu = 10;         // control horizon
  double lambda = 0.1; // control-increment weight

  void validate() const {
    if (n1 < 1 || n2 < n1) throw SynthesisError("GPC tuning: need 1 <= N1 <= N2");
    if (nu < 1 || nu > n2 - n1 + 1)
      throw SynthesisError("GPC tuning: need 1 <= Nu <= N2 - N1 + 1");
    if (lambda < 0) throw SynthesisError("GPC tuning: lambda must be >= 0");
  }
};

// j-step predictor split: 1 = E_j * Delta*A + q^-j F_j, and E_j*Btilde
// divided into the future part G_j and the past part H_j acting on du(t-1).
struct PredictorPolynomials {
  poly::Poly e, f, g, h;
};

inline std::vector<PredictorPolynomials> diophantine_chain(
    const CarimaModel& m, int j_max) {
  m.validate();
  if (j_max < 1) throw SynthesisError("diophantine_chain: j_max must be >= 1");
  const poly::Poly a_tilde = poly::mul(m.a, {1.0, -1.0});
  const std::size_t na1 = a_tilde.size() - 1;  // deg(Delta*A)
  poly::Poly b_tilde(m.b.begin() + 1, m.b.end());

  std::vector<PredictorPolynomials> out;
  out.reserve(static_cast<std::size_t>(j_max));

  poly::Poly e = {1.0};
  poly::Poly f(na1, 0.0);  // deg na1-1
  for (std::size_t k = 0; k < na1; ++k) f[k] = -a_tilde[k + 1];

  for (int j = 1; j <= j_max; ++j) {
    // split E_j * Btilde around q^-j
    const poly::Poly eb = poly::mul(e, b_tilde);
    PredictorPolynomials pj;
    pj.e = e;
    pj.f = f;
    pj.g.assign(static_cast<std::size_t>(j), 0.0);
    for (std::size_t k = 0; k < eb.size() && k < static_cast<std::size_t>(j); ++k)
      pj.g[k] = eb[k];
    for (std::size_t k = static_cast<std::size_t>(j); k < eb.size(); ++k)
      pj.h.push_back(eb[k]);
    if (pj.h.empty()) pj.h.push_back(0.0);

    // reconstruct the identity 1 = E_j*(Delta A) + q^-j F_j
    poly::Poly res = poly::mul(e, a_tilde);
    if (res.size() < static_cast<std::size_t>(j) + f.size())
      res.resize(static_cast<std::size_t>(j) + f.size(), 0.0);
    for (std::size_t k = 0; k < f.size(); ++k)
      res[static_cast<std::size_t>(j) + k] += f[k];
    res[0] -= 1.0;
    for (double c : res)
      if (std::abs(c) > 1e-10)
        throw SynthesisError("diophantine_chain: identity reconstruction failed at j=" +
                             std::to_string(j));
    out.push_back(std::move(pj));

    // recursion to j+1
    const double f0 = f[0];
    e.push_back(f0);
    poly::Poly fn(na1, 0.0);
    for (std::size_t k = 0; k < na1; ++k) {
      const double fk1 = k + 1 < f.size() ? f[k + 1] : 0.0;
      fn[k] = fk1 - f0 * a_tilde[k + 1];
    }
    f = std::move(fn);
  }
  return out;
}

// Two-degree-of-freedom position controller S u = -R y + T w. R and S are in
// the backward-shift operator; T is in the forward-shift operator (t[j]
// weights the reference j samples ahead, t[0] = 0).
struct RstPolynomials {
  poly::Poly r, s, t;
  double period = 0;
  GpcTuning tuning;
  CarimaModel model;
  double condition = 0;  // condition number of (G'G + lambda I)

  int horizon() const { return static_cast<int>(t.size()) - 1; }
};

inline RstPolynomials synthesize_rst(const CarimaModel& m, const GpcTuning& tn) {
  m.validate();
  tn.validate();
  const auto chain = diophantine_chain(m, tn.n2);
  const int rows = tn.n2 - tn.n1 + 1;

  // prediction matrix over the output horizon and Nu control moves
  Eigen::MatrixXd G(rows, tn.nu);
  for (int r = 0; r < rows; ++r) {
    const int j = tn.n1 + r;
    const auto& gj = chain[static_cast<std::size_t>(j - 1)].g;
    for (int c = 0; c < tn.nu; ++c) {
      const int k = j - 1 - c;  // coefficient on du(t+c)
      G(r, c) = (k >= 0 && k < static_cast<int>(gj.size()))
                    ? gj[static_cast<std::size_t>(k)]
                    : 0.0;
    }
  }

  Eigen::MatrixXd M = G.transpose() * G;
  M.diagonal().array() += tn.lambda;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
  const double ev_min = es.eigenvalues().minCoeff();
  const double ev_max = es.eigenvalues().maxCoeff();
  if (!(ev_min > 0) || ev_max / ev_min > 1e12)
    throw SynthesisError(
        "GPC normal equations ill-conditioned (eigenvalue range " +
        std::to_string(ev_min) + " .. " + std::to_string(ev_max) + ")");

  // first row of (G'G + lambda I)^-1 G'
  Eigen::VectorXd e1 = Eigen::VectorXd::Zero(tn.nu);
  e1(0) = 1.0;
  const Eigen::VectorXd w = M.ldlt().solve(e1);
  const Eigen::VectorXd gamma = G * w;  // weight per horizon step j = n1..n2

  RstPolynomials rst;
  rst.period = m.period;
  rst.tuning = tn;
  rst.model = m;
  rst.condition = ev_max / ev_min;
  rst.t.assign(static_cast<std::size_t>(tn.n2) + 1, 0.0);

  poly::Poly s_bar = {1.0};  // 1 + q^-1 sum(gamma_j H_j)
  for (int r = 0; r < rows; ++r) {
    const int j = tn.n1 + r;
    const auto& pj = chain[static_cast<std::size_t>(j - 1)];
    poly::add_scaled(rst.r, pj.f, gamma(r));
    poly::Poly h_shift(pj.h.size() + 1, 0.0);
    for (std::size_t k = 0; k < pj.h.size(); ++k) h_shift[k + 1] = pj.h[k];
    poly::add_scaled(s_bar, h_shift, gamma(r));
    rst.t[static_cast<std::size_t>(j)] = gamma(r);
  }
  rst.s = poly::mul(s_bar, {1.0, -1.0});
  rst.r = poly::trim(rst.r, 0.0);
  rst.s = poly::trim(rst.s, 0.0);

  const double s1 = poly::eval_at_one(rst.s);
  const double tr = poly::eval_at_one(rst.t) - poly::eval_at_one(rst.r);
  const double scale = std::max(1.0, poly::eval_at_one(rst.r));
  if (std::abs(s1) > 1e-9 * scale || std::abs(tr) > 1e-9 * scale)
    throw SynthesisError("RST assembly lost its static invariants");
  return rst;
}

// Runtime form of eq S(q^-1) u(t) = -R(q^-1) y(t) + T(q) w(t). Holds its own
// input/output history; one instance per axis.
class RstController {
 public:
  RstController(RstPolynomials rst, double y0)
      : rst_(std::move(rst)),
        y_hist_(rst_.r.size(), y0),
        u_hist_(rst_.s.size(), 0.0) {}

  const RstPolynomials& polynomials() const { return rst_; }

  // future_refs[j-1] is the reference j periods ahead; at least horizon()
  // samples are required.
  double tick(double measured_pos, std::span<const double> future_refs) {
    const int n2 = rst_.horizon();
    if (static_cast<int>(future_refs.size()) < n2)
      throw SimulationFault("rst tick needs " + std::to_string(n2) +
                            " future reference samples, got " +
                            std::to_string(future_refs.size()));
    double acc = 0;
    for (int j = 1; j <= n2; ++j)
      acc += rst_.t[static_cast<std::size_t>(j)] *
             future_refs[static_cast<std::size_t>(j - 1)];
    acc -= rst_.r[0] * measured_pos;
    for (std::size_t k = 1; k < rst_.r.size(); ++k)
      acc -= rst_.r[k] * y_hist_[k - 1];
    for (std::size_t k = 1; k < rst_.s.size(); ++k)
      acc -= rst_.s[k] * u_hist_[k - 1];
    const double u = acc / rst_.s[0];

    shift_in(y_hist_, measured_pos);
    shift_in(u_hist_, u);
    return u;
  }

 private:
  static void shift_in(std::vector<double>& h, double x) {
    if (h.empty()) return;
    for (std::size_t k = h.size() - 1; k > 0; --k) h[k] = h[k - 1];
    h[0] = x;
  }

  RstPolynomials rst_;
  std::vector<double> y_hist_;  // y(t-1), y(t-2), ...
  std::vector<double> u_hist_;  // u(t-1), u(t-2), ...
};

// Noise-free closed-loop simulation of the CARIMA model under the RST law.
// refs[k] is the reference at step k and must extend horizon() samples past
// `steps`. Returns the plant output sequence y(0..steps-1).
inline std::vector<double> simulate_rst_nominal(const CarimaModel& m,
                                                const RstPolynomials& rst,
                                                std::span<const double> refs,
                                                int steps, double y0 = 0.0) {
  m.validate();
  if (static_cast<int>(refs.size()) < steps + rst.horizon())
    throw SimulationFault("simulate_rst_nominal: reference too short");
  RstController ctl(rst, y0);
  std::vector<double> y(static_cast<std::size_t>(steps), 0.0);
  std::vector<double> u(static_cast<std::size_t>(steps), 0.0);
  for (int t = 0; t < steps; ++t) {
    double yt = 0;
    for (std::size_t k = 1; k < m.a.size(); ++k) {
      const int idx = t - static_cast<int>(k);
      const double ypast = idx >= 0 ? y[static_cast<std::size_t>(idx)] : y0;
      yt -= m.a[k] * ypast;
    }
    for (std::size_t k = 1; k < m.b.size(); ++k) {
      const int idx = t - static_cast<int>(k);
      if (idx >= 0) yt += m.b[k] * u[static_cast<std::size_t>(idx)];
    }
    y[static_cast<std::size_t>(t)] = yt;
    std::span<const double> window(refs.data() + t + 1,
                                   static_cast<std::size_t>(rst.horizon()));
    u[static_cast<std::size_t>(t)] = ctl.tick(yt, window);
  }
  return y;
}

// --- prediction model from the axis ------------------------------------------

// Zero-order-hold discretization of gain/(s (1 + tau s)) at the given period.
// tau <= 0 collapses to the pure integrator, A = 1 - q^-1 exactly.
inline CarimaModel lag_integrator_model(double tau, double gain, double period) {
  CarimaModel m;
  m.period = period;
  if (tau <= 0) {
    m.a = {1.0, -1.0};
    m.b = {0.0, gain * period};
    return m;
  }
  const double p = std::exp(-period / tau);
  m.a = {1.0, -(1.0 + p), p};
  m.b = {0.0, gain * (period - tau * (1.0 - p)),
         gain * (tau * (1.0 - p) - p * period)};
  return m;
}

struct VelocityLoopFit {
  double tau = 0;      // fitted closed-velocity-loop time constant, s
  double rms_rel = 0;  // velocity-domain rms misfit relative to the step
  std::vector<double> response;  // normalized velocity step response at t_sp
};

// Fits a first-order lag to the closed velocity loop (velocity + current
// loops around the plant, no position loop) by simulating a velocity step.
// The lag is fitted on the integrated (position) response: the controller
// built on this model predicts positions, and matching the lag area makes
// the multi-step position predictions asymptotically exact even when the
// velocity loop rings.
inline VelocityLoopFit fit_velocity_loop(const AxisParameters& p,
                                         double plant_dt = kDefaultPlantStep,
                                         double step_vel_ui = 6.0,
                                         int periods = 50) {
  require_valid(p, plant_dt);
  const auto n_sp = detail::steps_of(p.t_sp, plant_dt);
  const auto n_sv = detail::steps_of(p.t_sv, plant_dt);
  const auto n_si = detail::steps_of(p.t_si, plant_dt);
  const double omega_step = p.omega_from_axis_vel_ui(step_vel_ui);

  PlantState s;
  PiState vel_pi, cur_pi;
  SimFlags flags;
  double i_sp = 0, u = 0;
  VelocityLoopFit fit;
  std::vector<double> pos;  // theta / omega_step, seconds
  fit.response.reserve(static_cast<std::size_t>(periods) + 1);
  const std::size_t n_steps = static_cast<std::size_t>(periods) * n_sp + 1;
  for (std::size_t n = 0; n < n_steps; ++n) {
    if (n % n_sp == 0) {
      fit.response.push_back(s.omega / omega_step);
      pos.push_back(s.theta / omega_step);
    }
    if (n % n_sv == 0)
      i_sp = velocity_tick(p, vel_pi, omega_step, s.omega, 0.0, false, 1e9);
    if (n % n_si == 0) u = current_tick(p, cur_pi, i_sp, s.current, 1e9);
    s = plant_step(p, s, u, plant_dt, &flags);
  }

  const auto& r = fit.response;
  if (std::abs(r.back() - 1.0) > 0.05)
    throw IdentError("velocity loop step response does not settle (ends at " +
                     std::to_string(r.back()) + " of the setpoint)");
  for (double v : r)
    if (v < -0.02)
      throw IdentError("velocity loop step response is not usable (undershoot)");

  // position-domain misfit of the lag+integrator response k*T - tau*(1-p^k)
  auto sse_pos = [&](double tau) {
    const double pp = std::exp(-p.t_sp / tau);
    double acc = 0, pk = 1.0;
    for (std::size_t k = 1; k < pos.size(); ++k) {
      pk *= pp;
      const double t = static_cast<double>(k) * p.t_sp;
      const double d = pos[k] - (t - tau * (1.0 - pk));
      acc += d * d;
    }
    return acc;
  };
  double lo = p.t_sp / 100.0, hi = 20.0 * p.t_sp;
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
  double f1 = sse_pos(x1), f2 = sse_pos(x2);
  for (int it = 0; it < 120; ++it) {
    if (f1 < f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - gr * (hi - lo);
      f1 = sse_pos(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + gr * (hi - lo);
      f2 = sse_pos(x2);
    }
  }
  fit.tau = (lo + hi) / 2;
  double acc = 0;
  for (std::size_t k = 1; k < r.size(); ++k) {
    const double t = static_cast<double>(k) * p.t_sp;
    const double d = r[k] - (1.0 - std::exp(-t / fit.tau));
    acc += d * d;
  }
  fit.rms_rel = std::sqrt(acc / static_cast<double>(r.size() - 1));
  return fit;
}

// Position-loop prediction model: fitted velocity-loop lag in series with the
// transmission integrator, discretized at t_sp. Output in axis units, input
// in axis velocity units.
inline CarimaModel model_from_axis(const AxisParameters& p,
                                   double plant_dt = kDefaultPlantStep) {
  const auto fit = fit_velocity_loop(p, plant_dt);
  const double gain = p.kind == AxisKind::linear ? 1e3 / 60.0 : 6.0;
  return lag_integrator_model(fit.tau, gain, p.t_sp);
}

// --- frequency-domain reporting ----------------------------------------------

struct LoopMargins {
  double gain_margin_db = std::numeric_limits<double>::infinity();
  double phase_margin_deg = std::numeric_limits<double>::infinity();
};

// Classical margins of the open loop B R / (A S) on the nominal model.
inline LoopMargins loop_margins(const CarimaModel& m, const RstPolynomials& rst,
                                int n_freq = 4000) {
  LoopMargins out;
  const double w_max = std::numbers::pi / m.period;
  double prev_mag = 0, prev_phase = 0, prev_w = 0;
  bool have_prev = false;
  for (int i = 0; i <= n_freq; ++i) {
    const double w = w_max * std::pow(10.0, -4.0 * (1.0 - static_cast<double>(i) / n_freq));
    const auto z_inv = std::exp(std::complex<double>(0, -w * m.period));
    const auto num = poly::eval(m.b, z_inv) * poly::eval(rst.r, z_inv);
    const auto den = poly::eval(m.a, z_inv) * poly::eval(rst.s, z_inv);
    if (std::abs(den) == 0.0) continue;
    const auto L = num / den;
    const double mag = std::abs(L);
    const double phase = std::arg(L) * 180.0 / std::numbers::pi;
    if (have_prev) {
      if ((prev_mag - 1.0) * (mag - 1.0) <= 0 && prev_mag != mag) {
        const double t = (1.0 - prev_mag) / (mag - prev_mag);
        const double ph = prev_phase + t * (phase - prev_phase);
        out.phase_margin_deg = std::min(out.phase_margin_deg, 180.0 + ph);
      }
      if ((prev_phase + 180.0) * (phase + 180.0) <= 0 && prev_phase != phase &&
          std::abs(phase - prev_phase) < 90.0) {
        const double t = (-180.0 - prev_phase) / (phase - prev_phase);
        const double mg = prev_mag + t * (mag - prev_mag);
        if (mg > 0)
          out.gain_margin_db = std::min(out.gain_margin_db, -20.0 * std::log10(mg));
      }
    }
    prev_mag = mag;
    prev_phase = phase;
    prev_w = w;
    have_prev = true;
  }
  (void)prev_w;
  return out;
}

}  // namespace feedsim
