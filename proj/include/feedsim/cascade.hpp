#pragma once

// Industrial axis controller: proportional position loop, PI velocity loop,
// PI current loop, velocity/torque feedforward paths, and the three
// adjustment delays (alpha on the position-setpoint path, beta on the
// velocity feedforward, gamma on the torque feedforward).
//
// Loop outputs are held (zero-order) between their own ticks. Within a plant
// step the order is position -> velocity -> current -> plant. All three
// loops tick together at t = 0.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "feedsim/core.hpp"
#include "feedsim/plant.hpp"

namespace feedsim {

// Backward-difference derivative, y(t) = (x(t) - x(t-1))/tps, with
// x(-1) = x(0) so the first sample reports zero rate.
inline std::vector<double> euler_d1(std::span<const double> x, double tps) {
  std::vector<double> y(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double prev = k == 0 ? x[0] : x[k - 1];
    y[k] = (x[k] - prev) / tps;
  }
  return y;
}

// Second backward difference, y(t) = (x(t) - 2x(t-1) + x(t-2))/tps^2, with
// x(-1) = x(-2) = x(0).
inline std::vector<double> euler_d2(std::span<const double> x, double tps) {
  std::vector<double> y(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double x1 = k >= 1 ? x[k - 1] : x[0];
    const double x2 = k >= 2 ? x[k - 2] : x[0];
    y[k] = (x[k] - 2 * x1 + x2) / (tps * tps);
  }
  return y;
}

// Fixed-length transport delay at plant-step resolution. Length 0 is a
// passthrough. The buffer starts filled with an initial value.
class DelayLine {
 public:
  DelayLine() = default;
  DelayLine(std::size_t length, double initial)
      : buf_(length, initial), out_(initial) {}

  // Pushes the sample for this plant step and returns the delayed output.
  double push(double x) {
    if (buf_.empty()) {
      out_ = x;
    } else {
      out_ = buf_[idx_];
      buf_[idx_] = x;
      idx_ = (idx_ + 1) % buf_.size();
    }
    return out_;
  }
  double out() const { return out_; }
  std::size_t length() const { return buf_.size(); }

 private:
  std::vector<double> buf_;
  std::size_t idx_ = 0;
  double out_ = 0;
};

struct PiState {
  double integral = 0;  // time-integral of the loop error
};

// --- loop tick functions ----------------------------------------------------

// Position loop: proportional on the (delayed) setpoint error plus the
// velocity feedforward term, result converted to a motor velocity setpoint.
// Positions in axis units, vffw_term in axis velocity units.
inline double position_tick(const AxisParameters& p, double psec_delayed_ui,
                            double measured_pos_ui, double vffw_term_ui,
                            bool vffw_on) {
  const double err = psec_delayed_ui - measured_pos_ui;
  // k_p yields m/min (linear) or deg/min (rotary); rotary axis velocity is rpm
  double v_ui = p.kind == AxisKind::linear ? p.k_p * err : p.k_p * err / 360.0;
  if (vffw_on) v_ui += p.vffw * vffw_term_ui;
  return p.omega_from_axis_vel_ui(v_ui);
}

// Velocity loop: PI in torque units plus the (delayed) torque feedforward,
// then divided by K_t into a current setpoint. tffw_accel is the setpoint
// acceleration mapped to motor rad/s^2. Integration freezes while the output
// is clamped at the current limit.
inline double velocity_tick(const AxisParameters& p, PiState& pi,
                            double omega_setpoint, double omega_measured,
                            double tffw_accel, bool tffw_on, double i_limit,
                            SimFlags* flags = nullptr) {
  const double e = omega_setpoint - omega_measured;
  double torque = p.k_v * (e + pi.integral / p.t_v);
  if (tffw_on) torque += p.tffw * tffw_accel;
  double i_sp = torque / p.k_t;
  if (std::abs(i_sp) > i_limit) {
    i_sp = std::copysign(i_limit, i_sp);
    if (flags) flags->current_saturated = true;
  } else {
    pi.integral += e * p.t_sv;
  }
  return i_sp;
}

// Current loop: PI voltage command, clamped at the voltage limit with the
// same conditional integration.
inline double current_tick(const AxisParameters& p, PiState& pi,
                           double i_setpoint, double i_measured,
                           double v_limit, SimFlags* flags = nullptr) {
  const double e = i_setpoint - i_measured;
  double u = p.k_i * (e + pi.integral / p.t_i);
  if (std::abs(u) > v_limit) {
    u = std::copysign(v_limit, u);
    if (flags) flags->voltage_saturated = true;
  } else {
    pi.integral += e * p.t_si;
  }
  return u;
}

// --- full controller ---------------------------------------------------------

struct CascadeOptions {
  bool vffw_on = true;
  bool tffw_on = true;
  bool delays_on = true;       // apply the profile's alpha/beta/gamma
  double voltage_limit = 400;  // V
  double current_limit = 30;   // A
};

// One axis worth of cascaded control state, stepped at plant-step resolution.
// The caller provides the setpoint stream sampled at the plant step; loop
// scheduling, delay lines and feedforward derivatives live here.
class CascadeController {
 public:
  CascadeController(const AxisParameters& p, const CascadeOptions& opts,
                    double plant_dt, double psec0_ui)
      : p_(p),
        opts_(opts),
        n_sp_(detail::steps_of(p.t_sp, plant_dt)),
        n_sv_(detail::steps_of(p.t_sv, plant_dt)),
        n_si_(detail::steps_of(p.t_si, plant_dt)),
        alpha_line_(opts.delays_on ? detail::steps_of(p.alpha, plant_dt) : 0,
                    psec0_ui),
        beta_line_(opts.delays_on ? detail::steps_of(p.beta, plant_dt) : 0, 0),
        gamma_line_(opts.delays_on ? detail::steps_of(p.gamma, plant_dt) : 0, 0),
        psec_hist_(n_sp_, psec0_ui),
        d1_hist_(n_sp_, 0.0),
        effective_ref_ui_(psec0_ui) {}

  // Advances the controller by one plant step. psec_fine_ui is the setpoint
  // sampled at this step; the plant is observed noise-free.
  void step(std::size_t step_index, double psec_fine_ui, const PlantState& s,
            SimFlags& flags) {
    // Backward differences over one position period, evaluated every plant
    // step (sliding window). At the position ticks these equal the classic
    // per-sample Euler derivatives; between ticks they keep the feedforward
    // signals observable at plant-step resolution, which beta/gamma need.
    const double psec_old = psec_hist_.push(psec_fine_ui);
    const double d1 = (psec_fine_ui - psec_old) / p_.t_sp;
    const double d1_old = d1_hist_.push(d1);
    const double d2 = (d1 - d1_old) / p_.t_sp;
    vffw_term_ = d1 / p_.pos_ui_per_si() * p_.vel_ui_per_si();
    tffw_term_ = d2 / p_.pos_ui_per_si() / p_.transmission_si();

    const double psec_delayed = alpha_line_.push(psec_fine_ui);
    const double vffw_delayed = beta_line_.push(vffw_term_);
    const double tffw_delayed = gamma_line_.push(tffw_term_);

    if (step_index % n_sp_ == 0) {
      effective_ref_ui_ = psec_delayed;
      omega_sp_ = position_tick(p_, psec_delayed, s.axis_pos_ui(p_),
                                vffw_delayed, opts_.vffw_on);
      ++pos_ticks_;
    }
    if (step_index % n_sv_ == 0) {
      i_sp_ = velocity_tick(p_, vel_pi_, omega_sp_, s.omega, tffw_delayed,
                            opts_.tffw_on, opts_.current_limit, &flags);
      ++vel_ticks_;
    }
    if (step_index % n_si_ == 0) {
      u_ = current_tick(p_, cur_pi_, i_sp_, s.current, opts_.voltage_limit,
                        &flags);
      ++cur_ticks_;
    }
  }

  double voltage() const { return u_; }
  double omega_setpoint() const { return omega_sp_; }
  double current_setpoint() const { return i_sp_; }
  // alpha-delayed setpoint the position loop last consumed (axis units)
  double effective_reference_ui() const { return effective_ref_ui_; }
  // Feedforward setpoints as the NC logs them: taken where they are computed
  // from PSEC, before the beta/gamma delay lines.
  double vffws_ui() const { return opts_.vffw_on ? p_.vffw * vffw_term_ : 0.0; }
  double tffws_torque() const {
    return opts_.tffw_on ? p_.tffw * tffw_term_ : 0.0;
  }

  std::size_t position_tick_count() const { return pos_ticks_; }
  std::size_t velocity_tick_count() const { return vel_ticks_; }
  std::size_t current_tick_count() const { return cur_ticks_; }

 private:
  AxisParameters p_;
  CascadeOptions opts_;
  std::size_t n_sp_, n_sv_, n_si_;
  DelayLine alpha_line_, beta_line_, gamma_line_;
  DelayLine psec_hist_, d1_hist_;  // one position period of history
  double vffw_term_ = 0;  // axis velocity units
  double tffw_term_ = 0;  // motor rad/s^2
  double omega_sp_ = 0, i_sp_ = 0, u_ = 0;
  double effective_ref_ui_;
  PiState vel_pi_, cur_pi_;
  std::size_t pos_ticks_ = 0, vel_ticks_ = 0, cur_ticks_ = 0;
};

}  // namespace feedsim
