#pragma once

// Continuous-time physics of one axis: armature circuit, friction torque,
// resistant load, and mechanical integration.
//
//   L di/dt     = U - R i - K_e * omega
//   J dOmega/dt = K_t i - C_r(omega, position)
//   dtheta/dt   = omega
//
// C_r gathers the friction torque (expressed as a current equivalent times
// K_t) and the static resistant load. States advance with a classical
// fixed-step 4th-order Runge-Kutta scheme, voltage held over the step.

#include <cmath>
#include <string>

#include "feedsim/core.hpp"

namespace feedsim {

struct PlantState {
  double current = 0;  // A
  double omega = 0;    // motor rad/s
  double theta = 0;    // motor rad

  double axis_pos_ui(const AxisParameters& p) const {
    return p.axis_pos_ui_from_theta(theta);
  }
};

// Sticky flags accumulated over a run.
struct SimFlags {
  bool friction_fit_exceeded = false;
  bool voltage_saturated = false;
  bool current_saturated = false;
};

// Width of the zero-velocity dead band, axis velocity units (Karnopp-style
// stiction handling; the friction law only bounds the current at V = 0).
inline constexpr double kStictionBand = 1e-4;

// Equivalent friction current at axis velocity v (m/min linear, rpm rotary).
// Inside the dead band the returned current opposes applied_torque and is
// clamped so static friction never exceeds it.
inline double friction_current(const FrictionParams& fp, double v,
                               double applied_torque, double k_t,
                               SimFlags* flags = nullptr) {
  if (flags && std::abs(v) > fp.v_fit_max) flags->friction_fit_exceeded = true;
  if (v > kStictionBand)
    return fp.a * std::exp(fp.b * v) + fp.c * std::exp(fp.d * v);
  if (v < -kStictionBand)
    return -fp.a * std::exp(-fp.b * v) - fp.c * std::exp(-fp.d * v);
  const double breakaway = std::min(fp.i0, std::abs(applied_torque) / k_t);
  return applied_torque >= 0 ? breakaway : -breakaway;
}

namespace detail {

struct PlantDerivs {
  double di, domega, dtheta;
};

inline PlantDerivs plant_derivs(const AxisParameters& p, const PlantState& s,
                                double u, SimFlags* flags) {
  const double v_ui = p.axis_vel_ui_from_omega(s.omega);
  const double load = p.static_load_at(s.axis_pos_ui(p));
  const double drive = p.k_t * s.current - load;  // torque friction opposes
  const double i_fric = friction_current(p.friction, v_ui, drive, p.k_t, flags);
  PlantDerivs d;
  d.di = (u - p.r_arm * s.current - p.k_e * s.omega) / p.l_arm;
  d.domega = (drive - p.k_t * i_fric) / p.j_eq;
  d.dtheta = s.omega;
  return d;
}

}  // namespace detail

// Advances the plant by one integration step under a held armature voltage.
// Throws SimulationFault naming the offending quantity if the state leaves
// the finite domain.
inline PlantState plant_step(const AxisParameters& p, const PlantState& s,
                             double u_voltage, double dt,
                             SimFlags* flags = nullptr) {
  using detail::plant_derivs;
  auto advance = [&](const PlantState& base, const detail::PlantDerivs& d,
                     double h) {
    return PlantState{base.current + h * d.di, base.omega + h * d.domega,
                      base.theta + h * d.dtheta};
  };
  const auto k1 = plant_derivs(p, s, u_voltage, flags);
  const auto k2 = plant_derivs(p, advance(s, k1, dt / 2), u_voltage, flags);
  const auto k3 = plant_derivs(p, advance(s, k2, dt / 2), u_voltage, flags);
  const auto k4 = plant_derivs(p, advance(s, k3, dt), u_voltage, flags);

  PlantState out;
  out.current = s.current + dt / 6 * (k1.di + 2 * k2.di + 2 * k3.di + k4.di);
  out.omega =
      s.omega + dt / 6 * (k1.domega + 2 * k2.domega + 2 * k3.domega + k4.domega);
  out.theta =
      s.theta + dt / 6 * (k1.dtheta + 2 * k2.dtheta + 2 * k3.dtheta + k4.dtheta);

  if (!std::isfinite(out.current))
    throw SimulationFault("plant state non-finite: current");
  if (!std::isfinite(out.omega))
    throw SimulationFault("plant state non-finite: omega");
  if (!std::isfinite(out.theta))
    throw SimulationFault("plant state non-finite: theta");
  return out;
}

// Instantaneous power bookkeeping (electrical in, mechanical out).
struct PowerSample {
  double electrical = 0;  // W, U*i
  double mechanical = 0;  // W, K_t*i*omega
};

inline PowerSample plant_power(const AxisParameters& p, const PlantState& s,
                               double u_voltage) {
  return {u_voltage * s.current, p.k_t * s.current * s.omega};
}

}  // namespace feedsim
