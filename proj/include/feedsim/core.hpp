#pragma once

// Domain types and unit conventions shared by every other header.
//
// Unit policy: all simulation arithmetic is SI (m, rad, s, N.m, A, V).
// Axis-level quantities cross the API boundary in the conventional NC units
// and are converted through the helpers below:
//   linear axes:  position mm,  velocity m/min
//   rotary axes:  position deg, velocity rpm
// AxisParameters stores each gain in the unit its data sheet uses (the unit
// the profile file carries); the *_si() accessors return SI equivalents.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <deque>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace feedsim {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Malformed or unreadable files.
struct IoError : Error {
  using Error::Error;
};
// Parameter/scenario invariant violations.
struct ValidationError : Error {
  using Error::Error;
};
// Runtime faults inside a closed-loop run (non-finite state, starved RST window).
struct SimulationFault : Error {
  using Error::Error;
};
// Identification failures (degenerate data, divergent fits).
struct IdentError : Error {
  using Error::Error;
};
// Controller synthesis failures (ill-conditioned normal equations, bad model).
struct SynthesisError : Error {
  using Error::Error;
};

enum class AxisKind { linear, rotary };

inline std::string_view to_string(AxisKind k) {
  return k == AxisKind::linear ? "linear" : "rotary";
}

// Double-exponential friction law, expressed as motor-current equivalent.
// i(v) = a*exp(b*v) + c*exp(d*v) for v > 0, odd-symmetric for v < 0, and
// bounded by [-i0, i0] at rest. Velocity argument is in the axis velocity
// unit (m/min linear, rpm rotary).
struct FrictionParams {
  double a = 0;          // A
  double b = 0;          // per velocity unit
  double c = 0;          // A
  double d = 0;          // per velocity unit
  double i0 = 0;         // A, Coulomb band at v = 0
  double v_fit_max = 0;  // validity bound of the fit, velocity units
};

// Position -> resistant torque samples for tilting axes; linear interpolation,
// clamped at the table ends.
using StaticLoadTable = std::vector<std::pair<double, double>>;

struct AxisParameters {
  std::string name;
  AxisKind kind = AxisKind::linear;

  double j_eq = 0;  // equivalent inertia at the motor shaft, kg.m^2
  double k_p = 0;   // position loop gain, (m/min)/mm linear, (deg/min)/deg rotary
  double k_v = 0;   // velocity PI gain, N.m/(rad/s)
  double t_v = 0;   // velocity PI integration time, s
  double k_i = 0;   // current PI gain, V/A
  double t_i = 0;   // current PI integration time, s
  double t_sp = 0;  // position loop cycle time, s
  double t_sv = 0;  // velocity loop cycle time, s
  double t_si = 0;  // current loop cycle time, s

  FrictionParams friction;

  double alpha = 0;  // position-setpoint path delay, s
  double beta = 0;   // velocity-feedforward path delay, s
  double gamma = 0;  // torque-feedforward path delay, s

  double vffw = 0;  // velocity feedforward constant, dimensionless
  double tffw = 0;  // torque feedforward constant, kg.m^2

  double k_t = 0;    // torque constant, N.m/A
  double k_e = 0;    // back-EMF constant, V.s/rad
  double r_arm = 0;  // armature resistance, ohm
  double l_arm = 0;  // armature inductance, H

  // Axis displacement per motor-shaft radian: mm/rad linear, deg/rad rotary.
  double transmission = 0;

  double static_load = 0;  // constant resistant torque, N.m
  StaticLoadTable static_load_law;  // optional position-dependent override

  // --- conversions -------------------------------------------------------

  // axis position unit per SI unit (mm per m, or deg per rad)
  double pos_ui_per_si() const {
    return kind == AxisKind::linear ? 1e3 : 180.0 / std::numbers::pi;
  }
  // axis velocity unit per SI rate: m/min per m/s, or rpm per rad/s
  double vel_ui_per_si() const {
    return kind == AxisKind::linear ? 60.0 : 60.0 / (2.0 * std::numbers::pi);
  }
  // axis displacement (SI) per motor radian
  double transmission_si() const { return transmission / pos_ui_per_si(); }

  double pos_si(double ui) const { return ui / pos_ui_per_si(); }
  double pos_ui(double si) const { return si * pos_ui_per_si(); }

  // Position loop gain in 1/s (SI error in, SI rate out). The data-sheet
  // rate unit is m/min for linear axes but deg/min (not rpm) for rotary ones.
  double kp_si() const {
    return kind == AxisKind::linear ? k_p * (1e3 / 60.0) : k_p / 60.0;
  }

  double axis_pos_ui_from_theta(double theta) const {
    return theta * transmission;
  }
  double theta_from_axis_pos_ui(double pos) const {
    return pos / transmission;
  }
  double axis_vel_ui_from_omega(double omega) const {
    return omega * transmission_si() * vel_ui_per_si();
  }
  double omega_from_axis_vel_ui(double v_ui) const {
    return v_ui / vel_ui_per_si() / transmission_si();
  }

  // resistant torque from gravity/counterweights at an axis position (N.m)
  double static_load_at(double pos_ui) const {
    if (static_load_law.empty()) return static_load;
    const auto& t = static_load_law;
    if (pos_ui <= t.front().first) return t.front().second;
    if (pos_ui >= t.back().first) return t.back().second;
    for (std::size_t i = 1; i < t.size(); ++i) {
      if (pos_ui <= t[i].first) {
        const double w = (pos_ui - t[i - 1].first) / (t[i].first - t[i - 1].first);
        return t[i - 1].second + w * (t[i].second - t[i - 1].second);
      }
    }
    return t.back().second;
  }
};

struct MachineProfile {
  std::string name;
  std::vector<AxisParameters> axes;

  const AxisParameters* find(std::string_view axis) const {
    for (const auto& a : axes)
      if (a.name == axis) return &a;
    return nullptr;
  }
  const AxisParameters& at(std::string_view axis) const {
    if (const auto* a = find(axis)) return *a;
    throw ValidationError("profile has no axis named '" + std::string(axis) + "'");
  }
};

// --- trace ----------------------------------------------------------------

// Registered run-trace channel names. Path/ingest traces use axis names
// instead and are not subject to the registry.
inline constexpr std::array<std::string_view, 10> kChannelRegistry = {
    "psec", "sp", "sv", "smc", "vffws", "tffws", "torque", "pos_err",
    "p_elec", "p_mech"};

inline bool is_registered_channel(std::string_view name) {
  return std::find(kChannelRegistry.begin(), kChannelRegistry.end(), name) !=
         kChannelRegistry.end();
}

// Unit string for a registered channel on an axis of the given kind.
inline std::string channel_unit(std::string_view name, AxisKind kind) {
  const bool lin = kind == AxisKind::linear;
  if (name == "psec" || name == "sp" || name == "pos_err")
    return lin ? "mm" : "deg";
  if (name == "sv" || name == "vffws") return lin ? "m/min" : "rpm";
  if (name == "smc") return "A";
  if (name == "torque" || name == "tffws") return "N.m";
  if (name == "p_elec" || name == "p_mech") return "W";
  return "";
}

struct Channel {
  std::string name;
  std::string unit;
  std::vector<double> samples;
};

// Uniformly sampled multi-channel time series. Channels live in a deque so
// references returned by add() stay valid as further channels are added.
struct Trace {
  double dt = 0;
  double t0 = 0;
  std::deque<Channel> channels;

  Channel& add(std::string name, std::string unit) {
    channels.push_back({std::move(name), std::move(unit), {}});
    return channels.back();
  }
  const Channel* find(std::string_view name) const {
    for (const auto& c : channels)
      if (c.name == name) return &c;
    return nullptr;
  }
  Channel* find(std::string_view name) {
    for (auto& c : channels)
      if (c.name == name) return &c;
    return nullptr;
  }
  const std::vector<double>& samples(std::string_view name) const {
    if (const auto* c = find(name)) return c->samples;
    throw ValidationError("trace has no channel '" + std::string(name) + "'");
  }
  std::size_t length() const {
    return channels.empty() ? 0 : channels.front().samples.size();
  }
  double time_at(std::size_t i) const { return t0 + static_cast<double>(i) * dt; }

  // Throws unless dt > 0 and all channels have equal length.
  void check_consistent() const {
    if (dt <= 0) throw ValidationError("trace dt must be positive");
    for (const auto& c : channels)
      if (c.samples.size() != length())
        throw ValidationError("trace channel '" + c.name +
                              "' length differs from '" +
                              channels.front().name + "'");
  }
};

// --- validation -------------------------------------------------------------

namespace detail {

// true iff t is a positive integer multiple of step (within 1 ppm)
inline bool integer_multiple(double t, double step) {
  if (t <= 0 || step <= 0) return false;
  const double ratio = t / step;
  return std::abs(ratio - std::round(ratio)) <= 1e-6 * std::max(1.0, ratio);
}

inline std::size_t steps_of(double t, double step) {
  return static_cast<std::size_t>(std::llround(t / step));
}

}  // namespace detail

inline constexpr double kDefaultPlantStep = 25e-6;  // s

// Returns one message per violated invariant; empty means the profile is
// usable with the given plant integration step.
inline std::vector<std::string> validate_profile(
    const AxisParameters& p, double plant_step = kDefaultPlantStep) {
  std::vector<std::string> errs;
  auto bad = [&](std::string msg) { errs.push_back(std::move(msg)); };

  for (auto [v, n] : {std::pair{p.t_sp, "t_sp"}, {p.t_sv, "t_sv"}, {p.t_si, "t_si"}}) {
    if (v <= 0) bad(std::string("cycle time must be positive (") + n + ")");
  }
  if (p.t_si > 0 && p.t_sv > 0 && p.t_sp > 0) {
    if (!(p.t_si <= p.t_sv && p.t_sv <= p.t_sp))
      bad("cycle times must be ordered t_si <= t_sv <= t_sp");
    for (auto [v, n] : {std::pair{p.t_sp, "t_sp"}, {p.t_sv, "t_sv"}, {p.t_si, "t_si"}})
      if (!detail::integer_multiple(v, plant_step))
        bad(std::string(n) + " is not an integer multiple of the plant step");
  }
  for (auto [v, n] : {std::pair{p.alpha, "alpha"}, {p.beta, "beta"}, {p.gamma, "gamma"}}) {
    if (v < 0)
      bad(std::string("adjustment delay must be non-negative (") + n + ")");
    else if (v > 0 && !detail::integer_multiple(v, plant_step))
      bad(std::string(n) + " is not an integer multiple of the plant step");
  }
  if (!(p.j_eq > 0)) bad("j_eq must be positive");
  if (!(p.k_t > 0)) bad("k_t must be positive");
  if (p.transmission == 0) bad("transmission must be non-zero");
  if (!(p.k_p > 0)) bad("k_p must be positive");
  if (!(p.k_v > 0)) bad("k_v must be positive");
  if (!(p.t_v > 0)) bad("t_v must be positive");
  if (!(p.k_i > 0)) bad("k_i must be positive");
  if (!(p.t_i > 0)) bad("t_i must be positive");
  if (!(p.l_arm > 0)) bad("l_arm must be positive");
  if (p.r_arm < 0) bad("r_arm must be non-negative");
  if (p.friction.i0 < 0) bad("friction.i0 must be non-negative");
  if (p.friction.i0 > 0) {
    const double ac = p.friction.a + p.friction.c;
    if (std::abs(ac - p.friction.i0) / p.friction.i0 > 0.005)
      bad("friction continuity: |a+c - i0|/i0 exceeds 0.5% (a+c = " +
          std::to_string(ac) + ", i0 = " + std::to_string(p.friction.i0) + ")");
  }
  if (p.friction.v_fit_max <= 0) bad("friction.v_fit_max must be positive");
  for (std::size_t i = 1; i < p.static_load_law.size(); ++i)
    if (p.static_load_law[i].first <= p.static_load_law[i - 1].first) {
      bad("static_load_law positions must be strictly increasing");
      break;
    }
  return errs;
}

inline void require_valid(const AxisParameters& p,
                          double plant_step = kDefaultPlantStep) {
  auto errs = validate_profile(p, plant_step);
  if (errs.empty()) return;
  std::string msg = "axis '" + p.name + "' invalid:";
  for (const auto& e : errs) msg += "\n  - " + e;
  throw ValidationError(msg);
}

}  // namespace feedsim
