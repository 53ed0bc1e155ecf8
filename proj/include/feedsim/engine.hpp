#pragma once

// Closed-loop orchestration: wires a setpoint stream through the selected
// controller (cascade or RST) into the plant for each axis, honoring the
// multi-rate loop schedule on a fixed plant step, and derives the error
// metrics the scenario catalog reports.
//
// Recorded channels follow the NC's view: `psec` is the raw commanded
// setpoint; `pos_err` is measured against the reference the controller
// actually pursues (the alpha-delayed setpoint for a cascade with delays on),
// so pure transport delay does not count as tracking error. Axes are
// simulated independently, one after another; a multi-axis run is exactly the
// collection of its single-axis runs.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "feedsim/cascade.hpp"
#include "feedsim/core.hpp"
#include "feedsim/gpc.hpp"
#include "feedsim/plant.hpp"
#include "feedsim/trajectory.hpp"

namespace feedsim {

struct ControllerChoice {
  enum class Type { cascade, rst };
  Type type = Type::cascade;
  CascadeOptions cascade{};
  GpcTuning tuning{};
  std::shared_ptr<const RstPolynomials> polys;  // overrides tuning if set
};

struct Scenario {
  std::string name = "scenario";
  MachineProfile profile;
  PathSpec path;
  FeedProfile feed;
  ControllerChoice controller;
  std::map<std::string, ControllerChoice> per_axis;  // per-axis overrides
  double plant_step = kDefaultPlantStep;
  double settle = 0.5;  // held-setpoint margin after the path ends, s
  std::vector<std::string> record = {"psec", "sp",     "sv",
                                     "smc",  "torque", "pos_err"};
  bool record_full_rate = false;
};

struct Metrics {
  double max_abs = 0;
  double mean_abs = 0;
  double rms = 0;
  double peak_time = 0;  // time of max |error|, s
  double steady_max_abs = 0;
  double steady_mean_abs = 0;
  double transient_max_abs = 0;
  bool has_phase_split = false;
};

struct AxisRun {
  std::string axis;
  Trace trace;
  Metrics tracking;  // over the pos_err channel
  SimFlags flags;
  double effective_delay = 0;  // reference-path delay actually applied, s
};

struct RunResult {
  std::vector<AxisRun> axes;
  std::vector<PathPhase> phases;  // commanded motion-law phases
  double duration = 0;            // simulated time, s
  std::vector<std::string> warnings;

  const AxisRun& axis(std::string_view name) const {
    for (const auto& a : axes)
      if (a.axis == name) return a;
    throw ValidationError("run has no axis '" + std::string(name) + "'");
  }

  // True when the peak tracking error of the axis falls inside a commanded
  // acceleration/deceleration interval (shifted by the axis' reference delay,
  // widened by one position period).
  bool peak_in_transient(const AxisRun& a) const {
    const double t = a.tracking.peak_time - a.effective_delay;
    const double guard = a.trace.dt;
    for (const auto& ph : phases)
      if (ph.kind != PathPhase::Kind::cruise && t >= ph.t0 - guard &&
          t <= ph.t1 + guard)
        return true;
    return false;
  }
};

namespace detail {

inline bool wants(std::span<const std::string> record, std::string_view ch) {
  return std::find(record.begin(), record.end(), ch) != record.end();
}

}  // namespace detail

// Simulates one axis against a reference sampled at the plant step. The run
// lasts n_steps plant steps; past the end of psec_fine the last sample holds.
inline AxisRun simulate_axis(const AxisParameters& p,
                             const ControllerChoice& choice,
                             std::span<const double> psec_fine,
                             std::size_t n_steps, double plant_dt,
                             std::span<const std::string> record,
                             bool full_rate = false) {
  require_valid(p, plant_dt);
  if (psec_fine.empty()) throw ValidationError("empty setpoint stream");
  const auto n_sp = detail::steps_of(p.t_sp, plant_dt);
  const auto n_sv = detail::steps_of(p.t_sv, plant_dt);
  const auto n_si = detail::steps_of(p.t_si, plant_dt);

  AxisRun run;
  run.axis = p.name;
  run.trace.dt = full_rate ? plant_dt : p.t_sp;
  for (const auto& name : record) {
    if (!is_registered_channel(name))
      throw ValidationError("unknown trace channel '" + name + "'");
    run.trace.add(name, channel_unit(name, p.kind));
  }

  auto ref_at = [&](std::size_t n) {
    return psec_fine[std::min(n, psec_fine.size() - 1)];
  };

  PlantState state;
  state.theta = p.theta_from_axis_pos_ui(ref_at(0));

  std::optional<CascadeController> cascade;
  std::optional<RstController> rst;
  std::vector<double> rst_window;
  if (choice.type == ControllerChoice::Type::cascade) {
    cascade.emplace(p, choice.cascade, plant_dt, ref_at(0));
    run.effective_delay = choice.cascade.delays_on ? p.alpha : 0.0;
  } else {
    RstPolynomials polys = choice.polys
                               ? *choice.polys
                               : synthesize_rst(model_from_axis(p, plant_dt),
                                                choice.tuning);
    if (std::abs(polys.period - p.t_sp) > 1e-12)
      throw ValidationError("RST polynomials sampled at " +
                            std::to_string(polys.period) +
                            " s but axis t_sp is " + std::to_string(p.t_sp));
    rst_window.resize(static_cast<std::size_t>(polys.horizon()));
    rst.emplace(std::move(polys), ref_at(0));
  }

  // velocity/current loops of the RST-driven axis (the cascade keeps its own)
  PiState vel_pi, cur_pi;
  double omega_sp = 0, i_sp = 0, u = 0;
  double eff_ref = ref_at(0);

  auto record_sample = [&](std::size_t n) {
    for (auto& ch : run.trace.channels) {
      double v = 0;
      if (ch.name == "psec") v = ref_at(n);
      else if (ch.name == "sp") v = state.axis_pos_ui(p);
      else if (ch.name == "sv") v = p.axis_vel_ui_from_omega(state.omega);
      else if (ch.name == "smc") v = state.current;
      else if (ch.name == "torque") v = p.k_t * state.current;
      else if (ch.name == "pos_err") v = eff_ref - state.axis_pos_ui(p);
      else if (ch.name == "vffws") v = cascade ? cascade->vffws_ui() : 0.0;
      else if (ch.name == "tffws") v = cascade ? cascade->tffws_torque() : 0.0;
      else if (ch.name == "p_elec") v = plant_power(p, state, u).electrical;
      else if (ch.name == "p_mech") v = plant_power(p, state, u).mechanical;
      ch.samples.push_back(v);
    }
  };

  for (std::size_t n = 0; n < n_steps; ++n) {
    if (cascade) {
      cascade->step(n, ref_at(n), state, run.flags);
      u = cascade->voltage();
      eff_ref = cascade->effective_reference_ui();
    } else {
      if (n % n_sp == 0) {
        const std::size_t k = n / n_sp;
        for (std::size_t j = 0; j < rst_window.size(); ++j)
          rst_window[j] = ref_at((k + 1 + j) * n_sp);
        const double v_ui = rst->tick(state.axis_pos_ui(p), rst_window);
        omega_sp = p.omega_from_axis_vel_ui(v_ui);
        eff_ref = ref_at(n);
      }
      if (n % n_sv == 0)
        i_sp = velocity_tick(p, vel_pi, omega_sp, state.omega, 0.0, false,
                             choice.cascade.current_limit, &run.flags);
      if (n % n_si == 0)
        u = current_tick(p, cur_pi, i_sp, state.current,
                         choice.cascade.voltage_limit, &run.flags);
    }
    if (full_rate || n % n_sp == 0) record_sample(n);
    state = plant_step(p, state, u, plant_dt, &run.flags);
  }
  return run;
}

// --- metrics -----------------------------------------------------------------

// Time the loop is given to settle after a phase change before samples count
// as steady-state.
inline constexpr double kSteadyGuard = 0.2;  // s

inline Metrics compute_metrics(const Trace& trace,
                               std::span<const PathPhase> phases,
                               double delay_shift) {
  Metrics m;
  const auto* err = trace.find("pos_err");
  if (!err || err->samples.empty()) return m;
  const auto& e = err->samples;

  double sum_abs = 0, sum_sq = 0;
  for (std::size_t k = 0; k < e.size(); ++k) {
    const double a = std::abs(e[k]);
    sum_abs += a;
    sum_sq += e[k] * e[k];
    if (a > m.max_abs) {
      m.max_abs = a;
      m.peak_time = trace.time_at(k);
    }
  }
  m.mean_abs = sum_abs / static_cast<double>(e.size());
  m.rms = std::sqrt(sum_sq / static_cast<double>(e.size()));

  if (!phases.empty()) {
    m.has_phase_split = true;
    std::size_t steady_n = 0;
    for (std::size_t k = 0; k < e.size(); ++k) {
      const double t = trace.time_at(k) - delay_shift;
      const double a = std::abs(e[k]);
      bool steady = false, transient = false;
      for (const auto& ph : phases) {
        if (t < ph.t0 || t > ph.t1) continue;
        if (ph.kind == PathPhase::Kind::cruise)
          steady = t >= ph.t0 + kSteadyGuard && t <= ph.t1;
        else
          transient = true;
      }
      if (transient) m.transient_max_abs = std::max(m.transient_max_abs, a);
      if (steady) {
        m.steady_max_abs = std::max(m.steady_max_abs, a);
        m.steady_mean_abs += a;
        ++steady_n;
      }
    }
    if (steady_n) m.steady_mean_abs /= static_cast<double>(steady_n);
  }
  return m;
}

// --- scenario runner -----------------------------------------------------------

inline RunResult run(const Scenario& sc) {
  for (const auto& axis_name : sc.path.axes)
    require_valid(sc.profile.at(axis_name), sc.plant_step);

  const auto gen = generate_psec(sc.path, sc.feed, sc.plant_step, sc.profile);
  const double total_time = gen.duration + sc.settle;
  const auto n_steps =
      static_cast<std::size_t>(std::ceil(total_time / sc.plant_step)) + 1;

  RunResult result;
  result.phases = gen.phases;
  result.duration = total_time;
  for (const auto& axis_name : sc.path.axes) {
    const auto& p = sc.profile.at(axis_name);
    const auto it = sc.per_axis.find(axis_name);
    const ControllerChoice& choice =
        it != sc.per_axis.end() ? it->second : sc.controller;
    auto run_axis =
        simulate_axis(p, choice, gen.trace.samples(axis_name), n_steps,
                      sc.plant_step, sc.record, sc.record_full_rate);
    run_axis.tracking =
        compute_metrics(run_axis.trace, result.phases, run_axis.effective_delay);
    if (run_axis.flags.friction_fit_exceeded)
      result.warnings.push_back("axis " + axis_name +
                                ": velocity beyond the friction fit range");
    if (run_axis.flags.voltage_saturated)
      result.warnings.push_back("axis " + axis_name + ": voltage limit hit");
    if (run_axis.flags.current_saturated)
      result.warnings.push_back("axis " + axis_name + ": current limit hit");
    result.axes.push_back(std::move(run_axis));
  }
  return result;
}

// --- error measures ------------------------------------------------------------

// Per-sample difference between commanded and simulated positions plus the
// scalar summary. Inputs must be aligned sample-for-sample.
inline std::pair<Trace, Metrics> tracking_error(const Trace& psec,
                                                const Trace& sp) {
  if (psec.length() != sp.length() || psec.channels.size() != sp.channels.size())
    throw ValidationError("tracking_error: traces are not aligned");
  Trace err;
  err.dt = psec.dt;
  err.t0 = psec.t0;
  Metrics m;
  double sum_abs = 0, sum_sq = 0;
  std::size_t count = 0;
  for (std::size_t c = 0; c < psec.channels.size(); ++c) {
    const auto& a = psec.channels[c];
    const auto& b = sp.channels[c];
    if (a.samples.size() != b.samples.size())
      throw ValidationError("tracking_error: channel lengths differ");
    auto& ch = err.add(a.name, a.unit);
    ch.samples.resize(a.samples.size());
    for (std::size_t k = 0; k < a.samples.size(); ++k) {
      const double d = a.samples[k] - b.samples[k];
      ch.samples[k] = d;
      const double ab = std::abs(d);
      sum_abs += ab;
      sum_sq += d * d;
      ++count;
      if (ab > m.max_abs) {
        m.max_abs = ab;
        m.peak_time = err.time_at(k);
      }
    }
  }
  if (count) {
    m.mean_abs = sum_abs / static_cast<double>(count);
    m.rms = std::sqrt(sum_sq / static_cast<double>(count));
  }
  return {std::move(err), m};
}

// Radial deviation of an (x, y) trajectory from a commanded circle.
struct ContourResult {
  std::vector<double> deviation;  // per sample, |dist(center) - R|
  double max_abs = 0;
};

inline ContourResult contour_error_circle(std::span<const double> x,
                                          std::span<const double> y,
                                          double cx, double cy, double radius) {
  if (x.size() != y.size())
    throw ValidationError("contour_error_circle: channel lengths differ");
  ContourResult out;
  out.deviation.resize(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double dx = x[k] - cx, dy = y[k] - cy;
    out.deviation[k] = std::abs(std::hypot(dx, dy) - radius);
    out.max_abs = std::max(out.max_abs, out.deviation[k]);
  }
  return out;
}

// Largest orthogonal distance of the simulated (x, y) path from the corner
// polyline (vertex at the origin, legs per the path spec).
inline double corner_deviation(std::span<const double> x,
                               std::span<const double> y,
                               const PathSpec& spec) {
  if (spec.type != PathSpec::Type::corner)
    throw ValidationError("corner_deviation needs a corner path");
  if (x.size() != y.size())
    throw ValidationError("corner_deviation: channel lengths differ");
  const double turn = (180.0 - spec.corner_angle_deg) * std::numbers::pi / 180.0;
  const double ax1 = -spec.leg, ay1 = 0, bx1 = 0, by1 = 0;
  const double ax2 = 0, ay2 = 0;
  const double bx2 = spec.leg * std::cos(turn), by2 = spec.leg * std::sin(turn);
  auto seg_dist = [](double px, double py, double ax, double ay, double bx,
                     double by) {
    const double vx = bx - ax, vy = by - ay;
    const double len2 = vx * vx + vy * vy;
    double t = len2 > 0 ? ((px - ax) * vx + (py - ay) * vy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return std::hypot(px - (ax + t * vx), py - (ay + t * vy));
  };
  double worst = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double d = std::min(seg_dist(x[k], y[k], ax1, ay1, bx1, by1),
                              seg_dist(x[k], y[k], ax2, ay2, bx2, by2));
    worst = std::max(worst, d);
  }
  return worst;
}

// --- tuning sweep ----------------------------------------------------------------

struct SweepCell {
  GpcTuning tuning;
  bool ok = false;
  std::string error;
  double max_err = 0;  // worst axis max |pos_err|
  double rms = 0;
  double condition = 0;
};

struct SweepResult {
  std::vector<SweepCell> cells;  // ranked best-first, failures last
};

// Synthesizes and runs every tuning in the grid on the scenario, ranking by
// max tracking error; ties break lexicographically on (N2, Nu, lambda, N1).
// Cells run in parallel; each run is independent and deterministic.
inline SweepResult tuning_sweep(const Scenario& base,
                                std::span<const GpcTuning> grid,
                                unsigned threads = 0) {
  SweepResult result;
  result.cells.resize(grid.size());
  if (threads == 0)
    threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, std::max<std::size_t>(grid.size(), 1));

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= grid.size()) return;
      SweepCell cell;
      cell.tuning = grid[i];
      try {
        Scenario sc = base;
        sc.controller.type = ControllerChoice::Type::rst;
        sc.controller.tuning = grid[i];
        sc.controller.polys.reset();
        sc.per_axis.clear();
        const auto run_result = run(sc);
        for (const auto& a : run_result.axes) {
          cell.max_err = std::max(cell.max_err, a.tracking.max_abs);
          cell.rms = std::max(cell.rms, a.tracking.rms);
        }
        // condition of the synthesized controller on the first axis
        const auto& p0 = sc.profile.at(sc.path.axes.front());
        cell.condition =
            synthesize_rst(model_from_axis(p0, sc.plant_step), grid[i]).condition;
        cell.ok = true;
      } catch (const Error& e) {
        cell.error = e.what();
      }
      result.cells[i] = std::move(cell);
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::stable_sort(result.cells.begin(), result.cells.end(),
                   [](const SweepCell& a, const SweepCell& b) {
                     if (a.ok != b.ok) return a.ok;
                     if (a.ok && a.max_err != b.max_err)
                       return a.max_err < b.max_err;
                     const auto key = [](const GpcTuning& t) {
                       return std::make_tuple(t.n2, t.nu, t.lambda, t.n1);
                     };
                     return key(a.tuning) < key(b.tuning);
                   });
  return result;
}

}  // namespace feedsim
