#pragma once

// Setpoint stream generation: scalar motion laws (trapezoidal or jerk-limited
// feed ramps) mapped onto path geometries, plus re-sampling of externally
// recorded paths.
//
// Geometry and positions are in axis units (mm or deg); programmed feeds in
// axis velocity units (m/min or rpm); accel/jerk limits in axis-units/s^2 and
// /s^3. A path binds one or two coordinates to named machine axes, all of the
// same kind.

#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "feedsim/core.hpp"

namespace feedsim {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct FeedProfile {
  double feed = 0;      // programmed feed, axis velocity units (m/min | rpm)
  double accel = kInf;  // path acceleration limit, axis-units/s^2
  double jerk = kInf;   // path jerk limit, axis-units/s^3
};

struct PathSpec {
  enum class Type {
    segment,
    two_speed_segment,
    back_and_forth,
    circle,
    corner,
    sampled
  };
  Type type = Type::segment;
  std::vector<std::string> axes;  // path coordinate -> machine axis name

  // segment family (per-coordinate positions, axis units)
  std::vector<double> start, end, mid;
  double v1 = 0, v2 = 0;  // two-speed feeds; v1 > v2

  // circle (coordinates 0,1)
  double center_x = 0, center_y = 0;
  double radius = 0;
  double start_angle_deg = 0;
  double turns = 1;

  // corner: vertex at origin, first leg arrives along +x
  double corner_angle_deg = 90;  // geometric angle between the legs
  double leg = 0;

  std::shared_ptr<const Trace> sampled;  // pre-loaded path for Type::sampled
  std::string sampled_file;
};

struct PathPhase {
  enum class Kind { ramp_up, cruise, ramp_down };
  double t0 = 0, t1 = 0;
  Kind kind = Kind::cruise;
};

namespace detail {

// Scalar motion law s(t), piecewise cubic in t.
struct LawSegment {
  double t0, dur, s0, v0, a, j;
};

class MotionLaw {
 public:
  double duration() const { return t_end_; }
  double length() const { return s_end_; }
  double end_velocity() const { return v_end_; }

  double pos(double t) const {
    if (segs_.empty() || t <= 0) return 0;
    if (t >= t_end_) return s_end_;
    std::size_t lo = 0, hi = segs_.size();
    while (hi - lo > 1) {
      std::size_t mid = (lo + hi) / 2;
      (segs_[mid].t0 <= t ? lo : hi) = mid;
    }
    const auto& g = segs_[lo];
    const double u = t - g.t0;
    return g.s0 + u * (g.v0 + u * (g.a / 2 + u * g.j / 6));
  }
  double vel(double t) const {
    if (segs_.empty() || t < 0 || t >= t_end_) return t >= t_end_ ? v_end_ : 0;
    std::size_t lo = 0, hi = segs_.size();
    while (hi - lo > 1) {
      std::size_t mid = (lo + hi) / 2;
      (segs_[mid].t0 <= t ? lo : hi) = mid;
    }
    const auto& g = segs_[lo];
    const double u = t - g.t0;
    return g.v0 + u * (g.a + u * g.j / 2);
  }

  void append(double dur, double a, double j) {
    if (dur <= 0) return;
    segs_.push_back({t_end_, dur, s_end_, v_end_, a, j});
    s_end_ += dur * (v_end_ + dur * (a / 2 + dur * j / 6));
    v_end_ += dur * (a + dur * j / 2);
    t_end_ += dur;
  }
  // instantaneous velocity change (accel limit off)
  void jump_velocity(double v) { v_end_ = v; }

  const std::vector<LawSegment>& segments() const { return segs_; }

 private:
  std::vector<LawSegment> segs_;
  double t_end_ = 0, s_end_ = 0, v_end_ = 0;
};

// Distance consumed by a v0 -> v1 transition under (accel, jerk) limits.
// Velocity is antisymmetric about the transition midpoint, so the mean
// velocity is (v0+v1)/2 for both the trapezoidal and jerk-limited shapes.
inline double transition_time(double v0, double v1, double accel, double jerk) {
  const double dv = std::abs(v1 - v0);
  if (dv == 0) return 0;
  if (!std::isfinite(accel)) return 0;
  if (!std::isfinite(jerk)) return dv / accel;
  if (dv >= accel * accel / jerk) return dv / accel + accel / jerk;
  return 2 * std::sqrt(dv / jerk);
}

inline double transition_distance(double v0, double v1, double accel,
                                  double jerk) {
  return 0.5 * (v0 + v1) * transition_time(v0, v1, accel, jerk);
}

// Appends the v -> v1 transition segments to the law.
inline void append_transition(MotionLaw& law, double v1, double accel,
                              double jerk) {
  const double v0 = law.end_velocity();
  const double dv = v1 - v0;
  if (dv == 0) return;
  if (!std::isfinite(accel)) {
    law.jump_velocity(v1);
    return;
  }
  const double sgn = dv > 0 ? 1.0 : -1.0;
  if (!std::isfinite(jerk)) {
    law.append(std::abs(dv) / accel, sgn * accel, 0);
    return;
  }
  double a_pk = accel, t_const;
  if (std::abs(dv) >= accel * accel / jerk) {
    t_const = std::abs(dv) / accel - accel / jerk;
  } else {
    a_pk = std::sqrt(std::abs(dv) * jerk);
    t_const = 0;
  }
  const double t_j = a_pk / jerk;
  law.append(t_j, 0, sgn * jerk);
  law.append(t_const, sgn * a_pk, 0);
  law.append(t_j, sgn * a_pk, -sgn * jerk);
}

// One planned leg: travel to end_s cruising at feed, arriving at exit feed.
struct Leg {
  double end_s, feed, exit_feed;
};

// Builds the scalar law for a sequence of legs starting from rest at s = 0.
// Throws if a leg is too short to reach its programmed feed.
inline MotionLaw plan(const std::vector<Leg>& legs, double accel, double jerk) {
  MotionLaw law;
  for (const auto& leg : legs) {
    const double d = leg.end_s - law.length();
    if (d <= 0) {
      if (d < 0) throw ValidationError("path legs must advance monotonically");
      continue;
    }
    const double v_in = law.end_velocity();
    const double d_in = transition_distance(v_in, leg.feed, accel, jerk);
    const double d_out = transition_distance(leg.feed, leg.exit_feed, accel, jerk);
    if (d_in + d_out > d * (1 + 1e-12)) {
      // achievable peak for the trapezoidal bound, for the diagnostic only
      double peak = leg.feed;
      if (std::isfinite(accel))
        peak = std::sqrt(std::max(
            0.0, accel * d + 0.5 * (v_in * v_in + leg.exit_feed * leg.exit_feed)));
      throw ValidationError(
          "feed " + std::to_string(leg.feed) +
          " not reachable within leg of length " + std::to_string(d) +
          "; achievable peak is about " + std::to_string(peak));
    }
    append_transition(law, leg.feed, accel, jerk);
    const double cruise = d - d_in - d_out;
    if (cruise > 0) law.append(cruise / leg.feed, 0, 0);
    append_transition(law, leg.exit_feed, accel, jerk);
  }
  return law;
}

inline std::vector<PathPhase> phases_of(const MotionLaw& law) {
  std::vector<PathPhase> out;
  for (const auto& g : law.segments()) {
    const double v0 = g.v0;
    const double v1 = g.v0 + g.dur * (g.a + g.dur * g.j / 2);
    PathPhase::Kind k = PathPhase::Kind::cruise;
    const double eps = 1e-12;
    if (v1 > v0 + eps)
      k = PathPhase::Kind::ramp_up;
    else if (v1 < v0 - eps)
      k = PathPhase::Kind::ramp_down;
    if (!out.empty() && out.back().kind == k &&
        std::abs(out.back().t1 - g.t0) < 1e-12) {
      out.back().t1 = g.t0 + g.dur;
    } else {
      out.push_back({g.t0, g.t0 + g.dur, k});
    }
  }
  return out;
}

// feed (m/min | rpm) -> path speed in axis-units/s
inline double feed_to_ui_rate(double feed, AxisKind kind) {
  return kind == AxisKind::linear ? feed * (1e3 / 60.0) : feed * 6.0;
}

}  // namespace detail

struct GeneratedPath {
  Trace trace;  // one channel per mapped axis, axis units, period = tsp
  std::vector<PathPhase> phases;
  double duration = 0;  // time of the last commanded motion, s
};

// Resamples an externally recorded path to a new period by linear
// interpolation. max_displacement reports how far the original samples sit
// from the piecewise-linear reconstruction on the new grid.
struct IngestResult {
  Trace trace;
  double max_displacement = 0;
};

inline IngestResult resample_path(const Trace& in, double period) {
  in.check_consistent();
  if (in.length() < 2) throw ValidationError("sampled path needs >= 2 samples");
  const double t_end = in.time_at(in.length() - 1);
  const auto n_out =
      static_cast<std::size_t>(std::floor((t_end - in.t0) / period + 1e-9)) + 1;

  IngestResult out;
  out.trace.dt = period;
  out.trace.t0 = in.t0;
  for (const auto& ch : in.channels) {
    auto& o = out.trace.add(ch.name, ch.unit);
    o.samples.resize(n_out);
    for (std::size_t k = 0; k < n_out; ++k) {
      const double t = in.t0 + static_cast<double>(k) * period;
      const double x = (t - in.t0) / in.dt;
      const auto i = std::min(static_cast<std::size_t>(std::floor(x)),
                              in.length() - 2);
      double w = x - static_cast<double>(i);
      if (w < 1e-9) w = 0;  // snap onto coincident grid points
      if (w > 1 - 1e-9) w = 1;
      o.samples[k] = ch.samples[i] * (1 - w) + ch.samples[i + 1] * w;
    }
    // round-trip displacement of the original samples
    for (std::size_t i = 0; i < in.length(); ++i) {
      const double t = in.time_at(i);
      const double x = (t - in.t0) / period;
      const auto k = std::min(static_cast<std::size_t>(std::floor(x)), n_out - 2);
      const double w = x - static_cast<double>(k);
      const double rec = o.samples[k] * (1 - w) + o.samples[k + 1] * w;
      out.max_displacement =
          std::max(out.max_displacement, std::abs(ch.samples[i] - rec));
    }
  }
  return out;
}

// Generates the per-axis setpoint stream for a path at period tsp, starting
// from rest. Corner paths reduce the vertex feed only as far as the discrete
// per-axis acceleration bound |dv| <= accel * t_sp demands; with the
// acceleration limit off the setpoint keeps full feed through the vertex.
inline GeneratedPath generate_psec(const PathSpec& spec,
                                   const FeedProfile& profile, double tsp,
                                   const MachineProfile& machine) {
  using detail::Leg;
  if (spec.axes.empty()) throw ValidationError("path maps no axes");
  std::vector<const AxisParameters*> axes;
  for (const auto& name : spec.axes) axes.push_back(&machine.at(name));
  const AxisKind kind = axes.front()->kind;
  for (const auto* a : axes)
    if (a->kind != kind)
      throw ValidationError("all axes of one path must share a kind");

  if (spec.type == PathSpec::Type::sampled) {
    if (!spec.sampled) throw ValidationError("sampled path not loaded");
    for (const auto& name : spec.axes)
      if (!spec.sampled->find(name))
        throw ValidationError("sampled path missing axis channel '" + name + "'");
    auto res = resample_path(*spec.sampled, tsp);
    GeneratedPath out;
    out.trace = std::move(res.trace);
    out.duration = out.trace.time_at(out.trace.length() - 1);
    return out;
  }

  const double rate = detail::feed_to_ui_rate(profile.feed, kind);
  if (!(rate > 0)) throw ValidationError("programmed feed must be positive");
  const double v1 = detail::feed_to_ui_rate(spec.v1, kind);
  const double v2 = detail::feed_to_ui_rate(spec.v2, kind);

  // geometry: map path parameter s to per-coordinate positions
  double total = 0;
  std::vector<Leg> legs;
  std::vector<double> dir, origin;  // for straight families
  double turn_rad = 0;              // corner
  switch (spec.type) {
    case PathSpec::Type::segment:
    case PathSpec::Type::back_and_forth: {
      if (spec.start.size() != spec.axes.size() ||
          spec.end.size() != spec.axes.size())
        throw ValidationError("segment start/end must match the axis list");
      double len = 0;
      for (std::size_t i = 0; i < spec.start.size(); ++i) {
        const double d = spec.end[i] - spec.start[i];
        len += d * d;
      }
      len = std::sqrt(len);
      origin = spec.start;
      dir.resize(spec.start.size(), 0);
      if (len > 0)
        for (std::size_t i = 0; i < dir.size(); ++i)
          dir[i] = (spec.end[i] - spec.start[i]) / len;
      total = spec.type == PathSpec::Type::segment ? len : 2 * len;
      if (len > 0) {
        legs.push_back({len, rate, 0});
        if (spec.type == PathSpec::Type::back_and_forth)
          legs.push_back({2 * len, rate, 0});
      }
      break;
    }
    case PathSpec::Type::two_speed_segment: {
      if (spec.start.size() != spec.axes.size() ||
          spec.end.size() != spec.axes.size() ||
          spec.mid.size() != spec.axes.size())
        throw ValidationError("two-speed segment needs start/mid/end");
      if (!(spec.v1 > spec.v2) || !(spec.v2 > 0))
        throw ValidationError("two-speed segment requires v1 > v2 > 0");
      double len = 0, len_mid = 0;
      for (std::size_t i = 0; i < spec.start.size(); ++i) {
        const double d = spec.end[i] - spec.start[i];
        const double dm = spec.mid[i] - spec.start[i];
        len += d * d;
        len_mid += dm * dm;
      }
      len = std::sqrt(len);
      len_mid = std::sqrt(len_mid);
      if (!(len_mid > 0) || len_mid >= len)
        throw ValidationError("two-speed mid point must lie inside the segment");
      origin = spec.start;
      dir.resize(spec.start.size(), 0);
      for (std::size_t i = 0; i < dir.size(); ++i)
        dir[i] = (spec.end[i] - spec.start[i]) / len;
      total = len;
      legs.push_back({len_mid, v1, v2});
      legs.push_back({len, v2, 0});
      break;
    }
    case PathSpec::Type::circle: {
      if (spec.axes.size() != 2)
        throw ValidationError("circle path needs exactly two axes");
      if (!(spec.radius > 0)) throw ValidationError("circle radius must be positive");
      if (!(spec.turns > 0)) throw ValidationError("circle turns must be positive");
      total = 2 * std::numbers::pi * spec.radius * spec.turns;
      legs.push_back({total, rate, 0});
      break;
    }
    case PathSpec::Type::corner: {
      if (spec.axes.size() != 2)
        throw ValidationError("corner path needs exactly two axes");
      if (!(spec.leg > 0)) throw ValidationError("corner leg must be positive");
      if (spec.corner_angle_deg != 45 && spec.corner_angle_deg != 90)
        throw ValidationError("corner angle must be 45 or 90 degrees");
      turn_rad = (180.0 - spec.corner_angle_deg) * std::numbers::pi / 180.0;
      total = 2 * spec.leg;
      double v_c = rate;
      if (std::isfinite(profile.accel)) {
        const double ddx = std::abs(std::cos(turn_rad) - 1.0);
        const double ddy = std::abs(std::sin(turn_rad));
        const double dd = std::max(ddx, ddy);
        if (dd > 0)
          v_c = std::min(rate, profile.accel * axes.front()->t_sp / dd);
      }
      legs.push_back({spec.leg, rate, v_c});
      legs.push_back({total, rate, 0});
      break;
    }
    case PathSpec::Type::sampled:
      break;  // handled above
  }

  const auto law = detail::plan(legs, profile.accel, profile.jerk);

  auto point_at = [&](double s, std::size_t coord) -> double {
    switch (spec.type) {
      case PathSpec::Type::segment:
      case PathSpec::Type::two_speed_segment:
        return origin[coord] + dir[coord] * s;
      case PathSpec::Type::back_and_forth: {
        const double half = total / 2;
        const double folded = s <= half ? s : total - s;
        return origin[coord] + dir[coord] * folded;
      }
      case PathSpec::Type::circle: {
        const double ang =
            spec.start_angle_deg * std::numbers::pi / 180.0 + s / spec.radius;
        return coord == 0 ? spec.center_x + spec.radius * std::cos(ang)
                          : spec.center_y + spec.radius * std::sin(ang);
      }
      case PathSpec::Type::corner: {
        if (s <= spec.leg) return coord == 0 ? s - spec.leg : 0.0;
        const double u = s - spec.leg;
        return coord == 0 ? u * std::cos(turn_rad) : u * std::sin(turn_rad);
      }
      default:
        return 0;
    }
  };

  GeneratedPath out;
  out.duration = law.duration();
  out.phases = detail::phases_of(law);
  out.trace.dt = tsp;
  const auto n = static_cast<std::size_t>(std::ceil(law.duration() / tsp)) + 1;
  const std::string unit = kind == AxisKind::linear ? "mm" : "deg";
  for (std::size_t c = 0; c < spec.axes.size(); ++c) {
    auto& ch = out.trace.add(spec.axes[c], unit);
    ch.samples.resize(n);
    for (std::size_t k = 0; k < n; ++k)
      ch.samples[k] = point_at(law.pos(static_cast<double>(k) * tsp), c);
  }
  return out;
}

}  // namespace feedsim
