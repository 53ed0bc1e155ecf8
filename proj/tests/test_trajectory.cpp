#include "feedsim/trajectory.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "feedsim/io.hpp"

using namespace feedsim;

namespace {

MachineProfile load_mikron() {
  return io::read_profile(std::string(FEEDSIM_DATA_DIR) +
                          "/profiles/mikron_ucp710");
}

PathSpec x_segment(double start, double end) {
  PathSpec spec;
  spec.type = PathSpec::Type::segment;
  spec.axes = {"X"};
  spec.start = {start};
  spec.end = {end};
  return spec;
}

TEST(Trajectory, Case1ConstantFeedSlopeAndDuration) {
  const auto profile = load_mikron();
  // 0 -> 300 mm at 10 m/min with the acceleration limit off: 1.8 s ramp
  const auto gen =
      generate_psec(x_segment(0, 300), {10.0, kInf, kInf}, 0.006, profile);
  EXPECT_NEAR(gen.duration, 1.8, 1e-12);
  const auto& x = gen.trace.samples("X");
  const double rate_mm_s = 10.0 * 1e3 / 60.0;
  for (std::size_t k = 1; k + 1 < x.size(); ++k) {
    const double t = static_cast<double>(k) * 0.006;
    if (t < 1.8) EXPECT_NEAR(x[k], rate_mm_s * t, 1e-9);
  }
  EXPECT_NEAR(x.back(), 300.0, 1e-9);
}

TEST(Trajectory, Case2TwoSpeedRotary) {
  const auto rotary = io::read_profile(std::string(FEEDSIM_DATA_DIR) +
                                       "/profiles/demo_rotary");
  PathSpec spec;
  spec.type = PathSpec::Type::two_speed_segment;
  spec.axes = {"C"};
  spec.start = {0};
  spec.mid = {130};
  spec.end = {210};
  spec.v1 = 18;  // rpm -> 108 deg/s
  spec.v2 = 6;   // rpm -> 36 deg/s
  const auto gen = generate_psec(spec, {18.0, 200.0, kInf}, 0.006, rotary);
  const auto& c = gen.trace.samples("C");
  // rate just before the speed change is v1, after it v2
  auto rate_at = [&](double t) {
    const auto k = static_cast<std::size_t>(t / 0.006);
    return (c[k + 1] - c[k]) / 0.006;
  };
  // position passes 130 deg exactly at the end of the v1->v2 ramp
  EXPECT_NEAR(rate_at(0.7), 108.0, 1e-6);   // cruise at v1
  EXPECT_NEAR(rate_at(1.6), 36.0, 1e-6);    // cruise at v2
  EXPECT_NEAR(c.back(), 210.0, 1e-9);
  // monotone, continuous
  for (std::size_t k = 1; k < c.size(); ++k) {
    EXPECT_GE(c[k] + 1e-12, c[k - 1]);
    EXPECT_LE(c[k] - c[k - 1], 108.0 * 0.006 + 1e-9);
  }
}

TEST(Trajectory, TwoSpeedRequiresV1AboveV2) {
  const auto profile = load_mikron();
  PathSpec spec;
  spec.type = PathSpec::Type::two_speed_segment;
  spec.axes = {"X"};
  spec.start = {0};
  spec.mid = {100};
  spec.end = {200};
  spec.v1 = 4;
  spec.v2 = 10;
  EXPECT_THROW(generate_psec(spec, {10.0, 1000.0, kInf}, 0.006, profile),
               ValidationError);
}

TEST(Trajectory, BackAndForthIsTimeSymmetric) {
  const auto profile = load_mikron();
  PathSpec spec;
  spec.type = PathSpec::Type::back_and_forth;
  spec.axes = {"X"};
  spec.start = {0};
  spec.end = {120};
  // sample so the turnaround instant lands exactly on the grid
  const auto probe = generate_psec(spec, {10.0, 1000.0, kInf}, 0.006, profile);
  const double t_turn = probe.duration / 2;
  const std::size_t k_turn = 200;
  const double tsp = t_turn / static_cast<double>(k_turn);
  const auto gen = generate_psec(spec, {10.0, 1000.0, kInf}, tsp, profile);
  const auto& x = gen.trace.samples("X");
  for (std::size_t u = 1; u < k_turn && k_turn + u < x.size(); ++u)
    EXPECT_NEAR(x[k_turn + u], x[k_turn - u], 1e-9);
  EXPECT_NEAR(x[k_turn], 120.0, 1e-9);
}

TEST(Trajectory, CircleStaysOnTheCircle) {
  const auto profile = load_mikron();
  PathSpec spec;
  spec.type = PathSpec::Type::circle;
  spec.axes = {"X", "Y"};
  spec.radius = 150.0;
  const auto gen = generate_psec(spec, {15.0, 1000.0, kInf}, 0.006, profile);
  const auto& x = gen.trace.samples("X");
  const auto& y = gen.trace.samples("Y");
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double r = std::hypot(x[k], y[k]);
    EXPECT_NEAR(r, 150.0, 150.0 * 1e-9);
  }
  // angular rate at cruise: feed/radius = 15000/(60*150) rad/s
  const double omega = 15000.0 / 60.0 / 150.0;
  EXPECT_NEAR(omega, 1.6667, 1e-4);
}

TEST(Trajectory, ContinuityBound) {
  const auto profile = load_mikron();
  for (double feed : {2.0, 10.0, 15.0}) {
    const auto gen =
        generate_psec(x_segment(0, 150), {feed, 800.0, kInf}, 0.006, profile);
    const auto& x = gen.trace.samples("X");
    const double bound = feed * 1e3 / 60.0 * 0.006 + 1e-9;
    for (std::size_t k = 1; k < x.size(); ++k)
      EXPECT_LE(std::abs(x[k] - x[k - 1]), bound);
  }
}

TEST(Trajectory, InfeasibleFeedNamesAchievablePeak) {
  const auto profile = load_mikron();
  try {
    generate_psec(x_segment(0, 5), {10.0, 1000.0, kInf}, 0.006, profile);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("achievable peak"), std::string::npos);
  }
}

TEST(Trajectory, JerkLimitedRampReachesSameEndpoints) {
  const auto profile = load_mikron();
  const auto gen = generate_psec(x_segment(0, 100), {6.0, 500.0, 20000.0},
                                 0.006, profile);
  const auto& x = gen.trace.samples("X");
  EXPECT_NEAR(x.back(), 100.0, 1e-9);
  // longer than the trapezoidal profile by the jerk transitions
  const auto trap =
      generate_psec(x_segment(0, 100), {6.0, 500.0, kInf}, 0.006, profile);
  EXPECT_GT(gen.duration, trap.duration);
}

TEST(Trajectory, CornerKeepsFeedWithAccelOff) {
  const auto profile = load_mikron();
  PathSpec spec;
  spec.type = PathSpec::Type::corner;
  spec.axes = {"X", "Y"};
  spec.corner_angle_deg = 90;
  spec.leg = 50;
  const auto gen = generate_psec(spec, {10.0, kInf, kInf}, 0.006, profile);
  // full feed throughout: duration is path length / feed
  EXPECT_NEAR(gen.duration, 100.0 / (10.0 * 1e3 / 60.0), 1e-12);
  const auto& x = gen.trace.samples("X");
  const auto& y = gen.trace.samples("Y");
  EXPECT_NEAR(x.front(), -50.0, 1e-12);
  EXPECT_NEAR(y.back(), 50.0, 1e-9);
}

TEST(Trajectory, CornerSlowsUnderFiniteAccel) {
  const auto profile = load_mikron();
  PathSpec spec;
  spec.type = PathSpec::Type::corner;
  spec.axes = {"X", "Y"};
  spec.corner_angle_deg = 90;
  spec.leg = 50;
  const auto gen = generate_psec(spec, {10.0, 2000.0, kInf}, 0.006, profile);
  const auto& x = gen.trace.samples("X");
  const auto& y = gen.trace.samples("Y");
  // velocity magnitude at the vertex passage is well below the feed
  double v_vertex = kInf;
  for (std::size_t k = 1; k < x.size(); ++k) {
    if (x[k - 1] <= 0 && x[k] >= 0 && std::abs(y[k]) < 1.0) {
      v_vertex = std::hypot(x[k] - x[k - 1], y[k] - y[k - 1]) / 0.006;
      break;
    }
  }
  EXPECT_LT(v_vertex, 0.5 * 10.0 * 1e3 / 60.0);
}

TEST(Trajectory, ZeroLengthPathIsConstant) {
  const auto profile = load_mikron();
  const auto gen =
      generate_psec(x_segment(25, 25), {10.0, 1000.0, kInf}, 0.006, profile);
  EXPECT_EQ(gen.duration, 0.0);
  for (double v : gen.trace.samples("X")) EXPECT_DOUBLE_EQ(v, 25.0);
}

TEST(Resample, IdentityAtSamePeriod) {
  Trace in;
  in.dt = 0.006;
  auto& ch = in.add("X", "mm");
  for (int k = 0; k < 50; ++k) ch.samples.push_back(0.3 * k);
  const auto out = resample_path(in, 0.006);
  EXPECT_EQ(out.trace.samples("X"), ch.samples);
  EXPECT_LT(out.max_displacement, 1e-12);
}

TEST(Resample, OversampledRampIsExact) {
  Trace in;
  in.dt = 0.003;
  auto& ch = in.add("X", "mm");
  for (int k = 0; k < 101; ++k) ch.samples.push_back(1.7 * k);
  const auto out = resample_path(in, 0.006);
  const auto& x = out.trace.samples("X");
  for (std::size_t k = 0; k < x.size(); ++k) EXPECT_NEAR(x[k], 3.4 * k, 1e-9);
  EXPECT_LT(out.max_displacement, 1e-9);
}

TEST(Resample, CircleAtOneKilohertzKeepsRadius) {
  Trace in;
  in.dt = 0.001;
  auto& x = in.add("X", "mm");
  auto& y = in.add("Y", "mm");
  const double R = 150.0, w = 1.6667;
  for (int k = 0; k <= 3000; ++k) {
    const double t = 0.001 * k;
    x.samples.push_back(R * std::cos(w * t));
    y.samples.push_back(R * std::sin(w * t));
  }
  const auto out = resample_path(in, 0.006);
  const auto& xr = out.trace.samples("X");
  const auto& yr = out.trace.samples("Y");
  double worst = 0;
  for (std::size_t k = 0; k < xr.size(); ++k)
    worst = std::max(worst, std::abs(std::hypot(xr[k], yr[k]) - R));
  EXPECT_LT(worst, 1e-4);  // chord-vs-arc bound at 1 kHz: w^2 dt^2 R / 8
}

TEST(Resample, SampledPathMissingAxisChannel) {
  const auto profile = load_mikron();
  auto trace = std::make_shared<Trace>();
  trace->dt = 0.006;
  auto& ch = trace->add("X", "mm");
  for (int k = 0; k < 30; ++k) ch.samples.push_back(k * 0.5);
  PathSpec spec;
  spec.type = PathSpec::Type::sampled;
  spec.axes = {"X", "Y"};
  spec.sampled = trace;
  EXPECT_THROW(generate_psec(spec, {10.0, kInf, kInf}, 0.006, profile),
               ValidationError);
}

TEST(Trajectory, PhasesCoverRampsAndCruise) {
  const auto profile = load_mikron();
  const auto gen =
      generate_psec(x_segment(0, 300), {10.0, 1000.0, kInf}, 0.006, profile);
  ASSERT_EQ(gen.phases.size(), 3u);
  EXPECT_EQ(gen.phases[0].kind, PathPhase::Kind::ramp_up);
  EXPECT_EQ(gen.phases[1].kind, PathPhase::Kind::cruise);
  EXPECT_EQ(gen.phases[2].kind, PathPhase::Kind::ramp_down);
  EXPECT_NEAR(gen.phases.back().t1, gen.duration, 1e-12);
}

}  // namespace
