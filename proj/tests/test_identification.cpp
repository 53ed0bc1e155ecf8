#include "feedsim/identification.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "feedsim/io.hpp"

using namespace feedsim;

namespace {

MachineProfile load_mikron() {
  return io::read_profile(std::string(FEEDSIM_DATA_DIR) +
                          "/profiles/mikron_ucp710");
}

std::vector<std::pair<double, double>> law_points(const FrictionParams& fp,
                                                  int n, double v_max,
                                                  bool both_signs = false) {
  std::vector<std::pair<double, double>> pts;
  for (int k = 1; k <= n; ++k) {
    const double v = v_max * k / n;
    const double i = fp.a * std::exp(fp.b * v) + fp.c * std::exp(fp.d * v);
    if (both_signs && k % 2 == 0)
      pts.emplace_back(-v, -i);
    else
      pts.emplace_back(v, i);
  }
  return pts;
}

TEST(FrictionFit, RoundTripOnPaperConstants) {
  const auto truth = load_mikron().at("X").friction;
  const auto fit = fit_friction(law_points(truth, 25, 20.0));
  EXPECT_NEAR(fit.params.a, truth.a, 0.005 * std::abs(truth.a));
  EXPECT_NEAR(fit.params.b, truth.b, 0.005 * std::abs(truth.b));
  EXPECT_NEAR(fit.params.c, truth.c, 0.005 * std::abs(truth.c));
  EXPECT_NEAR(fit.params.d, truth.d, 0.005 * std::abs(truth.d));
  EXPECT_NEAR(fit.params.i0, truth.a + truth.c, 0.005);
  EXPECT_GT(fit.report.r_squared, 0.999);
}

TEST(FrictionFit, SymmetryFoldingIgnoresSigns) {
  const auto truth = load_mikron().at("Y").friction;
  const auto plain = fit_friction(law_points(truth, 24, 18.0, false));
  const auto folded = fit_friction(law_points(truth, 24, 18.0, true));
  EXPECT_NEAR(plain.params.a, folded.params.a, 1e-9);
  EXPECT_NEAR(plain.params.b, folded.params.b, 1e-9);
  EXPECT_NEAR(plain.params.c, folded.params.c, 1e-9);
  EXPECT_NEAR(plain.params.d, folded.params.d, 1e-9);
}

TEST(FrictionFit, PureCoulombFallsBackToSingleExponential) {
  std::vector<std::pair<double, double>> pts;
  for (int k = 1; k <= 12; ++k) pts.emplace_back(1.5 * k, 0.8);
  const auto fit = fit_friction(pts);
  EXPECT_NEAR(fit.params.a, 0.8, 1e-6);
  EXPECT_NEAR(fit.params.b, 0.0, 1e-4);
  EXPECT_EQ(fit.params.c, 0.0);
  EXPECT_EQ(fit.params.d, 0.0);
  ASSERT_FALSE(fit.report.notes.empty());
  EXPECT_NE(fit.report.notes.front().find("fallback"), std::string::npos);
}

TEST(FrictionFit, RequiresEightDistinctSpeeds) {
  const auto truth = load_mikron().at("X").friction;
  EXPECT_THROW(fit_friction(law_points(truth, 7, 20.0)), IdentError);
}

TEST(Inertia, DirectSubstitutionExample) {
  // K_t = 1, i = 2 A, C_r = 0.5 N.m, dOmega/dt = 50 rad/s^2 -> 0.03 kg.m^2
  AxisParameters p;
  p.name = "T";
  p.kind = AxisKind::linear;
  p.k_t = 1.0;
  p.static_load = 0.5;
  p.friction = {0, 0, 0, 0, 0, 100};
  p.transmission = 10.0 / (2 * std::numbers::pi);
  Trace tr;
  tr.dt = 0.006;
  auto& sv = tr.add("sv", "m/min");
  auto& smc = tr.add("smc", "A");
  auto& sp = tr.add("sp", "mm");
  for (int k = 0; k < 400; ++k) {
    const double omega = 50.0 * 0.006 * k;  // constant 50 rad/s^2
    sv.samples.push_back(p.axis_vel_ui_from_omega(omega));
    smc.samples.push_back(2.0);
    sp.samples.push_back(0.0);
  }
  const auto est = estimate_inertia(tr, p);
  EXPECT_NEAR(est.j_eq, 0.03, 1e-6);
}

TEST(Inertia, ConstantVelocityTraceHasNoInformation) {
  const auto p = load_mikron().at("X");
  Trace tr;
  tr.dt = 0.006;
  auto& sv = tr.add("sv", "m/min");
  auto& smc = tr.add("smc", "A");
  for (int k = 0; k < 300; ++k) {
    sv.samples.push_back(6.0);
    smc.samples.push_back(1.5);
  }
  EXPECT_THROW(estimate_inertia(tr, p), IdentError);
}

TEST(StaticLoad, ZeroCurrentIsZeroTorque) {
  const auto p = load_mikron().at("Z");
  Trace tr;
  tr.dt = 0.006;
  auto& sv = tr.add("sv", "m/min");
  auto& smc = tr.add("smc", "A");
  auto& sp = tr.add("sp", "mm");
  for (int k = 0; k < 100; ++k) {
    sv.samples.push_back(0.0);
    smc.samples.push_back(0.0);
    sp.samples.push_back(10.0);
  }
  const auto est = estimate_static_load(tr, p);
  EXPECT_DOUBLE_EQ(est.constant, 0.0);
  EXPECT_TRUE(est.table.empty());
}

TEST(StaticLoad, VerticalAxisProduct) {
  auto p = load_mikron().at("Z");
  ASSERT_DOUBLE_EQ(p.k_t, 1.3);
  Trace tr;
  tr.dt = 0.006;
  auto& sv = tr.add("sv", "m/min");
  auto& smc = tr.add("smc", "A");
  auto& sp = tr.add("sp", "mm");
  for (int k = 0; k < 100; ++k) {
    sv.samples.push_back(0.0);
    smc.samples.push_back(2.0);
    sp.samples.push_back(0.0);
  }
  const auto est = estimate_static_load(tr, p);
  EXPECT_NEAR(est.constant, 2.6, 1e-12);
}

TEST(StaticLoad, TiltingAxisTableAndInterpolation) {
  auto p = load_mikron().at("X");
  Trace tr;
  tr.dt = 0.006;
  auto& sv = tr.add("sv", "m/min");
  auto& smc = tr.add("smc", "A");
  auto& sp = tr.add("sp", "mm");
  for (int k = 0; k < 50; ++k) {
    sv.samples.push_back(0.0);
    smc.samples.push_back(1.0);
    sp.samples.push_back(0.0);
  }
  for (int k = 0; k < 50; ++k) {
    sv.samples.push_back(0.0);
    smc.samples.push_back(2.0);
    sp.samples.push_back(90.0);
  }
  const auto est = estimate_static_load(tr, p);
  ASSERT_EQ(est.table.size(), 2u);
  AxisParameters q = p;
  q.static_load_law = est.table;
  EXPECT_NEAR(q.static_load_at(45.0), p.k_t * 1.5, 1e-12);
}

TEST(StaticLoad, MotionIsRejected) {
  const auto p = load_mikron().at("X");
  Trace tr;
  tr.dt = 0.006;
  auto& sv = tr.add("sv", "m/min");
  auto& smc = tr.add("smc", "A");
  auto& sp = tr.add("sp", "mm");
  for (int k = 0; k < 50; ++k) {
    sv.samples.push_back(k < 25 ? 0.0 : 3.0);
    smc.samples.push_back(1.0);
    sp.samples.push_back(0.0);
  }
  EXPECT_THROW(estimate_static_load(tr, p), IdentError);
}

Trace ffw_trace(const AxisParameters& p, double vffw, double tffw) {
  Trace tr;
  tr.dt = p.t_sp;
  auto& psec = tr.add("psec", "mm");
  auto& v = tr.add("vffws", "m/min");
  auto& t = tr.add("tffws", "N.m");
  for (int k = 0; k < 600; ++k) {
    const double time = p.t_sp * k;
    psec.samples.push_back(40.0 * std::sin(1.3 * time) + 20.0 * time);
  }
  const auto d1 = euler_d1(psec.samples, p.t_sp);
  const auto d2 = euler_d2(psec.samples, p.t_sp);
  for (std::size_t k = 0; k < psec.samples.size(); ++k) {
    v.samples.push_back(vffw * d1[k] / p.pos_ui_per_si() * p.vel_ui_per_si());
    t.samples.push_back(tffw * d2[k] / p.pos_ui_per_si() / p.transmission_si());
  }
  return tr;
}

TEST(Feedforward, ExactSlopesRecovered) {
  const auto p = load_mikron().at("X");
  const auto tr = ffw_trace(p, 1.0, 0.002034);
  const auto fit = fit_feedforward(tr, p);
  EXPECT_NEAR(fit.vffw, 1.0, 1e-12);
  EXPECT_NEAR(fit.tffw, 0.002034, 1e-12 * 0.002034 + 1e-15);
  EXPECT_GT(fit.vffw_report.r_squared, 0.999999);
  EXPECT_GT(fit.tffw_report.r_squared, 0.999999);
}

TEST(Feedforward, NoiseKeepsSlopeUnbiased) {
  const auto p = load_mikron().at("X");
  auto tr = ffw_trace(p, 1.0, 0.002034);
  const double sigma = 0.05;
  std::mt19937 rng(77);
  std::normal_distribution<double> noise(0.0, sigma);
  auto& v = tr.find("vffws")->samples;
  for (auto& x : v) x += noise(rng);
  // 3-sigma bound for the through-origin slope estimate
  const auto d1 = euler_d1(tr.samples("psec"), p.t_sp);
  double sxx = 0;
  for (double x : d1) {
    const double xi = x / p.pos_ui_per_si() * p.vel_ui_per_si();
    sxx += xi * xi;
  }
  const double bound = 3.0 * sigma / std::sqrt(sxx);
  const auto fit = fit_feedforward(tr, p);
  EXPECT_NEAR(fit.vffw, 1.0, bound);
}

TEST(Feedforward, ConstantSetpointIsDegenerate) {
  const auto p = load_mikron().at("X");
  Trace tr;
  tr.dt = p.t_sp;
  auto& psec = tr.add("psec", "mm");
  auto& v = tr.add("vffws", "m/min");
  auto& t = tr.add("tffws", "N.m");
  for (int k = 0; k < 100; ++k) {
    psec.samples.push_back(5.0);
    v.samples.push_back(0.0);
    t.samples.push_back(0.0);
  }
  EXPECT_THROW(fit_feedforward(tr, p), IdentError);
}

// --- staged delay calibration --------------------------------------------------

Trace measured_run(const MachineProfile& profile, bool vffw, bool tffw) {
  const auto& p = profile.at("X");
  PathSpec path;
  path.type = PathSpec::Type::segment;
  path.axes = {"X"};
  path.start = {0};
  path.end = {50};
  const FeedProfile feed{10.0, 1000.0, kInf};
  const double dt = kDefaultPlantStep;
  const auto gen = generate_psec(path, feed, dt, profile);
  const auto n_steps = static_cast<std::size_t>(
                           std::ceil((gen.duration + 0.3) / dt)) +
                       1;
  ControllerChoice choice;
  choice.cascade.vffw_on = vffw;
  choice.cascade.tffw_on = tffw;
  const std::vector<std::string> rec = {"psec", "sp", "vffws", "tffws"};
  return simulate_axis(p, choice, gen.trace.samples("X"), n_steps, dt, rec)
      .trace;
}

TEST(Delays, RoundTripRecoversNineMilliseconds) {
  const auto profile = load_mikron();
  const auto run1 = measured_run(profile, false, false);
  const auto run2 = measured_run(profile, true, false);
  const auto run3 = measured_run(profile, true, true);
  const auto cal = calibrate_delays(run1, run2, run3, profile.at("X"));
  EXPECT_NEAR(cal.alpha, 9e-3, 25e-6 + 1e-12);
  EXPECT_NEAR(cal.beta, 9e-3, 25e-6 + 1e-12);
  EXPECT_NEAR(cal.gamma, 9e-3, 25e-6 + 1e-12);
}

TEST(Delays, ZeroGroundTruthYieldsZero) {
  auto profile = load_mikron();
  for (auto& ax : profile.axes) ax.alpha = 0.0;
  const auto run1 = measured_run(profile, false, false);
  const auto cal_profile = load_mikron();
  // only stage 1 matters here; provide consistent runs for stages 2/3
  const auto run2 = measured_run(profile, true, false);
  const auto run3 = measured_run(profile, true, true);
  const auto cal = calibrate_delays(run1, run2, run3, cal_profile.at("X"));
  EXPECT_NEAR(cal.alpha, 0.0, 25e-6 + 1e-12);
}

TEST(Delays, ShuffledRunOrderIsRejected) {
  const auto profile = load_mikron();
  const auto run1 = measured_run(profile, false, false);
  const auto run2 = measured_run(profile, true, false);
  const auto run3 = measured_run(profile, true, true);
  EXPECT_THROW(calibrate_delays(run2, run1, run3, profile.at("X")), IdentError);
  EXPECT_THROW(calibrate_delays(run3, run2, run1, profile.at("X")), IdentError);
}

TEST(Plateaus, ExtractedFromARealRun) {
  const auto profile = load_mikron();
  const auto& p = profile.at("X");
  PathSpec path;
  path.type = PathSpec::Type::segment;
  path.axes = {"X"};
  path.start = {0};
  path.end = {200};
  const auto gen = generate_psec(path, {10.0, 1000.0, kInf},
                                 kDefaultPlantStep, profile);
  const auto n_steps =
      static_cast<std::size_t>(std::ceil((gen.duration + 0.3) / kDefaultPlantStep)) + 1;
  const std::vector<std::string> rec = {"sv", "smc"};
  const auto run = simulate_axis(p, ControllerChoice{}, gen.trace.samples("X"),
                                 n_steps, kDefaultPlantStep, rec);
  const auto pts = extract_constant_velocity_points(run.trace);
  ASSERT_FALSE(pts.empty());
  // the plateau runs at the programmed feed and carries the friction current
  EXPECT_NEAR(pts.front().first, 10.0, 0.05);
  EXPECT_NEAR(pts.front().second,
              friction_current(p.friction, pts.front().first, 0, p.k_t), 0.02);
}

}  // namespace
