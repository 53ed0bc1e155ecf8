// feedsim command-line front end: run scenarios, identify profiles from
// traces, synthesize and sweep RST controllers, compare control structures.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "feedsim/feedsim.hpp"

namespace fs = std::filesystem;
using namespace feedsim;

namespace {

struct GlobalOpts {
  std::string out_dir = "out";
  std::string data_dir = FEEDSIM_DATA_DIR;
  double plant_step = 0;  // 0: leave the scenario's value alone
  unsigned long long seed = 0;
  bool quiet = false;
};

void say(const GlobalOpts& g, const std::string& msg) {
  if (!g.quiet) std::cout << msg << "\n";
}

fs::path ensure_dir(const fs::path& dir) {
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

// test utility: measurement noise on the recorded plant channels
void add_noise(RunResult& result, double sigma_pos, unsigned long long seed) {
  if (sigma_pos <= 0) return;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, sigma_pos);
  for (auto& axis : result.axes)
    for (auto& ch : axis.trace.channels)
      if (ch.name == "sp" || ch.name == "sv" || ch.name == "smc")
        for (auto& x : ch.samples) x += dist(rng);
}

Scenario load_scenario(const GlobalOpts& g, const std::string& path) {
  Scenario sc = io::read_scenario(path, g.data_dir);
  if (g.plant_step > 0) sc.plant_step = g.plant_step;
  return sc;
}

void write_run(const GlobalOpts& g, const fs::path& dir, const Scenario& sc,
               const RunResult& result) {
  ensure_dir(dir);
  for (const auto& axis : result.axes)
    io::write_trace(axis.trace, dir / (axis.axis + ".csv"));
  write_text(dir / "metrics.txt", io::format_metrics(result, sc.name));
}

int run_simulate(const GlobalOpts& g, const std::string& scenario_path,
                 double noise_pos) {
  Scenario sc = load_scenario(g, scenario_path);
  RunResult result = run(sc);
  add_noise(result, noise_pos, g.seed);
  const fs::path dir = fs::path(g.out_dir) / sc.name;
  write_run(g, dir, sc, result);
  say(g, "wrote " + (dir / "metrics.txt").string());
  for (const auto& a : result.axes)
    say(g, "  axis " + a.axis +
               ": max|err| = " + io::format_number(a.tracking.max_abs) + " " +
               channel_unit("pos_err", sc.profile.at(a.axis).kind));
  for (const auto& w : result.warnings) say(g, "  warning: " + w);
  return 0;
}

int run_compare(const GlobalOpts& g, const std::string& scenario_path) {
  Scenario sc = load_scenario(g, scenario_path);
  sc.per_axis.clear();

  Scenario cascade_sc = sc;
  cascade_sc.controller =
      sc.controller.type == ControllerChoice::Type::cascade
          ? sc.controller
          : ControllerChoice{};  // defaults: cascade, both feedforwards on
  Scenario rst_sc = sc;
  if (sc.controller.type != ControllerChoice::Type::rst) {
    rst_sc.controller = ControllerChoice{};
    rst_sc.controller.type = ControllerChoice::Type::rst;
  }

  const RunResult cas = run(cascade_sc);
  const RunResult rst = run(rst_sc);

  const fs::path dir = fs::path(g.out_dir) / sc.name;
  write_run(g, dir / "cascade", sc, cas);
  write_run(g, dir / "rst", sc, rst);

  double cas_max = 0, rst_max = 0;
  for (const auto& a : cas.axes) cas_max = std::max(cas_max, a.tracking.max_abs);
  for (const auto& a : rst.axes) rst_max = std::max(rst_max, a.tracking.max_abs);

  std::ostringstream sum;
  sum << "# feedsim controller comparison (identical setpoint streams)\n";
  sum << "format_version = " << io::kFormatVersion << "\n";
  sum << "scenario = " << sc.name << "\n";
  sum << "cascade_max_err = " << io::format_number(cas_max) << "\n";
  sum << "rst_max_err = " << io::format_number(rst_max) << "\n";
  sum << "ratio = " << io::format_number(cas_max > 0 ? rst_max / cas_max : 0)
      << "\n";
  if (sc.path.type == PathSpec::Type::circle) {
    const auto& x0 = sc.path.axes[0];
    const auto& y0 = sc.path.axes[1];
    const auto cc = contour_error_circle(
        cas.axis(x0).trace.samples("sp"), cas.axis(y0).trace.samples("sp"),
        sc.path.center_x, sc.path.center_y, sc.path.radius);
    const auto rc = contour_error_circle(
        rst.axis(x0).trace.samples("sp"), rst.axis(y0).trace.samples("sp"),
        sc.path.center_x, sc.path.center_y, sc.path.radius);
    sum << "cascade_max_radial = " << io::format_number(cc.max_abs) << "\n";
    sum << "rst_max_radial = " << io::format_number(rc.max_abs) << "\n";
  }
  if (sc.path.type == PathSpec::Type::corner) {
    const auto& x0 = sc.path.axes[0];
    const auto& y0 = sc.path.axes[1];
    sum << "cascade_corner_deviation = "
        << io::format_number(corner_deviation(cas.axis(x0).trace.samples("sp"),
                                              cas.axis(y0).trace.samples("sp"),
                                              sc.path))
        << "\n";
    sum << "rst_corner_deviation = "
        << io::format_number(corner_deviation(rst.axis(x0).trace.samples("sp"),
                                              rst.axis(y0).trace.samples("sp"),
                                              sc.path))
        << "\n";
  }
  write_text(dir / "compare.txt", sum.str());
  say(g, "wrote " + (dir / "compare.txt").string());
  say(g, sum.str());
  return 0;
}

int run_synthesize(const GlobalOpts& g, const std::string& profile_path,
                   const std::string& axis, const GpcTuning& tuning,
                   std::string out_file) {
  const MachineProfile profile = io::read_profile(
      io::resolve_profile(profile_path, ".", g.data_dir));
  const auto& p = profile.at(axis);
  const double dt = g.plant_step > 0 ? g.plant_step : kDefaultPlantStep;
  const CarimaModel model = model_from_axis(p, dt);
  const RstPolynomials rst = synthesize_rst(model, tuning);
  if (out_file.empty()) out_file = axis + ".rst";
  const fs::path path = ensure_dir(g.out_dir) / out_file;
  io::write_rst(rst, path);
  const auto margins = loop_margins(model, rst);
  say(g, "wrote " + path.string());
  say(g, "  condition = " + io::format_number(rst.condition));
  say(g, "  gain margin = " + io::format_number(margins.gain_margin_db) +
             " dB, phase margin = " +
             io::format_number(margins.phase_margin_deg) + " deg");
  return 0;
}

std::vector<GpcTuning> parse_grid(const std::string& spec) {
  const GpcTuning defaults{};
  std::vector<int> n1s = {defaults.n1}, n2s = {defaults.n2}, nus = {defaults.nu};
  std::vector<double> lambdas = {defaults.lambda};
  std::istringstream ss(spec);
  std::string part;
  while (std::getline(ss, part, ';')) {
    const auto eq = part.find('=');
    if (eq == std::string::npos)
      throw ValidationError("grid spec: expected key=v1,v2,... in '" + part + "'");
    const std::string key = part.substr(0, eq);
    std::vector<double> vals;
    std::istringstream vs(part.substr(eq + 1));
    std::string v;
    while (std::getline(vs, v, ',')) vals.push_back(std::stod(v));
    if (vals.empty()) throw ValidationError("grid spec: empty list for " + key);
    auto ints = [&] {
      std::vector<int> out;
      for (double x : vals) out.push_back(static_cast<int>(x));
      return out;
    };
    if (key == "n1")
      n1s = ints();
    else if (key == "n2")
      n2s = ints();
    else if (key == "nu")
      nus = ints();
    else if (key == "lambda")
      lambdas = vals;
    else
      throw ValidationError("grid spec: unknown key '" + key + "'");
  }
  std::vector<GpcTuning> grid;
  for (int n1 : n1s)
    for (int n2 : n2s)
      for (int nu : nus)
        for (double l : lambdas) grid.push_back({n1, n2, nu, l});
  return grid;
}

int run_sweep(const GlobalOpts& g, const std::string& scenario_path,
              const std::string& grid_spec, unsigned threads) {
  Scenario sc = load_scenario(g, scenario_path);
  const auto grid = parse_grid(grid_spec);
  const SweepResult sweep = tuning_sweep(sc, grid, threads);
  const fs::path dir = ensure_dir(fs::path(g.out_dir) / sc.name);
  write_text(dir / "sweep.csv", io::format_sweep(sweep));
  say(g, "wrote " + (dir / "sweep.csv").string());
  if (!sweep.cells.empty() && sweep.cells.front().ok) {
    const auto& best = sweep.cells.front();
    say(g, "  best: n1=" + std::to_string(best.tuning.n1) +
               " n2=" + std::to_string(best.tuning.n2) +
               " nu=" + std::to_string(best.tuning.nu) +
               " lambda=" + io::format_number(best.tuning.lambda) +
               " max_err=" + io::format_number(best.max_err));
  }
  return 0;
}

int run_identify(const GlobalOpts& g, const std::vector<std::string>& trace_files,
                 const std::string& profile_path, const std::string& axis,
                 const std::string& stage) {
  const MachineProfile profile = io::read_profile(
      io::resolve_profile(profile_path, ".", g.data_dir));
  AxisParameters p = profile.at(axis);
  const double dt = g.plant_step > 0 ? g.plant_step : kDefaultPlantStep;

  std::vector<Trace> traces;
  for (const auto& f : trace_files) traces.push_back(io::read_trace(f));
  if (traces.empty()) throw IdentError("identify needs at least one trace");

  std::ostringstream report;
  report << "# feedsim identification report\n";
  report << "format_version = " << io::kFormatVersion << "\n";
  report << "axis = " << axis << "\n\n";

  const bool all = stage == "all";
  if (stage == "friction" || all) {
    std::vector<std::pair<double, double>> points;
    std::vector<std::string> notes;
    for (const auto& t : traces) {
      auto pts = extract_constant_velocity_points(t, &notes);
      points.insert(points.end(), pts.begin(), pts.end());
    }
    auto fit = fit_friction(points);
    fit.report.notes.insert(fit.report.notes.end(), notes.begin(), notes.end());
    p.friction = fit.params;
    report << io::format_ident_report("friction", fit.report);
    report << "a = " << io::format_number(fit.params.a) << "\n";
    report << "b = " << io::format_number(fit.params.b) << "\n";
    report << "c = " << io::format_number(fit.params.c) << "\n";
    report << "d = " << io::format_number(fit.params.d) << "\n";
    report << "i0 = " << io::format_number(fit.params.i0) << "\n\n";
  }
  if (stage == "inertia" || all) {
    double j_sum = 0;
    std::size_t n_est = 0;
    IdentReport last;
    for (const auto& t : traces) {
      try {
        auto est = estimate_inertia(t, p);
        j_sum += est.j_eq;
        ++n_est;
        last = est.report;
      } catch (const IdentError&) {
        if (!all) throw;
      }
    }
    if (n_est == 0) throw IdentError("no accelerating interval found in the trace");
    p.j_eq = j_sum / static_cast<double>(n_est);
    report << io::format_ident_report("inertia", last);
    report << "j_eq = " << io::format_number(p.j_eq) << "\n\n";
  }
  if (stage == "static") {
    auto est = estimate_static_load(traces.front(), p);
    if (est.table.empty()) {
      p.static_load = est.constant;
      p.static_load_law.clear();
    } else {
      p.static_load_law = est.table;
    }
    report << io::format_ident_report("static", est.report);
    report << "static_load = " << io::format_number(est.constant) << "\n\n";
  }
  if (stage == "ffw" || all) {
    const Trace& t = traces.back();
    auto fit = fit_feedforward(t, p);
    p.vffw = fit.vffw;
    p.tffw = fit.tffw;
    report << io::format_ident_report("vffw", fit.vffw_report);
    report << "vffw = " << io::format_number(fit.vffw) << "\n\n";
    report << io::format_ident_report("tffw", fit.tffw_report);
    report << "tffw = " << io::format_number(fit.tffw) << "\n\n";
  }
  if (stage == "delays" || all) {
    if (traces.size() < 3)
      throw IdentError(
          "delay calibration needs three runs: no-ffw, vffw-only, both");
    const auto cal = calibrate_delays(traces[traces.size() - 3],
                                      traces[traces.size() - 2],
                                      traces[traces.size() - 1], p, dt);
    p.alpha = cal.alpha;
    p.beta = cal.beta;
    p.gamma = cal.gamma;
    report << io::format_ident_report("delays", cal.report);
    report << "alpha = " << io::format_number(cal.alpha) << "\n";
    report << "beta = " << io::format_number(cal.beta) << "\n";
    report << "gamma = " << io::format_number(cal.gamma) << "\n\n";
  }

  MachineProfile out_profile = profile;
  for (auto& ax : out_profile.axes)
    if (ax.name == axis) ax = p;
  const fs::path dir = ensure_dir(g.out_dir);
  io::write_profile(out_profile, dir / "identified_profile");
  write_text(dir / "ident_report.txt", report.str());
  say(g, "wrote " + (dir / "identified_profile").string());
  say(g, "wrote " + (dir / "ident_report.txt").string());
  return 0;
}

int run_profiles(const GlobalOpts& g, const std::string& action,
                 const std::string& name) {
  if (action == "list") {
    const fs::path dir = fs::path(g.data_dir) / "profiles";
    if (!fs::is_directory(dir)) throw IoError("no profiles directory at " + dir.string());
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_regular_file()) names.push_back(e.path().filename().string());
    std::sort(names.begin(), names.end());
    for (const auto& n : names) std::cout << n << "\n";
    return 0;
  }
  if (action == "show") {
    const MachineProfile p =
        io::read_profile(io::resolve_profile(name, ".", g.data_dir));
    std::cout << io::format_profile(p);
    return 0;
  }
  throw ValidationError("profiles: unknown action '" + action + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"feed-drive servo simulator"};
  app.require_subcommand(1);
  GlobalOpts g;
  app.add_option("--out-dir", g.out_dir, "output directory");
  app.add_option("--data-dir", g.data_dir, "directory holding profiles/ and scenarios/");
  app.add_option("--plant-step", g.plant_step, "plant integration step override, s");
  app.add_option("--seed", g.seed, "seed for noise-injection test utilities");
  app.add_flag("--quiet", g.quiet, "suppress progress output");

  std::string scenario_path, profile_path, axis = "X", stage = "all";
  std::string grid_spec = "n1=1;n2=10,15,20;nu=2,5,10,15;lambda=0.01,0.05,0.1,0.5";
  std::string rst_out, profiles_action, profiles_name;
  std::vector<std::string> trace_files;
  GpcTuning tuning;
  double noise_pos = 0;
  unsigned threads = 0;

  auto* sim = app.add_subcommand("simulate", "run a scenario and write traces");
  sim->add_option("scenario", scenario_path)->required();
  sim->add_option("--noise-pos", noise_pos,
                  "test utility: gaussian noise added to recorded sp/sv/smc");

  auto* cmp = app.add_subcommand(
      "compare", "run cascade and RST on identical setpoints");
  cmp->add_option("scenario", scenario_path)->required();

  auto* ident = app.add_subcommand("identify", "recover parameters from traces");
  ident->add_option("traces", trace_files)->required();
  ident->add_option("--profile", profile_path)->required();
  ident->add_option("--axis", axis);
  ident->add_option("--stage", stage)
      ->check(CLI::IsMember({"friction", "inertia", "static", "ffw", "delays", "all"}));

  auto* syn = app.add_subcommand("synthesize-rst", "offline GPC/RST synthesis");
  syn->add_option("profile", profile_path)->required();
  syn->add_option("--axis", axis);
  syn->add_option("--n1", tuning.n1);
  syn->add_option("--n2", tuning.n2);
  syn->add_option("--nu", tuning.nu);
  syn->add_option("--lambda", tuning.lambda);
  syn->add_option("--out", rst_out);

  auto* swp = app.add_subcommand("sweep", "grid search over the GPC tuning");
  swp->add_option("scenario", scenario_path)->required();
  swp->add_option("--grid", grid_spec);
  swp->add_option("--threads", threads);

  auto* prof = app.add_subcommand("profiles", "list or show machine profiles");
  prof->add_option("action", profiles_action)
      ->required()
      ->check(CLI::IsMember({"list", "show"}));
  prof->add_option("name", profiles_name);

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) return run_simulate(g, scenario_path, noise_pos);
    if (cmp->parsed()) return run_compare(g, scenario_path);
    if (ident->parsed())
      return run_identify(g, trace_files, profile_path, axis, stage);
    if (syn->parsed())
      return run_synthesize(g, profile_path, axis, tuning, rst_out);
    if (swp->parsed()) return run_sweep(g, scenario_path, grid_spec, threads);
    if (prof->parsed()) return run_profiles(g, profiles_action, profiles_name);
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 3;
  } catch (const SimulationFault& e) {
    std::cerr << "simulation fault: " << e.what() << "\n";
    return 4;
  } catch (const IdentError& e) {
    std::cerr << "identification error: " << e.what() << "\n";
    return 5;
  } catch (const SynthesisError& e) {
    std::cerr << "synthesis error: " << e.what() << "\n";
    return 6;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 10;
  }
  return 0;
}
