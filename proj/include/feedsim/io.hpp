#pragma once

// File formats and persistence: machine profiles and scenarios (structured
// key/value text), run traces (CSV, 12 significant digits), RST controller
// exports, and the formatted reports the CLI emits. All formats carry a
// format_version field.

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "feedsim/core.hpp"
#include "feedsim/engine.hpp"
#include "feedsim/gpc.hpp"
#include "feedsim/identification.hpp"
#include "feedsim/trajectory.hpp"

namespace feedsim::io {

inline constexpr int kFormatVersion = 1;

// --- number formatting --------------------------------------------------------

// 12 significant digits; round-trips through parse bit-exactly for values
// printed by this library.
inline std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

// --- key/value documents --------------------------------------------------------

struct KvSection {
  std::string name;  // "" for the preamble
  std::vector<std::pair<std::string, std::string>> entries;
  std::vector<int> lines;  // source line per entry

  const std::string* find(std::string_view key) const {
    for (const auto& [k, v] : entries)
      if (k == key) return &v;
    return nullptr;
  }
};

struct KvDoc {
  std::string origin;
  std::vector<KvSection> sections;  // sections[0] is the preamble

  const KvSection* find(std::string_view name) const {
    for (const auto& s : sections)
      if (s.name == name) return &s;
    return nullptr;
  }
  const KvSection& at(std::string_view name) const {
    if (const auto* s = find(name)) return *s;
    throw IoError(origin + ": missing section [" + std::string(name) + "]");
  }
};

namespace detail {

inline std::string strip(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const auto next = s.find(sep, pos);
    out.push_back(strip(s.substr(pos, next - pos)));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

}  // namespace detail

inline KvDoc parse_kv(std::istream& in, const std::string& origin) {
  KvDoc doc;
  doc.origin = origin;
  doc.sections.push_back({"", {}, {}});
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string s = detail::strip(line);
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']')
        throw IoError(origin + ":" + std::to_string(line_no) +
                      ": unterminated section header");
      doc.sections.push_back({detail::strip(s.substr(1, s.size() - 2)), {}, {}});
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos)
      throw IoError(origin + ":" + std::to_string(line_no) +
                    ": expected 'key = value'");
    doc.sections.back().entries.emplace_back(detail::strip(s.substr(0, eq)),
                                             detail::strip(s.substr(eq + 1)));
    doc.sections.back().lines.push_back(line_no);
  }
  return doc;
}

inline KvDoc parse_kv_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return parse_kv(in, path.string());
}

// --- typed value parsing -----------------------------------------------------------

namespace detail {

inline double parse_number(const std::string& text, const std::string& where) {
  const std::string t = strip(text);
  if (t == "inf" || t == "+inf") return kInf;
  try {
    std::size_t used = 0;
    const double v = std::stod(t, &used);
    if (used != t.size()) throw std::invalid_argument(t);
    return v;
  } catch (const std::exception&) {
    throw IoError(where + ": cannot parse number '" + text + "'");
  }
}

// "<number> [s|ms|us]" -> seconds
inline double parse_time(const std::string& text, const std::string& where) {
  std::string t = strip(text);
  double scale = 1.0;
  for (auto [suffix, sc] : {std::pair<const char*, double>{"ms", 1e-3},
                            {"us", 1e-6},
                            {"s", 1.0}}) {
    const std::string_view sv = suffix;
    if (t.size() > sv.size() && t.ends_with(sv)) {
      const char before = t[t.size() - sv.size() - 1];
      if (before == ' ' || before == '\t') {
        scale = sc;
        t = strip(t.substr(0, t.size() - sv.size()));
        break;
      }
    }
  }
  return parse_number(t, where) * scale;
}

// "<number> [unit/rad|unit/rev]" -> axis units per motor radian
inline double parse_transmission(const std::string& text,
                                 const std::string& where) {
  std::string t = strip(text);
  double scale = 1.0;
  for (const char* suffix : {"mm/rev", "deg/rev", "mm/rad", "deg/rad"}) {
    const std::string_view sv = suffix;
    if (t.size() > sv.size() && t.ends_with(sv)) {
      if (sv.ends_with("rev")) scale = 1.0 / (2.0 * std::numbers::pi);
      t = strip(t.substr(0, t.size() - sv.size()));
      break;
    }
  }
  return parse_number(t, where) * scale;
}

inline bool parse_flag(const std::string& text, const std::string& where) {
  const std::string t = strip(text);
  if (t == "on" || t == "true" || t == "1") return true;
  if (t == "off" || t == "false" || t == "0") return false;
  throw IoError(where + ": expected on/off, got '" + text + "'");
}

struct SectionReader {
  const KvDoc& doc;
  const KvSection& sec;
  std::string where(const std::string& key) const {
    return doc.origin + ": [" + sec.name + "] " + key;
  }
  const std::string& require(const std::string& key) const {
    if (const auto* v = sec.find(key)) return *v;
    throw IoError(doc.origin + ": [" + sec.name + "] missing key '" + key + "'");
  }
  double number(const std::string& key) const {
    return parse_number(require(key), where(key));
  }
  double number_or(const std::string& key, double fallback) const {
    const auto* v = sec.find(key);
    return v ? parse_number(*v, where(key)) : fallback;
  }
  double time(const std::string& key) const {
    return parse_time(require(key), where(key));
  }
  double time_or(const std::string& key, double fallback) const {
    const auto* v = sec.find(key);
    return v ? parse_time(*v, where(key)) : fallback;
  }
  bool flag_or(const std::string& key, bool fallback) const {
    const auto* v = sec.find(key);
    return v ? parse_flag(*v, where(key)) : fallback;
  }
  std::string text_or(const std::string& key, const std::string& fallback) const {
    const auto* v = sec.find(key);
    return v ? *v : fallback;
  }
  std::vector<double> numbers(const std::string& key) const {
    std::vector<double> out;
    for (const auto& part : split(require(key), ','))
      out.push_back(parse_number(part, where(key)));
    return out;
  }
};

inline void check_format_version(const KvDoc& doc) {
  if (doc.sections.empty()) throw IoError(doc.origin + ": empty document");
  const auto* v = doc.sections.front().find("format_version");
  if (!v) throw IoError(doc.origin + ": missing format_version");
  if (parse_number(*v, doc.origin + ": format_version") != kFormatVersion)
    throw IoError(doc.origin + ": unsupported format_version " + *v);
}

}  // namespace detail

// --- machine profiles ------------------------------------------------------------

inline MachineProfile read_profile(const std::filesystem::path& path) {
  const KvDoc doc = parse_kv_file(path);
  detail::check_format_version(doc);
  MachineProfile profile;
  if (const auto* m = doc.find("machine"))
    if (const auto* n = m->find("name")) profile.name = *n;

  for (const auto& sec : doc.sections) {
    if (!sec.name.starts_with("axis")) continue;
    const std::string axis_name = detail::strip(sec.name.substr(4));
    if (axis_name.empty())
      throw IoError(doc.origin + ": axis section without a name");
    detail::SectionReader r{doc, sec};
    AxisParameters p;
    p.name = axis_name;
    const std::string kind = r.text_or("kind", "linear");
    if (kind == "linear")
      p.kind = AxisKind::linear;
    else if (kind == "rotary")
      p.kind = AxisKind::rotary;
    else
      throw IoError(r.where("kind") + ": unknown axis kind '" + kind + "'");
    p.j_eq = r.number("j_eq");
    p.k_p = r.number("k_p");
    p.k_v = r.number("k_v");
    p.t_v = r.time("t_v");
    p.k_i = r.number("k_i");
    p.t_i = r.time("t_i");
    p.t_sp = r.time("t_sp");
    p.t_sv = r.time("t_sv");
    p.t_si = r.time("t_si");
    p.friction.a = r.number("friction.a");
    p.friction.b = r.number("friction.b");
    p.friction.c = r.number("friction.c");
    p.friction.d = r.number("friction.d");
    p.friction.i0 = r.number("friction.i0");
    p.friction.v_fit_max = r.number("friction.v_fit_max");
    p.alpha = r.time("alpha");
    p.beta = r.time("beta");
    p.gamma = r.time("gamma");
    p.vffw = r.number("vffw");
    p.tffw = r.number("tffw");
    p.k_t = r.number("k_t");
    p.k_e = r.number("k_e");
    p.r_arm = r.number("r_arm");
    p.l_arm = r.number("l_arm");
    p.transmission =
        detail::parse_transmission(r.require("transmission"), r.where("transmission"));
    p.static_load = r.number_or("static_load", 0.0);
    if (const auto* law = sec.find("static_load_law")) {
      for (const auto& part : detail::split(*law, ',')) {
        const auto colon = part.find(':');
        if (colon == std::string::npos)
          throw IoError(r.where("static_load_law") + ": expected pos:torque");
        p.static_load_law.emplace_back(
            detail::parse_number(part.substr(0, colon), r.where("static_load_law")),
            detail::parse_number(part.substr(colon + 1), r.where("static_load_law")));
      }
    }
    profile.axes.push_back(std::move(p));
  }
  if (profile.axes.empty())
    throw IoError(doc.origin + ": profile defines no axes");
  return profile;
}

inline void write_profile(const MachineProfile& profile,
                          const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "# feedsim machine profile\n";
  out << "format_version = " << kFormatVersion << "\n\n";
  out << "[machine]\nname = " << profile.name << "\n";
  for (const auto& p : profile.axes) {
    out << "\n[axis " << p.name << "]\n";
    out << "kind = " << to_string(p.kind) << "\n";
    out << "j_eq = " << format_number(p.j_eq) << "\n";
    out << "k_p = " << format_number(p.k_p) << "\n";
    out << "k_v = " << format_number(p.k_v) << "\n";
    out << "t_v = " << format_number(p.t_v) << "\n";
    out << "k_i = " << format_number(p.k_i) << "\n";
    out << "t_i = " << format_number(p.t_i) << "\n";
    out << "t_sp = " << format_number(p.t_sp) << "\n";
    out << "t_sv = " << format_number(p.t_sv) << "\n";
    out << "t_si = " << format_number(p.t_si) << "\n";
    out << "friction.a = " << format_number(p.friction.a) << "\n";
    out << "friction.b = " << format_number(p.friction.b) << "\n";
    out << "friction.c = " << format_number(p.friction.c) << "\n";
    out << "friction.d = " << format_number(p.friction.d) << "\n";
    out << "friction.i0 = " << format_number(p.friction.i0) << "\n";
    out << "friction.v_fit_max = " << format_number(p.friction.v_fit_max) << "\n";
    out << "alpha = " << format_number(p.alpha) << "\n";
    out << "beta = " << format_number(p.beta) << "\n";
    out << "gamma = " << format_number(p.gamma) << "\n";
    out << "vffw = " << format_number(p.vffw) << "\n";
    out << "tffw = " << format_number(p.tffw) << "\n";
    out << "k_t = " << format_number(p.k_t) << "\n";
    out << "k_e = " << format_number(p.k_e) << "\n";
    out << "r_arm = " << format_number(p.r_arm) << "\n";
    out << "l_arm = " << format_number(p.l_arm) << "\n";
    out << "transmission = " << format_number(p.transmission) << "\n";
    out << "static_load = " << format_number(p.static_load) << "\n";
    if (!p.static_load_law.empty()) {
      out << "static_load_law = ";
      for (std::size_t i = 0; i < p.static_load_law.size(); ++i) {
        if (i) out << ", ";
        out << format_number(p.static_load_law[i].first) << ":"
            << format_number(p.static_load_law[i].second);
      }
      out << "\n";
    }
  }
}

// Fixed human-readable rendering, used by `profiles show`. Times print in the
// data sheet's natural unit so the bundled profile echoes its table verbatim.
inline std::string format_profile(const MachineProfile& profile) {
  auto time_str = [](double t) {
    if (t >= 1e-3 - 1e-12) return format_number(t * 1e3) + " ms";
    return format_number(t * 1e6) + " us";
  };
  std::ostringstream out;
  out << "machine: " << profile.name << "\n";
  for (const auto& p : profile.axes) {
    const bool lin = p.kind == AxisKind::linear;
    out << "axis " << p.name << " (" << to_string(p.kind) << ")\n";
    out << "  j_eq            " << format_number(p.j_eq) << " kg.m^2\n";
    out << "  k_p             " << format_number(p.k_p)
        << (lin ? " (m/min)/mm\n" : " (deg/min)/deg\n");
    out << "  k_v             " << format_number(p.k_v) << " N.m/(rad/s)\n";
    out << "  t_v             " << time_str(p.t_v) << "\n";
    out << "  k_i             " << format_number(p.k_i) << " V/A\n";
    out << "  t_i             " << time_str(p.t_i) << "\n";
    out << "  t_sp            " << time_str(p.t_sp) << "\n";
    out << "  t_sv            " << time_str(p.t_sv) << "\n";
    out << "  t_si            " << time_str(p.t_si) << "\n";
    out << "  friction.a      " << format_number(p.friction.a) << " A\n";
    out << "  friction.b      " << format_number(p.friction.b) << "\n";
    out << "  friction.c      " << format_number(p.friction.c) << " A\n";
    out << "  friction.d      " << format_number(p.friction.d) << "\n";
    out << "  friction.i0     " << format_number(p.friction.i0) << " A\n";
    out << "  friction.v_max  " << format_number(p.friction.v_fit_max)
        << (lin ? " m/min\n" : " rpm\n");
    out << "  alpha           " << time_str(p.alpha) << "\n";
    out << "  beta            " << time_str(p.beta) << "\n";
    out << "  gamma           " << time_str(p.gamma) << "\n";
    out << "  vffw            " << format_number(p.vffw) << "\n";
    out << "  tffw            " << format_number(p.tffw) << " kg.m^2\n";
    out << "  k_t             " << format_number(p.k_t) << " N.m/A\n";
    out << "  k_e             " << format_number(p.k_e) << " V.s/rad\n";
    out << "  r_arm           " << format_number(p.r_arm) << " ohm\n";
    out << "  l_arm           " << format_number(p.l_arm) << " H\n";
    out << "  transmission    " << format_number(p.transmission)
        << (lin ? " mm/rad\n" : " deg/rad\n");
    out << "  static_load     " << format_number(p.static_load) << " N.m\n";
  }
  return out.str();
}

// --- trace CSV --------------------------------------------------------------------

inline void write_trace(const Trace& trace, const std::filesystem::path& path) {
  trace.check_consistent();
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "# feedsim trace, format_version " << kFormatVersion << "\n";
  out << "t(s)";
  for (const auto& ch : trace.channels) out << "," << ch.name << "(" << ch.unit << ")";
  out << "\n";
  for (std::size_t k = 0; k < trace.length(); ++k) {
    out << format_number(trace.time_at(k));
    for (const auto& ch : trace.channels)
      out << "," << format_number(ch.samples[k]);
    out << "\n";
  }
}

inline Trace read_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  int line_no = 0;
  // optional comment lines, then the header
  while (std::getline(in, line)) {
    ++line_no;
    if (!detail::strip(line).empty() && detail::strip(line)[0] != '#') break;
  }
  Trace trace;
  {
    const auto cols = detail::split(line, ',');
    if (cols.empty() || !cols.front().starts_with("t("))
      throw IoError(path.string() + ":" + std::to_string(line_no) +
                    ": first column must be t(s)");
    for (std::size_t c = 1; c < cols.size(); ++c) {
      const auto open = cols[c].find('(');
      std::string name = cols[c], unit;
      if (open != std::string::npos && cols[c].back() == ')') {
        name = cols[c].substr(0, open);
        unit = cols[c].substr(open + 1, cols[c].size() - open - 2);
      }
      trace.add(name, unit);
    }
  }
  std::vector<double> times;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string s = detail::strip(line);
    if (s.empty()) continue;
    const auto cells = detail::split(s, ',');
    if (cells.size() != trace.channels.size() + 1)
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                    std::to_string(trace.channels.size() + 1) + " columns, got " +
                    std::to_string(cells.size()));
    const std::string where = path.string() + ":" + std::to_string(line_no);
    times.push_back(detail::parse_number(cells[0], where));
    for (std::size_t c = 0; c < trace.channels.size(); ++c)
      trace.channels[c].samples.push_back(
          detail::parse_number(cells[c + 1], where));
  }
  if (times.size() < 2)
    throw IoError(path.string() + ": trace needs at least two samples");
  trace.t0 = times.front();
  trace.dt = (times.back() - times.front()) / static_cast<double>(times.size() - 1);
  if (!(trace.dt > 0))
    throw IoError(path.string() + ": time column must be strictly increasing");
  for (std::size_t k = 1; k < times.size(); ++k) {
    if (times[k] <= times[k - 1])
      throw IoError(path.string() + ": non-monotone time at row " +
                    std::to_string(k + 1));
    if (std::abs(times[k] - trace.time_at(k)) > 1e-9)
      throw IoError(path.string() + ": non-uniform sampling at row " +
                    std::to_string(k + 1));
  }
  return trace;
}

// --- RST export --------------------------------------------------------------------

inline void write_rst(const RstPolynomials& rst,
                      const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  auto seq = [&](const poly::Poly& p) {
    std::string s;
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (i) s += ", ";
      s += format_number(p[i]);
    }
    return s;
  };
  out << "# feedsim rst controller (T coefficients are forward-shift weights)\n";
  out << "format_version = " << kFormatVersion << "\n";
  out << "t_sp = " << format_number(rst.period) << "\n";
  out << "n1 = " << rst.tuning.n1 << "\n";
  out << "n2 = " << rst.tuning.n2 << "\n";
  out << "nu = " << rst.tuning.nu << "\n";
  out << "lambda = " << format_number(rst.tuning.lambda) << "\n";
  out << "condition = " << format_number(rst.condition) << "\n";
  out << "model_a = " << seq(rst.model.a) << "\n";
  out << "model_b = " << seq(rst.model.b) << "\n";
  out << "r = " << seq(rst.r) << "\n";
  out << "s = " << seq(rst.s) << "\n";
  out << "t = " << seq(rst.t) << "\n";
}

inline RstPolynomials read_rst(const std::filesystem::path& path) {
  const KvDoc doc = parse_kv_file(path);
  detail::check_format_version(doc);
  detail::SectionReader r{doc, doc.sections.front()};
  RstPolynomials rst;
  rst.period = r.number("t_sp");
  rst.tuning.n1 = static_cast<int>(r.number("n1"));
  rst.tuning.n2 = static_cast<int>(r.number("n2"));
  rst.tuning.nu = static_cast<int>(r.number("nu"));
  rst.tuning.lambda = r.number("lambda");
  rst.condition = r.number_or("condition", 0.0);
  rst.model.a = r.numbers("model_a");
  rst.model.b = r.numbers("model_b");
  rst.model.period = rst.period;
  rst.r = r.numbers("r");
  rst.s = r.numbers("s");
  rst.t = r.numbers("t");
  if (rst.s.empty() || rst.s.front() == 0.0)
    throw IoError(path.string() + ": S polynomial must have a non-zero s0");
  return rst;
}

// --- scenarios ---------------------------------------------------------------------

// Resolves `profile = name` against the scenario directory, then
// <data_dir>/profiles/<name>.
inline std::filesystem::path resolve_profile(const std::string& ref,
                                             const std::filesystem::path& scenario_dir,
                                             const std::filesystem::path& data_dir) {
  namespace fs = std::filesystem;
  for (const auto& cand :
       {fs::path(ref), scenario_dir / ref, data_dir / "profiles" / ref}) {
    if (fs::exists(cand) && fs::is_regular_file(cand)) return cand;
  }
  throw IoError("cannot resolve profile '" + ref + "'");
}

inline ControllerChoice read_controller(const KvDoc& doc, const KvSection& sec,
                                        const std::filesystem::path& scenario_dir) {
  detail::SectionReader r{doc, sec};
  ControllerChoice c;
  const std::string type = r.text_or("type", "cascade");
  if (type == "cascade") {
    c.type = ControllerChoice::Type::cascade;
    c.cascade.vffw_on = r.flag_or("vffw", true);
    c.cascade.tffw_on = r.flag_or("tffw", true);
    c.cascade.delays_on = r.flag_or("delays", true);
    c.cascade.voltage_limit = r.number_or("voltage_limit", 400.0);
    c.cascade.current_limit = r.number_or("current_limit", 30.0);
  } else if (type == "rst") {
    c.type = ControllerChoice::Type::rst;
    if (const auto* file = sec.find("rst_file")) {
      c.polys = std::make_shared<RstPolynomials>(read_rst(scenario_dir / *file));
      c.tuning = c.polys->tuning;
    } else {
      const GpcTuning defaults{};
      c.tuning.n1 = static_cast<int>(r.number_or("n1", defaults.n1));
      c.tuning.n2 = static_cast<int>(r.number_or("n2", defaults.n2));
      c.tuning.nu = static_cast<int>(r.number_or("nu", defaults.nu));
      c.tuning.lambda = r.number_or("lambda", defaults.lambda);
    }
  } else {
    throw IoError(r.where("type") + ": unknown controller type '" + type + "'");
  }
  return c;
}

inline Scenario read_scenario(const std::filesystem::path& path,
                              const std::filesystem::path& data_dir) {
  namespace fs = std::filesystem;
  const KvDoc doc = parse_kv_file(path);
  detail::check_format_version(doc);
  const fs::path dir = path.has_parent_path() ? path.parent_path() : ".";

  Scenario sc;
  detail::SectionReader pre{doc, doc.sections.front()};
  sc.name = pre.text_or("name", path.stem().string());
  sc.profile = read_profile(
      resolve_profile(pre.require("profile"), dir, data_dir));

  const auto& psec = doc.at("path");
  detail::SectionReader pr{doc, psec};
  const std::string type = pr.require("type");
  sc.path.axes = detail::split(pr.require("axes"), ',');
  if (type == "segment" || type == "back_and_forth" ||
      type == "two_speed_segment") {
    sc.path.type = type == "segment" ? PathSpec::Type::segment
                   : type == "back_and_forth"
                       ? PathSpec::Type::back_and_forth
                       : PathSpec::Type::two_speed_segment;
    sc.path.start = pr.numbers("start");
    sc.path.end = pr.numbers("end");
    if (sc.path.type == PathSpec::Type::two_speed_segment) {
      sc.path.mid = pr.numbers("mid");
      sc.path.v1 = pr.number("v1");
      sc.path.v2 = pr.number("v2");
    }
  } else if (type == "circle") {
    sc.path.type = PathSpec::Type::circle;
    const auto center = pr.numbers("center");
    if (center.size() != 2)
      throw IoError(pr.where("center") + ": expected two coordinates");
    sc.path.center_x = center[0];
    sc.path.center_y = center[1];
    sc.path.radius = pr.number("radius");
    sc.path.start_angle_deg = pr.number_or("start_angle", 0.0);
    sc.path.turns = pr.number_or("turns", 1.0);
  } else if (type == "corner") {
    sc.path.type = PathSpec::Type::corner;
    sc.path.corner_angle_deg = pr.number("angle");
    sc.path.leg = pr.number("leg");
  } else if (type == "sampled") {
    sc.path.type = PathSpec::Type::sampled;
    sc.path.sampled_file = pr.require("file");
    sc.path.sampled =
        std::make_shared<Trace>(read_trace(dir / sc.path.sampled_file));
  } else {
    throw IoError(pr.where("type") + ": unknown path type '" + type + "'");
  }

  const auto& fsec = doc.at("feed");
  detail::SectionReader fr{doc, fsec};
  sc.feed.feed = fr.number_or("feed", std::max(sc.path.v1, 1.0));
  sc.feed.accel = fr.number_or("accel", kInf);
  sc.feed.jerk = fr.number_or("jerk", kInf);

  if (const auto* csec = doc.find("controller"))
    sc.controller = read_controller(doc, *csec, dir);
  for (const auto& sec : doc.sections) {
    if (!sec.name.starts_with("controller ")) continue;
    const std::string axis = detail::strip(sec.name.substr(10));
    sc.per_axis[axis] = read_controller(doc, sec, dir);
  }

  if (const auto* ssec = doc.find("simulation")) {
    detail::SectionReader sr{doc, *ssec};
    sc.plant_step = sr.time_or("plant_step", kDefaultPlantStep);
    sc.settle = sr.time_or("settle", 0.5);
    if (const auto* rec = ssec->find("record"))
      sc.record = detail::split(*rec, ',');
    sc.record_full_rate = sr.flag_or("full_rate", false);
  }
  return sc;
}

// --- reports -----------------------------------------------------------------------

inline std::string format_metrics(const RunResult& result,
                                  const std::string& scenario_name) {
  std::ostringstream out;
  out << "# feedsim run metrics\n";
  out << "format_version = " << kFormatVersion << "\n";
  out << "scenario = " << scenario_name << "\n";
  out << "duration = " << format_number(result.duration) << "\n";
  for (const auto& a : result.axes) {
    out << "\n[axis " << a.axis << "]\n";
    out << "max_abs = " << format_number(a.tracking.max_abs) << "\n";
    out << "mean_abs = " << format_number(a.tracking.mean_abs) << "\n";
    out << "rms = " << format_number(a.tracking.rms) << "\n";
    out << "peak_time = " << format_number(a.tracking.peak_time) << "\n";
    if (a.tracking.has_phase_split) {
      out << "steady_max_abs = " << format_number(a.tracking.steady_max_abs) << "\n";
      out << "steady_mean_abs = " << format_number(a.tracking.steady_mean_abs)
          << "\n";
      out << "transient_max_abs = "
          << format_number(a.tracking.transient_max_abs) << "\n";
    }
  }
  if (!result.warnings.empty()) {
    out << "\n[warnings]\n";
    for (std::size_t i = 0; i < result.warnings.size(); ++i)
      out << "warning." << i << " = " << result.warnings[i] << "\n";
  }
  return out.str();
}

inline std::string format_ident_report(const std::string& stage,
                                       const IdentReport& report) {
  std::ostringstream out;
  out << "[" << stage << "]\n";
  out << "rms = " << format_number(report.rms) << "\n";
  out << "r_squared = " << format_number(report.r_squared) << "\n";
  out << "samples = " << report.samples << "\n";
  for (std::size_t i = 0; i < report.notes.size(); ++i)
    out << "note." << i << " = " << report.notes[i] << "\n";
  return out.str();
}

inline std::string format_sweep(const SweepResult& sweep) {
  std::ostringstream out;
  out << "# feedsim tuning sweep, ranked by max tracking error\n";
  out << "format_version = " << kFormatVersion << "\n";
  out << "rank,n1,n2,nu,lambda,max_err,rms,condition,status\n";
  int rank = 1;
  for (const auto& c : sweep.cells) {
    out << rank++ << "," << c.tuning.n1 << "," << c.tuning.n2 << ","
        << c.tuning.nu << "," << format_number(c.tuning.lambda) << ",";
    if (c.ok)
      out << format_number(c.max_err) << "," << format_number(c.rms) << ","
          << format_number(c.condition) << ",ok\n";
    else
      out << ",,," << "failed: " << c.error << "\n";
  }
  return out.str();
}

}  // namespace feedsim::io
