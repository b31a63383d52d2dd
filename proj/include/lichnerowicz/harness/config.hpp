#pragma once

// RunConfig: the YAML experiment description, parsed strictly.

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "lichnerowicz/errors.hpp"
#include "lichnerowicz/torus_grid.hpp"

namespace lich::harness {

class ConfigError : public Error {
 public:
  ConfigError(const std::string& path, const std::string& what, int line = -1)
      : Error(format(path, what, line)), key_path(path), line(line) {}
  std::string key_path;
  int line;

 private:
  static std::string format(const std::string& path, const std::string& what, int line) {
    std::string s = path.empty() ? what : path + ": " + what;
    if (line >= 0) s += " (line " + std::to_string(line) + ")";
    return s;
  }
};

enum class Mode { solve, branch, fold, mountain_pass, certificate, stability_test, bubble_check };

inline const std::vector<std::pair<Mode, std::string>>& mode_names() {
  static const std::vector<std::pair<Mode, std::string>> names = {
      {Mode::solve, "solve"},
      {Mode::branch, "branch"},
      {Mode::fold, "fold"},
      {Mode::mountain_pass, "mountain-pass"},
      {Mode::certificate, "certificate"},
      {Mode::stability_test, "stability-test"},
      {Mode::bubble_check, "bubble-check"},
  };
  return names;
}

inline std::string to_string(Mode m) {
  for (const auto& [mode, name] : mode_names())
    if (mode == m) return name;
  return "?";
}

inline std::optional<Mode> parse_mode(const std::string& s) {
  for (const auto& [mode, name] : mode_names())
    if (name == s) return mode;
  return std::nullopt;
}

struct SeriesConfig {
  double constant = 0.0;
  std::vector<CosineTerm> terms;
};

struct GridConfig {
  int dim = 3;
  std::vector<int> resolutions;
  std::vector<double> periods;
};

struct ParameterConfig {
  std::optional<double> theta;
  std::vector<double> theta_schedule;
  double theta_hint = 0.1;
  std::optional<double> q;  // unset: critical exponent
  std::vector<double> q_schedule;
  std::vector<double> epsilon_schedule;
  double perturbation = 0.0;  // stability-test: a_k = a (1 + perturbation / k)
};

struct SolverConfig {
  double monotone_tolerance = 1e-12;
  int monotone_max_iterations = 200000;
  double newton_tolerance = 1e-10;
  int newton_max_steps = 50;
  double fold_tolerance = 1e-5;
  double fold_lambda_target = 1e-4;
  double descent_tolerance = 1e-8;
  int path_size = 33;
  int pass_max_iterations = 3000;
  int sphere_samples = 64;
  int sobolev_iterations = 200;
};

struct BubbleConfig {
  double f0 = 1.0;
  double window = 0.5;    // half width in units of R0
  int cells_per_R0 = 64;  // spacing R0 / cells_per_R0; the check also runs at half spacing
};

struct OutputConfig {
  std::string directory = "out";
  std::vector<std::string> formats = {"json", "csv", "field"};
  bool has(const std::string& f) const {
    for (const auto& x : formats)
      if (x == f) return true;
    return false;
  }
};

struct RunConfig {
  std::optional<Mode> mode;
  std::uint64_t seed = 0;
  GridConfig grid;
  SeriesConfig h{1.0, {}}, f{1.0, {}}, a{1.0, {}};
  ParameterConfig parameters;
  SolverConfig solver;
  BubbleConfig bubble;
  OutputConfig output;
};

namespace detail {

inline int line_of(const YAML::Node& n) { return n.Mark().line >= 0 ? n.Mark().line + 1 : -1; }

inline bool present(const YAML::Node& n) { return n && !n.IsNull(); }

inline std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

inline void require_map(const YAML::Node& n, const std::string& path) {
  if (!n.IsMap()) throw ConfigError(path, "expected a mapping", line_of(n));
}

inline void check_keys(const YAML::Node& n, const std::string& path, const std::set<std::string>& allowed) {
  require_map(n, path);
  for (const auto& kv : n) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.count(key)) throw ConfigError(join(path, key), "unknown key '" + key + "'", line_of(kv.first));
  }
}

inline double as_real(const YAML::Node& n, const std::string& path) {
  if (!n.IsScalar()) throw ConfigError(path, "expected a number", line_of(n));
  double v;
  if (!YAML::convert<double>::decode(n, v) || !std::isfinite(v))
    throw ConfigError(path, "expected a finite number, got '" + n.Scalar() + "'", line_of(n));
  return v;
}

inline long long as_integer(const YAML::Node& n, const std::string& path) {
  if (!n.IsScalar()) throw ConfigError(path, "expected an integer", line_of(n));
  long long v;
  if (!YAML::convert<long long>::decode(n, v))
    throw ConfigError(path, "expected an integer, got '" + n.Scalar() + "'", line_of(n));
  return v;
}

inline std::string as_string(const YAML::Node& n, const std::string& path) {
  if (!n.IsScalar()) throw ConfigError(path, "expected a string", line_of(n));
  return n.Scalar();
}

inline std::vector<double> real_list(const YAML::Node& n, const std::string& path) {
  if (!n.IsSequence()) throw ConfigError(path, "expected a list", line_of(n));
  std::vector<double> out;
  for (std::size_t i = 0; i < n.size(); ++i)
    out.push_back(as_real(n[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

inline void positive(double v, const YAML::Node& n, const std::string& path) {
  if (!(v > 0.0)) throw ConfigError(path, "must be positive", line_of(n));
}

inline int positive_int(const YAML::Node& n, const std::string& path) {
  const long long v = as_integer(n, path);
  if (v <= 0 || v > 1000000000) throw ConfigError(path, "must be a positive integer", line_of(n));
  return static_cast<int>(v);
}

inline void monotone(const std::vector<double>& s, bool increasing, const YAML::Node& n,
                     const std::string& path) {
  for (std::size_t i = 1; i < s.size(); ++i) {
    if (increasing ? !(s[i] > s[i - 1]) : !(s[i] < s[i - 1]))
      throw ConfigError(path,
                        increasing ? "schedule must be strictly increasing" : "schedule must be strictly decreasing",
                        line_of(n));
  }
}

inline SeriesConfig parse_series(const YAML::Node& n, const std::string& path, int dim) {
  SeriesConfig s;
  if (n.IsScalar()) {
    s.constant = as_real(n, path);
    return s;
  }
  check_keys(n, path, {"constant", "terms"});
  if (present(n["constant"])) s.constant = as_real(n["constant"], join(path, "constant"));
  if (const auto terms = n["terms"]) {
    const std::string tp = join(path, "terms");
    if (!terms.IsSequence()) throw ConfigError(tp, "expected a list", line_of(terms));
    for (std::size_t i = 0; i < terms.size(); ++i) {
      const std::string ip = tp + "[" + std::to_string(i) + "]";
      const auto t = terms[i];
      check_keys(t, ip, {"amplitude", "wavevector", "phase"});
      CosineTerm term;
      if (!t["amplitude"]) throw ConfigError(join(ip, "amplitude"), "required", line_of(t));
      term.amplitude = as_real(t["amplitude"], join(ip, "amplitude"));
      if (present(t["phase"])) term.phase = as_real(t["phase"], join(ip, "phase"));
      const auto wv = t["wavevector"];
      const std::string wp = join(ip, "wavevector");
      if (!wv || !wv.IsSequence()) throw ConfigError(wp, "expected an integer list", line_of(wv ? wv : t));
      if (static_cast<int>(wv.size()) != dim)
        throw ConfigError(wp, "wavevector length must equal dim (" + std::to_string(dim) + ")", line_of(wv));
      for (std::size_t j = 0; j < wv.size(); ++j)
        term.wavevector.push_back(static_cast<int>(as_integer(wv[j], wp + "[" + std::to_string(j) + "]")));
      s.terms.push_back(term);
    }
  }
  return s;
}

}  // namespace detail

/// Parses and validates a YAML run description; every default is filled in.
inline RunConfig parse_config(const std::string& text) {
  using namespace detail;
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError("", "syntax error: " + e.msg, e.mark.line >= 0 ? e.mark.line + 1 : -1);
  }
  if (!root || root.IsNull()) throw ConfigError("", "empty configuration");
  check_keys(root, "", {"mode", "seed", "grid", "coefficients", "parameters", "solver", "bubble", "output"});

  RunConfig cfg;
  if (present(root["mode"])) {
    const auto name = as_string(root["mode"], "mode");
    cfg.mode = parse_mode(name);
    if (!cfg.mode) throw ConfigError("mode", "unknown mode '" + name + "'", line_of(root["mode"]));
  }
  if (present(root["seed"])) {
    const long long s = as_integer(root["seed"], "seed");
    if (s < 0) throw ConfigError("seed", "must be nonnegative", line_of(root["seed"]));
    cfg.seed = static_cast<std::uint64_t>(s);
  }

  const auto grid = root["grid"];
  if (!grid) throw ConfigError("grid", "required");
  check_keys(grid, "grid", {"dim", "resolutions", "periods"});
  if (!grid["dim"]) throw ConfigError("grid.dim", "required", line_of(grid));
  const long long dim = as_integer(grid["dim"], "grid.dim");
  if (dim < 3 || dim > 5) throw ConfigError("grid.dim", "must be 3, 4 or 5", line_of(grid["dim"]));
  cfg.grid.dim = static_cast<int>(dim);
  cfg.grid.resolutions.assign(dim, 16);
  cfg.grid.periods.assign(dim, 1.0);
  if (const auto r = grid["resolutions"]) {
    if (!r.IsSequence() || static_cast<long long>(r.size()) != dim)
      throw ConfigError("grid.resolutions", "expected " + std::to_string(dim) + " integers", line_of(r));
    for (std::size_t i = 0; i < r.size(); ++i) {
      const std::string p = "grid.resolutions[" + std::to_string(i) + "]";
      const int v = positive_int(r[i], p);
      if (v < 4 || v % 2) throw ConfigError(p, "must be even and at least 4", line_of(r[i]));
      cfg.grid.resolutions[i] = v;
    }
  }
  if (const auto p = grid["periods"]) {
    auto v = real_list(p, "grid.periods");
    if (static_cast<long long>(v.size()) != dim)
      throw ConfigError("grid.periods", "expected " + std::to_string(dim) + " numbers", line_of(p));
    for (std::size_t i = 0; i < v.size(); ++i) positive(v[i], p[i], "grid.periods[" + std::to_string(i) + "]");
    cfg.grid.periods = v;
  }

  if (const auto c = root["coefficients"]) {
    check_keys(c, "coefficients", {"h", "f", "a"});
    if (present(c["h"])) cfg.h = parse_series(c["h"], "coefficients.h", cfg.grid.dim);
    if (present(c["f"])) cfg.f = parse_series(c["f"], "coefficients.f", cfg.grid.dim);
    if (present(c["a"])) cfg.a = parse_series(c["a"], "coefficients.a", cfg.grid.dim);
  }

  const double crit = 2.0 * dim / (dim - 2.0);
  auto check_q = [&](double q, const YAML::Node& n, const std::string& path) {
    if (!(q > 2.0) || q > crit + 1e-15)
      throw ConfigError(path, "exponent must lie in (2, 2*]", line_of(n));
  };
  if (const auto p = root["parameters"]) {
    check_keys(p, "parameters",
               {"theta", "theta_schedule", "theta_hint", "q", "q_schedule", "epsilon_schedule", "perturbation"});
    auto& pc = cfg.parameters;
    if (present(p["theta"])) {
      pc.theta = as_real(p["theta"], "parameters.theta");
      if (*pc.theta < 0.0) throw ConfigError("parameters.theta", "must be nonnegative", line_of(p["theta"]));
    }
    if (present(p["theta_schedule"])) {
      pc.theta_schedule = real_list(p["theta_schedule"], "parameters.theta_schedule");
      monotone(pc.theta_schedule, true, p["theta_schedule"], "parameters.theta_schedule");
      if (!pc.theta_schedule.empty() && pc.theta_schedule.front() <= 0.0)
        throw ConfigError("parameters.theta_schedule", "values must be positive", line_of(p["theta_schedule"]));
    }
    if (present(p["theta_hint"])) {
      pc.theta_hint = as_real(p["theta_hint"], "parameters.theta_hint");
      positive(pc.theta_hint, p["theta_hint"], "parameters.theta_hint");
    }
    if (present(p["q"])) {
      pc.q = as_real(p["q"], "parameters.q");
      check_q(*pc.q, p["q"], "parameters.q");
    }
    if (present(p["q_schedule"])) {
      pc.q_schedule = real_list(p["q_schedule"], "parameters.q_schedule");
      monotone(pc.q_schedule, true, p["q_schedule"], "parameters.q_schedule");
      for (double q : pc.q_schedule) check_q(q, p["q_schedule"], "parameters.q_schedule");
    }
    if (present(p["epsilon_schedule"])) {
      pc.epsilon_schedule = real_list(p["epsilon_schedule"], "parameters.epsilon_schedule");
      monotone(pc.epsilon_schedule, false, p["epsilon_schedule"], "parameters.epsilon_schedule");
      if (!pc.epsilon_schedule.empty() && pc.epsilon_schedule.back() <= 0.0)
        throw ConfigError("parameters.epsilon_schedule", "values must be positive", line_of(p["epsilon_schedule"]));
    }
    if (present(p["perturbation"])) {
      pc.perturbation = as_real(p["perturbation"], "parameters.perturbation");
      if (!(pc.perturbation > -1.0))
        throw ConfigError("parameters.perturbation", "must exceed -1", line_of(p["perturbation"]));
    }
  }

  if (const auto s = root["solver"]) {
    check_keys(s, "solver",
               {"monotone_tolerance", "monotone_max_iterations", "newton_tolerance", "newton_max_steps",
                "fold_tolerance", "fold_lambda_target", "descent_tolerance", "path_size",
                "pass_max_iterations", "sphere_samples", "sobolev_iterations"});
    auto& sc = cfg.solver;
    auto real = [&](const char* key, double& dst) {
      if (!s[key]) return;
      const std::string path = join("solver", key);
      dst = as_real(s[key], path);
      positive(dst, s[key], path);
    };
    auto count = [&](const char* key, int& dst) {
      if (s[key]) dst = positive_int(s[key], join("solver", key));
    };
    real("monotone_tolerance", sc.monotone_tolerance);
    count("monotone_max_iterations", sc.monotone_max_iterations);
    real("newton_tolerance", sc.newton_tolerance);
    count("newton_max_steps", sc.newton_max_steps);
    real("fold_tolerance", sc.fold_tolerance);
    real("fold_lambda_target", sc.fold_lambda_target);
    real("descent_tolerance", sc.descent_tolerance);
    count("path_size", sc.path_size);
    count("pass_max_iterations", sc.pass_max_iterations);
    count("sphere_samples", sc.sphere_samples);
    count("sobolev_iterations", sc.sobolev_iterations);
    if (sc.path_size < 3) throw ConfigError("solver.path_size", "must be at least 3", line_of(s["path_size"]));
  }

  if (const auto b = root["bubble"]) {
    check_keys(b, "bubble", {"f0", "window", "cells_per_R0"});
    if (present(b["f0"])) {
      cfg.bubble.f0 = as_real(b["f0"], "bubble.f0");
      positive(cfg.bubble.f0, b["f0"], "bubble.f0");
    }
    if (present(b["window"])) {
      cfg.bubble.window = as_real(b["window"], "bubble.window");
      positive(cfg.bubble.window, b["window"], "bubble.window");
    }
    if (present(b["cells_per_R0"])) cfg.bubble.cells_per_R0 = positive_int(b["cells_per_R0"], "bubble.cells_per_R0");
  }

  if (const auto o = root["output"]) {
    check_keys(o, "output", {"directory", "formats"});
    if (present(o["directory"])) cfg.output.directory = as_string(o["directory"], "output.directory");
    if (const auto f = o["formats"]) {
      if (!f.IsSequence()) throw ConfigError("output.formats", "expected a list", line_of(f));
      cfg.output.formats.clear();
      for (std::size_t i = 0; i < f.size(); ++i) {
        const std::string p = "output.formats[" + std::to_string(i) + "]";
        const auto name = as_string(f[i], p);
        if (name != "json" && name != "csv" && name != "field" && name != "field_csv")
          throw ConfigError(p, "unknown format '" + name + "'", line_of(f[i]));
        cfg.output.formats.push_back(name);
      }
    }
  }
  return cfg;
}

/// Mode-dependent requirements and schedule defaults, applied once the
/// mode is known.
inline void finalize(RunConfig& cfg) {
  if (!cfg.mode) throw ConfigError("mode", "no mode given");
  auto& p = cfg.parameters;
  const double crit = 2.0 * cfg.grid.dim / (cfg.grid.dim - 2.0);
  if (p.epsilon_schedule.empty() && *cfg.mode == Mode::mountain_pass)
    p.epsilon_schedule = {1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6};
  if (p.q_schedule.empty() && *cfg.mode == Mode::mountain_pass)
    for (int m = 1; m <= 8; ++m) p.q_schedule.push_back(crit - std::ldexp(1.0, -m));
  if (p.q_schedule.empty() && *cfg.mode == Mode::stability_test)
    for (int k = 1; k <= 6; ++k) p.q_schedule.push_back(crit - 1.0 / k);
  switch (*cfg.mode) {
    case Mode::solve:
    case Mode::mountain_pass:
    case Mode::stability_test:
      if (!p.theta) throw ConfigError("parameters.theta", "required for mode " + to_string(*cfg.mode));
      if (!(*p.theta > 0.0)) throw ConfigError("parameters.theta", "must be positive");
      break;
    case Mode::branch:
      if (p.theta_schedule.empty())
        throw ConfigError("parameters.theta_schedule", "required for mode branch");
      break;
    default:
      break;
  }
}

inline nlohmann::json series_json(const SeriesConfig& s) {
  nlohmann::json terms = nlohmann::json::array();
  for (const auto& t : s.terms)
    terms.push_back({{"amplitude", t.amplitude}, {"wavevector", t.wavevector}, {"phase", t.phase}});
  return {{"constant", s.constant}, {"terms", terms}};
}

/// Normalized echo with every default materialized.
inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["mode"] = c.mode ? nlohmann::json(to_string(*c.mode)) : nlohmann::json(nullptr);
  j["seed"] = c.seed;
  j["grid"] = {{"dim", c.grid.dim}, {"resolutions", c.grid.resolutions}, {"periods", c.grid.periods}};
  j["coefficients"] = {{"h", series_json(c.h)}, {"f", series_json(c.f)}, {"a", series_json(c.a)}};
  const auto& p = c.parameters;
  j["parameters"] = {
      {"theta", p.theta ? nlohmann::json(*p.theta) : nlohmann::json(nullptr)},
      {"theta_schedule", p.theta_schedule},
      {"theta_hint", p.theta_hint},
      {"q", p.q ? nlohmann::json(*p.q) : nlohmann::json(2.0 * c.grid.dim / (c.grid.dim - 2.0))},
      {"q_schedule", p.q_schedule},
      {"epsilon_schedule", p.epsilon_schedule},
      {"perturbation", p.perturbation},
  };
  const auto& s = c.solver;
  j["solver"] = {
      {"monotone_tolerance", s.monotone_tolerance},
      {"monotone_max_iterations", s.monotone_max_iterations},
      {"newton_tolerance", s.newton_tolerance},
      {"newton_max_steps", s.newton_max_steps},
      {"fold_tolerance", s.fold_tolerance},
      {"fold_lambda_target", s.fold_lambda_target},
      {"descent_tolerance", s.descent_tolerance},
      {"path_size", s.path_size},
      {"pass_max_iterations", s.pass_max_iterations},
      {"sphere_samples", s.sphere_samples},
      {"sobolev_iterations", s.sobolev_iterations},
  };
  j["bubble"] = {{"f0", c.bubble.f0}, {"window", c.bubble.window}, {"cells_per_R0", c.bubble.cells_per_R0}};
  j["output"] = {{"directory", c.output.directory}, {"formats", c.output.formats}};
  return j;
}

}  // namespace lich::harness
