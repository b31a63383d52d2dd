#pragma once

// run(): one experiment from a RunConfig to a committed output directory.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "json.hpp"
#include "lichnerowicz/core.hpp"
#include "lichnerowicz/diagnostics.hpp"
#include "lichnerowicz/harness/config.hpp"
#include "lichnerowicz/harness/field_io.hpp"
#include "lichnerowicz/harness/output.hpp"
#include "lichnerowicz/minimal_branch.hpp"
#include "lichnerowicz/mountain_pass.hpp"

namespace lich::harness {

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitSolver = 3, kExitBlowup = 4, kExitIo = 5 };

struct RunOptions {
  std::optional<std::filesystem::path> out_dir;
  std::optional<std::uint64_t> seed;
  bool verbose = false;
};

struct RunOutcome {
  int exit_code = kExitOk;
  nlohmann::json report;
  std::filesystem::path directory;
};

inline std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline const char* kBranchHeader = "theta,lambda,min_u,max_u,energy,iterations,converged\n";

inline std::string branch_csv(const std::vector<BranchPoint>& points) {
  std::string out = kBranchHeader;
  for (const auto& p : points) {
    out += fmt17(p.theta) + "," + fmt17(p.lambda) + "," + fmt17(p.solution.min()) + "," +
           fmt17(p.solution.max()) + "," + fmt17(p.energy) + "," + std::to_string(p.iterations) + "," +
           (p.converged ? "true" : "false") + "\n";
  }
  return out;
}

inline ScalarField build_series(const GridPtr& g, const SeriesConfig& s) {
  return cosine_series(g, s.constant, s.terms);
}

inline MonotoneConfig monotone_config(const SolverConfig& s) {
  MonotoneConfig m;
  m.tolerance = s.monotone_tolerance;
  m.max_iterations = s.monotone_max_iterations;
  m.newton.tolerance = s.newton_tolerance;
  m.newton.max_steps = s.newton_max_steps;
  return m;
}

namespace detail {

class Timer {
 public:
  explicit Timer(nlohmann::json& timings, std::string name)
      : timings_(timings), name_(std::move(name)), start_(std::chrono::steady_clock::now()) {}
  ~Timer() {
    timings_[name_] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  nlohmann::json& timings_;
  std::string name_;
  std::chrono::steady_clock::time_point start_;
};

struct Context {
  const RunConfig& cfg;
  const Coefficients& coeffs;
  OutputSet& out;
  nlohmann::json& results;
  nlohmann::json& timings;
  bool verbose;

  void log(const std::string& line) const {
    if (verbose) std::cerr << "[" << to_string(*cfg.mode) << "] " << line << "\n";
  }
  void field(const std::string& stem, const ScalarField& u) const {
    if (cfg.output.has("field")) out.stage(stem + ".field", encode_field(u));
    if (cfg.output.has("field_csv") && u.grid()->size() <= 65536) out.stage(stem + ".field.csv", field_csv(u));
  }
  void csv(const std::string& name, const std::string& data) const {
    if (cfg.output.has("csv")) out.stage(name, data);
  }
};

inline nlohmann::json point_json(const BranchPoint& p) {
  return {{"theta", p.theta},       {"lambda", p.lambda},       {"min_u", p.solution.min()},
          {"max_u", p.solution.max()}, {"energy", p.energy}, {"iterations", p.iterations},
          {"converged", p.converged}};
}

// JSON has no NaN; non-finite values become null.
inline void scrub(nlohmann::json& j) {
  if (j.is_number_float() && !std::isfinite(j.get<double>())) j = nullptr;
  if (j.is_structured())
    for (auto& v : j) scrub(v);
}

inline int run_solve(const Context& c) {
  const auto& p = c.cfg.parameters;
  const double q = p.q.value_or(c.coeffs.grid()->critical_exponent());
  const ProblemSpec spec(c.coeffs, q, *p.theta);
  MonotoneResult r;
  {
    Timer t(c.timings, "monotone_iterate");
    r = monotone_iterate(spec, build_subsolution(c.coeffs, spec.theta, q), monotone_config(c.cfg.solver));
  }
  c.results["max_decrease"] = r.max_decrease;
  c.results["max_scaled_decrease"] = r.max_scaled_decrease;
  c.results["iterations"] = r.iterations;
  if (!r.converged()) throw ConvergenceFailure("solve: monotone iteration diverged (" + r.reason + ")");
  ScalarField u = r.solution;
  {
    Timer t(c.timings, "newton_refine");
    NewtonConfig nc = monotone_config(c.cfg.solver).newton;
    const auto nr = newton_refine(spec, u, nc);
    u = nr.solution;
    c.results["newton_steps"] = nr.steps;
    c.results["singular_signal"] = nr.singular_signal;
  }
  c.results["theta"] = spec.theta;
  c.results["q"] = q;
  c.results["min_u"] = u.min();
  c.results["max_u"] = u.max();
  c.results["energy"] = energy(spec, u);
  c.results["residual_norm"] = residual(spec, u).sup_norm();
  {
    Timer t(c.timings, "stability_eigenvalue");
    c.results["lambda"] = stability_eigenvalue(spec, u);
  }
  c.field("solution", u);
  c.log("min u = " + fmt17(u.min()) + ", max u = " + fmt17(u.max()));
  return kExitOk;
}

inline int run_branch(const Context& c) {
  BranchRecord rec;
  {
    Timer t(c.timings, "trace_branch");
    rec = trace_branch(c.coeffs, c.cfg.parameters.theta_schedule, monotone_config(c.cfg.solver));
  }
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : rec.points) pts.push_back(point_json(p));
  c.results["points"] = pts;
  c.results["subsolution_floor"] = rec.subsolution_floor;
  c.results["max_decrease"] = rec.max_decrease;
  c.results["max_scaled_decrease"] = rec.max_scaled_decrease;
  const bool complete = !rec.points.empty() && rec.points.back().converged &&
                        rec.points.size() == c.cfg.parameters.theta_schedule.size();
  c.results["complete"] = complete;
  if (!complete) c.results["terminated_at"] = rec.points.back().theta;
  c.csv("branch.csv", branch_csv(rec.points));
  for (auto it = rec.points.rbegin(); it != rec.points.rend(); ++it)
    if (it->converged) {
      c.field("branch_last", it->solution);
      break;
    }
  c.log(std::to_string(rec.points.size()) + " branch points");
  return kExitOk;
}

inline int run_fold(const Context& c) {
  FoldConfig fc;
  fc.tolerance = c.cfg.solver.fold_tolerance;
  fc.lambda_target = c.cfg.solver.fold_lambda_target;
  fc.monotone = monotone_config(c.cfg.solver);
  FoldResult r;
  {
    Timer t(c.timings, "find_theta_star");
    r = find_theta_star(c.coeffs, c.cfg.parameters.theta_hint, fc);
  }
  c.results["theta_star"] = r.theta_star;
  c.results["theta_lo"] = r.theta_lo;
  c.results["theta_hi"] = r.theta_hi;
  c.results["last_branch_point"] = point_json(r.last_branch_point);
  c.results["lambda_last"] = r.last_branch_point.lambda;
  c.results["bisection_steps"] = r.bisection_steps;
  c.results["refinement_steps"] = r.refinement_steps;
  c.results["max_decrease"] = r.max_decrease;
  c.results["max_scaled_decrease"] = r.max_scaled_decrease;
  c.csv("branch.csv", branch_csv(r.probes));
  c.field("fold_solution", r.last_branch_point.solution);
  c.log("theta_star = " + fmt17(r.theta_star));
  return kExitOk;
}

inline int run_mountain_pass(const Context& c, std::uint64_t seed) {
  const auto& s = c.cfg.solver;
  CriticalLimitConfig mc;
  mc.monotone = monotone_config(s);
  mc.descent.gradient_tolerance = s.descent_tolerance;
  mc.descent.newton = mc.monotone.newton;
  mc.pass.path_size = s.path_size;
  mc.pass.max_iterations = s.pass_max_iterations;
  mc.pass.newton = mc.monotone.newton;
  mc.sphere_samples = s.sphere_samples;
  mc.seed = seed;
  TwoSolutions r;
  {
    Timer t(c.timings, "critical_limit");
    r = critical_limit(c.coeffs, *c.cfg.parameters.theta, c.cfg.parameters.epsilon_schedule,
                       c.cfg.parameters.q_schedule, mc);
  }
  auto& o = c.results;
  o["theta"] = *c.cfg.parameters.theta;
  o["minimal"] = point_json(r.minimal);
  o["low"] = {{"min_u", r.low.min()}, {"max_u", r.low.max()}, {"energy", r.low_energy},
              {"residual_norm", r.low_residual}};
  o["second"] = {{"min_u", r.second.min()}, {"max_u", r.second.max()}, {"energy", r.second_energy},
                 {"residual_norm", r.second_residual}};
  o["eta"] = r.eta;
  o["rho"] = r.rho;
  o["pass_level"] = r.pass_level;
  o["pass_level_history"] = r.pass_level_history;
  o["separation"] = r.separation;
  o["merged"] = r.merged;
  o["blowup"] = r.blowup;
  o["minimality_gap"] = r.minimality_gap;
  o["max_decrease"] = r.max_decrease;
  o["max_scaled_decrease"] = r.max_scaled_decrease;
  std::string table = "q,epsilon,rho,eta,low_energy,pass_level,low_sup,second_sup,low_min,second_min,"
                      "low_difference,second_difference\n";
  for (const auto& st : r.stages) {
    table += fmt17(st.q) + "," + fmt17(st.epsilon) + "," + fmt17(st.rho) + "," + fmt17(st.eta) + "," +
             fmt17(st.low_energy) + "," + fmt17(st.pass_level) + "," + fmt17(st.low_sup) + "," +
             fmt17(st.second_sup) + "," + fmt17(st.low_min) + "," + fmt17(st.second_min) + "," +
             fmt17(st.low_difference) + "," + fmt17(st.second_difference) + "\n";
  }
  c.csv("stages.csv", table);
  c.field("minimal", r.minimal.solution);
  c.field("second", r.second);
  o["verdict"] = r.blowup ? "BLOWUP" : "CONVERGED";
  c.log("pass level = " + fmt17(r.pass_level) + ", eta = " + fmt17(r.eta));
  return r.blowup ? kExitBlowup : kExitOk;
}

inline int run_certificate(const Context& c) {
  Certificate cert;
  {
    Timer t(c.timings, "certificate_theta1");
    cert = certificate_theta1(c.coeffs, std::nullopt, c.cfg.solver.sobolev_iterations);
  }
  auto& o = c.results;
  o["n"] = cert.n;
  o["C_n"] = cert.C_n;
  o["S_h_estimate"] = cert.S_h_estimate;
  o["S_h_heuristic"] = cert.S_h_heuristic;
  o["max_abs_f"] = cert.max_abs_f;
  o["t0"] = cert.t0;
  o["t1"] = cert.t1;
  o["phi_t0"] = cert.phi_t0;
  o["weight_integral"] = cert.weight_integral;
  o["theta1_lower_bound"] = cert.theta1_lower_bound;
  c.log("theta1_lb = " + fmt17(cert.theta1_lower_bound));
  return kExitOk;
}

inline int run_stability(const Context& c) {
  const auto& p = c.cfg.parameters;
  std::vector<ScalarField> perts;
  if (p.perturbation != 0.0)
    for (std::size_t k = 1; k <= p.q_schedule.size(); ++k) perts.push_back(c.coeffs.a * (p.perturbation / k));
  StabilityConfig sc;
  sc.monotone = monotone_config(c.cfg.solver);
  sc.newton = sc.monotone.newton;
  StabilityReport r;
  {
    Timer t(c.timings, "stability_experiment");
    r = stability_experiment(c.coeffs, *p.theta, p.q_schedule, perts, sc);
  }
  auto& o = c.results;
  const char* verdict = to_string(r.verdict);
  o["verdict"] = verdict;
  o["reason"] = r.reason;
  o["subsolution_floor"] = r.subsolution_floor;
  o["min_over_family"] = r.min_over_family;
  o["max_decrease"] = r.max_decrease;
  o["max_scaled_decrease"] = r.max_scaled_decrease;
  o["limit_difference"] = r.limit_difference ? nlohmann::json(*r.limit_difference) : nlohmann::json(nullptr);
  nlohmann::json members = nlohmann::json::array();
  std::string table = "k,q,sup_u,min_u,mu,profile_deviation,sup_difference,gradient_difference,iterations,"
                      "converged,verdict\n";
  for (const auto& m : r.members) {
    members.push_back({{"k", m.k}, {"q", m.q}, {"sup_u", m.sup}, {"min_u", m.min}, {"mu", m.mu},
                       {"profile_deviation", m.profile_deviation}, {"sup_difference", m.sup_difference},
                       {"gradient_difference", m.gradient_difference}, {"converged", m.converged}});
    table += std::to_string(m.k) + "," + fmt17(m.q) + "," + fmt17(m.sup) + "," + fmt17(m.min) + "," +
             fmt17(m.mu) + "," + fmt17(m.profile_deviation) + "," + fmt17(m.sup_difference) + "," +
             fmt17(m.gradient_difference) + "," + std::to_string(m.iterations) + "," +
             (m.converged ? "true" : "false") + "," + verdict + "\n";
  }
  o["members"] = members;
  if (r.evidence) {
    o["evidence"] = {{"mu", r.evidence->mu}, {"deviation", r.evidence->deviation},
                     {"mu_over_period", r.evidence->mu_over_period},
                     {"concentrated", r.evidence->concentrated}};
  }
  c.csv("stability.csv", table);
  if (r.limit) c.field("stability_limit", *r.limit);
  c.log(std::string("verdict ") + verdict);
  return r.verdict == Verdict::blowup ? kExitBlowup : kExitOk;
}

inline int run_bubble(const Context& c) {
  const int n = c.coeffs.grid()->dim();
  const BubbleSpec spec(n, c.cfg.bubble.f0);
  const double spacing = spec.R0 / c.cfg.bubble.cells_per_R0;
  const double half = c.cfg.bubble.window * spec.R0;
  // The window needs an integer number of cells on each side.
  const double cells = std::round(half / spacing);
  const double points = std::pow(2.0 * cells * 2.0 + 1.0, n);
  if (points > 4e7)
    throw ConfigError("bubble.cells_per_R0", "refined window would hold " + fmt17(points) + " points (limit 4e7)");
  const double w = cells * spacing;
  BubbleWindow coarse, fine;
  {
    Timer t(c.timings, "standard_bubble");
    coarse = standard_bubble(spec, w, spacing);
    fine = standard_bubble(spec, w, 0.5 * spacing);
  }
  auto& o = c.results;
  o["n"] = n;
  o["f0"] = spec.f0;
  o["R0"] = spec.R0;
  o["U_origin"] = coarse.U_origin;
  o["U_at_R0"] = coarse.U_at_R0;
  o["spacing"] = spacing;
  o["half_width"] = w;
  o["points_per_axis"] = coarse.points_per_axis;
  o["relative_residual"] = coarse.relative_residual;
  o["relative_residual_fine"] = fine.relative_residual;
  o["refinement_ratio"] = coarse.relative_residual / fine.relative_residual;
  // Profile along the first axis through the center.
  std::string table = "x,U\n";
  std::size_t stride = 1;
  for (int d = 1; d < n; ++d) stride *= static_cast<std::size_t>(coarse.points_per_axis);
  const std::size_t mid = static_cast<std::size_t>(coarse.points_per_axis / 2);
  std::size_t base = 0;
  for (int d = 1; d < n; ++d) base = base * coarse.points_per_axis + mid;
  for (int i = 0; i < coarse.points_per_axis; ++i)
    table += fmt17(-w + i * spacing) + "," + fmt17(coarse.values[i * stride + base]) + "\n";
  c.csv("bubble_profile.csv", table);
  c.log("relative residual = " + fmt17(coarse.relative_residual));
  return kExitOk;
}

}  // namespace detail

/// Config errors before any output exists propagate as ConfigError; every
/// later failure is reported through the exit code and a report.json.partial.
inline RunOutcome run(RunConfig cfg, const RunOptions& opt = {}) {
  finalize(cfg);
  if (opt.seed) cfg.seed = *opt.seed;
  if (opt.out_dir) cfg.output.directory = opt.out_dir->string();

  GridPtr grid;
  std::optional<Coefficients> coeffs;
  try {
    grid = build_grid(cfg.grid.dim, cfg.grid.resolutions, cfg.grid.periods);
    coeffs.emplace(build_series(grid, cfg.h), build_series(grid, cfg.f), build_series(grid, cfg.a));
  } catch (const Error& e) {
    throw ConfigError("coefficients", e.what());
  }
  if (*cfg.mode != Mode::bubble_check && !coercivity_check(coeffs->h).coercive)
    throw ConfigError("coefficients.h", "operator Δ + h is not coercive");

  RunOutcome outcome;
  outcome.directory = cfg.output.directory;
  OutputSet out(outcome.directory);
  nlohmann::json report;
  report["mode"] = to_string(*cfg.mode);
  report["config"] = to_json(cfg);
  report["seed"] = cfg.seed;
  nlohmann::json results = nlohmann::json::object();
  nlohmann::json timings = nlohmann::json::object();
  const detail::Context ctx{cfg, *coeffs, out, results, timings, opt.verbose};

  int code = kExitOk;
  try {
    const auto start = std::chrono::steady_clock::now();
    switch (*cfg.mode) {
      case Mode::solve: code = detail::run_solve(ctx); break;
      case Mode::branch: code = detail::run_branch(ctx); break;
      case Mode::fold: code = detail::run_fold(ctx); break;
      case Mode::mountain_pass: code = detail::run_mountain_pass(ctx, cfg.seed); break;
      case Mode::certificate: code = detail::run_certificate(ctx); break;
      case Mode::stability_test: code = detail::run_stability(ctx); break;
      case Mode::bubble_check: code = detail::run_bubble(ctx); break;
    }
    timings["total"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  } catch (const IoError&) {
    throw;
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    report["status"] = "solver_failure";
    report["error"] = e.what();
    report["results"] = results;
    report["timings"] = timings;
    report["manifest"] = nlohmann::json::array();
    detail::scrub(report);
    write_file(outcome.directory / "report.json.partial", report.dump(2) + "\n");
    outcome.exit_code = kExitSolver;
    outcome.report = std::move(report);
    return outcome;
  }

  report["status"] = code == kExitOk ? "ok" : "blowup";
  report["results"] = results;
  report["timings"] = timings;
  report["manifest"] = manifest_json(out.commit());
  detail::scrub(report);
  const auto tmp = outcome.directory / "report.json.partial";
  write_file(tmp, report.dump(2) + "\n");
  std::error_code ec;
  std::filesystem::rename(tmp, outcome.directory / "report.json", ec);
  if (ec) throw IoError("cannot finalize report.json: " + ec.message());
  outcome.exit_code = code;
  outcome.report = std::move(report);
  return outcome;
}

/// Maps exceptions escaping run() onto exit codes.
inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
  if (dynamic_cast<const IoError*>(&e)) return kExitIo;
  if (dynamic_cast<const std::filesystem::filesystem_error*>(&e)) return kExitIo;
  return kExitSolver;
}

}  // namespace lich::harness
