#pragma once

// Blow-up forensics: the standard bubble, comparison of a solution's
// rescaled peak against it, and the subcritical stability experiment.

#include <algorithm>
#include <cmath>
#include <future>
#include <optional>
#include <string>
#include <vector>

#include "lichnerowicz/core.hpp"
#include "lichnerowicz/errors.hpp"
#include "lichnerowicz/minimal_branch.hpp"
#include "lichnerowicz/newton.hpp"
#include "lichnerowicz/torus_grid.hpp"

namespace lich {

struct BubbleSpec {
  int n = 3;
  double f0 = 1.0;
  double mu = 1.0;
  std::vector<double> center;
  double R0 = 0.0;

  BubbleSpec() = default;
  BubbleSpec(int dim, double f0_, double mu_ = 1.0, std::vector<double> center_ = {})
      : n(dim), f0(f0_), mu(mu_), center(std::move(center_)) {
    if (n < 3 || n > 5) throw InvalidArgument("bubble: dimension out of range [3, 5]");
    if (!(f0 > 0.0)) throw InvalidArgument("bubble: f0 must be positive");
    if (!(mu > 0.0)) throw InvalidArgument("bubble: mu must be positive");
    if (center.empty()) center.assign(static_cast<std::size_t>(n), 0.0);
    if (static_cast<int>(center.size()) != n) throw InvalidArgument("bubble: center has wrong length");
    R0 = std::sqrt(n * (n - 2.0) / f0);
    const double check = R0 * R0 * f0 - n * (n - 2.0);
    if (std::abs(check) > 1e-12 * n * (n - 2.0)) throw InvalidArgument("bubble: R0 invariant violated");
  }

  double critical_exponent() const { return 2.0 * n / (n - 2.0); }

  /// Unit-scale profile U(r).
  double profile(double r) const {
    return std::pow(1.0 + f0 * r * r / (n * (n - 2.0)), -(n - 2.0) / 2.0);
  }

  /// μ^{-(n-2)/2} U(|x - center| / μ), the bubble at scale μ.
  double scaled(double r) const { return std::pow(mu, -(n - 2.0) / 2.0) * profile(r / mu); }
};

struct BubbleWindow {
  int points_per_axis = 0;
  double spacing = 0.0;
  double half_width = 0.0;
  std::vector<double> values;  // row-major samples of U, origin at the window center
  double relative_residual = 0.0;
  double U_origin = 0.0;
  double U_at_R0 = 0.0;
};

/// Samples U on the cube [-w, w]^n with the given spacing and reports
/// max |Δ_fd U - f0 U^{2*-1}| / max U^{2*-1} over points at least two cells
/// from the boundary; Δ_fd is the 4th-order central stencil.
inline BubbleWindow standard_bubble(const BubbleSpec& spec, double half_width, double spacing) {
  if (!(half_width > 0.0) || !(spacing > 0.0))
    throw InvalidArgument("standard_bubble: window and spacing must be positive");
  const double cells = 2.0 * half_width / spacing;
  const int m = static_cast<int>(std::llround(cells));
  if (std::abs(cells - m) > 1e-9 * std::max(1.0, cells))
    throw InvalidArgument("standard_bubble: window is not an integer number of cells");
  const int p = m + 1;
  if (p < 5) throw InvalidArgument("standard_bubble: window too small relative to stencil");
  const int n = spec.n;

  BubbleWindow out;
  out.points_per_axis = p;
  out.spacing = spacing;
  out.half_width = half_width;
  out.U_origin = spec.profile(0.0);
  out.U_at_R0 = spec.profile(spec.R0);

  std::size_t total = 1;
  for (int d = 0; d < n; ++d) total *= static_cast<std::size_t>(p);
  std::vector<std::size_t> stride(static_cast<std::size_t>(n), 1);
  for (int d = n - 2; d >= 0; --d) stride[d] = stride[d + 1] * static_cast<std::size_t>(p);

  out.values.resize(total);
  std::vector<int> idx(static_cast<std::size_t>(n), 0);
  for (std::size_t i = 0; i < total; ++i) {
    std::size_t rem = i;
    double r2 = 0.0;
    for (int d = 0; d < n; ++d) {
      idx[d] = static_cast<int>(rem / stride[d]);
      rem %= stride[d];
      const double x = -half_width + idx[d] * spacing;
      r2 += x * x;
    }
    out.values[i] = spec.profile(std::sqrt(r2));
  }

  const double e = spec.critical_exponent() - 1.0;
  const double inv = 1.0 / (12.0 * spacing * spacing);
  double worst = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < total; ++i) {
    std::size_t rem = i;
    bool interior = true;
    for (int d = 0; d < n; ++d) {
      idx[d] = static_cast<int>(rem / stride[d]);
      rem %= stride[d];
      if (idx[d] < 2 || idx[d] > p - 3) interior = false;
    }
    if (!interior) continue;
    double lap = 0.0;
    const double* v = out.values.data();
    for (int d = 0; d < n; ++d) {
      const std::size_t s = stride[d];
      lap += (-v[i + 2 * s] + 16.0 * v[i + s] - 30.0 * v[i] + 16.0 * v[i - s] - v[i - 2 * s]) * inv;
    }
    // geometer's sign: ΔU = -Σ ∂²U
    const double power_term = std::pow(v[i], e);
    worst = std::max(worst, std::abs(-lap - spec.f0 * power_term));
    scale = std::max(scale, power_term);
  }
  out.relative_residual = worst / scale;
  return out;
}

struct ProfileReport {
  std::vector<double> x_max;
  double u_max = 0.0;
  double mu = 0.0;
  double f0 = 0.0;
  double deviation = 0.0;
  double mu_over_period = 0.0;
  bool concentrated = false;
  std::size_t samples = 0;
};

/// Grid points with |x - x_max| ≤ window·μ (nearest periodic image) are
/// rescaled by μ = u_max^{-(q-2)/2} and compared with the unit bubble of f(x_max).
inline ProfileReport rescaled_profile_compare(const ScalarField& u, double q, const ScalarField& f,
                                              double window = 5.0) {
  u.require_same_grid(f);
  if (!(u.min() > 0.0)) throw PositivityError("rescaled_profile_compare: u must be positive");
  if (!(q > 2.0)) throw InvalidArgument("rescaled_profile_compare: q must exceed 2");
  const TorusGrid& g = *u.grid();
  const std::size_t imax = u.argmax();
  ProfileReport rep;
  rep.x_max = g.point(imax);
  rep.u_max = u[imax];
  rep.f0 = f[imax];
  if (!(rep.f0 > 0.0))
    throw StructuralViolation("rescaled_profile_compare: f(x_max) <= 0 at the concentration point");
  rep.mu = std::pow(rep.u_max, -(q - 2.0) / 2.0);
  rep.mu_over_period = rep.mu / g.min_period();
  rep.concentrated = rep.mu_over_period < 0.05;

  const BubbleSpec bubble(g.dim(), rep.f0);
  double dev = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto x = g.point(i);
    double r2 = 0.0;
    for (int d = 0; d < g.dim(); ++d) {
      const double L = g.periods()[d];
      double dx = x[d] - rep.x_max[d];
      dx -= L * std::round(dx / L);
      r2 += dx * dx;
    }
    const double y = std::sqrt(r2) / rep.mu;
    if (y > window) continue;
    dev = std::max(dev, std::abs(u[i] / rep.u_max - bubble.profile(y)));
    ++rep.samples;
  }
  rep.deviation = dev;
  return rep;
}

struct BlowupMember {
  int k = 0;
  double q = 0.0;
  double sup = 0.0;
  double min = 0.0;
  double mu = 0.0;
  double profile_deviation = 0.0;
  double sup_difference = 0.0;       // ‖u_k - u_{k-1}‖∞, 0 for the first member
  double gradient_difference = 0.0;  // max over axes of ‖∂u_k - ∂u_{k-1}‖∞
  bool converged = false;
  int iterations = 0;
};

enum class Verdict { converged, blowup };

inline const char* to_string(Verdict v) { return v == Verdict::converged ? "CONVERGED" : "BLOWUP"; }

struct StabilityConfig {
  MonotoneConfig monotone{};
  NewtonConfig newton{};
  int continuation_steps = 10;
  bool limit_check = true;
  bool concurrent = true;
};

struct StabilityReport {
  std::vector<BlowupMember> members;
  Verdict verdict = Verdict::converged;
  std::string reason;
  double subsolution_floor = 0.0;
  double min_over_family = 0.0;
  double max_decrease = 0.0;  // over all member iterations
  double max_scaled_decrease = 0.0;
  std::optional<ProfileReport> evidence;
  // Last member continued in (q, a) to the unperturbed critical problem,
  // compared with the minimal solution computed from scratch.
  std::optional<double> limit_difference;
  std::optional<ScalarField> limit;
};

namespace detail {

inline double gradient_sup_difference(const ScalarField& u, const ScalarField& v) {
  const auto gu = gradient(u);
  const auto gv = gradient(v);
  double m = 0.0;
  for (std::size_t d = 0; d < gu.size(); ++d) m = std::max(m, sup_distance(gu[d], gv[d]));
  return m;
}

// Newton continuation along q(s), a(s) linear in s ∈ [0, 1].
inline ScalarField continue_to(const ProblemSpec& from, const ProblemSpec& to, const ScalarField& u,
                               int steps, const NewtonConfig& cfg) {
  ScalarField v = u;
  for (int i = 1; i <= steps; ++i) {
    const double s = static_cast<double>(i) / steps;
    const ScalarField a = from.coeffs.a * (1.0 - s) + to.coeffs.a * s;
    const double q = from.q + s * (to.q - from.q);
    const ProblemSpec mid(to.coeffs.with_a(a), q, to.theta);
    v = newton_solve(LichnerowiczEquation{mid}, v, cfg).solution;
  }
  return v;
}

}  // namespace detail

/// One minimal solution per (q_k, a + perturbation_k), all started from a
/// common subsolution. An empty perturbation list means a_k = a.
inline StabilityReport stability_experiment(const Coefficients& coeffs, double theta,
                                            const std::vector<double>& q_schedule,
                                            const std::vector<ScalarField>& a_perturbations,
                                            const StabilityConfig& cfg = {}) {
  if (q_schedule.empty()) throw InvalidArgument("stability_experiment: empty q schedule");
  for (std::size_t i = 1; i < q_schedule.size(); ++i)
    if (!(q_schedule[i] > q_schedule[i - 1]))
      throw InvalidArgument("stability_experiment: schedule must be strictly increasing");
  if (!a_perturbations.empty() && a_perturbations.size() != q_schedule.size())
    throw InvalidArgument("stability_experiment: one perturbation per schedule entry required");

  std::vector<ProblemSpec> family;
  for (std::size_t k = 0; k < q_schedule.size(); ++k) {
    const ScalarField a = a_perturbations.empty() ? coeffs.a : coeffs.a + a_perturbations[k];
    family.emplace_back(coeffs.with_a(a), q_schedule[k], theta);
  }
  const Subsolution w = build_subsolution(family);

  auto solve_member = [&](std::size_t k) { return monotone_iterate(family[k], w.field, cfg.monotone); };
  std::vector<MonotoneResult> results;
  if (cfg.concurrent && family.size() > 1) {
    std::vector<std::future<MonotoneResult>> jobs;
    for (std::size_t k = 0; k < family.size(); ++k)
      jobs.push_back(std::async(std::launch::async, solve_member, k));
    for (auto& j : jobs) results.push_back(j.get());
  } else {
    for (std::size_t k = 0; k < family.size(); ++k) results.push_back(solve_member(k));
  }

  StabilityReport rep;
  rep.subsolution_floor = w.field.min();
  rep.min_over_family = std::numeric_limits<double>::infinity();

  bool all_converged = true;
  for (std::size_t k = 0; k < results.size(); ++k) {
    const auto& r = results[k];
    BlowupMember m;
    m.k = static_cast<int>(k) + 1;
    m.q = q_schedule[k];
    m.sup = r.solution.max();
    m.min = r.solution.min();
    m.mu = std::pow(m.sup, -(m.q - 2.0) / 2.0);
    m.converged = r.converged();
    m.iterations = r.iterations;
    try {
      m.profile_deviation = rescaled_profile_compare(r.solution, m.q, family[k].coeffs.f).deviation;
    } catch (const StructuralViolation&) {
      m.profile_deviation = std::numeric_limits<double>::quiet_NaN();
    }
    if (k > 0) {
      m.sup_difference = sup_distance(r.solution, results[k - 1].solution);
      m.gradient_difference = detail::gradient_sup_difference(r.solution, results[k - 1].solution);
    }
    all_converged = all_converged && m.converged;
    rep.max_decrease = std::max(rep.max_decrease, r.max_decrease);
    rep.max_scaled_decrease = std::max(rep.max_scaled_decrease, r.max_scaled_decrease);
    rep.min_over_family = std::min(rep.min_over_family, m.min);
    rep.members.push_back(m);
  }

  bool decreasing = true;
  for (std::size_t k = 2; k < rep.members.size(); ++k)
    if (!(rep.members[k].sup_difference < rep.members[k - 1].sup_difference)) decreasing = false;

  if (!all_converged) {
    rep.verdict = Verdict::blowup;
    rep.reason = "a family member diverged";
  } else if (!decreasing) {
    rep.verdict = Verdict::blowup;
    rep.reason = "sup-norm differences are not decreasing";
  } else if (rep.min_over_family < rep.subsolution_floor) {
    rep.verdict = Verdict::blowup;
    rep.reason = "minimum fell below the subsolution floor";
  }
  if (rep.verdict == Verdict::blowup) {
    const auto& last = results.back().solution;
    try {
      rep.evidence = rescaled_profile_compare(last, q_schedule.back(), family.back().coeffs.f);
    } catch (const StructuralViolation&) {
    }
    return rep;
  }

  if (cfg.limit_check) {
    const ProblemSpec target(coeffs, coeffs.h.grid()->critical_exponent(), theta);
    const ScalarField limit = detail::continue_to(family.back(), target, results.back().solution,
                                                  cfg.continuation_steps, cfg.newton);
    const auto minimal = monotone_iterate(target, build_subsolution(coeffs, theta), cfg.monotone);
    if (!minimal.converged())
      throw ConvergenceFailure("stability_experiment: unperturbed minimal solution not found");
    rep.limit_difference = sup_distance(limit, minimal.solution);
    rep.limit = limit;
  }
  return rep;
}

}  // namespace lich
