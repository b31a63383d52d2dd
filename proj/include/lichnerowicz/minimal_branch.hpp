#pragma once

// Minimal (smallest, stable) solution by monotone sub/supersolution
// iteration, the θ-branch it spans, and location of the fold θ⋆.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "lichnerowicz/core.hpp"
#include "lichnerowicz/errors.hpp"
#include "lichnerowicz/newton.hpp"
#include "lichnerowicz/torus_grid.hpp"

namespace lich {

struct Subsolution {
  ScalarField field;
  double delta = 0.0;
  double scale = 0.0;
  double shift_H = 0.0;
};

namespace detail {

inline ScalarField negative_part(const ScalarField& u) {
  return u.map([](double v) { return v < 0.0 ? -v : 0.0; });
}

// ψ_δ solving (Δ + H)ψ = a − δ f⁻ − δ, with δ halved until ψ > 0.
inline std::pair<ScalarField, double> positive_auxiliary(const Coefficients& c, double shift) {
  const ScalarField H = c.h + shift;
  const ScalarField fminus = negative_part(c.f);
  double delta = 1.0;
  for (int halving = 0; halving <= 60; ++halving, delta *= 0.5) {
    const ScalarField rhs = c.a - fminus * delta - delta;
    ScalarField psi = helmholtz_solve(H, rhs, {1e-13, 4000});
    if (psi.min() > 0.0) return {std::move(psi), delta};
  }
  throw PositivityError("subsolution: no positive auxiliary solution within 60 halvings of delta");
}

// Residual of the equation with f replaced by −f⁻. Its right-hand side is
// decreasing in u, so a field where this is negative lies below every
// solution of the full equation, not merely below some supersolution.
inline double comparison_residual_max(const ProblemSpec& spec, const ScalarField& w) {
  const auto& c = spec.coeffs;
  ScalarField lap = laplacian(w);
  auto wv = w.values();
  auto lv = lap.values();
  auto hv = c.h.values();
  auto fv = c.f.values();
  auto av = c.a.values();
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < wv.size(); ++i) {
    const double x = wv[i];
    const double fneg = fv[i] < 0.0 ? -fv[i] : 0.0;
    const double r = lv[i] + hv[i] * x + fneg * power(x, spec.q - 1.0) -
                     spec.theta * av[i] * power(x, -(spec.q + 1.0));
    worst = std::max(worst, r);
  }
  return worst;
}

}  // namespace detail

/// Strict subsolution t·ψ_δ of the equation at (θ, q): positive, with
/// residual < 0 at every grid point, and small enough to lie below every
/// solution.
inline Subsolution build_subsolution(const Coefficients& coeffs, double theta,
                                     std::optional<double> q = std::nullopt) {
  if (!(coeffs.a.max() > 0.0))
    throw InvalidArgument("subsolution: coefficient a vanishes identically");
  if (!(theta > 0.0)) throw InvalidArgument("subsolution: theta must be positive");
  const ProblemSpec spec(coeffs, q.value_or(coeffs.grid()->critical_exponent()), theta);
  const double shift = std::max(0.0, 1.0 - coeffs.h.min());
  auto [psi, delta] = detail::positive_auxiliary(coeffs, shift);
  double t = 1.0;
  for (int halving = 0; halving <= 200; ++halving, t *= 0.5) {
    ScalarField w = psi * t;
    if (w.min() < kPositivityFloor) break;
    if (detail::comparison_residual_max(spec, w) < 0.0 && residual(spec, w).max() < 0.0)
      return {std::move(w), delta, t, shift};
  }
  throw PositivityError("subsolution: strict subsolution inequality not reached");
}

/// One subsolution valid simultaneously for every (θ, q) in the list, as
/// needed when a whole family must be bounded below by a common floor.
inline Subsolution build_subsolution(const std::vector<ProblemSpec>& family) {
  if (family.empty()) throw InvalidArgument("subsolution: empty family");
  const auto& base = family.front().coeffs;
  for (const auto& s : family) {
    if (!(s.coeffs.a.max() > 0.0))
      throw InvalidArgument("subsolution: coefficient a vanishes identically");
    if (!(s.theta > 0.0)) throw InvalidArgument("subsolution: theta must be positive");
  }
  // ψ_δ is built from the pointwise smallest weight in the family.
  ScalarField a_min = base.a;
  for (const auto& s : family) {
    a_min.require_same_grid(s.coeffs.a);
    a_min = a_min.zip(s.coeffs.a, [](double x, double y) { return std::min(x, y); });
  }
  const Coefficients lowest(base.h, base.f, a_min, Coefficients::Check::relaxed);
  const double shift = std::max(0.0, 1.0 - base.h.min());
  auto [psi, delta] = detail::positive_auxiliary(lowest, shift);
  double t = 1.0;
  for (int halving = 0; halving <= 200; ++halving, t *= 0.5) {
    ScalarField w = psi * t;
    if (w.min() < kPositivityFloor) break;
    bool ok = true;
    for (const auto& s : family) {
      if (!(detail::comparison_residual_max(s, w) < 0.0 && residual(s, w).max() < 0.0)) {
        ok = false;
        break;
      }
    }
    if (ok) return {std::move(w), delta, t, shift};
  }
  throw PositivityError("subsolution: no common strict subsolution for the family");
}

// ---------------------------------------------------------------------------

struct MonotoneConfig {
  double tolerance = 1e-12;  // on ‖v_{n+1} − v_n‖∞
  double cap_factor = 1e6;   // diverged once sup v > cap_factor · sup v_0
  int max_iterations = 200000;
  double monotonicity_tolerance = 1e-12;  // relative to max(1, sup v)
  double stall_residual = 1e-6;
  bool polish = true;
  NewtonConfig newton{};
};

enum class MonotoneStatus { converged, diverged };

struct MonotoneResult {
  MonotoneStatus status = MonotoneStatus::diverged;
  ScalarField solution;  // last iterate when diverged
  int iterations = 0;
  double residual_norm = std::numeric_limits<double>::quiet_NaN();
  double max_decrease = 0.0;  // largest pointwise decrease seen, ≥ 0
  double max_scaled_decrease = 0.0;  // the same, divided by max(1, sup v)
  bool polished = false;
  std::string reason;

  bool converged() const noexcept { return status == MonotoneStatus::converged; }
};

/// Iterates v ← (Δ + K)^{-1}(F(v) + K v), F(u) = f u^{q−1} + θ a u^{−(q+1)} − h u,
/// from a subsolution. K is recomputed each step so that F + K·id is
/// nondecreasing between the current iterate and sup v.
inline MonotoneResult monotone_iterate(const ProblemSpec& spec, const ScalarField& start,
                                       const MonotoneConfig& cfg = {}) {
  const auto& c = spec.coeffs;
  start.require_same_grid(c.h);
  if (!(start.min() >= kPositivityFloor))
    throw PositivityError("monotone_iterate: starting subsolution must be positive");
  const double q = spec.q;
  const GridPtr& grid = start.grid();
  auto hv = c.h.values();
  auto fv = c.f.values();
  auto av = c.a.values();
  const std::size_t n = start.size();

  MonotoneResult out;
  const double initial_sup = start.max();
  const double cap = cfg.cap_factor * std::max(initial_sup, 1.0);
  std::vector<double> v(start.values().begin(), start.values().end());
  std::vector<double> rhs(n);

  for (int it = 1; it <= cfg.max_iterations; ++it) {
    double sup = 0.0;
    for (double x : v) sup = std::max(sup, x);
    const double sup_pow = power(sup, q - 2.0);
    double K = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double x = v[i];
      const double xp = power(x, q - 2.0);
      const double singular = (q + 1.0) * spec.theta * av[i] / (xp * x * x * x * x);
      K = std::max(K, std::abs(hv[i]) + (q - 1.0) * std::abs(fv[i]) * sup_pow + singular);
    }
    K += 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double x = v[i];
      const double xp = power(x, q - 2.0);
      rhs[i] = fv[i] * xp * x + spec.theta * av[i] / (xp * x * x * x) - hv[i] * x + K * x;
    }
    const ScalarField next = helmholtz_solve(K, ScalarField(grid, rhs));
    auto nv = next.values();
    double step = 0.0, decrease = 0.0, next_sup = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = nv[i] - v[i];
      step = std::max(step, std::abs(d));
      decrease = std::max(decrease, -d);
      next_sup = std::max(next_sup, nv[i]);
    }
    out.max_decrease = std::max(out.max_decrease, decrease);
    out.max_scaled_decrease = std::max(out.max_scaled_decrease, decrease / std::max(1.0, sup));
    if (decrease > cfg.monotonicity_tolerance * std::max(1.0, sup)) {
      throw MonotonicityViolation("monotone_iterate: iterate decreased by " +
                                  std::to_string(decrease) + " at step " + std::to_string(it));
    }
    v.assign(nv.begin(), nv.end());
    out.iterations = it;
    if (next_sup > cap) {
      out.status = MonotoneStatus::diverged;
      out.reason = "sup norm exceeded cap";
      out.solution = ScalarField(grid, v);
      return out;
    }
    if (step <= cfg.tolerance) {
      ScalarField u(grid, v);
      const double rn = residual(spec, u).sup_norm();
      if (rn > cfg.stall_residual) continue;  // slow passage, not a fixed point
      out.status = MonotoneStatus::converged;
      out.residual_norm = rn;
      out.solution = u;
      if (cfg.polish && rn > cfg.newton.tolerance) {
        try {
          auto refined = newton_refine(spec, u, cfg.newton);
          const double slack = 1e-9 * std::max(1.0, u.max());
          const bool above = (refined.solution - u).min() >= -slack;
          if (above && sup_distance(refined.solution, u) <= 1e-4) {
            out.solution = std::move(refined.solution);
            out.residual_norm = refined.residual_norm;
            out.polished = true;
          }
        } catch (const Error&) {
          // the monotone limit stands unpolished
        }
      } else {
        out.polished = rn <= cfg.newton.tolerance;
      }
      return out;
    }
  }
  out.status = MonotoneStatus::diverged;
  out.reason = "iteration cap reached";
  out.solution = ScalarField(grid, v);
  return out;
}

inline MonotoneResult monotone_iterate(const ProblemSpec& spec, const Subsolution& w,
                                       const MonotoneConfig& cfg = {}) {
  if (!(residual(spec, w.field).max() <= 0.0))
    throw InvalidArgument("monotone_iterate: start is not a subsolution at this theta");
  return monotone_iterate(spec, w.field, cfg);
}

// ---------------------------------------------------------------------------

struct BranchPoint {
  double theta = 0.0;
  ScalarField solution;
  double lambda = std::numeric_limits<double>::quiet_NaN();
  double energy = std::numeric_limits<double>::quiet_NaN();
  int iterations = 0;
  bool converged = false;
};

struct BranchRecord {
  std::vector<BranchPoint> points;
  double subsolution_floor = 0.0;
  double max_decrease = 0.0;
  double max_scaled_decrease = 0.0;
};

/// λ(θ): first eigenvalue of the linearization at u.
inline double stability_eigenvalue(const ProblemSpec& spec, const ScalarField& u) {
  return smallest_eigenpair(linearized_potential(spec, u)).lambda;
}

namespace detail {
inline BranchPoint make_point(const ProblemSpec& spec, const MonotoneResult& r) {
  BranchPoint p;
  p.theta = spec.theta;
  p.solution = r.solution;
  p.iterations = r.iterations;
  p.converged = r.converged();
  if (p.converged) {
    p.lambda = stability_eigenvalue(spec, r.solution);
    p.energy = energy(spec, r.solution);
  }
  return p;
}
}  // namespace detail

/// Minimal solutions along an ascending θ schedule, each warm-started from
/// the previous one. Tracing stops at the first θ without a solution.
inline BranchRecord trace_branch(const Coefficients& coeffs, const std::vector<double>& thetas,
                                 const MonotoneConfig& cfg = {}) {
  if (thetas.empty()) throw InvalidArgument("trace_branch: empty schedule");
  for (std::size_t i = 1; i < thetas.size(); ++i)
    if (!(thetas[i] > thetas[i - 1]))
      throw InvalidArgument("trace_branch: schedule must be strictly increasing");
  BranchRecord rec;
  const Subsolution w = build_subsolution(coeffs, thetas.front());
  rec.subsolution_floor = w.field.min();
  ScalarField start = w.field;
  for (double theta : thetas) {
    const auto spec = ProblemSpec::critical(coeffs, theta);
    const auto r = monotone_iterate(spec, start, cfg);
    rec.max_decrease = std::max(rec.max_decrease, r.max_decrease);
    rec.max_scaled_decrease = std::max(rec.max_scaled_decrease, r.max_scaled_decrease);
    rec.points.push_back(detail::make_point(spec, r));
    if (!r.converged()) break;
    start = r.solution;
  }
  return rec;
}

// ---------------------------------------------------------------------------

struct FoldConfig {
  double tolerance = 1e-5;       // bisection bracket width
  int expansion_cap = 40;
  double lambda_target = 1e-4;   // fold refinement stops at |λ| below this
  int refinement_steps = 40;
  bool refine = true;
  // Iteration cap per existence probe. Convergence is algebraic at the fold
  // itself, so a probe landing on it would otherwise run to the global cap.
  int probe_max_iterations = 20000;
  MonotoneConfig monotone{};
};

struct FoldResult {
  double theta_star = 0.0;
  double theta_lo = 0.0;
  double theta_hi = 0.0;
  ScalarField solution_lo;
  BranchPoint last_branch_point;
  int bisection_steps = 0;
  int refinement_steps = 0;
  double max_decrease = 0.0;
  double max_scaled_decrease = 0.0;
  std::vector<BranchPoint> probes;  // every θ evaluated, in order
};

/// Brackets the largest θ with a solution by bisection on the monotone
/// iteration's existence verdict, then walks the last surviving branch
/// point toward λ = 0 with Newton solves, extrapolating λ² linearly in θ.
inline FoldResult find_theta_star(const Coefficients& coeffs, double theta_hint,
                                  const FoldConfig& cfg = {}) {
  if (!(theta_hint > 0.0)) throw InvalidArgument("find_theta_star: hint must be positive");
  if (!(cfg.tolerance > 0.0)) throw InvalidArgument("find_theta_star: tolerance must be positive");
  FoldResult res;
  MonotoneConfig probe_cfg = cfg.monotone;
  probe_cfg.max_iterations = std::min(probe_cfg.max_iterations, cfg.probe_max_iterations);

  struct Probe {
    bool exists;
    ScalarField solution;
  };
  auto probe = [&](double theta, const ScalarField* warm) {
    const auto spec = ProblemSpec::critical(coeffs, theta);
    ScalarField start = warm ? *warm : build_subsolution(coeffs, theta).field;
    const auto r = monotone_iterate(spec, start, probe_cfg);
    res.max_decrease = std::max(res.max_decrease, r.max_decrease);
    res.max_scaled_decrease = std::max(res.max_scaled_decrease, r.max_scaled_decrease);
    res.probes.push_back(detail::make_point(spec, r));
    return Probe{r.converged(), r.solution};
  };

  double lo = 0.0, hi = 0.0;
  ScalarField sol_lo;
  auto first = probe(theta_hint, nullptr);
  if (first.exists) {
    lo = theta_hint;
    sol_lo = first.solution;
    hi = 2.0 * lo;
    int k = 0;
    for (;; ++k) {
      if (k >= cfg.expansion_cap) throw ConvergenceFailure("find_theta_star: bracket expansion cap");
      auto p = probe(hi, &sol_lo);
      if (!p.exists) break;
      lo = hi;
      sol_lo = p.solution;
      hi *= 2.0;
    }
  } else {
    hi = theta_hint;
    lo = 0.5 * hi;
    int k = 0;
    for (;; ++k) {
      if (k >= cfg.expansion_cap || lo < cfg.tolerance)
        throw ConvergenceFailure("find_theta_star: no solution found at small theta");
      auto p = probe(lo, nullptr);
      if (p.exists) {
        sol_lo = p.solution;
        break;
      }
      hi = lo;
      lo *= 0.5;
    }
  }

  // Previous accepted point, for the first secant estimate.
  double prev_theta = std::numeric_limits<double>::quiet_NaN();
  while (hi - lo > cfg.tolerance) {
    const double mid = 0.5 * (lo + hi);
    auto p = probe(mid, &sol_lo);
    ++res.bisection_steps;
    if (p.exists) {
      prev_theta = lo;
      lo = mid;
      sol_lo = p.solution;
    } else {
      hi = mid;
    }
  }

  const auto last_converged = [&]() -> BranchPoint {
    for (auto it = res.probes.rbegin(); it != res.probes.rend(); ++it)
      if (it->converged && it->theta == lo) return *it;
    return detail::make_point(ProblemSpec::critical(coeffs, lo),
                              MonotoneResult{MonotoneStatus::converged, sol_lo});
  };
  BranchPoint best = last_converged();
  double theta_est = hi;

  if (cfg.refine) {
    double theta_a = prev_theta;
    double lambda_a = std::numeric_limits<double>::quiet_NaN();
    if (std::isfinite(theta_a)) {
      for (const auto& p : res.probes)
        if (p.converged && p.theta == theta_a) lambda_a = p.lambda;
    }
    for (int step = 0; step < cfg.refinement_steps && std::abs(best.lambda) > cfg.lambda_target;
         ++step) {
      const double lb2 = best.lambda * best.lambda;
      if (std::isfinite(lambda_a) && lambda_a * lambda_a > lb2) {
        const double la2 = lambda_a * lambda_a;
        theta_est = best.theta + lb2 * (best.theta - theta_a) / (la2 - lb2);
      }
      theta_est = std::clamp(theta_est, best.theta, hi);
      double target = best.theta + 0.9 * (theta_est - best.theta);
      bool accepted = false;
      for (int tries = 0; tries < 20 && !accepted; ++tries) {
        const auto spec = ProblemSpec::critical(coeffs, target);
        BranchPoint p;
        p.theta = target;
        try {
          auto nr = newton_refine(spec, best.solution, cfg.monotone.newton);
          p.solution = nr.solution;
          p.iterations = nr.steps;
          const double slack = 1e-9 * std::max(1.0, best.solution.max());
          if ((nr.solution - best.solution).min() >= -slack) {
            p.lambda = stability_eigenvalue(spec, nr.solution);
            p.energy = energy(spec, nr.solution);
            p.converged = p.lambda >= -1e-8;
          }
        } catch (const Error&) {
          p.solution = best.solution;
        }
        res.probes.push_back(p);
        if (p.converged) {
          theta_a = best.theta;
          lambda_a = best.lambda;
          best = p;
          accepted = true;
        } else {
          target = best.theta + 0.5 * (target - best.theta);
        }
      }
      ++res.refinement_steps;
      if (!accepted) break;
    }
    // Our final estimate: extrapolated zero of λ² from the last two points.
    if (std::isfinite(lambda_a) && lambda_a * lambda_a > best.lambda * best.lambda) {
      const double la2 = lambda_a * lambda_a, lb2 = best.lambda * best.lambda;
      theta_est = best.theta + lb2 * (best.theta - theta_a) / (la2 - lb2);
    }
  }

  res.theta_lo = best.theta;
  res.theta_hi = hi;
  res.solution_lo = best.solution;
  res.theta_star = cfg.refine ? std::clamp(theta_est, best.theta, hi) : 0.5 * (best.theta + hi);
  res.last_branch_point = std::move(best);
  return res;
}

}  // namespace lich
