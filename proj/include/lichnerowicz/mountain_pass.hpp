#pragma once

// Second (mountain-pass) solution: ε-regularized subcritical ball
// minimization, a discrete minimax path deformation, continuation in
// (ε, q) toward the critical equation, and the explicit two-solution
// certificate built from the Sobolev ratio estimate.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "lichnerowicz/core.hpp"
#include "lichnerowicz/errors.hpp"
#include "lichnerowicz/minimal_branch.hpp"
#include "lichnerowicz/newton.hpp"
#include "lichnerowicz/torus_grid.hpp"

namespace lich {

namespace detail {

// Riesz representative in H¹_h of the L²-gradient: (Δ + h)^{-1} g.
inline ScalarField sobolev_gradient(const ProblemSpec& spec, const ScalarField& u) {
  const ScalarField g = spec.epsilon > 0.0 ? energy_gradient(spec, u) : residual(spec, u);
  return helmholtz_solve(spec.coeffs.h, g, {1e-12, 4000});
}

inline double hnorm(const ScalarField& u, const ScalarField& h) { return h1h_norm(u, h); }

inline bool admissible(const ProblemSpec& spec, const ScalarField& u) {
  return spec.epsilon > 0.0 || u.min() >= kPositivityFloor;
}

// Energy, or +∞ where the unregularized functional is undefined.
inline double energy_or_inf(const ProblemSpec& spec, const ScalarField& u) {
  if (!admissible(spec, u)) return std::numeric_limits<double>::infinity();
  return energy(spec, u);
}

inline NewtonResult solve_euler_lagrange(const ProblemSpec& spec, const ScalarField& u0,
                                         const NewtonConfig& cfg) {
  if (spec.epsilon > 0.0) return newton_solve(RegularizedEquation{spec}, u0, cfg);
  return newton_solve(LichnerowiczEquation{spec}, u0, cfg);
}

}  // namespace detail

// ---------------------------------------------------------------------------

struct DescentConfig {
  double gradient_tolerance = 1e-8;
  int max_iterations = 20000;
  NewtonConfig newton{};
};

struct BallMinimum {
  ScalarField field;
  double energy = 0.0;
  double gradient_norm = 0.0;  // constrained, in H¹_h
  int iterations = 0;
  bool interior = false;
  bool refined = false;
};

/// Projected Sobolev-gradient descent of I^q_ε on the H¹_h ball of radius
/// rho about center; interior positive limits are polished by Newton.
inline BallMinimum minimize_in_ball(const ProblemSpec& spec, const ScalarField& center,
                                    double rho, const DescentConfig& cfg = {}) {
  if (!(spec.epsilon > 0.0)) throw InvalidArgument("minimize_in_ball requires epsilon > 0");
  if (!(spec.q < spec.critical_exponent()))
    throw InvalidArgument("minimize_in_ball requires a subcritical exponent");
  if (!(rho > 0.0)) throw InvalidArgument("minimize_in_ball: radius must be positive");
  const ScalarField& h = spec.coeffs.h;

  auto project = [&](const ScalarField& u) {
    const ScalarField d = u - center;
    const double dn = detail::hnorm(d, h);
    return dn > rho ? axpy(center, rho / dn, d) : u;
  };
  auto constrained = [&](const ScalarField& u, const ScalarField& G) {
    const ScalarField d = u - center;
    const double dn = detail::hnorm(d, h);
    if (dn >= rho * (1.0 - 1e-10)) {
      const double gd = h1h_inner(G, d, h);
      if (gd < 0.0) return axpy(G, -gd / (dn * dn), d);
    }
    return G;
  };

  BallMinimum out;
  ScalarField u = center;
  double E = energy(spec, u);
  double step = 0.5;
  ScalarField G = detail::sobolev_gradient(spec, u);
  double gnorm = detail::hnorm(constrained(u, G), h);
  int it = 0;
  for (; it < cfg.max_iterations && gnorm > cfg.gradient_tolerance; ++it) {
    bool accepted = false;
    for (int k = 0; k < 60; ++k, step *= 0.5) {
      ScalarField trial = project(axpy(u, -step, G));
      const double Et = energy(spec, trial);
      bool ok = Et < E;
      std::optional<ScalarField> Gt;
      double gt = 0.0;
      if (!ok && std::abs(Et - E) <= 1e-13 * std::max(1.0, std::abs(E))) {
        // Energy differences are below roundoff; judge by the gradient.
        Gt = detail::sobolev_gradient(spec, trial);
        gt = detail::hnorm(constrained(trial, *Gt), h);
        ok = gt < gnorm;
      }
      if (ok) {
        if (!Gt) {
          Gt = detail::sobolev_gradient(spec, trial);
          gt = detail::hnorm(constrained(trial, *Gt), h);
        }
        u = std::move(trial);
        E = Et;
        G = std::move(*Gt);
        gnorm = gt;
        accepted = true;
        step = std::min(2.0 * step, 2.0);
        break;
      }
    }
    if (!accepted) break;
  }
  out.iterations = it;
  out.interior = detail::hnorm(u - center, h) < rho * (1.0 - 1e-8);
  if (out.interior && u.min() > 0.0 && gnorm > cfg.newton.tolerance) {
    try {
      auto nr = newton_solve(RegularizedEquation{spec}, u, cfg.newton);
      if (detail::hnorm(nr.solution - center, h) < rho && energy(spec, nr.solution) <= E + 1e-12) {
        u = std::move(nr.solution);
        E = energy(spec, u);
        gnorm = detail::hnorm(detail::sobolev_gradient(spec, u), h);
        out.refined = true;
      }
    } catch (const Error&) {
      // keep the descent iterate
    }
  }
  out.field = std::move(u);
  out.energy = E;
  out.gradient_norm = gnorm;
  if (gnorm > cfg.gradient_tolerance && !out.refined)
    throw ConvergenceFailure("minimize_in_ball: descent stalled with gradient norm " +
                             std::to_string(gnorm));
  return out;
}

// ---------------------------------------------------------------------------

struct SeparatingSphere {
  double rho = 0.0;
  double eta = 0.0;
  double sampled_inf = 0.0;
  double center_energy = 0.0;
};

/// Random smooth direction: a short cosine series with |k_i| <= 2.
inline ScalarField random_smooth_direction(const GridPtr& grid, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> amp(-1.0, 1.0), ph(0.0, kTwoPi);
  std::uniform_int_distribution<int> k(-2, 2);
  std::vector<CosineTerm> terms;
  for (int j = 0; j < 4; ++j) {
    CosineTerm t{amp(rng), {}, ph(rng)};
    for (int d = 0; d < grid->dim(); ++d) t.wavevector.push_back(k(rng));
    terms.push_back(std::move(t));
  }
  return cosine_series(grid, amp(rng), terms);
}

/// Sphere S = {‖u − center‖_{H¹_h} = ρ} on which the sampled energy exceeds
/// I(center), and the level η separating it: 99% of the way from I(center)
/// to the sampled infimum. Samples are ± the lowest Hessian mode plus
/// random smooth directions; ρ halves from ‖center‖/2 until the barrier holds.
inline SeparatingSphere separating_sphere(const ProblemSpec& spec, const ScalarField& center,
                                          std::mt19937_64& rng, int samples = 64) {
  const ScalarField& h = spec.coeffs.h;
  const GridPtr& grid = center.grid();
  std::vector<ScalarField> dirs;
  {
    const ScalarField W = spec.epsilon > 0.0 ? regularized_potential(spec, center)
                                             : linearized_potential(spec, center);
    ScalarField e = smallest_eigenpair(W).vector;
    e = e / detail::hnorm(e, h);
    dirs.push_back(e);
    dirs.push_back(-e);
  }
  while (static_cast<int>(dirs.size()) < samples) {
    ScalarField d = random_smooth_direction(grid, rng);
    const double dn = detail::hnorm(d, h);
    if (dn > 0.0) dirs.push_back(d / dn);
  }

  SeparatingSphere s;
  s.center_energy = energy(spec, center);
  const double margin = 1e-12 * std::max(1.0, std::abs(s.center_energy));
  double rho = 0.5 * detail::hnorm(center, h);
  if (!(rho > 0.0)) rho = 0.5;
  for (int halving = 0; halving < 40; ++halving, rho *= 0.5) {
    double inf = std::numeric_limits<double>::infinity();
    bool ok = true;
    for (const auto& d : dirs) {
      const double e = detail::energy_or_inf(spec, axpy(center, rho, d));
      if (!std::isfinite(e) || !(e > s.center_energy + margin)) {
        ok = false;
        break;
      }
      inf = std::min(inf, e);
    }
    if (ok) {
      s.rho = rho;
      s.sampled_inf = inf;
      s.eta = s.center_energy + 0.99 * (inf - s.center_energy);
      return s;
    }
  }
  throw ConvergenceFailure("separating_sphere: no radius with a sampled energy barrier");
}

/// T·ψ with ψ = 1 when f > 0 everywhere, else f⁺ + 0.01 max f scaled to
/// sup 1; T doubles until the energy is below η and the point lies outside
/// the separating ball.
inline ScalarField high_endpoint(const ProblemSpec& spec, const ScalarField& center, double rho,
                                 double eta, double t_start) {
  const auto& f = spec.coeffs.f;
  ScalarField psi = f.min() > 0.0 ? ScalarField(f.grid(), 1.0)
                                  : positive_part(f) + 0.01 * f.max();
  psi = psi / psi.max();
  double T = std::max(t_start, 1e-3);
  for (int k = 0; k < 80; ++k, T *= 2.0) {
    ScalarField u = psi * T;
    if (detail::hnorm(u - center, spec.coeffs.h) > rho && energy(spec, u) < eta) return u;
  }
  throw ConvergenceFailure("high_endpoint: energy does not drop below eta along T psi");
}

// ---------------------------------------------------------------------------

struct MountainPassConfig {
  int path_size = 33;
  int max_iterations = 3000;
  double stall_tolerance = 1e-6;  // on the perpendicular gradient at the max point
  int reparametrize_every = 5;
  NewtonConfig newton{};
};

struct MountainPassResult {
  ScalarField v;
  double c_level = 0.0;
  double path_max = 0.0;  // max energy along the final path
  std::vector<double> max_history;  // nonincreasing
  int iterations = 0;
};

namespace detail {

inline std::vector<ScalarField> resample_polyline(const std::vector<ScalarField>& nodes,
                                                  const ScalarField& h, int count) {
  std::vector<double> arc(nodes.size(), 0.0);
  for (std::size_t i = 1; i < nodes.size(); ++i)
    arc[i] = arc[i - 1] + hnorm(nodes[i] - nodes[i - 1], h);
  const double total = arc.back();
  std::vector<ScalarField> out;
  out.reserve(count);
  out.push_back(nodes.front());
  std::size_t seg = 1;
  for (int k = 1; k < count - 1; ++k) {
    const double s = total * k / (count - 1);
    while (seg + 1 < nodes.size() && arc[seg] < s) ++seg;
    const double len = arc[seg] - arc[seg - 1];
    const double t = len > 0.0 ? (s - arc[seg - 1]) / len : 0.0;
    out.push_back(axpy(nodes[seg - 1], t, nodes[seg] - nodes[seg - 1]));
  }
  out.push_back(nodes.back());
  return out;
}

}  // namespace detail

/// Discrete minimax: the highest interior path point takes damped steps
/// along the component of the Sobolev gradient normal to the path, the
/// path is re-equispaced in H¹_h arclength, and the stalled maximum,
/// located along the polyline and Newton-refined, is the pass point.
inline MountainPassResult mountain_pass_solve(const ProblemSpec& spec, const ScalarField& u_low,
                                              const ScalarField& u_high, double eta,
                                              const MountainPassConfig& cfg = {},
                                              const std::optional<ScalarField>& via = std::nullopt) {
  if (cfg.path_size < 5) throw InvalidArgument("mountain_pass_solve: path_size must be >= 5");
  const ScalarField& h = spec.coeffs.h;
  const double e_low = detail::energy_or_inf(spec, u_low);
  const double e_high = detail::energy_or_inf(spec, u_high);
  if (!(e_low < eta) || !(e_high < eta))
    throw InvalidArgument("mountain_pass_solve: endpoints must lie below the separating level");

  std::vector<ScalarField> nodes{u_low};
  if (via) nodes.push_back(*via);
  nodes.push_back(u_high);
  std::vector<ScalarField> path = detail::resample_polyline(nodes, h, cfg.path_size);
  const int m = cfg.path_size;
  std::vector<double> E(m);
  for (int i = 0; i < m; ++i) E[i] = detail::energy_or_inf(spec, path[i]);

  auto argmax_interior = [&]() {
    int j = 1;
    for (int i = 2; i < m - 1; ++i)
      if (E[i] > E[j]) j = i;
    return j;
  };

  MountainPassResult out;
  double step = 0.5;
  int it = 0;
  for (; it < cfg.max_iterations; ++it) {
    const int j = argmax_interior();
    const double emax = *std::max_element(E.begin(), E.end());
    out.max_history.push_back(emax);
    if (!(E[j] >= std::max(E.front(), E.back())))
      throw ConvergenceFailure("mountain_pass_solve: path collapsed onto an endpoint");
    if (!std::isfinite(E[j])) throw PositivityError("mountain_pass_solve: path left the positive cone");

    const ScalarField G = detail::sobolev_gradient(spec, path[j]);
    ScalarField tau = path[j + 1] - path[j - 1];
    const double tn = detail::hnorm(tau, h);
    ScalarField Gp = G;
    if (tn > 0.0) {
      tau = tau / tn;
      Gp = axpy(G, -h1h_inner(G, tau, h), tau);
    }
    const double gp = detail::hnorm(Gp, h);
    if (gp <= cfg.stall_tolerance) break;

    bool moved = false;
    for (int k = 0; k < 40; ++k, step *= 0.5) {
      ScalarField trial = axpy(path[j], -step, Gp);
      const double et = detail::energy_or_inf(spec, trial);
      if (et < E[j]) {
        path[j] = std::move(trial);
        E[j] = et;
        moved = true;
        step = std::min(2.0 * step, 2.0);
        break;
      }
    }
    if (!moved) break;

    if (cfg.reparametrize_every > 0 && (it + 1) % cfg.reparametrize_every == 0) {
      auto candidate = detail::resample_polyline(path, h, m);
      std::vector<double> ce(m);
      for (int i = 0; i < m; ++i) ce[i] = detail::energy_or_inf(spec, candidate[i]);
      const double old_max = *std::max_element(E.begin(), E.end());
      if (*std::max_element(ce.begin(), ce.end()) <= old_max) {
        path = std::move(candidate);
        E = std::move(ce);
      }
    }
  }
  out.iterations = it;

  // Maximum along the polyline through the neighbours of the top vertex.
  const int j = argmax_interior();
  auto along = [&](double s) {
    return s <= 1.0 ? axpy(path[j - 1], s, path[j] - path[j - 1])
                    : axpy(path[j], s - 1.0, path[j + 1] - path[j]);
  };
  double a = 0.0, b = 2.0;
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
  double f1 = detail::energy_or_inf(spec, along(x1)), f2 = detail::energy_or_inf(spec, along(x2));
  for (int k = 0; k < 60; ++k) {
    if (f1 > f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - gr * (b - a);
      f1 = detail::energy_or_inf(spec, along(x1));
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + gr * (b - a);
      f2 = detail::energy_or_inf(spec, along(x2));
    }
  }
  const ScalarField top = along(0.5 * (a + b));
  out.path_max = std::max(*std::max_element(E.begin(), E.end()),
                          detail::energy_or_inf(spec, top));

  auto nr = detail::solve_euler_lagrange(spec, top, cfg.newton);
  out.v = std::move(nr.solution);
  out.c_level = energy(spec, out.v);
  if (sup_distance(out.v, u_low) <= 1e-8)
    throw ConvergenceFailure("mountain_pass_solve: refinement fell back onto the low endpoint");
  if (!(out.c_level >= eta))
    throw ConvergenceFailure("mountain_pass_solve: pass level below the separating level");
  return out;
}

// ---------------------------------------------------------------------------

struct ContinuationStage {
  double q = 0.0;
  double epsilon = 0.0;
  double rho = 0.0;
  double eta = 0.0;
  double low_energy = 0.0;
  double pass_level = 0.0;
  double low_sup = 0.0;
  double second_sup = 0.0;
  double low_min = 0.0;
  double second_min = 0.0;
  double low_difference = std::numeric_limits<double>::quiet_NaN();     // sup-norm vs previous stage
  double second_difference = std::numeric_limits<double>::quiet_NaN();
};

struct CriticalLimitConfig {
  MonotoneConfig monotone{};
  DescentConfig descent{};
  MountainPassConfig pass{};
  int sphere_samples = 64;
  std::uint64_t seed = 0;
  double separation_threshold = 1e-3;
  double blowup_factor = 1e3;  // sup growth of the second family flagged as blow-up
};

struct TwoSolutions {
  BranchPoint minimal;
  ScalarField low;  // critical limit of the ball minima
  ScalarField second;
  double low_energy = 0.0;
  double second_energy = 0.0;
  double pass_level = 0.0;
  std::vector<double> pass_level_history;
  double eta = 0.0;
  double rho = 0.0;
  double separation = 0.0;
  bool merged = false;
  bool blowup = false;
  double minimality_gap = 0.0;  // max(minimal − second), ≤ 1e-8 expected
  double max_decrease = 0.0;    // of the monotone iteration for the minimal solution
  double max_scaled_decrease = 0.0;
  double low_residual = 0.0;
  double second_residual = 0.0;
  std::vector<ContinuationStage> stages;
};

inline std::vector<double> default_epsilon_schedule() {
  return {1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6};
}

inline std::vector<double> default_q_schedule(int dim) {
  const double crit = 2.0 * dim / (dim - 2.0);
  std::vector<double> q;
  for (int m = 1; m <= 8; ++m) q.push_back(crit - std::ldexp(1.0, -m));
  return q;
}

/// Minimal solution plus a mountain-pass solution of the critical equation,
/// reached through ε ↓ 0 at the first exponent and then q ↑ 2* at the last
/// ε, with warm starts carried stage to stage.
inline TwoSolutions critical_limit(const Coefficients& coeffs, double theta,
                                   const std::vector<double>& eps_schedule,
                                   const std::vector<double>& q_schedule,
                                   const CriticalLimitConfig& cfg = {}) {
  if (eps_schedule.empty() || q_schedule.empty())
    throw InvalidArgument("critical_limit: schedules must be nonempty");
  for (std::size_t i = 1; i < eps_schedule.size(); ++i)
    if (!(eps_schedule[i] < eps_schedule[i - 1]))
      throw InvalidArgument("critical_limit: epsilon schedule must be strictly decreasing");
  for (std::size_t i = 1; i < q_schedule.size(); ++i)
    if (!(q_schedule[i] > q_schedule[i - 1]))
      throw InvalidArgument("critical_limit: q schedule must be strictly increasing");
  const double crit = coeffs.grid()->critical_exponent();
  if (!(q_schedule.back() < crit)) throw InvalidArgument("critical_limit: q schedule must stay below 2*");

  TwoSolutions out;
  const auto crit_spec = ProblemSpec::critical(coeffs, theta);
  {
    const auto r = monotone_iterate(crit_spec, build_subsolution(coeffs, theta), cfg.monotone);
    if (!r.converged()) throw ConvergenceFailure("critical_limit: no minimal solution at this theta");
    out.minimal = detail::make_point(crit_spec, r);
    out.max_decrease = r.max_decrease;
    out.max_scaled_decrease = r.max_scaled_decrease;
  }

  std::vector<std::pair<double, double>> stages;  // (q, ε)
  for (double e : eps_schedule) stages.emplace_back(q_schedule.front(), e);
  for (std::size_t i = 1; i < q_schedule.size(); ++i) stages.emplace_back(q_schedule[i], eps_schedule.back());

  std::mt19937_64 rng(cfg.seed);
  ScalarField center = out.minimal.solution;
  std::optional<ScalarField> prev_second;
  double first_second_sup = 0.0;
  for (const auto& [q, eps] : stages) {
    const ProblemSpec spec(coeffs, q, theta, eps);
    // The previous stage's minimum is only near this stage's; descend first
    // so the sphere is centred at a local minimum.
    const auto pre = minimize_in_ball(spec, center, 0.5 * detail::hnorm(center, coeffs.h), cfg.descent);
    if (!pre.interior) throw ConvergenceFailure("critical_limit: local minimum left the search ball");
    const auto sphere = separating_sphere(spec, pre.field, rng, cfg.sphere_samples);
    const auto low = minimize_in_ball(spec, pre.field, sphere.rho, cfg.descent);
    if (!(low.energy < sphere.eta))
      throw ConvergenceFailure("critical_limit: ball minimum not below the separating level");
    const ScalarField high = high_endpoint(spec, pre.field, sphere.rho, sphere.eta, 2.0 * center.max());
    std::optional<ScalarField> via;
    if (prev_second && detail::energy_or_inf(spec, *prev_second) >= sphere.eta) via = prev_second;
    const auto mp = mountain_pass_solve(spec, low.field, high, sphere.eta, cfg.pass, via);

    ContinuationStage st;
    st.q = q;
    st.epsilon = eps;
    st.rho = sphere.rho;
    st.eta = sphere.eta;
    st.low_energy = low.energy;
    st.pass_level = mp.c_level;
    st.low_sup = low.field.max();
    st.second_sup = mp.v.max();
    st.low_min = low.field.min();
    st.second_min = mp.v.min();
    if (!out.stages.empty()) {
      st.low_difference = sup_distance(low.field, center);
      st.second_difference = sup_distance(mp.v, *prev_second);
    } else {
      first_second_sup = st.second_sup;
    }
    out.stages.push_back(st);
    out.pass_level_history.push_back(mp.c_level);
    center = low.field;
    prev_second = mp.v;
    if (st.second_sup > cfg.blowup_factor * first_second_sup) {
      out.blowup = true;
      return out;
    }
  }

  NewtonConfig final_newton = cfg.monotone.newton;
  final_newton.tolerance = std::min(final_newton.tolerance, 1e-10);
  auto u = newton_refine(crit_spec, center, final_newton);
  auto v = newton_refine(crit_spec, *prev_second, final_newton);
  out.low = u.solution;
  out.second = v.solution;
  out.low_residual = u.residual_norm;
  out.second_residual = v.residual_norm;
  out.low_energy = energy(crit_spec, out.low);
  out.second_energy = energy(crit_spec, out.second);
  out.pass_level = out.second_energy;
  out.separation = sup_distance(out.low, out.second);
  out.merged = out.separation < cfg.separation_threshold;
  out.minimality_gap = (out.minimal.solution - out.second).max();

  const auto sphere = separating_sphere(crit_spec, out.low, rng, cfg.sphere_samples);
  out.eta = sphere.eta;
  out.rho = sphere.rho;
  return out;
}

// ---------------------------------------------------------------------------

struct Certificate {
  int n = 0;
  double C_n = 0.0;
  double S_h_estimate = 0.0;
  bool S_h_heuristic = true;
  double max_abs_f = 0.0;
  double t0 = 0.0;
  double t1 = 0.0;
  double phi_t0 = 0.0;
  double weight_integral = 0.0;  // ∫ a / φ^{2*}
  double theta1_lower_bound = 0.0;
  ScalarField test_function;
};

/// (1/(n−2)) (2(n−1))^{−2*/2}.
inline double certificate_constant(int n) {
  if (n < 3 || n > 5) throw InvalidArgument("dimension out of range (must be 3, 4 or 5)");
  // (2(n-1))^{n/(n-2)} as an integer power and an exact root, so the
  // constants 1/64, 1/72, 1/96 come out exactly.
  const double p = std::pow(2.0 * (n - 1.0), n);
  const double root = n == 3 ? p : n == 4 ? std::sqrt(p) : std::cbrt(p);
  return 1.0 / ((n - 2.0) * root);
}

struct CertificateScalars {
  double t0, t1, phi_t0;
};

/// t0, t1 and Φ(t0) for a given product S_h · max|f|.
inline CertificateScalars certificate_scalars(int n, double product) {
  if (!(product > 0.0)) throw InvalidArgument("certificate: S_h max|f| must be positive");
  const double crit = 2.0 * n / (n - 2.0);
  const double t0 = std::pow(1.0 / product, 1.0 / (crit - 2.0));
  return {t0, t0 / std::sqrt(2.0 * (n - 1.0)), std::pow(product, -(n - 2.0) / 2.0) / n};
}

inline Certificate certificate_theta1(const Coefficients& coeffs,
                                      const std::optional<ScalarField>& test_fn = std::nullopt,
                                      int sobolev_iterations = 200) {
  const GridPtr& grid = coeffs.grid();
  const int n = grid->dim();
  const double crit = grid->critical_exponent();
  if (!(coeffs.f.max() > 0.0)) throw InvalidArgument("certificate: max f must be positive");
  Certificate c;
  c.n = n;
  c.C_n = certificate_constant(n);
  const auto est = sobolev_constant_estimate(coeffs.h, crit, sobolev_iterations);
  c.S_h_estimate = est.value;
  c.S_h_heuristic = est.heuristic;
  c.max_abs_f = coeffs.f.sup_norm();
  const double product = c.S_h_estimate * c.max_abs_f;
  const auto sc = certificate_scalars(n, product);
  c.t0 = sc.t0;
  c.t1 = sc.t1;
  c.phi_t0 = sc.phi_t0;

  ScalarField phi = test_fn ? *test_fn : ScalarField(grid, 1.0);
  phi.require_same_grid(coeffs.a);
  if (!(phi.min() > 0.0)) throw PositivityError("certificate: test function must be positive");
  phi = phi / h1h_norm(phi, coeffs.h);
  c.weight_integral = integrate(coeffs.a.zip(phi, [crit](double a, double p) {
    return a / std::pow(p, crit);
  }));
  c.theta1_lower_bound = c.C_n * std::pow(product, 1.0 - n) / c.weight_integral;
  c.test_function = std::move(phi);
  return c;
}

}  // namespace lich
