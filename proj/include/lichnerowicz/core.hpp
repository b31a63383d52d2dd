#pragma once

// Problem definition for  Δu + hu = f u^{q-1} + θ a u^{-(q+1)}  on a flat
// torus: residuals, the energy functionals (plain and ε-regularized), the
// linearized operator, and the first-eigenpair / coercivity / Sobolev-ratio
// solvers built on top of the spectral layer.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "lichnerowicz/errors.hpp"
#include "lichnerowicz/krylov.hpp"
#include "lichnerowicz/torus_grid.hpp"

namespace lich {

/// Floor below which negative powers of u are refused.
inline constexpr double kPositivityFloor = 1e-12;

/// x^e for x > 0, with a repeated-squaring path for small integer exponents.
inline double power(double x, double e) {
  const double r = std::nearbyint(e);
  if (r == e && std::abs(r) <= 32.0) {
    int n = static_cast<int>(r);
    const bool negative = n < 0;
    unsigned m = static_cast<unsigned>(negative ? -n : n);
    double result = 1.0;
    double base = x;
    while (m != 0) {
      if (m & 1u) result *= base;
      base *= base;
      m >>= 1u;
    }
    return negative ? 1.0 / result : result;
  }
  return std::pow(x, e);
}

struct Coefficients {
  enum class Check { strict, relaxed };

  ScalarField h, f, a;

  /// Strict checking enforces a >= 0, max a > 0 and max f > 0. Relaxed
  /// checking keeps only a >= 0 and the shared grid, for degenerate inputs
  /// such as a ≡ 0 or f <= 0.
  Coefficients(ScalarField h_, ScalarField f_, ScalarField a_, Check check = Check::strict)
      : h(std::move(h_)), f(std::move(f_)), a(std::move(a_)) {
    h.require_same_grid(f);
    h.require_same_grid(a);
    if (a.min() < 0.0) throw InvalidArgument("coefficient a must be nonnegative");
    if (check == Check::strict) {
      if (!(a.max() > 0.0)) throw InvalidArgument("coefficient a must not vanish identically");
      if (!(f.max() > 0.0)) throw InvalidArgument("coefficient f must be positive somewhere");
    }
  }

  const GridPtr& grid() const noexcept { return h.grid(); }

  static Coefficients constant(const GridPtr& grid, double h, double f, double a,
                               Check check = Check::strict) {
    return Coefficients(ScalarField(grid, h), ScalarField(grid, f), ScalarField(grid, a), check);
  }

  Coefficients with_a(ScalarField new_a) const {
    return Coefficients(h, f, std::move(new_a), Check::relaxed);
  }
};

struct ProblemSpec {
  Coefficients coeffs;
  double q;
  double theta;
  double epsilon;

  ProblemSpec(Coefficients c, double q_, double theta_, double epsilon_ = 0.0)
      : coeffs(std::move(c)), q(q_), theta(theta_), epsilon(epsilon_) {
    const double crit = coeffs.grid()->critical_exponent();
    if (!(q >= 2.0) || q > crit + 1e-14) throw InvalidArgument("exponent q must lie in [2, 2*]");
    if (!(theta >= 0.0)) throw InvalidArgument("theta must be nonnegative");
    if (!(epsilon >= 0.0)) throw InvalidArgument("epsilon must be nonnegative");
  }

  /// The critical, unregularized equation at parameter θ.
  static ProblemSpec critical(Coefficients c, double theta) {
    const double crit = c.grid()->critical_exponent();
    return ProblemSpec(std::move(c), crit, theta, 0.0);
  }

  double critical_exponent() const { return coeffs.grid()->critical_exponent(); }
  const GridPtr& grid() const { return coeffs.grid(); }
  ProblemSpec with_theta(double t) const { return ProblemSpec(coeffs, q, t, epsilon); }
  ProblemSpec with_q(double qq) const { return ProblemSpec(coeffs, qq, theta, epsilon); }
  ProblemSpec with_epsilon(double e) const { return ProblemSpec(coeffs, q, theta, e); }
};

namespace detail {
inline void require_positive(const ScalarField& u, const char* what) {
  if (!(u.min() >= kPositivityFloor))
    throw PositivityError(std::string(what) + ": field must be positive (min u >= 1e-12)");
}
}  // namespace detail

/// Δu + hu − f u^{q−1} − θ a u^{−(q+1)}.
inline ScalarField residual(const ProblemSpec& spec, const ScalarField& u) {
  detail::require_positive(u, "residual");
  const auto& c = spec.coeffs;
  u.require_same_grid(c.h);
  ScalarField lap = laplacian(u);
  auto uv = u.values();
  auto hv = c.h.values();
  auto fv = c.f.values();
  auto av = c.a.values();
  auto lv = lap.values();
  std::vector<double> out(u.size());
  const double e = spec.q - 2.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = uv[i];
    const double p = power(x, e);  // u^{q-2}
    out[i] = lv[i] + hv[i] * x - fv[i] * p * x - spec.theta * av[i] / (p * x * x * x);
  }
  return ScalarField(u.grid(), std::move(out));
}

/// I^q_ε (ε > 0, any u) or I^q with θa (ε = 0, positive u). At q = 2* and
/// ε = 0 this is the energy I_θ of the critical equation.
inline double energy(const ProblemSpec& spec, const ScalarField& u) {
  const auto& c = spec.coeffs;
  u.require_same_grid(c.h);
  if (spec.epsilon == 0.0) detail::require_positive(u, "energy");
  const double q = spec.q;
  auto uv = u.values();
  auto hv = c.h.values();
  auto fv = c.f.values();
  auto av = c.a.values();
  double quad = 0.0, nonlin = 0.0, singular = 0.0;
  for (std::size_t i = 0; i < uv.size(); ++i) {
    const double x = uv[i];
    quad += hv[i] * x * x;
    if (spec.epsilon > 0.0) {
      const double xp = x > 0.0 ? x : 0.0;
      nonlin += fv[i] * (xp > 0.0 ? power(xp, q) : 0.0);
      singular += av[i] / power(spec.epsilon + xp * xp, 0.5 * q);
    } else {
      const double xq = power(x, q);
      nonlin += fv[i] * xq;
      singular += av[i] / xq;
    }
  }
  const double w = u.grid()->weight();
  return 0.5 * (dirichlet_energy(u) + quad * w) - nonlin * w / q + spec.theta * singular * w / q;
}

namespace detail {
// L²-gradient of the regularized functional; for ε = 0 it reduces to the
// residual formula on positive fields.
inline ScalarField regularized_gradient(const ProblemSpec& spec, const ScalarField& u, double eps) {
  const auto& c = spec.coeffs;
  u.require_same_grid(c.h);
  ScalarField lap = laplacian(u);
  auto uv = u.values();
  auto hv = c.h.values();
  auto fv = c.f.values();
  auto av = c.a.values();
  auto lv = lap.values();
  const double q = spec.q;
  std::vector<double> out(u.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = uv[i];
    const double xp = x > 0.0 ? x : 0.0;
    double g = lv[i] + hv[i] * x;
    if (xp > 0.0) {
      g -= fv[i] * power(xp, q - 1.0);
      g -= spec.theta * av[i] * xp / power(eps + xp * xp, 0.5 * q + 1.0);
    }
    out[i] = g;
  }
  return ScalarField(u.grid(), std::move(out));
}
}  // namespace detail

/// Δu + hu − f(u⁺)^{q−1} − θ a u⁺ (ε + (u⁺)²)^{−q/2−1}; requires ε > 0.
inline ScalarField energy_gradient(const ProblemSpec& spec, const ScalarField& u) {
  if (!(spec.epsilon > 0.0)) throw InvalidArgument("energy_gradient requires epsilon > 0");
  return detail::regularized_gradient(spec, u, spec.epsilon);
}

/// h − (q−1) f u^{q−2} + (q+1) θ a u^{−(q+2)}.
inline ScalarField linearized_potential(const ProblemSpec& spec, const ScalarField& u) {
  detail::require_positive(u, "linearized_potential");
  const auto& c = spec.coeffs;
  u.require_same_grid(c.h);
  auto uv = u.values();
  auto hv = c.h.values();
  auto fv = c.f.values();
  auto av = c.a.values();
  const double q = spec.q;
  std::vector<double> out(u.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = uv[i];
    const double p = power(x, q - 2.0);
    out[i] = hv[i] - (q - 1.0) * fv[i] * p + (q + 1.0) * spec.theta * av[i] / (p * x * x * x * x);
  }
  return ScalarField(u.grid(), std::move(out));
}

/// Potential of the Hessian of I^q_ε (ε > 0).
inline ScalarField regularized_potential(const ProblemSpec& spec, const ScalarField& u) {
  if (!(spec.epsilon > 0.0)) throw InvalidArgument("regularized_potential requires epsilon > 0");
  const auto& c = spec.coeffs;
  auto uv = u.values();
  auto hv = c.h.values();
  auto fv = c.f.values();
  auto av = c.a.values();
  const double q = spec.q;
  const double m = 0.5 * q + 1.0;
  std::vector<double> out(u.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = uv[i];
    double w = hv[i];
    if (x > 0.0) {
      const double s = spec.epsilon + x * x;
      w -= (q - 1.0) * fv[i] * power(x, q - 2.0);
      w -= spec.theta * av[i] * (1.0 / power(s, m) - 2.0 * m * x * x / power(s, m + 1.0));
    }
    out[i] = w;
  }
  return ScalarField(u.grid(), std::move(out));
}

/// Δv + W(u) v with the linearized potential at u.
inline ScalarField linearized_apply(const ProblemSpec& spec, const ScalarField& u,
                                    const ScalarField& v) {
  return laplacian(v) + linearized_potential(spec, u) * v;
}

// ---------------------------------------------------------------------------
// Equations in the form Newton consumes: residual() plus the Jacobian
// potential, Jacobian = Δ + potential().

/// The unregularized equation (any q in [2, 2*]); needs positive iterates.
struct LichnerowiczEquation {
  ProblemSpec spec;
  static constexpr bool requires_positive = true;
  ScalarField residual(const ScalarField& u) const { return lich::residual(spec, u); }
  ScalarField potential(const ScalarField& u) const { return linearized_potential(spec, u); }
};

/// Euler–Lagrange equation of I^q_ε (ε > 0), defined for every u.
struct RegularizedEquation {
  ProblemSpec spec;
  static constexpr bool requires_positive = false;
  ScalarField residual(const ScalarField& u) const { return energy_gradient(spec, u); }
  ScalarField potential(const ScalarField& u) const { return regularized_potential(spec, u); }
};

// ---------------------------------------------------------------------------
// First eigenpair of Δ + W.

struct EigenOptions {
  double tolerance = 1e-10;
  int max_iterations = 2000;
  HelmholtzOptions inner{1e-13, 4000};
};

struct EigenResult {
  double lambda = 0.0;
  ScalarField vector;
  int iterations = 0;
};

/// Rayleigh quotient ∫(|∇v|² + W v²) / ∫v².
inline double rayleigh_quotient(const ScalarField& potential, const ScalarField& v) {
  return h1h_quadratic_form(v, potential) / l2_inner(v, v);
}

/// Smallest eigenvalue of Δ + W and its positive, L²-normalized eigenvector,
/// by inverse iteration on Δ + W − σ with σ = min W − 1.
inline EigenResult smallest_eigenpair(const ScalarField& potential, const EigenOptions& opt = {}) {
  const GridPtr& grid = potential.grid();
  const double sigma = potential.min() - 1.0;
  const ScalarField shifted = potential - sigma;
  ScalarField x(grid, 1.0 / std::sqrt(grid->volume()));
  double lambda = rayleigh_quotient(potential, x);
  for (int it = 1; it <= opt.max_iterations; ++it) {
    ScalarField y = helmholtz_solve(shifted, x, opt.inner);
    const double norm = std::sqrt(l2_inner(y, y));
    y = y / norm;
    if (l2_inner(y, x) < 0.0) y = -y;
    const double next = rayleigh_quotient(potential, y);
    const double change = std::abs(next - lambda);
    const double step = std::sqrt(l2_inner(y - x, y - x));
    x = std::move(y);
    lambda = next;
    if (change <= opt.tolerance * std::max(1.0, std::abs(lambda)) && step <= 1e-7) {
      if (integrate(x) < 0.0) x = -x;
      if (!(x.min() > 0.0))
        throw PositivityError("first eigenvector is not positive (under-resolved potential)");
      return {lambda, std::move(x), it};
    }
  }
  throw ConvergenceFailure("smallest_eigenpair: iteration cap exceeded");
}

struct CoercivityResult {
  bool coercive = false;
  double lambda_min = 0.0;
};

inline CoercivityResult coercivity_check(const ScalarField& h, const EigenOptions& opt = {}) {
  const auto eig = smallest_eigenpair(h, opt);
  // Exact zero eigenvalues come back as roundoff-sized numbers.
  const double lam = std::abs(eig.lambda) < 1e-12 ? 0.0 : eig.lambda;
  return {lam > 0.0, lam};
}

// ---------------------------------------------------------------------------
// Lower estimate of the Sobolev ratio constant S_{h,q}.

struct SobolevEstimate {
  double value = 0.0;
  std::vector<double> history;  // nondecreasing
  ScalarField maximizer;
  bool heuristic = true;
};

/// Projected (H¹_h-sphere) gradient ascent on ‖u‖_q^q / ‖u‖_{H¹_h}^q from
/// the constant function. Every accepted step increases the ratio, so the
/// history is nondecreasing and each entry is a lower bound for S_{h,q}.
inline SobolevEstimate sobolev_constant_estimate(const ScalarField& h, double q,
                                                 int iterations = 200) {
  const double crit = h.grid()->critical_exponent();
  if (!(q >= 2.0) || q > crit + 1e-14) throw InvalidArgument("exponent q must lie in [2, 2*]");
  const auto coercivity = coercivity_check(h);
  if (!coercivity.coercive) throw NonCoercive("sobolev_constant_estimate requires coercive h");

  auto ratio = [&](const ScalarField& u) {
    double s = 0.0;
    for (double v : u.values()) s += std::pow(std::abs(v), q);
    s *= u.grid()->weight();
    return std::pair{s, h1h_norm(u, h)};
  };
  auto normalize = [&](const ScalarField& u) { return u / h1h_norm(u, h); };

  SobolevEstimate est;
  ScalarField u = normalize(ScalarField(h.grid(), 1.0));
  double value = ratio(u).first;
  est.history.push_back(value);
  double alpha = 1.0;
  const HelmholtzOptions inner{1e-12, 4000};
  for (int it = 0; it < iterations; ++it) {
    const double lq = ratio(u).first;
    ScalarField power_term = u.map([q](double v) { return std::pow(std::abs(v), q - 2.0) * v; });
    ScalarField riesz = helmholtz_solve(h, power_term, inner);
    ScalarField direction = axpy(riesz / lq, -1.0, u);
    const double dnorm = h1h_norm(direction, h);
    if (dnorm <= 1e-14) break;
    bool accepted = false;
    for (int halving = 0; halving < 40; ++halving) {
      ScalarField trial = normalize(axpy(u, alpha, direction));
      const double tv = ratio(trial).first;
      if (tv > value) {
        u = std::move(trial);
        value = tv;
        accepted = true;
        alpha = std::min(alpha * 2.0, 1e3);
        break;
      }
      alpha *= 0.5;
    }
    est.history.push_back(value);
    if (!accepted) break;
  }
  est.value = value;
  est.maximizer = std::move(u);
  return est;
}

}  // namespace lich
