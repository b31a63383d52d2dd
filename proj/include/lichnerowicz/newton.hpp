#pragma once

// Damped Newton iteration on a nonlinear field equation R(u) = 0 whose
// Jacobian is the Schrödinger-type operator Δ + W(u).

#include <cmath>
#include <concepts>
#include <string>
#include <vector>

#include "lichnerowicz/core.hpp"
#include "lichnerowicz/errors.hpp"
#include "lichnerowicz/krylov.hpp"
#include "lichnerowicz/torus_grid.hpp"

namespace lich {

template <class E>
concept FieldEquation = requires(const E& e, const ScalarField& u) {
  { e.residual(u) } -> std::convertible_to<ScalarField>;
  { e.potential(u) } -> std::convertible_to<ScalarField>;
  { E::requires_positive } -> std::convertible_to<bool>;
};

struct NewtonConfig {
  double tolerance = 1e-10;  // on ‖R‖∞
  int max_steps = 50;
  int max_halvings = 30;
  double positivity_floor = kPositivityFloor;
  GmresOptions linear{};
};

struct NewtonResult {
  ScalarField solution;
  int steps = 0;
  double residual_norm = 0.0;
  std::vector<double> history;  // ‖R‖∞ before each step and at the end
  /// Set when the residual contracted only linearly for three or more
  /// consecutive steps: the signature of a singular Jacobian at the root.
  bool singular_signal = false;
};

template <FieldEquation E>
NewtonResult newton_solve(const E& eq, const ScalarField& u0, const NewtonConfig& cfg = {}) {
  if constexpr (E::requires_positive) {
    if (!(u0.min() >= cfg.positivity_floor))
      throw PositivityError("newton: initial guess must be positive");
  }
  NewtonResult out;
  ScalarField u = u0;
  ScalarField r = eq.residual(u);
  double rnorm = r.sup_norm();
  out.history.push_back(rnorm);
  int slow_run = 0;
  for (int step = 0; step < cfg.max_steps && rnorm > cfg.tolerance; ++step) {
    const ScalarField delta = solve_linearized(eq.potential(u), -r, cfg.linear);
    double s = 1.0;
    bool accepted = false;
    for (int halving = 0; halving <= cfg.max_halvings; ++halving, s *= 0.5) {
      ScalarField trial = axpy(u, s, delta);
      if constexpr (E::requires_positive) {
        if (!(trial.min() >= cfg.positivity_floor)) continue;
      }
      ScalarField rt = eq.residual(trial);
      const double tn = rt.sup_norm();
      if (tn < rnorm) {
        const double ratio = tn / rnorm;
        slow_run = ratio >= 0.1 ? slow_run + 1 : 0;
        if (slow_run >= 3) out.singular_signal = true;
        u = std::move(trial);
        r = std::move(rt);
        rnorm = tn;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if constexpr (E::requires_positive) {
        throw SingularJacobian("newton: no admissible (positive, descending) step at minimal length");
      } else {
        throw SingularJacobian("newton: no descending step at minimal length");
      }
    }
    out.steps = step + 1;
    out.history.push_back(rnorm);
  }
  out.residual_norm = rnorm;
  if (rnorm > cfg.tolerance) {
    throw ConvergenceFailure("newton: residual " + std::to_string(rnorm) +
                             " above tolerance after step cap");
  }
  out.solution = std::move(u);
  return out;
}

/// Damped Newton on the unregularized equation; returns the refined solution.
inline NewtonResult newton_refine(const ProblemSpec& spec, const ScalarField& u0,
                                  const NewtonConfig& cfg = {}) {
  return newton_solve(LichnerowiczEquation{spec}, u0, cfg);
}

}  // namespace lich
