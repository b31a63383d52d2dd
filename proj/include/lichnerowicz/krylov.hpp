#pragma once

// Solver for the linearized operator (Δ + W) with a possibly indefinite
// potential W, as needed by Newton steps on both solution branches.

#include <algorithm>
#include <cmath>
#include <vector>

#include "lichnerowicz/errors.hpp"
#include "lichnerowicz/torus_grid.hpp"

namespace lich {

struct GmresOptions {
  double tolerance = 1e-12;
  int restart = 60;
  int max_iterations = 1200;
};

struct LinearSolveStats {
  int iterations = 0;
  double relative_residual = 0.0;
};

/// Solves (Δ + W) x = rhs. A constant W is inverted exactly in Fourier space;
/// otherwise right-preconditioned restarted GMRES is used with the spectral
/// inverse of (Δ + c0), c0 = max(1, mean |W|). Throws SingularJacobian when
/// the operator is numerically singular on the data or GMRES stalls.
inline ScalarField solve_linearized(const ScalarField& potential, const ScalarField& rhs,
                                    const GmresOptions& opt = {},
                                    LinearSolveStats* stats = nullptr) {
  potential.require_same_grid(rhs);
  const double rhs_norm = std::sqrt(l2_inner(rhs, rhs));
  if (rhs_norm == 0.0) {
    if (stats) *stats = {};
    return ScalarField(rhs.grid(), 0.0);
  }

  if (potential.is_constant()) {
    const double w = potential[0];
    const double scale = std::max(1.0, std::abs(w));
    const auto& grid = *rhs.grid();
    auto spectrum = grid.forward(rhs.values());
    auto lap = grid.laplacian_symbol();
    const double data_floor = 1e-14 * rhs_norm * std::sqrt(static_cast<double>(grid.size()));
    for (std::size_t s = 0; s < spectrum.size(); ++s) {
      const double sym = lap[s] + w;
      if (std::abs(sym) <= 1e-12 * scale) {
        if (std::abs(spectrum[s]) > data_floor)
          throw SingularJacobian("linearized operator is singular on a Fourier mode");
        spectrum[s] = 0.0;
      } else {
        spectrum[s] /= sym;
      }
    }
    if (stats) *stats = {1, 0.0};
    return ScalarField(rhs.grid(), grid.backward(spectrum));
  }

  double c0 = 0.0;
  for (double v : potential.values()) c0 += std::abs(v);
  c0 = std::max(1.0, c0 / static_cast<double>(potential.size()));
  auto precondition = [&](const ScalarField& v) { return helmholtz_solve(c0, v); };
  auto apply = [&](const ScalarField& v) { return laplacian(v) + potential * v; };

  const int m = std::max(1, opt.restart);
  ScalarField x(rhs.grid(), 0.0);
  int total = 0;
  while (total < opt.max_iterations) {
    ScalarField r = rhs - apply(x);
    double beta = std::sqrt(l2_inner(r, r));
    if (beta / rhs_norm <= opt.tolerance) {
      if (stats) *stats = {total, beta / rhs_norm};
      return x;
    }
    std::vector<ScalarField> basis;
    basis.reserve(m + 1);
    basis.push_back(r / beta);
    std::vector<std::vector<double>> hess(m + 1, std::vector<double>(m, 0.0));
    std::vector<double> cs(m, 0.0), sn(m, 0.0), g(m + 1, 0.0);
    g[0] = beta;
    int j = 0;
    bool done = false;
    for (; j < m && total < opt.max_iterations; ++j, ++total) {
      ScalarField w = apply(precondition(basis[j]));
      for (int i = 0; i <= j; ++i) {
        hess[i][j] = l2_inner(w, basis[i]);
        w = axpy(w, -hess[i][j], basis[i]);
      }
      const double hnext = std::sqrt(l2_inner(w, w));
      hess[j + 1][j] = hnext;
      for (int i = 0; i < j; ++i) {
        const double t = cs[i] * hess[i][j] + sn[i] * hess[i + 1][j];
        hess[i + 1][j] = -sn[i] * hess[i][j] + cs[i] * hess[i + 1][j];
        hess[i][j] = t;
      }
      const double denom = std::hypot(hess[j][j], hess[j + 1][j]);
      if (denom == 0.0) throw SingularJacobian("GMRES breakdown: singular Hessenberg column");
      cs[j] = hess[j][j] / denom;
      sn[j] = hess[j + 1][j] / denom;
      hess[j][j] = denom;
      hess[j + 1][j] = 0.0;
      g[j + 1] = -sn[j] * g[j];
      g[j] = cs[j] * g[j];
      const bool happy = hnext <= 1e-14 * beta;
      if (std::abs(g[j + 1]) / rhs_norm <= opt.tolerance || happy) {
        ++j;
        ++total;
        done = true;
        break;
      }
      basis.push_back(w / hnext);
    }
    // Back substitution on the triangular factor.
    std::vector<double> y(j, 0.0);
    for (int i = j - 1; i >= 0; --i) {
      double s = g[i];
      for (int k = i + 1; k < j; ++k) s -= hess[i][k] * y[k];
      if (std::abs(hess[i][i]) <= 1e-14 * std::abs(hess[0][0]))
        throw SingularJacobian("GMRES: numerically singular least-squares factor");
      y[i] = s / hess[i][i];
    }
    ScalarField update(rhs.grid(), 0.0);
    for (int i = 0; i < j; ++i) update = axpy(update, y[i], basis[i]);
    x = x + precondition(update);
    if (done) {
      ScalarField rr = rhs - apply(x);
      const double rel = std::sqrt(l2_inner(rr, rr)) / rhs_norm;
      if (rel <= std::max(opt.tolerance * 100.0, 1e-10)) {
        if (stats) *stats = {total, rel};
        return x;
      }
    }
  }
  throw SingularJacobian("GMRES did not converge on the linearized operator");
}

}  // namespace lich
