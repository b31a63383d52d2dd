#include <gtest/gtest.h>

#include <cmath>

#include "lichnerowicz/newton.hpp"

using namespace lich;

namespace {

GridPtr cube(int n = 8) { return build_grid(3, {n, n, n}, {1.0, 1.0, 1.0}); }

// Smaller root of x^2 (1 - x) = theta in x = c^4, by bisection on [0, 2/3].
double small_root(double theta) {
  double lo = 0.0, hi = 2.0 / 3.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (mid * mid * (1 - mid) < theta ? lo : hi) = mid;
  }
  return std::pow(0.5 * (lo + hi), 0.25);
}

}  // namespace

TEST(Newton, ExactRootNeedsNoSteps) {
  auto g = cube();
  const double c1 = small_root(0.1);
  auto spec = ProblemSpec::critical(Coefficients::constant(g, 1, 1, 1), 0.1);
  auto r = newton_refine(spec, ScalarField(g, c1));
  EXPECT_EQ(r.steps, 0);
}

TEST(Newton, QuadraticFromPerturbedRoot) {
  auto g = cube();
  const double c1 = small_root(0.1);
  EXPECT_NEAR(c1, 0.80146354350282, 1e-12);
  auto spec = ProblemSpec::critical(Coefficients::constant(g, 1, 1, 1), 0.1);
  auto r = newton_refine(spec, ScalarField(g, 1.01 * c1));
  EXPECT_LE(r.steps, 6);
  EXPECT_LE(r.residual_norm, 1e-10);
  EXPECT_LE(sup_distance(r.solution, ScalarField(g, c1)), 1e-10);
  EXPECT_FALSE(r.singular_signal);
}

TEST(Newton, SingularSignalAtFold) {
  auto g = cube();
  const double cstar = std::pow(2.0 / 3.0, 0.25);
  auto spec = ProblemSpec::critical(Coefficients::constant(g, 1, 1, 1), 4.0 / 27.0);
  bool signalled = false;
  try {
    auto r = newton_refine(spec, ScalarField(g, 1.01 * cstar));
    signalled = r.singular_signal;
  } catch (const SingularJacobian&) {
    signalled = true;
  }
  EXPECT_TRUE(signalled);
}

TEST(Newton, NonConstantSolutionIsRefined) {
  auto g = cube(12);
  auto a = cosine_series(g, 1.0, {{0.3, {1, 0, 0}, 0.0}});
  Coefficients c(ScalarField(g, 1.0), ScalarField(g, 1.0), a);
  auto spec = ProblemSpec::critical(c, 0.05);
  auto r = newton_refine(spec, ScalarField(g, 0.7));
  EXPECT_LE(residual(spec, r.solution).sup_norm(), 1e-10);
  EXPECT_GT(r.solution.max() - r.solution.min(), 1e-3);
}

TEST(Newton, RejectsNonpositiveStart) {
  auto g = cube();
  auto spec = ProblemSpec::critical(Coefficients::constant(g, 1, 1, 1), 0.1);
  EXPECT_THROW(newton_refine(spec, ScalarField(g, -1.0)), PositivityError);
}
