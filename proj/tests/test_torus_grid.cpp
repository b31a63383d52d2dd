#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "lichnerowicz/torus_grid.hpp"

using namespace lich;

namespace {

GridPtr unit_cube(int n = 16) { return build_grid(3, {n, n, n}, {1.0, 1.0, 1.0}); }

// Random trigonometric polynomial with |k| <= 3 per axis.
ScalarField random_bandlimited(const GridPtr& g, std::mt19937_64& rng, double offset = 0.0) {
  std::uniform_real_distribution<double> amp(-1.0, 1.0), ph(0.0, kTwoPi);
  std::uniform_int_distribution<int> k(-3, 3);
  std::vector<CosineTerm> terms;
  for (int j = 0; j < 6; ++j) {
    CosineTerm t;
    t.amplitude = amp(rng);
    t.phase = ph(rng);
    for (int d = 0; d < g->dim(); ++d) t.wavevector.push_back(k(rng));
    terms.push_back(t);
  }
  return cosine_series(g, offset, terms);
}

double cos_x1(std::span<const double> x) { return std::cos(kTwoPi * x[0]); }

}  // namespace

TEST(TorusGrid, BuildsValidGrids) {
  auto g = unit_cube();
  EXPECT_EQ(g->size(), 4096u);
  EXPECT_DOUBLE_EQ(g->weight(), 1.0 / 4096.0);
  auto g5 = build_grid(5, {8, 8, 8, 8, 8}, {1, 1, 1, 1, 1});
  EXPECT_EQ(g5->size(), 32768u);
  EXPECT_DOUBLE_EQ(g5->critical_exponent(), 10.0 / 3.0);
}

TEST(TorusGrid, RejectsInvalidGrids) {
  try {
    build_grid(2, {16, 16}, {1, 1});
    FAIL();
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("dimension out of range"), std::string::npos);
  }
  EXPECT_THROW(build_grid(3, {16, 15, 16}, {1, 1, 1}), InvalidArgument);
  EXPECT_THROW(build_grid(3, {2, 16, 16}, {1, 1, 1}), InvalidArgument);
  EXPECT_THROW(build_grid(3, {16, 16, 16}, {1, 0, 1}), InvalidArgument);
  EXPECT_THROW(build_grid(3, {16, 16}, {1, 1, 1}), InvalidArgument);
}

TEST(TorusGrid, IndexRoundtrip) {
  auto g = build_grid(4, {4, 6, 8, 10}, {1, 2, 3, 4});
  for (std::size_t i = 0; i < g->size(); i += 37) {
    auto idx = g->multi_index(i);
    EXPECT_EQ(g->flat_index(idx), i);
  }
}

TEST(ScalarField, RejectsNonFiniteAndMismatch) {
  auto g = unit_cube(8);
  EXPECT_THROW(ScalarField(g, std::nan("")), InvalidArgument);
  EXPECT_THROW(ScalarField(g, std::vector<double>(3, 1.0)), InvalidArgument);
  ScalarField a(g, 1.0);
  ScalarField b(build_grid(3, {8, 8, 8}, {2, 1, 1}), 1.0);
  EXPECT_THROW(a + b, GridMismatch);
  ScalarField c(build_grid(3, {8, 8, 8}, {1, 1, 1}), 2.0);
  EXPECT_NO_THROW(a + c);  // equal grid descriptions are compatible
}

TEST(Laplacian, ConstantsAreHarmonic) {
  auto g = unit_cube();
  EXPECT_LE(laplacian(ScalarField(g, 3.7)).sup_norm(), 1e-12);
}

TEST(Laplacian, GeometerSignOnCosineMode) {
  auto g = build_grid(3, {16, 16, 16}, {2.0, 1.0, 1.0});
  auto u = ScalarField::from_function(g, [](std::span<const double> x) {
    return std::cos(kTwoPi * x[0] / 2.0);
  });
  const double k2 = std::pow(kTwoPi / 2.0, 2);
  EXPECT_LE(sup_distance(laplacian(u), u * k2), 1e-11);
}

TEST(Laplacian, LinearOnTwoModes) {
  auto g = unit_cube();
  auto u1 = ScalarField::from_function(g, cos_x1);
  auto u2 = ScalarField::from_function(g, [](std::span<const double> x) {
    return std::sin(kTwoPi * (x[1] + 2 * x[2]));
  });
  const double k1 = kTwoPi * kTwoPi, k2 = 5 * kTwoPi * kTwoPi;
  EXPECT_LE(sup_distance(laplacian(u1 + u2), u1 * k1 + u2 * k2), 1e-10);
}

TEST(Laplacian, IntegratesToZeroAndIsSymmetric) {
  std::mt19937_64 rng(1);
  auto g = unit_cube();
  for (int t = 0; t < 5; ++t) {
    auto u = random_bandlimited(g, rng, 0.3);
    auto v = random_bandlimited(g, rng);
    EXPECT_NEAR(integrate(laplacian(u)), 0.0, 1e-11);
    EXPECT_NEAR(l2_inner(laplacian(u), v), l2_inner(u, laplacian(v)), 1e-10);
  }
}

TEST(Quadrature, Basics) {
  auto g = unit_cube();
  EXPECT_DOUBLE_EQ(integrate(ScalarField(g, 1.0)), 1.0);
  EXPECT_NEAR(std::sqrt(2.0), h1h_norm(ScalarField(g, 1.0), ScalarField(g, 2.0)), 1e-15);
  auto c = ScalarField::from_function(g, cos_x1);
  EXPECT_NEAR(std::pow(lp_norm(c, 2.0), 2), 0.5, 1e-14);
  EXPECT_THROW(lp_norm(c, 0.5), InvalidArgument);
  EXPECT_THROW(h1h_norm(ScalarField(g, 1.0), ScalarField(g, -1.0)), NonCoercive);
}

TEST(Quadrature, IntegrationByParts) {
  std::mt19937_64 rng(2);
  auto g = build_grid(3, {12, 16, 8}, {1.0, 1.5, 0.7});
  auto h = random_bandlimited(g, rng, 4.0);
  for (int t = 0; t < 5; ++t) {
    auto u = random_bandlimited(g, rng, 1.0);
    const double lhs = std::pow(h1h_norm(u, h), 2);
    const double rhs = l2_inner(laplacian(u), u) + integrate(h * u * u);
    EXPECT_NEAR(lhs, rhs, 1e-10 * std::abs(rhs));
    auto grad = gradient(u);
    double gsq = 0.0;
    for (const auto& d : grad) gsq += l2_inner(d, d);
    EXPECT_NEAR(gsq, dirichlet_energy(u), 1e-10 * std::max(1.0, gsq));
  }
}

TEST(Helmholtz, ConstantShift) {
  auto g = unit_cube();
  EXPECT_LE(sup_distance(helmholtz_solve(1.0, ScalarField(g, 1.0)), ScalarField(g, 1.0)), 1e-14);
  auto c = ScalarField::from_function(g, cos_x1);
  auto u = helmholtz_solve(1.0, c);
  EXPECT_LE(sup_distance(u, c / (1.0 + kTwoPi * kTwoPi)), 1e-14);
  EXPECT_THROW(helmholtz_solve(0.0, c), NonCoercive);
}

TEST(Helmholtz, VariableShiftRoundtrip) {
  std::mt19937_64 rng(3);
  auto g = unit_cube();
  auto c = ScalarField::from_function(g, [](std::span<const double> x) {
    return 1.0 + 0.3 * std::cos(kTwoPi * x[0]);
  });
  auto rhs = random_bandlimited(g, rng);
  HelmholtzStats stats;
  auto u = helmholtz_solve(c, rhs, {}, &stats);
  auto back = laplacian(u) + c * u;
  EXPECT_LE(std::sqrt(l2_inner(back - rhs, back - rhs) / l2_inner(rhs, rhs)), 1e-9);
  EXPECT_GT(stats.iterations, 0);

  auto x = random_bandlimited(g, rng, 0.5);
  auto y = helmholtz_solve(c, laplacian(x) + c * x, {1e-13, 2000});
  EXPECT_LE(sup_distance(x, y), 1e-9);
}

TEST(Helmholtz, RejectsNegativeMean) {
  auto g = unit_cube(8);
  auto c = ScalarField::from_function(g, [](std::span<const double> x) {
    return -1.0 + 0.3 * std::cos(kTwoPi * x[0]);
  });
  EXPECT_THROW(helmholtz_solve(c, ScalarField(g, 1.0)), NonCoercive);
}
