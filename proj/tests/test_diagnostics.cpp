#include <gtest/gtest.h>

#include <cmath>

#include "lichnerowicz/diagnostics.hpp"

using namespace lich;

namespace {

GridPtr cube(int n = 8) { return build_grid(3, {n, n, n}, {1.0, 1.0, 1.0}); }

// Smaller positive root of 1 = c^{q-2} + theta c^{-(q+2)} (unit constants).
double c1(double q, double theta) {
  double lo = 0.3, hi = std::pow((q + 2) * theta / (q - 2), 1.0 / (2 * q));
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (std::pow(mid, q - 2) + theta * std::pow(mid, -(q + 2)) > 1.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST(Bubble, SpecInvariantAndValues) {
  BubbleSpec b(3, 3.0);
  EXPECT_DOUBLE_EQ(b.R0, 1.0);
  EXPECT_DOUBLE_EQ(b.profile(0.0), 1.0);
  EXPECT_NEAR(b.profile(b.R0), 1.0 / std::sqrt(2.0), 1e-15);
  BubbleSpec b5(5, 2.0);
  EXPECT_NEAR(b5.R0 * b5.R0 * b5.f0, 15.0, 1e-12);
  EXPECT_NEAR(b5.profile(b5.R0), std::pow(2.0, -1.5), 1e-15);
  EXPECT_THROW(BubbleSpec(3, 0.0), InvalidArgument);
  EXPECT_THROW(BubbleSpec(6, 1.0), InvalidArgument);
}

TEST(Bubble, FourthOrderResidual) {
  BubbleSpec b(3, 3.0);
  const auto coarse = standard_bubble(b, 0.5 * b.R0, b.R0 / 64);
  const auto fine = standard_bubble(b, 0.5 * b.R0, b.R0 / 128);
  EXPECT_EQ(coarse.points_per_axis, 65);
  EXPECT_LE(coarse.relative_residual, 1e-4);
  const double ratio = coarse.relative_residual / fine.relative_residual;
  EXPECT_GE(ratio, 12.0);
  EXPECT_LE(ratio, 20.0);
}

TEST(Bubble, WindowTooSmall) {
  BubbleSpec b(3, 1.0);
  EXPECT_THROW(standard_bubble(b, 0.1, 0.1), InvalidArgument);
  EXPECT_NO_THROW(standard_bubble(b, 0.2, 0.1));
}

TEST(Profile, TransplantedBubble) {
  // Bubble at scale mu = 1e-2 cut to vanish at the half period; the
  // rescaled mismatch is bounded by the cut level U(L / (2 mu)).
  auto g = build_grid(3, {64, 64, 64}, {1.0, 1.0, 1.0});
  const double mu = 1e-2;
  BubbleSpec b(3, 3.0, mu);
  const double cut = b.profile(0.5 / mu);
  auto u = ScalarField::from_function(g, [&](std::span<const double> x) {
    double r2 = 0.0;
    for (double xi : x) {
      const double d = xi - 0.5;
      r2 += d * d;
    }
    const double r = std::min(std::sqrt(r2), 0.5);
    return (b.scaled(r) - std::pow(mu, -0.5) * cut) / (1.0 - cut) + 1e-6;
  });
  auto rep = rescaled_profile_compare(u, 6.0, ScalarField(g, 3.0));
  EXPECT_NEAR(rep.mu, mu, 1e-6);
  EXPECT_TRUE(rep.concentrated);
  EXPECT_GT(rep.samples, 1u);
  EXPECT_LE(rep.deviation, 2e-2);
  EXPECT_LE(rep.deviation, cut + 1e-6);
}

TEST(Profile, ConstantIsNotABubble) {
  auto g = build_grid(3, {16, 16, 16}, {10.0, 10.0, 10.0});
  auto rep = rescaled_profile_compare(ScalarField(g, 0.8), 6.0, ScalarField(g, 1.0));
  EXPECT_NEAR(rep.mu, std::pow(0.8, -2.0), 1e-14);
  EXPECT_FALSE(rep.concentrated);
  EXPECT_GT(rep.deviation, 0.5);
}

TEST(Profile, ScaleHomogeneity) {
  auto g = cube();
  auto u = cosine_series(g, 2.0, {{0.5, {1, 0, 0}, 0.0}});
  const auto f = ScalarField(g, 1.0);
  for (double q : {4.0, 5.0, 6.0}) {
    const double m1 = rescaled_profile_compare(u, q, f).mu;
    const double m2 = rescaled_profile_compare(u * 2.0, q, f).mu;
    EXPECT_NEAR(m2 / m1, std::pow(2.0, -(q - 2) / 2), 1e-14);
  }
}

TEST(Profile, NonPositiveWeightAtPeak) {
  auto g = cube();
  auto u = cosine_series(g, 2.0, {{0.5, {1, 0, 0}, 0.0}});
  EXPECT_THROW(rescaled_profile_compare(u, 6.0, ScalarField(g, -1.0)), StructuralViolation);
}

TEST(Stability, UnitConstantsConverge) {
  auto g = cube();
  auto c = Coefficients::constant(g, 1, 1, 1);
  std::vector<double> qs;
  for (int k = 1; k <= 6; ++k) qs.push_back(6.0 - 1.0 / k);
  auto rep = stability_experiment(c, 0.1, qs, {});
  ASSERT_EQ(rep.members.size(), 6u);
  EXPECT_EQ(rep.verdict, Verdict::converged);
  for (const auto& m : rep.members) {
    EXPECT_NEAR(m.sup, c1(m.q, 0.1), 1e-9);
    EXPECT_NEAR(m.min, m.sup, 1e-12);
    EXPECT_LE(m.gradient_difference, 1e-9);
  }
  for (std::size_t k = 2; k < 6; ++k)
    EXPECT_LT(rep.members[k].sup_difference, rep.members[k - 1].sup_difference);
  EXPECT_LE(rep.members.back().sup_difference, 1e-3);
  EXPECT_GE(rep.min_over_family, rep.subsolution_floor);
  ASSERT_TRUE(rep.limit_difference);
  EXPECT_LE(*rep.limit_difference, 1e-8);
}

TEST(Stability, PerturbedWeightMatchesLimit) {
  auto g = cube(12);
  auto a = cosine_series(g, 1.0, {{0.3, {1, 0, 0}, 0.0}});
  Coefficients c(ScalarField(g, 1.0), ScalarField(g, 1.0), a);
  std::vector<double> qs;
  std::vector<ScalarField> perts;
  for (int k = 1; k <= 6; ++k) {
    qs.push_back(6.0 - 1.0 / k);
    perts.push_back(a * (0.1 / k));
  }
  auto rep = stability_experiment(c, 0.05, qs, perts);
  EXPECT_EQ(rep.verdict, Verdict::converged) << rep.reason;
  ASSERT_TRUE(rep.limit_difference);
  EXPECT_LE(*rep.limit_difference, 1e-4);
  for (const auto& m : rep.members) EXPECT_FALSE(m.mu < 0.05);
}

TEST(Stability, Errors) {
  auto g = cube();
  auto c = Coefficients::constant(g, 1, 1, 1);
  EXPECT_THROW(stability_experiment(c, 0.1, {5.0, 4.0}, {}), InvalidArgument);
  EXPECT_THROW(stability_experiment(c, 0.1, {5.0, 5.5}, {ScalarField(g, 0.0)}), InvalidArgument);
}

TEST(Stability, AboveFoldIsBlowup) {
  auto g = cube();
  auto c = Coefficients::constant(g, 1, 1, 1);
  StabilityConfig cfg;
  cfg.monotone.cap_factor = 1e3;
  auto rep = stability_experiment(c, 0.2, {5.5, 5.75, 6.0}, {}, cfg);
  EXPECT_EQ(rep.verdict, Verdict::blowup);
  EXPECT_FALSE(rep.limit_difference);
}
