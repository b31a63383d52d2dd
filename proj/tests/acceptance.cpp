// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "lichnerowicz.hpp"
#include "lichnerowicz/harness/run.hpp"

using namespace lich;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int id, bool ok, const std::string& what, const std::string& detail) {
  std::printf("criterion %2d %s  %s: %s\n", id, ok ? "PASS" : "FAIL", what.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

// Runs a criterion body, turning an escaped exception into a FAIL line.
void guarded(int id, const std::string& what, const std::function<void()>& body) {
  try {
    body();
  } catch (const std::exception& e) {
    report(id, false, what, std::string("exception: ") + e.what());
  }
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

// --- 1-D oracles for h = f = a = 1: 1 = c^{q-2} + θ c^{-(q+2)} -------------

double theta_of_c(double c, double q) { return std::pow(c, q + 2) - std::pow(c, 2 * q); }

// Maximum of θ(c) by golden-section search.
double fold_oracle(double q) {
  double lo = 0.0, hi = 1.0;
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int i = 0; i < 200; ++i) {
    const double a = hi - g * (hi - lo), b = lo + g * (hi - lo);
    if (theta_of_c(a, q) < theta_of_c(b, q))
      lo = a;
    else
      hi = b;
  }
  return theta_of_c(0.5 * (lo + hi), q);
}

// Roots of θ(c) = θ on either side of the maximizer c_m^{q-2} = (q+2)/(2q).
double root(double q, double theta, bool upper) {
  const double cm = std::pow((q + 2) / (2 * q), 1.0 / (q - 2));
  double lo = upper ? cm : 0.0, hi = upper ? 1.0 : cm;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    const bool below = theta_of_c(mid, q) < theta;
    ((below != upper) ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

GridPtr cube(int n, int dim = 3) {
  return build_grid(dim, std::vector<int>(dim, n), std::vector<double>(dim, 1.0));
}

ScalarField smooth_random(const GridPtr& g, std::mt19937_64& rng, double offset, double scale) {
  std::uniform_real_distribution<double> amp(-1.0, 1.0), ph(0.0, kTwoPi);
  std::uniform_int_distribution<int> k(-2, 2);
  std::vector<CosineTerm> terms;
  for (int j = 0; j < 5; ++j) {
    CosineTerm t{scale * amp(rng) / 5.0, {}, ph(rng)};
    for (int d = 0; d < g->dim(); ++d) t.wavevector.push_back(k(rng));
    terms.push_back(t);
  }
  return cosine_series(g, offset, terms);
}

// Dense spectral Laplacian on N points of the unit circle (trigonometric
// interpolation formula).
Eigen::MatrixXd dense_laplacian_1d(int n) {
  Eigen::MatrixXd d(n, n);
  for (int j = 0; j < n; ++j)
    for (int l = 0; l < n; ++l) {
      double s = 0.0;
      for (int k = -n / 2 + 1; k <= n / 2; ++k) s += std::pow(kTwoPi * k, 2) * std::cos(kTwoPi * k * (j - l) / n);
      d(j, l) = s / n;
    }
  return d;
}

harness::RunConfig fold_config(int dim, int n, const fs::path& out) {
  std::string res = "[" + std::to_string(n);
  for (int d = 1; d < dim; ++d) res += ", " + std::to_string(n);
  res += "]";
  auto cfg = harness::parse_config("mode: fold\ngrid: {dim: " + std::to_string(dim) + ", resolutions: " + res +
                                   "}\ncoefficients: {h: 1, f: 1, a: 1}\nparameters: {theta_hint: " +
                                   (dim == 3 ? "0.1" : "0.05") + "}\n");
  cfg.output.directory = out.string();
  return cfg;
}

// Discipline bookkeeping for criterion 11.
struct Discipline {
  double max_decrease = 0.0;
  double max_scaled_decrease = 0.0;  // decrease / max(1, sup u)
  int runs = 0;
  int diverged_below = 0;  // Diverged verdicts at θ ≤ 0.9 θ̂⋆
  void add(double d, double scaled) {
    max_decrease = std::max(max_decrease, d);
    max_scaled_decrease = std::max(max_scaled_decrease, scaled);
    ++runs;
  }
} discipline;

}  // namespace

int main() {
  const auto scratch = fs::temp_directory_path() / "lich_acceptance";
  fs::remove_all(scratch);
  const double oracle3 = fold_oracle(6.0), oracle4 = fold_oracle(4.0);

  // 1, 3, 13: fold-mode runs on 16^3.
  nlohmann::json fold3;
  guarded(1, "fold location n=3", [&] {
    const auto t0 = std::chrono::steady_clock::now();
    const auto o = harness::run(fold_config(3, 16, scratch / "fold3_a"));
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (o.exit_code != 0) throw Error("fold run exit code " + std::to_string(o.exit_code));
    fold3 = o.report;
    const double ts = fold3["results"]["theta_star"].get<double>();
    discipline.add(fold3["results"]["max_decrease"].get<double>(),
                   fold3["results"]["max_scaled_decrease"].get<double>());
    const double err = std::abs(ts - oracle3);
    report(1, err <= 5e-4 && secs <= 60.0 && std::abs(oracle3 - 4.0 / 27.0) < 1e-12, "fold location n=3",
           "theta* = " + harness::fmt17(ts) + ", |err| = " + sci(err) + ", oracle max = " +
               harness::fmt17(oracle3) + ", runtime " + sci(secs) + " s");
  });

  guarded(2, "fold location n=4", [&] {
    const auto o = harness::run(fold_config(4, 12, scratch / "fold4"));
    if (o.exit_code != 0) throw Error("fold run exit code " + std::to_string(o.exit_code));
    const double ts = o.report["results"]["theta_star"].get<double>();
    discipline.add(o.report["results"]["max_decrease"].get<double>(),
                   o.report["results"]["max_scaled_decrease"].get<double>());
    const double err = std::abs(ts - oracle4);
    report(2, err <= 5e-4 && std::abs(oracle4 - 27.0 / 256.0) < 1e-12, "fold location n=4",
           "theta* = " + harness::fmt17(ts) + ", |err| = " + sci(err) + ", runtime " +
               sci(o.report["timings"]["total"].get<double>()) + " s");
  });

  guarded(3, "fold eigenvalue", [&] {
    if (fold3.is_null()) throw Error("criterion 1 run unavailable");
    const double lam = fold3["results"]["lambda_last"].get<double>();
    report(3, std::abs(lam) <= 1e-3, "fold eigenvalue",
           "lambda = " + sci(lam) + " at theta = " +
               harness::fmt17(fold3["results"]["last_branch_point"]["theta"].get<double>()));
  });

  guarded(4, "two solutions at theta=0.1", [&] {
    auto g = cube(16);
    auto c = Coefficients::constant(g, 1, 1, 1);
    const auto r = critical_limit(c, 0.1, default_epsilon_schedule(), default_q_schedule(3));
    discipline.add(r.max_decrease, r.max_scaled_decrease);
    const double c1 = root(6.0, 0.1, false), c2 = root(6.0, 0.1, true);
    const double e1 = sup_distance(r.minimal.solution, ScalarField(g, c1));
    const double e2 = sup_distance(r.second, ScalarField(g, c2));
    const bool order = r.low_energy < r.eta && r.eta <= r.second_energy;
    report(4, e1 <= 1e-5 && e2 <= 1e-5 && order, "two solutions at theta=0.1",
           "|u1-c1| = " + sci(e1) + ", |u2-c2| = " + sci(e2) + ", I(c1) = " + harness::fmt17(r.low_energy) +
               " < eta = " + harness::fmt17(r.eta) + " <= I(c2) = " + harness::fmt17(r.second_energy));
  });

  guarded(5, "closed-form lambda", [&] {
    auto g = cube(16);
    auto c = Coefficients::constant(g, 1, 1, 1);
    std::vector<double> thetas;
    for (int i = 1; i <= 10; ++i) thetas.push_back(0.0125 * i);
    const auto rec = trace_branch(c, thetas);
    discipline.add(rec.max_decrease, rec.max_scaled_decrease);
    double worst = 0.0;
    bool all = rec.points.size() == thetas.size();
    for (const auto& p : rec.points) {
      all = all && p.converged;
      if (p.theta <= 0.9 * oracle3 && !p.converged) ++discipline.diverged_below;
      const double x = root(6.0, p.theta, false);
      const double expected = 1.0 - 5.0 * std::pow(x, 4) + 7.0 * p.theta * std::pow(x, -8);
      worst = std::max(worst, std::abs(p.lambda - expected));
    }
    report(5, all && worst <= 1e-8, "closed-form lambda", "max |lambda - formula| over 10 points = " + sci(worst));
  });

  guarded(6, "gradient consistency", [&] {
    std::mt19937_64 rng(6);
    auto g = cube(8);
    const ProblemSpec spec(Coefficients::constant(g, 1, 1, 1), 5.0, 0.1, 1e-2);
    double worst = 0.0;
    for (int t = 0; t < 20; ++t) {
      const auto u = smooth_random(g, rng, 1.0, 0.6);
      if (!(u.min() > 0.0)) throw Error("sample field not positive");
      const auto grad = energy_gradient(spec, u);
      const double w = g->weight();
      const double s = 1e-4;
      double err = 0.0, scale = 0.0;
      std::vector<double> probe(u.values().begin(), u.values().end());
      const auto at = [&](std::size_t i, double x) {
        probe[i] = x;
        const double e = energy(spec, ScalarField(g, probe));
        probe[i] = u[i];
        return e;
      };
      for (std::size_t i = 0; i < g->size(); ++i) {
        const double up = at(i, u[i] + s);
        const double down = at(i, u[i] - s);
        err = std::max(err, std::abs((up - down) / (2 * s) - w * grad[i]));
        scale = std::max(scale, std::abs(w * grad[i]));
      }
      worst = std::max(worst, err / scale);
    }
    report(6, worst <= 1e-6, "gradient consistency", "max pointwise relative error over 20 fields = " + sci(worst));
  });

  guarded(7, "non-constant weight", [&] {
    auto g = cube(16);
    const auto a = cosine_series(g, 1.0, {{0.3, {1, 0, 0}, 0.0}});
    const Coefficients c(ScalarField(g, 1.0), ScalarField(g, 1.0), a);
    const auto fold = find_theta_star(c, 0.1);
    discipline.add(fold.max_decrease, fold.max_scaled_decrease);
    std::vector<double> thetas;
    for (int i = 1; i <= 12; ++i) thetas.push_back(0.9 * fold.theta_star * i / 12.0);
    const auto rec = trace_branch(c, thetas);
    discipline.add(rec.max_decrease, rec.max_scaled_decrease);
    double violation = 0.0, min_lambda = std::numeric_limits<double>::infinity();
    bool all = rec.points.size() == thetas.size();
    for (std::size_t i = 0; i < rec.points.size(); ++i) {
      const auto& p = rec.points[i];
      all = all && p.converged;
      if (!p.converged) ++discipline.diverged_below;
      min_lambda = std::min(min_lambda, p.lambda);
      if (i > 0) violation = std::max(violation, -(p.solution - rec.points[i - 1].solution).min());
    }
    const auto cert = certificate_theta1(c);
    report(7, all && violation <= 1e-10 && min_lambda >= -1e-8 && cert.theta1_lower_bound <= fold.theta_star,
           "non-constant weight",
           "monotonicity violation = " + sci(std::max(violation, 0.0)) + ", min lambda = " + sci(min_lambda) +
               ", theta1_lb = " + sci(cert.theta1_lower_bound) + " <= theta* = " + harness::fmt17(fold.theta_star));
  });

  guarded(8, "stability experiment", [&] {
    auto g = cube(16);
    std::vector<double> qs;
    for (int k = 1; k <= 6; ++k) qs.push_back(6.0 - 1.0 / k);
    const auto rep = stability_experiment(Coefficients::constant(g, 1, 1, 1), 0.1, qs, {});
    discipline.add(rep.max_decrease, rep.max_scaled_decrease);
    bool decreasing = true;
    std::string diffs;
    for (std::size_t k = 1; k < rep.members.size(); ++k) {
      if (k > 1 && !(rep.members[k].sup_difference < rep.members[k - 1].sup_difference)) decreasing = false;
      diffs += (k > 1 ? " " : "") + sci(rep.members[k].sup_difference);
    }
    const double last = rep.members.back().sup_difference;
    const bool floor = rep.min_over_family >= rep.subsolution_floor;
    report(8, decreasing && last <= 1e-3 && floor && rep.verdict == Verdict::converged, "stability experiment",
           "differences [" + diffs + "], min u = " + harness::fmt17(rep.min_over_family) +
               " >= floor " + sci(rep.subsolution_floor));
  });

  guarded(9, "bubble residual", [&] {
    const BubbleSpec b(3, 3.0);
    const auto coarse = standard_bubble(b, 0.5 * b.R0, b.R0 / 64);
    const auto fine = standard_bubble(b, 0.5 * b.R0, b.R0 / 128);
    const double ratio = coarse.relative_residual / fine.relative_residual;
    report(9, coarse.relative_residual <= 1e-4 && ratio >= 12 && ratio <= 20, "bubble residual",
           "R0 = " + harness::fmt17(b.R0) + ", residual = " + sci(coarse.relative_residual) +
               ", refinement ratio = " + harness::fmt17(ratio));
  });

  guarded(10, "operator roundtrips", [&] {
    std::mt19937_64 rng(10);
    auto g = cube(16);
    const auto c = cosine_series(g, 1.0, {{0.3, {1, 0, 0}, 0.0}, {0.2, {0, 1, 1}, 0.5}});
    double worst = 0.0;
    for (int t = 0; t < 10; ++t) {
      const auto x = smooth_random(g, rng, 0.5, 1.0);
      const auto back = helmholtz_solve(c, laplacian(x) + c * x, {1e-13, 4000});
      worst = std::max(worst, sup_distance(back, x) / std::max(1.0, x.sup_norm()));
    }
    const int n = 8;
    auto g8 = cube(n);
    const auto w = cosine_series(g8, 1.0, {{0.5, {1, 0, 0}, 0.0}, {0.3, {0, 2, 1}, 0.2}});
    const auto eig = smallest_eigenpair(w);
    const Eigen::MatrixXd d1 = dense_laplacian_1d(n);
    const int total = n * n * n;
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(total, total);
    for (int i = 0; i < total; ++i)
      for (int j = 0; j < total; ++j) {
        const int i0 = i / (n * n), i1 = (i / n) % n, i2 = i % n;
        const int j0 = j / (n * n), j1 = (j / n) % n, j2 = j % n;
        double v = 0.0;
        if (i1 == j1 && i2 == j2) v += d1(i0, j0);
        if (i0 == j0 && i2 == j2) v += d1(i1, j1);
        if (i0 == j0 && i1 == j1) v += d1(i2, j2);
        m(i, j) = v;
      }
    for (int i = 0; i < total; ++i) m(i, i) += w[i];
    const double dense = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m, Eigen::EigenvaluesOnly).eigenvalues()(0);
    const double eerr = std::abs(eig.lambda - dense);
    report(10, worst <= 1e-9 && eerr <= 1e-8, "operator roundtrips",
           "helmholtz roundtrip = " + sci(worst) + ", |lambda - dense| = " + sci(eerr));
  });

  guarded(11, "monotone discipline", [&] {
    auto g = cube(16);
    const auto spec = ProblemSpec::critical(Coefficients::constant(g, 1, 1, 1), 0.2);
    const auto r = monotone_iterate(spec, build_subsolution(spec.coeffs, 0.2));
    discipline.add(r.max_decrease, r.max_scaled_decrease);
    if (!fold3.is_null()) {
      const double ts = fold3["results"]["theta_star"].get<double>();
      const auto csv = harness::read_file(scratch / "fold3_a" / "branch.csv");
      std::size_t pos = csv.find('\n') + 1;
      while (pos < csv.size()) {
        const auto end = csv.find('\n', pos);
        const std::string row = csv.substr(pos, end - pos);
        const double theta = std::stod(row.substr(0, row.find(',')));
        if (theta <= 0.9 * ts && row.substr(row.rfind(',') + 1) != "true") ++discipline.diverged_below;
        pos = end + 1;
      }
    }
    const bool ok = discipline.max_scaled_decrease <= 1e-12 && !r.converged() && discipline.diverged_below == 0;
    report(11, ok, "monotone discipline",
           "max scaled decrease over " + std::to_string(discipline.runs) + " runs = " +
               sci(discipline.max_scaled_decrease) + " (absolute " + sci(discipline.max_decrease) + ")" +
               ", theta=0.2 " + (r.converged() ? "converged" : "Diverged") + ", Diverged below 0.9 theta* = " +
               std::to_string(discipline.diverged_below));
  });

  guarded(12, "certificate constants", [&] {
    bool exact = certificate_constant(3) == 1.0 / 64 && certificate_constant(4) == 1.0 / 72 &&
                 certificate_constant(5) == 1.0 / 96;
    double worst = 0.0;
    for (int n = 3; n <= 5; ++n) {
      for (double product : {0.37, 1.0, 2.9}) {
        const auto s = certificate_scalars(n, product);
        worst = std::max(worst, std::abs(s.t1 / s.t0 - 1.0 / std::sqrt(2.0 * (n - 1))));
      }
    }
    // t1 is formed as t0 / sqrt(2(n-1)); the ratio agrees up to the rounding of one division.
    report(12, exact && worst <= 2.3e-16, "certificate constants",
           std::string("C(3), C(4), C(5) ") + (exact ? "exact" : "inexact") + ", max |t1/t0 - (2(n-1))^-1/2| = " +
               sci(worst));
  });

  guarded(13, "determinism", [&] {
    const auto o = harness::run(fold_config(3, 16, scratch / "fold3_b"));
    if (o.exit_code != 0) throw Error("fold run exit code " + std::to_string(o.exit_code));
    const auto a = harness::read_file(scratch / "fold3_a" / "branch.csv");
    const auto b = harness::read_file(scratch / "fold3_b" / "branch.csv");
    report(13, a == b && !a.empty(), "determinism",
           std::string("branch CSVs ") + (a == b ? "byte-identical" : "differ") + " (" + std::to_string(a.size()) +
               " bytes)");
  });

  std::printf("%d of 13 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
