#pragma once

// Flat tori T^n = prod(R / L_i Z), scalar fields sampled on a uniform grid,
// and the Fourier-exact differential operators acting on them.
//
// Sign convention: laplacian() is the geometer's operator -div(grad), so its
// spectrum is nonnegative and cos(2 pi x / L) is mapped to (2 pi / L)^2 cos.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lichnerowicz/detail/fftw_plan.hpp"
#include "lichnerowicz/errors.hpp"

namespace lich {

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

class TorusGrid;
using GridPtr = std::shared_ptr<const TorusGrid>;

class TorusGrid {
 public:
  TorusGrid(int dim, std::vector<int> resolutions, std::vector<double> periods)
      : dim_(dim), resolutions_(std::move(resolutions)), periods_(std::move(periods)) {
    if (dim_ < 3 || dim_ > 5) throw InvalidArgument("dimension out of range (must be 3, 4 or 5)");
    if (static_cast<int>(resolutions_.size()) != dim_ || static_cast<int>(periods_.size()) != dim_)
      throw InvalidArgument("resolutions and periods must have one entry per dimension");
    for (int n : resolutions_)
      if (n < 4 || n % 2 != 0) throw InvalidArgument("resolution must be even and at least 4");
    for (double l : periods_)
      if (!(l > 0.0) || !std::isfinite(l)) throw InvalidArgument("period must be positive");

    size_ = 1;
    volume_ = 1.0;
    for (int i = 0; i < dim_; ++i) {
      size_ *= static_cast<std::size_t>(resolutions_[i]);
      volume_ *= periods_[i];
    }
    plan_ = std::make_unique<detail::RealFftPlan>(resolutions_);
    build_symbols();
  }

  int dim() const noexcept { return dim_; }
  const std::vector<int>& resolutions() const noexcept { return resolutions_; }
  const std::vector<double>& periods() const noexcept { return periods_; }
  std::size_t size() const noexcept { return size_; }
  double volume() const noexcept { return volume_; }
  /// Quadrature weight carried by each grid point.
  double weight() const noexcept { return volume_ / static_cast<double>(size_); }
  double min_period() const { return *std::min_element(periods_.begin(), periods_.end()); }

  /// Critical Sobolev exponent 2n/(n-2).
  double critical_exponent() const noexcept { return 2.0 * dim_ / (dim_ - 2.0); }

  bool same_as(const TorusGrid& other) const noexcept {
    return dim_ == other.dim_ && resolutions_ == other.resolutions_ && periods_ == other.periods_;
  }

  std::vector<int> multi_index(std::size_t flat) const {
    std::vector<int> idx(dim_);
    for (int axis = dim_ - 1; axis >= 0; --axis) {
      idx[axis] = static_cast<int>(flat % resolutions_[axis]);
      flat /= resolutions_[axis];
    }
    return idx;
  }

  std::size_t flat_index(std::span<const int> idx) const {
    std::size_t flat = 0;
    for (int axis = 0; axis < dim_; ++axis) {
      int n = resolutions_[axis];
      int j = ((idx[axis] % n) + n) % n;
      flat = flat * n + static_cast<std::size_t>(j);
    }
    return flat;
  }

  std::vector<double> point(std::size_t flat) const {
    auto idx = multi_index(flat);
    std::vector<double> x(dim_);
    for (int axis = 0; axis < dim_; ++axis)
      x[axis] = periods_[axis] * idx[axis] / resolutions_[axis];
    return x;
  }

  // Spectral layout: row-major over [N_0, ..., N_{n-2}, N_{n-1}/2 + 1].
  std::size_t spectral_size() const noexcept { return plan_->complex_size(); }
  std::span<const double> laplacian_symbol() const noexcept { return laplacian_symbol_; }
  /// i k_axis on the spectral layout (Nyquist entries zeroed).
  std::span<const double> derivative_symbol(int axis) const { return derivative_symbol_.at(axis); }

  std::vector<std::complex<double>> forward(std::span<const double> values) const {
    return plan_->forward(values);
  }
  std::vector<double> backward(std::span<const std::complex<double>> spectrum) const {
    return plan_->backward(spectrum);
  }

 private:
  void build_symbols() {
    const std::size_t ns = plan_->complex_size();
    laplacian_symbol_.assign(ns, 0.0);
    derivative_symbol_.assign(dim_, std::vector<double>(ns, 0.0));
    std::vector<int> shape = resolutions_;
    shape.back() = resolutions_.back() / 2 + 1;
    std::vector<int> idx(dim_, 0);
    for (std::size_t s = 0; s < ns; ++s) {
      std::size_t rem = s;
      for (int axis = dim_ - 1; axis >= 0; --axis) {
        idx[axis] = static_cast<int>(rem % shape[axis]);
        rem /= shape[axis];
      }
      double k2 = 0.0;
      for (int axis = 0; axis < dim_; ++axis) {
        const int n = resolutions_[axis];
        const int k = idx[axis] <= n / 2 ? idx[axis] : idx[axis] - n;
        const double wave = kTwoPi * k / periods_[axis];
        k2 += wave * wave;
        derivative_symbol_[axis][s] = (std::abs(k) == n / 2) ? 0.0 : wave;
      }
      laplacian_symbol_[s] = k2;
    }
  }

  int dim_;
  std::vector<int> resolutions_;
  std::vector<double> periods_;
  std::size_t size_ = 0;
  double volume_ = 0.0;
  std::unique_ptr<detail::RealFftPlan> plan_;
  std::vector<double> laplacian_symbol_;
  std::vector<std::vector<double>> derivative_symbol_;
};

/// Validated grid construction.
inline GridPtr build_grid(int dim, std::vector<int> resolutions, std::vector<double> periods) {
  return std::make_shared<const TorusGrid>(dim, std::move(resolutions), std::move(periods));
}

/// Real function sampled at every grid point, row-major with axis 0 slowest.
class ScalarField {
 public:
  ScalarField() = default;
  ScalarField(GridPtr grid, double value) : grid_(std::move(grid)) {
    require_grid();
    if (!std::isfinite(value)) throw InvalidArgument("field value must be finite");
    values_.assign(grid_->size(), value);
  }
  ScalarField(GridPtr grid, std::vector<double> values)
      : grid_(std::move(grid)), values_(std::move(values)) {
    require_grid();
    if (values_.size() != grid_->size()) throw InvalidArgument("field size does not match grid");
    for (double v : values_)
      if (!std::isfinite(v)) throw InvalidArgument("field values must be finite");
  }

  template <class Fn>
  static ScalarField from_function(const GridPtr& grid, Fn&& fn) {
    std::vector<double> values(grid->size());
    for (std::size_t i = 0; i < values.size(); ++i) {
      const auto x = grid->point(i);
      values[i] = fn(std::span<const double>(x));
    }
    return ScalarField(grid, std::move(values));
  }

  const GridPtr& grid() const noexcept { return grid_; }
  std::size_t size() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }

  double min() const { return *std::min_element(values_.begin(), values_.end()); }
  double max() const { return *std::max_element(values_.begin(), values_.end()); }
  double sup_norm() const {
    double s = 0.0;
    for (double v : values_) s = std::max(s, std::abs(v));
    return s;
  }
  std::size_t argmax() const {
    return static_cast<std::size_t>(std::max_element(values_.begin(), values_.end()) - values_.begin());
  }
  bool compatible(const ScalarField& other) const noexcept {
    return grid_ && other.grid_ && (grid_ == other.grid_ || grid_->same_as(*other.grid_));
  }
  bool is_constant() const {
    return !values_.empty() && min() == max();
  }

  /// Pointwise map; the result is validated for finiteness.
  template <class Fn>
  ScalarField map(Fn&& fn) const {
    std::vector<double> out(values_.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fn(values_[i]);
    return ScalarField(grid_, std::move(out));
  }

  /// Pointwise binary combination with a field on the same grid.
  template <class Fn>
  ScalarField zip(const ScalarField& other, Fn&& fn) const {
    require_same_grid(other);
    std::vector<double> out(values_.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fn(values_[i], other.values_[i]);
    return ScalarField(grid_, std::move(out));
  }

  void require_same_grid(const ScalarField& other) const {
    if (!compatible(other)) throw GridMismatch("fields live on different grids");
  }

 private:
  void require_grid() const {
    if (!grid_) throw InvalidArgument("field requires a grid");
  }

  GridPtr grid_;
  std::vector<double> values_;
};

inline ScalarField operator+(const ScalarField& a, const ScalarField& b) {
  return a.zip(b, std::plus<>{});
}
inline ScalarField operator-(const ScalarField& a, const ScalarField& b) {
  return a.zip(b, std::minus<>{});
}
inline ScalarField operator*(const ScalarField& a, const ScalarField& b) {
  return a.zip(b, std::multiplies<>{});
}
inline ScalarField operator/(const ScalarField& a, const ScalarField& b) {
  return a.zip(b, std::divides<>{});
}
inline ScalarField operator+(const ScalarField& a, double s) {
  return a.map([s](double v) { return v + s; });
}
inline ScalarField operator-(const ScalarField& a, double s) {
  return a.map([s](double v) { return v - s; });
}
inline ScalarField operator*(const ScalarField& a, double s) {
  return a.map([s](double v) { return v * s; });
}
inline ScalarField operator*(double s, const ScalarField& a) { return a * s; }
inline ScalarField operator/(const ScalarField& a, double s) { return a * (1.0 / s); }
inline ScalarField operator-(const ScalarField& a) {
  return a.map([](double v) { return -v; });
}

/// a + s * b without a temporary.
inline ScalarField axpy(const ScalarField& a, double s, const ScalarField& b) {
  return a.zip(b, [s](double x, double y) { return x + s * y; });
}

inline ScalarField positive_part(const ScalarField& u) {
  return u.map([](double v) { return v > 0.0 ? v : 0.0; });
}

inline double sup_distance(const ScalarField& a, const ScalarField& b) {
  a.require_same_grid(b);
  double d = 0.0;
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) d = std::max(d, std::abs(av[i] - bv[i]));
  return d;
}

// ---------------------------------------------------------------------------
// Quadrature

inline double integrate(const ScalarField& u) {
  auto v = u.values();
  return std::accumulate(v.begin(), v.end(), 0.0) * u.grid()->weight();
}

inline double mean(const ScalarField& u) { return integrate(u) / u.grid()->volume(); }

inline double l2_inner(const ScalarField& u, const ScalarField& v) {
  u.require_same_grid(v);
  auto a = u.values();
  auto b = v.values();
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s * u.grid()->weight();
}

inline double lp_norm(const ScalarField& u, double p) {
  if (!(p >= 1.0)) throw InvalidArgument("lp_norm requires p >= 1");
  double s = 0.0;
  for (double v : u.values()) s += std::pow(std::abs(v), p);
  return std::pow(s * u.grid()->weight(), 1.0 / p);
}

// ---------------------------------------------------------------------------
// Spectral operators

template <class Multiplier>
ScalarField apply_symbol(const ScalarField& u, Multiplier&& m) {
  const auto& grid = *u.grid();
  auto spectrum = grid.forward(u.values());
  auto lap = grid.laplacian_symbol();
  for (std::size_t s = 0; s < spectrum.size(); ++s) spectrum[s] *= m(lap[s]);
  return ScalarField(u.grid(), grid.backward(spectrum));
}

inline ScalarField laplacian(const ScalarField& u) {
  return apply_symbol(u, [](double k2) { return k2; });
}

/// Spatial gradient, one field per axis.
inline std::vector<ScalarField> gradient(const ScalarField& u) {
  const auto& grid = *u.grid();
  const auto spectrum = grid.forward(u.values());
  std::vector<ScalarField> out;
  out.reserve(grid.dim());
  for (int axis = 0; axis < grid.dim(); ++axis) {
    auto sym = grid.derivative_symbol(axis);
    std::vector<std::complex<double>> d(spectrum.size());
    for (std::size_t s = 0; s < d.size(); ++s) d[s] = spectrum[s] * std::complex<double>(0.0, sym[s]);
    out.emplace_back(u.grid(), grid.backward(d));
  }
  return out;
}

/// Dirichlet energy ∫|∇u|² evaluated by Parseval.
inline double dirichlet_energy(const ScalarField& u) {
  const auto& grid = *u.grid();
  const auto spectrum = grid.forward(u.values());
  auto lap = grid.laplacian_symbol();
  const int nlast = grid.resolutions().back();
  const int half = nlast / 2 + 1;
  double s = 0.0;
  for (std::size_t i = 0; i < spectrum.size(); ++i) {
    const int klast = static_cast<int>(i % static_cast<std::size_t>(half));
    // Interior modes of the halved axis stand for a conjugate pair.
    const double mult = (klast == 0 || klast == nlast / 2) ? 1.0 : 2.0;
    s += mult * lap[i] * std::norm(spectrum[i]);
  }
  const double n = static_cast<double>(grid.size());
  return s * grid.volume() / (n * n);
}

/// Signed quadratic form ∫(|∇u|² + h u²).
inline double h1h_quadratic_form(const ScalarField& u, const ScalarField& h) {
  u.require_same_grid(h);
  auto a = u.values();
  auto b = h.values();
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += b[i] * a[i] * a[i];
  return dirichlet_energy(u) + s * u.grid()->weight();
}

/// ‖u‖_{H¹_h}; throws when the quadratic form is negative on u.
inline double h1h_norm(const ScalarField& u, const ScalarField& h) {
  const double q = h1h_quadratic_form(u, h);
  if (q < 0.0) throw NonCoercive("H1_h quadratic form is negative on this input");
  return std::sqrt(q);
}

/// Inner product associated with the H¹_h form.
inline double h1h_inner(const ScalarField& u, const ScalarField& v, const ScalarField& h) {
  return l2_inner(laplacian(u), v) + l2_inner(h * u, v);
}

struct HelmholtzOptions {
  double tolerance = 1e-10;
  int max_iterations = 2000;
};

struct HelmholtzStats {
  int iterations = 0;
  double relative_residual = 0.0;
};

/// Solves (Δ + c) u = rhs for a positive constant c by spectral division.
inline ScalarField helmholtz_solve(double c, const ScalarField& rhs) {
  if (!(c > 0.0)) throw NonCoercive("helmholtz_solve requires a positive constant shift");
  return apply_symbol(rhs, [c](double k2) { return 1.0 / (k2 + c); });
}

/// Solves (Δ + c(x)) u = rhs by conjugate gradients preconditioned with the
/// spectral inverse of (Δ + mean c).
inline ScalarField helmholtz_solve(const ScalarField& c, const ScalarField& rhs,
                                   const HelmholtzOptions& opt = {},
                                   HelmholtzStats* stats = nullptr) {
  c.require_same_grid(rhs);
  const double cbar = mean(c);
  // The constant function has Rayleigh quotient mean(c).
  if (!(cbar > 0.0)) throw NonCoercive("operator is not coercive: mean of c is not positive");
  if (c.is_constant()) {
    if (stats) *stats = {};
    return helmholtz_solve(c[0], rhs);
  }

  auto apply = [&](const ScalarField& x) { return laplacian(x) + c * x; };
  const double rhs_norm = std::sqrt(l2_inner(rhs, rhs));
  ScalarField x(rhs.grid(), 0.0);
  if (rhs_norm == 0.0) {
    if (stats) *stats = {};
    return x;
  }
  ScalarField r = rhs;
  ScalarField z = helmholtz_solve(cbar, r);
  ScalarField p = z;
  double rz = l2_inner(r, z);
  for (int it = 1; it <= opt.max_iterations; ++it) {
    ScalarField ap = apply(p);
    const double pap = l2_inner(p, ap);
    if (!(pap > 0.0)) throw NonCoercive("operator is not coercive: nonpositive curvature in CG");
    const double alpha = rz / pap;
    x = axpy(x, alpha, p);
    r = axpy(r, -alpha, ap);
    const double rel = std::sqrt(l2_inner(r, r)) / rhs_norm;
    if (rel <= opt.tolerance) {
      if (stats) *stats = {it, rel};
      return x;
    }
    z = helmholtz_solve(cbar, r);
    const double rz_next = l2_inner(r, z);
    p = axpy(z, rz_next / rz, p);
    rz = rz_next;
  }
  throw ConvergenceFailure("helmholtz_solve: conjugate gradients did not converge");
}

// ---------------------------------------------------------------------------
// Field builders

/// One cosine term A cos(2π k·x/L + phase) with integer wavevector k.
struct CosineTerm {
  double amplitude = 0.0;
  std::vector<int> wavevector;
  double phase = 0.0;
};

/// c0 + Σ A_j cos(2π k_j·x/L + φ_j), evaluated exactly at the grid points.
inline ScalarField cosine_series(const GridPtr& grid, double constant,
                                 const std::vector<CosineTerm>& terms) {
  for (const auto& t : terms)
    if (static_cast<int>(t.wavevector.size()) != grid->dim())
      throw InvalidArgument("cosine term wavevector must have one entry per dimension");
  const auto& periods = grid->periods();
  return ScalarField::from_function(grid, [&](std::span<const double> x) {
    double v = constant;
    for (const auto& t : terms) {
      double arg = t.phase;
      for (int axis = 0; axis < grid->dim(); ++axis)
        arg += kTwoPi * t.wavevector[axis] * x[axis] / periods[axis];
      v += t.amplitude * std::cos(arg);
    }
    return v;
  });
}

}  // namespace lich
