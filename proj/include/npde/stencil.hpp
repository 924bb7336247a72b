#pragma once

// Finite-difference stencils on periodic grids.
//
// Weights are obtained from the moment (Vandermonde) conditions
//   sum_j w_j * o_j^m / m! = [m == p],   m = 0 .. count-1
// solved exactly over the rationals and only then rounded to binary64.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "npde/error.hpp"
#include "npde/grid.hpp"

namespace npde {

using Rational = boost::multiprecision::cpp_rational;

struct Stencil {
  int deriv_order = 0;
  std::vector<int> offsets;
  std::vector<double> weights;  // dimensionless; scaled by dx^-p at evaluation
  int accuracy_order = 0;

  [[nodiscard]] std::size_t size() const noexcept { return offsets.size(); }
  [[nodiscard]] int width() const noexcept {
    auto [lo, hi] = std::minmax_element(offsets.begin(), offsets.end());
    return *hi - *lo + 1;
  }
};

namespace detail {

inline bool symmetric_offsets(std::span<const int> offsets) {
  std::set<int> s(offsets.begin(), offsets.end());
  for (int o : s)
    if (!s.contains(-o)) return false;
  return true;
}

// Gauss-Jordan elimination over Q. Returns std::nullopt on a singular system.
inline std::optional<std::vector<Rational>> solve_exact(std::vector<std::vector<Rational>> a,
                                                         std::vector<Rational> rhs) {
  const std::size_t n = rhs.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    while (piv < n && a[piv][col] == 0) ++piv;
    if (piv == n) return std::nullopt;
    std::swap(a[piv], a[col]);
    std::swap(rhs[piv], rhs[col]);
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col || a[r][col] == 0) continue;
      const Rational f = a[r][col] / a[col][col];
      for (std::size_t c = col; c < n; ++c) a[r][c] -= f * a[col][c];
      rhs[r] -= f * rhs[col];
    }
  }
  for (std::size_t r = 0; r < n; ++r) rhs[r] /= a[r][r];
  return rhs;
}

}  // namespace detail

/// Exact rational weights for the p-th derivative on the given offsets.
inline std::vector<Rational> stencil_weights_exact(int p, std::span<const int> offsets) {
  if (p < 0) throw Error(ErrorKind::config, "derivative order must be non-negative");
  const std::size_t n = offsets.size();
  if (n <= static_cast<std::size_t>(p))
    throw Error(ErrorKind::insufficient_points,
                "stencil for derivative order " + std::to_string(p) + " needs more than " +
                    std::to_string(p) + " offsets, got " + std::to_string(n));

  std::vector<std::vector<Rational>> moments(n, std::vector<Rational>(n));
  Rational factorial = 1;
  for (std::size_t m = 0; m < n; ++m) {
    if (m > 0) factorial *= static_cast<long>(m);
    for (std::size_t j = 0; j < n; ++j) {
      Rational power = 1;
      for (std::size_t k = 0; k < m; ++k) power *= offsets[j];
      moments[m][j] = power / factorial;
    }
  }
  std::vector<Rational> rhs(n, Rational(0));
  rhs[static_cast<std::size_t>(p)] = 1;

  auto sol = detail::solve_exact(std::move(moments), std::move(rhs));
  if (!sol) throw Error(ErrorKind::singular_system, "stencil moment system is singular (duplicate offsets?)");
  return *sol;
}

/// Nominal accuracy: count - p, plus one for symmetric offsets when p + count is odd.
inline int stencil_accuracy_order(int p, std::span<const int> offsets) {
  const int count = static_cast<int>(offsets.size());
  int order = count - p;
  if (detail::symmetric_offsets(offsets) && (p + count) % 2 == 1) ++order;
  return order;
}

inline Stencil stencil_weights(int p, std::span<const int> offsets) {
  const auto exact = stencil_weights_exact(p, offsets);
  Stencil s;
  s.deriv_order = p;
  s.offsets.assign(offsets.begin(), offsets.end());
  s.weights.reserve(exact.size());
  for (const auto& w : exact) s.weights.push_back(static_cast<double>(w));
  s.accuracy_order = stencil_accuracy_order(p, offsets);
  return s;
}

inline Stencil stencil_weights(int p, std::initializer_list<int> offsets) {
  return stencil_weights(p, std::span<const int>(offsets.begin(), offsets.size()));
}

// ---------------------------------------------------------------------------
// Named schemes

enum class SchemePreset { backward1, central2, central6 };

inline std::string_view scheme_name(SchemePreset p) {
  switch (p) {
    case SchemePreset::backward1: return "backward1";
    case SchemePreset::central2: return "central2";
    case SchemePreset::central6: return "central6";
  }
  return "?";
}

inline SchemePreset parse_scheme(std::string_view name) {
  if (name == "backward1") return SchemePreset::backward1;
  if (name == "central2") return SchemePreset::central2;
  if (name == "central6") return SchemePreset::central6;
  throw Error(ErrorKind::config, "unknown scheme '" + std::string(name) + "'");
}

struct SchemeChoice {
  SchemePreset preset = SchemePreset::central2;
  int deriv_order = 1;

  [[nodiscard]] std::vector<int> offsets() const {
    std::vector<int> out;
    switch (preset) {
      case SchemePreset::backward1:
        for (int o = -deriv_order; o <= 0; ++o) out.push_back(o);
        break;
      case SchemePreset::central2:
      case SchemePreset::central6: {
        const int nominal = preset == SchemePreset::central2 ? 2 : 6;
        const int radius = (deriv_order + 1) / 2 + nominal / 2 - 1;
        for (int o = -radius; o <= radius; ++o) out.push_back(o);
        break;
      }
    }
    return out;
  }

  [[nodiscard]] Stencil resolve() const {
    const auto offs = offsets();
    return stencil_weights(deriv_order, offs);
  }

  friend bool operator==(const SchemeChoice&, const SchemeChoice&) = default;
};

// ---------------------------------------------------------------------------
// Application

/// out_i = scale * sum_j w_j * in[(i + o_j) mod n]; `out` is overwritten.
inline void apply_weighted_offsets(std::span<const double> in, std::span<const int> offsets,
                                   std::span<const double> weights, double scale,
                                   std::span<double> out) {
  const int n = static_cast<int>(in.size());
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t j = 0; j < offsets.size(); ++j) {
    const double w = weights[j] * scale;
    if (w == 0.0) continue;
    const int s = ((offsets[j] % n) + n) % n;
    const double* src = in.data();
    double* dst = out.data();
    for (int i = 0; i < n - s; ++i) dst[i] += w * src[i + s];
    for (int i = n - s; i < n; ++i) dst[i] += w * src[i + s - n];
  }
}

/// A stencil bound to a grid spacing, ready for repeated application.
class BoundStencil {
 public:
  BoundStencil() = default;
  BoundStencil(const Stencil& s, double dx)
      : stencil_(s), scale_(std::pow(dx, -s.deriv_order)) {
    negated_.reserve(s.offsets.size());
    for (int o : s.offsets) negated_.push_back(-o);
  }

  void apply(std::span<const double> in, std::span<double> out) const {
    apply_weighted_offsets(in, stencil_.offsets, stencil_.weights, scale_, out);
  }
  /// Adjoint (transpose) of apply on a periodic grid.
  void apply_transpose(std::span<const double> in, std::span<double> out) const {
    apply_weighted_offsets(in, negated_, stencil_.weights, scale_, out);
  }

  [[nodiscard]] const Stencil& stencil() const noexcept { return stencil_; }
  [[nodiscard]] double scale() const noexcept { return scale_; }

 private:
  Stencil stencil_;
  std::vector<int> negated_;
  double scale_ = 1.0;
};

inline Field apply_stencil(const Field& f, const Stencil& s) {
  if (s.width() > f.grid.n_points())
    throw Error(ErrorKind::config, "stencil wider than the grid");
  require_finite(f.values, "apply_stencil input");
  Field out(f.grid);
  BoundStencil(s, f.grid.dx()).apply(f.values, out.values);
  return out;
}

// ---------------------------------------------------------------------------
// Convergence study

struct ConvergenceResult {
  double slope = 0.0;
  bool saturated = false;  // errors reached round-off; slope not meaningful
  std::vector<double> dx;
  std::vector<double> errors;
};

/// Least-squares slope of log(max error) against log(dx) for `scheme` applied to
/// samples of f, with `exact_derivative` as reference.
inline ConvergenceResult measured_convergence_order(const SchemeChoice& scheme,
                                                    const std::function<double(double)>& f,
                                                    const std::function<double(double)>& exact_derivative,
                                                    double length, std::span<const int> resolutions) {
  if (resolutions.size() < 3)
    throw Error(ErrorKind::config, "convergence study needs at least three resolutions");
  const Stencil s = scheme.resolve();
  ConvergenceResult r;
  for (int n : resolutions) {
    const Grid1D g(n, length);
    const Field d = apply_stencil(Field::sample(g, f), s);
    double err = 0.0;
    for (int i = 0; i < n; ++i) err = std::max(err, std::abs(d[i] - exact_derivative(g.x(i))));
    r.dx.push_back(g.dx());
    r.errors.push_back(err);
  }
  constexpr double kFloor = 1e-12;
  for (double e : r.errors)
    if (e < kFloor) r.saturated = true;

  const std::size_t m = r.dx.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const double x = std::log(r.dx[i]);
    const double y = std::log(std::max(r.errors[i], 1e-300));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  r.slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  return r;
}

}  // namespace npde
