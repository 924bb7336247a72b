#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "npde/error.hpp"

namespace npde {

/// Uniform periodic 1-D grid. Node i sits at x_i = i * dx, dx = length / n_points.
class Grid1D {
 public:
  static constexpr int kMinPoints = 8;

  Grid1D(int n_points, double length) : n_points_(n_points), length_(length) {
    if (n_points < kMinPoints)
      throw Error(ErrorKind::config, "grid needs at least 8 points, got " + std::to_string(n_points));
    if (!(length > 0.0) || !std::isfinite(length))
      throw Error(ErrorKind::config, "grid length must be positive and finite");
  }

  [[nodiscard]] int n_points() const noexcept { return n_points_; }
  [[nodiscard]] double length() const noexcept { return length_; }
  [[nodiscard]] double dx() const noexcept { return length_ / n_points_; }
  [[nodiscard]] double x(int i) const noexcept { return i * dx(); }
  [[nodiscard]] bool periodic() const noexcept { return true; }

  friend bool operator==(const Grid1D&, const Grid1D&) = default;

 private:
  int n_points_;
  double length_;
};

inline bool all_finite(std::span<const double> v) noexcept {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

inline void require_finite(std::span<const double> v, const char* what) {
  if (!all_finite(v)) throw Error(ErrorKind::non_finite, std::string(what) + ": non-finite entry");
}

/// Discrete solution on a grid, one value per node.
struct Field {
  Grid1D grid;
  std::vector<double> values;

  explicit Field(Grid1D g) : grid(g), values(static_cast<std::size_t>(g.n_points()), 0.0) {}
  Field(Grid1D g, std::vector<double> v) : grid(g), values(std::move(v)) {
    if (values.size() != static_cast<std::size_t>(grid.n_points()))
      throw Error(ErrorKind::config, "field length does not match grid");
  }

  template <class F>
  static Field sample(Grid1D g, F&& f) {
    Field out(g);
    for (int i = 0; i < g.n_points(); ++i) out.values[i] = f(g.x(i));
    return out;
  }

  [[nodiscard]] std::size_t size() const noexcept { return values.size(); }
  [[nodiscard]] bool finite() const noexcept { return all_finite(values); }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
  [[nodiscard]] std::span<const double> span() const noexcept { return values; }
  [[nodiscard]] std::span<double> span() noexcept { return values; }
};

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double max_abs(std::span<const double> a) {
  double m = 0.0;
  for (double x : a) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace npde
