#pragma once

// Explicit Runge-Kutta stepping and trajectory rollout.
//
// An output step of size dt is taken as `substeps` equal RK steps of dt/substeps.
// Stability of the finite-difference operators used here (third derivatives in
// particular) needs this; the output time grid stays uniform at dt.

#include <cmath>
#include <complex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "npde/error.hpp"
#include "npde/grid.hpp"

namespace npde {

struct ButcherTableau {
  std::string name;
  int stages = 0;
  int order = 0;
  std::vector<double> a;  // stages x stages, row-major, strictly lower triangular
  std::vector<double> b;
  std::vector<double> b_embedded;  // empty if no embedded pair
  std::vector<double> c;

  [[nodiscard]] double coeff(int i, int j) const { return a[static_cast<std::size_t>(i) * stages + j]; }

  /// Stages that contribute to the propagated solution (trailing b_i = 0
  /// stages only feed the embedded estimate).
  [[nodiscard]] int effective_stages() const {
    int s = stages;
    while (s > 0 && b[s - 1] == 0.0) --s;
    return s;
  }

  void validate() const {
    const auto n = static_cast<std::size_t>(stages);
    if (stages <= 0 || a.size() != n * n || b.size() != n || c.size() != n ||
        (!b_embedded.empty() && b_embedded.size() != n))
      throw Error(ErrorKind::config, "tableau '" + name + "' has inconsistent dimensions");
    double sb = 0.0;
    for (int i = 0; i < stages; ++i) {
      sb += b[i];
      double row = 0.0;
      for (int j = 0; j < stages; ++j) {
        if (j >= i && coeff(i, j) != 0.0)
          throw Error(ErrorKind::config, "tableau '" + name + "' is not explicit");
        row += coeff(i, j);
      }
      if (std::abs(row - c[i]) > 1e-12)
        throw Error(ErrorKind::config, "tableau '" + name + "' violates the row-sum condition");
    }
    if (std::abs(sb - 1.0) > 1e-12) throw Error(ErrorKind::config, "tableau '" + name + "' weights do not sum to 1");
  }

  static ButcherTableau forward_euler() { return {"euler", 1, 1, {0.0}, {1.0}, {}, {0.0}}; }

  static ButcherTableau rk4() {
    return {"rk4", 4, 4,
            {0, 0, 0, 0,
             0.5, 0, 0, 0,
             0, 0.5, 0, 0,
             0, 0, 1, 0},
            {1.0 / 6, 1.0 / 3, 1.0 / 3, 1.0 / 6},
            {},
            {0, 0.5, 0.5, 1}};
  }

  /// Dormand-Prince 5(4); seventh stage (FSAL) only enters the embedded weights.
  static ButcherTableau dormand_prince5() {
    ButcherTableau t{"dp5", 7, 5, std::vector<double>(49, 0.0), {}, {}, {}};
    auto set = [&t](int i, std::initializer_list<double> row) {
      int j = 0;
      for (double v : row) t.a[static_cast<std::size_t>(i) * 7 + j++] = v;
    };
    set(1, {1.0 / 5});
    set(2, {3.0 / 40, 9.0 / 40});
    set(3, {44.0 / 45, -56.0 / 15, 32.0 / 9});
    set(4, {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729});
    set(5, {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656});
    set(6, {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84});
    t.b = {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84, 0.0};
    t.b_embedded = {5179.0 / 57600, 0.0, 7571.0 / 16695, 393.0 / 640, -92097.0 / 339200, 187.0 / 2100, 1.0 / 40};
    t.c = {0.0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};
    return t;
  }

  /// Tsitouras 5(4). Slightly anti-dissipative on the imaginary axis near 0.
  static ButcherTableau tsit5() {
    ButcherTableau t{"tsit5", 7, 5, std::vector<double>(49, 0.0), {}, {}, {}};
    auto set = [&t](int i, std::initializer_list<double> row) {
      int j = 0;
      for (double v : row) t.a[static_cast<std::size_t>(i) * 7 + j++] = v;
    };
    set(1, {0.161});
    set(2, {-0.008480655492356989, 0.335480655492357});
    set(3, {2.897153057105493, -6.359448489975075, 4.3622954328695815});
    set(4, {5.325864828439257, -11.748883564062828, 7.4955393428898365, -0.09249506636175525});
    set(5, {5.86145544294642, -12.92096931784711, 8.159367898576159, -0.071584973281401,
            -0.028269050394068383});
    set(6, {0.09646076681806523, 0.01, 0.4798896504144996, 1.379008574103742, -3.290069515436081,
            2.324710524099774});
    t.b = {0.09646076681806523, 0.01, 0.4798896504144996, 1.379008574103742, -3.290069515436081,
           2.324710524099774, 0.0};
    const double btilde[7] = {-0.00178001105222577714, -0.0008164344596567469, 0.007880878010261995,
                              -0.1447110071732629,     0.5823571654525552,     -0.45808210592918697,
                              1.0 / 66};
    t.b_embedded.resize(7);
    for (int i = 0; i < 7; ++i) t.b_embedded[i] = t.b[i] - btilde[i];
    // Row sums define c; the published c5 carries only 16 digits.
    t.c.assign(7, 0.0);
    for (int i = 0; i < 7; ++i)
      for (int j = 0; j < i; ++j) t.c[i] += t.a[static_cast<std::size_t>(i) * 7 + j];
    return t;
  }

  static ButcherTableau by_name(std::string_view id) {
    if (id == "rk4") return rk4();
    if (id == "dp5") return dormand_prince5();
    if (id == "tsit5") return tsit5();
    if (id == "euler") return forward_euler();
    throw Error(ErrorKind::config, "unknown tableau '" + std::string(id) + "'");
  }

  /// Stability polynomial R(z) = 1 + z b^T (I - zA)^{-1} 1 of the propagating weights.
  [[nodiscard]] std::complex<double> stability_function(std::complex<double> z) const {
    std::vector<std::complex<double>> k(static_cast<std::size_t>(stages));
    std::complex<double> r = 1.0;
    for (int i = 0; i < stages; ++i) {
      std::complex<double> s = 1.0;
      for (int j = 0; j < i; ++j) s += z * coeff(i, j) * k[j];
      k[i] = s;
      r += z * b[i] * s;
    }
    return r;
  }
};

/// Scratch buffers for rk_step; reused across calls to avoid allocation.
struct RkWorkspace {
  std::vector<std::vector<double>> k;
  std::vector<double> stage_input;
  std::vector<double> acc;

  void ensure(int stages, std::size_t n) {
    if (k.size() < static_cast<std::size_t>(stages)) k.resize(stages);
    for (auto& v : k) v.resize(n);
    stage_input.resize(n);
    acc.resize(n);
  }
};

struct StepStatus {
  bool ok = true;
  int failed_stage = -1;
};

/// One explicit RK step. `rhs(y, out)` must overwrite `out`. On a non-finite
/// stage value the step stops and reports the stage.
template <class Rhs>
StepStatus rk_step(const Rhs& rhs, std::span<const double> y, double dt, const ButcherTableau& tab,
                   std::span<double> out, RkWorkspace& ws, std::span<double> error_estimate = {}) {
  const std::size_t n = y.size();
  const int s = error_estimate.empty() ? tab.effective_stages() : tab.stages;
  ws.ensure(s, n);
  for (int i = 0; i < s; ++i) {
    auto& yi = ws.stage_input;
    std::copy(y.begin(), y.end(), yi.begin());
    for (int j = 0; j < i; ++j) {
      const double aij = dt * tab.coeff(i, j);
      if (aij == 0.0) continue;
      const auto& kj = ws.k[j];
      for (std::size_t q = 0; q < n; ++q) yi[q] += aij * kj[q];
    }
    rhs(std::span<const double>(yi), std::span<double>(ws.k[i]));
    if (!all_finite(ws.k[i])) return {false, i};
  }
  auto& acc = ws.acc;
  std::copy(y.begin(), y.end(), acc.begin());
  for (int i = 0; i < s; ++i) {
    const double w = dt * tab.b[i];
    if (w == 0.0) continue;
    for (std::size_t q = 0; q < n; ++q) acc[q] += w * ws.k[i][q];
  }
  if (!error_estimate.empty() && !tab.b_embedded.empty()) {
    std::fill(error_estimate.begin(), error_estimate.end(), 0.0);
    for (int i = 0; i < s; ++i) {
      const double w = dt * (tab.b[i] - tab.b_embedded[i]);
      for (std::size_t q = 0; q < n; ++q) error_estimate[q] += w * ws.k[i][q];
    }
  }
  std::copy(acc.begin(), acc.end(), out.begin());
  if (!all_finite(out)) return {false, s};
  return {};
}

template <class Rhs>
Field rk_step(const Rhs& rhs, const Field& f, double dt, const ButcherTableau& tab) {
  if (!(dt > 0.0)) throw Error(ErrorKind::config, "dt must be positive");
  Field out(f.grid);
  RkWorkspace ws;
  const auto st = rk_step(rhs, f.values, dt, tab, out.values, ws);
  if (!st.ok) throw Error(ErrorKind::non_finite, "RK stage " + std::to_string(st.failed_stage) + " produced non-finite values");
  return out;
}

/// Advance one output step of size dt as `substeps` RK steps. Returns false on blow-up.
template <class Rhs>
bool advance(const Rhs& rhs, std::span<const double> y, double dt, int substeps, const ButcherTableau& tab,
             std::span<double> out, RkWorkspace& ws) {
  const double h = dt / substeps;
  std::copy(y.begin(), y.end(), out.begin());
  for (int k = 0; k < substeps; ++k)
    if (!rk_step(rhs, std::span<const double>(out), h, tab, out, ws).ok) return false;
  return true;
}

/// Uniformly sampled rollout. Rows 0..n_stored-1 are finite; blowup_step marks
/// the first output step that produced non-finite values.
struct Trajectory {
  Grid1D grid;
  double dt = 0.0;
  std::vector<double> times;
  std::vector<double> states;  // row-major, times.size() x n_points
  std::optional<int> blowup_step;

  explicit Trajectory(Grid1D g, double step = 0.0) : grid(g), dt(step) {}

  [[nodiscard]] std::size_t n_stored() const noexcept { return times.size(); }
  [[nodiscard]] std::size_t n_points() const noexcept { return static_cast<std::size_t>(grid.n_points()); }
  [[nodiscard]] std::span<const double> state(std::size_t k) const {
    return {states.data() + k * n_points(), n_points()};
  }
  [[nodiscard]] Field field(std::size_t k) const {
    auto s = state(k);
    return Field(grid, std::vector<double>(s.begin(), s.end()));
  }
  [[nodiscard]] Field last_finite() const { return field(n_stored() - 1); }
  void push(double t, std::span<const double> s) {
    times.push_back(t);
    states.insert(states.end(), s.begin(), s.end());
  }
};

template <class Rhs>
Trajectory integrate(const Rhs& rhs, const Field& f0, double dt, int n_steps, const ButcherTableau& tab,
                     int substeps = 1) {
  if (!(dt > 0.0) || n_steps < 0 || substeps < 1)
    throw Error(ErrorKind::config, "integrate: dt > 0, n_steps >= 0 and substeps >= 1 required");
  Trajectory traj(f0.grid, dt);
  traj.push(0.0, f0.values);
  if (!f0.finite()) {
    traj.blowup_step = 0;
    traj.times.clear();
    traj.states.clear();
    return traj;
  }
  RkWorkspace ws;
  std::vector<double> cur = f0.values, next(cur.size());
  for (int step = 1; step <= n_steps; ++step) {
    if (!advance(rhs, cur, dt, substeps, tab, next, ws)) {
      traj.blowup_step = step;
      break;
    }
    cur.swap(next);
    traj.push(step * dt, cur);
  }
  return traj;
}

/// Observed global order of `tab` on y' = -y, y(0) = 1 integrated to t = 1:
/// least-squares slope of log error against log step size.
inline double measured_integrator_order(const ButcherTableau& tab, std::span<const int> step_counts) {
  if (step_counts.size() < 2) throw Error(ErrorKind::insufficient_points, "need at least two step counts");
  std::vector<double> lx, ly;
  RkWorkspace ws;
  const auto decay = [](std::span<const double> y, std::span<double> out) { out[0] = -y[0]; };
  for (int n : step_counts) {
    std::vector<double> y{1.0}, next(1);
    const double h = 1.0 / n;
    for (int k = 0; k < n; ++k) {
      rk_step(decay, y, h, tab, next, ws);
      y.swap(next);
    }
    lx.push_back(std::log(h));
    ly.push_back(std::log(std::abs(y[0] - std::exp(-1.0))));
  }
  const double m = static_cast<double>(lx.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sx += lx[i];
    sy += ly[i];
    sxx += lx[i] * lx[i];
    sxy += lx[i] * ly[i];
  }
  return (m * sxy - sx * sy) / (m * sxx - sx * sx);
}

}  // namespace npde
