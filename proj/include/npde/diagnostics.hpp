#pragma once

// Stability and error diagnostics for learned maps and reference solvers.

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "npde/adjoint.hpp"
#include "npde/eigen.hpp"
#include "npde/pde.hpp"
#include "npde/runge_kutta.hpp"

namespace npde {

// ---------------------------------------------------------------------------
// The learned one-step map H

/// H(phi): one output step dt of the neural right-hand side, taken as
/// `substeps` steps of the given tableau.
class OneStepMap {
 public:
  OneStepMap(const PdeSpec& spec, const Grid1D& grid, const MlpParams& net, const std::string& tableau, int substeps,
             double dt)
      : rhs_(make(spec, grid, net)), tab_(ButcherTableau::by_name(tableau)), substeps_(substeps), dt_(dt) {
    if (substeps < 1 || !(dt > 0.0)) throw Error(ErrorKind::config, "one-step map: dt > 0 and substeps >= 1 required");
  }

  /// Returns false if the step produced non-finite values.
  bool operator()(std::span<const double> y, std::span<double> out) const {
    return std::visit([&](const auto& r) { return advance(r, y, dt_, substeps_, tab_, out, ws_); }, rhs_);
  }

  /// n-fold composition. Returns false on blow-up.
  bool iterate(std::span<const double> y, int n, std::span<double> out) const {
    std::copy(y.begin(), y.end(), out.begin());
    for (int k = 0; k < n; ++k)
      if (!(*this)(std::span<const double>(out), out)) return false;
    return true;
  }

  /// Reverse-mode Jacobian of the n-fold composition, row by row.
  [[nodiscard]] Eigen::MatrixXd jacobian_ad(std::span<const double> y, int n) const {
    return std::visit(
        [&](const auto& r) {
          using R = std::decay_t<decltype(r)>;
          RolloutAdjoint<R> adj(r, tab_, dt_, substeps_);
          const auto dim = static_cast<Eigen::Index>(y.size());
          Eigen::MatrixXd j(dim, dim);
          std::vector<double> cot(y.size(), 0.0);
          for (Eigen::Index i = 0; i < dim; ++i) {
            cot.assign(y.size(), 0.0);
            cot[i] = 1.0;
            const auto row = i == 0 ? adj.pullback(y, n, cot) : adj.pullback_stored(cot);
            for (Eigen::Index c = 0; c < dim; ++c) j(i, c) = row[c];
          }
          return j;
        },
        rhs_);
  }

  [[nodiscard]] double dt() const noexcept { return dt_; }

 private:
  using Rhs = std::variant<BurgersNeuralRhs, GkdvNeuralRhs>;
  static Rhs make(const PdeSpec& spec, const Grid1D& grid, const MlpParams& net) {
    if (const auto* b = std::get_if<BurgersSpec>(&spec)) return BurgersNeuralRhs(*b, grid, net);
    return GkdvNeuralRhs(std::get<GkdvSpec>(spec), grid, net);
  }

  Rhs rhs_;
  ButcherTableau tab_;
  int substeps_;
  double dt_;
  mutable RkWorkspace ws_;
};

// ---------------------------------------------------------------------------
// Jacobians

struct JacobianReport {
  Eigen::MatrixXd matrix;
  std::vector<Complex> eigenvalues;
  double lambda_max_abs = 0.0;
  double rollout_time = 0.0;
  bool blowup = false;
  std::string context;
};

inline void attach_spectrum(JacobianReport& r) {
  r.eigenvalues = eigenvalues_dense(r.matrix, r.context);
  r.lambda_max_abs = spectral_radius(r.eigenvalues);
}

/// Central-difference Jacobian of `map` at `state`; column step
/// h = 1e-6 * max(1, |state|_inf). `map(y, out)` returns false on blow-up.
template <class Map>
JacobianReport jacobian_fd(const Map& map, std::span<const double> state, double rollout_time = 0.0,
                           std::string context = "jacobian", bool with_spectrum = true) {
  JacobianReport r;
  r.rollout_time = rollout_time;
  r.context = std::move(context);
  if (!all_finite(state)) {
    r.blowup = true;
    return r;
  }
  const std::size_t n = state.size();
  const double h = 1e-6 * std::max(1.0, max_abs(state));
  r.matrix.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  std::vector<double> yp(state.begin(), state.end()), ym(yp), op(n), om(n);
  for (std::size_t j = 0; j < n; ++j) {
    yp[j] = state[j] + h;
    ym[j] = state[j] - h;
    if (!map(std::span<const double>(yp), std::span<double>(op)) ||
        !map(std::span<const double>(ym), std::span<double>(om))) {
      r.blowup = true;
      r.matrix.resize(0, 0);
      return r;
    }
    for (std::size_t i = 0; i < n; ++i) r.matrix(i, j) = (op[i] - om[i]) / (2.0 * h);
    yp[j] = ym[j] = state[j];
  }
  if (with_spectrum) attach_spectrum(r);
  return r;
}

/// J = dH/dphi at `state`.
template <class Map>
JacobianReport jacobian_one_step(const Map& map, std::span<const double> state, double rollout_time = 0.0,
                                 std::string context = "one-step jacobian") {
  return jacobian_fd(map, state, rollout_time, std::move(context));
}

/// J_c = d(H o ... o H)(phi0)/d(phi0) over n_steps compositions, by central
/// differences on the composite map.
template <class Map>
JacobianReport jacobian_cumulative(const Map& map, std::span<const double> phi0, int n_steps, double dt,
                                   std::string context = "cumulative jacobian") {
  std::vector<double> a(phi0.size()), b(phi0.size());
  auto composite = [&](std::span<const double> y, std::span<double> out) {
    std::copy(y.begin(), y.end(), a.begin());
    for (int k = 0; k < n_steps; ++k) {
      if (!map(std::span<const double>(a), std::span<double>(b))) return false;
      a.swap(b);
    }
    std::copy(a.begin(), a.end(), out.begin());
    return true;
  };
  return jacobian_fd(composite, phi0, n_steps * dt, std::move(context));
}

/// Cumulative Jacobians for several prefix lengths from one rollout, as the
/// chain product J(phi_{n-1}) ... J(phi_0) of one-step central-difference
/// Jacobians. `steps` must be positive; prefixes past a blow-up are flagged.
template <class Map>
std::vector<JacobianReport> jacobian_cumulative_chain(const Map& map, std::span<const double> phi0,
                                                      std::vector<int> steps, double dt,
                                                      const std::string& context = "cumulative jacobian") {
  std::vector<JacobianReport> out(steps.size());
  for (std::size_t q = 0; q < steps.size(); ++q) {
    if (steps[q] < 1) throw Error(ErrorKind::config, "cumulative jacobian: step counts must be positive");
    out[q].rollout_time = steps[q] * dt;
    out[q].context = fmt::format("{} n={}", context, steps[q]);
  }
  const int n_max = steps.empty() ? 0 : *std::max_element(steps.begin(), steps.end());
  const auto dim = static_cast<Eigen::Index>(phi0.size());
  Eigen::MatrixXd acc = Eigen::MatrixXd::Identity(dim, dim);
  std::vector<double> y(phi0.begin(), phi0.end()), next(y.size());
  bool alive = all_finite(y);
  for (int k = 1; k <= n_max; ++k) {
    if (alive) {
      const JacobianReport j = jacobian_fd(map, y, 0.0, context, false);
      alive = !j.blowup && map(std::span<const double>(y), std::span<double>(next));
      if (alive) {
        acc = j.matrix * acc;
        y.swap(next);
      }
    }
    for (std::size_t q = 0; q < steps.size(); ++q) {
      if (steps[q] != k) continue;
      if (!alive) {
        out[q].blowup = true;
        continue;
      }
      out[q].matrix = acc;
      attach_spectrum(out[q]);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Unit-circle classification

struct StabilityClassification {
  int inside = 0;
  int on = 0;
  int outside = 0;
  double tol = 0.02;
};

inline StabilityClassification classify_unit_circle(const std::vector<Complex>& eigs, double tol = 0.02) {
  StabilityClassification c;
  c.tol = tol;
  for (const auto& e : eigs) {
    const double a = std::abs(e);
    if (a < 1.0 - tol) ++c.inside;
    else if (a > 1.0 + tol) ++c.outside;
    else ++c.on;
  }
  return c;
}

// ---------------------------------------------------------------------------
// Error curves

inline constexpr double kLog10RmseZero = -300.0;  // reported when RMSE == 0
inline constexpr double kLog10RmseCap = 10.0;     // reported on blow-up; finite values are capped here

inline double rmse(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) throw Error(ErrorKind::config, "rmse: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s / static_cast<double>(a.size()));
}

struct RmsRow {
  double ic_param = 0.0;
  double log10_rmse = 0.0;
  bool blowup = false;
};

inline double log10_capped(double r) {
  if (r == 0.0) return kLog10RmseZero;
  return std::min(std::log10(r), kLog10RmseCap);
}

/// Final-state error of a prediction against the truth; a prediction that
/// did not reach the final time is flagged and given the cap value.
inline RmsRow rms_row(double ic_param, const Trajectory& pred, std::span<const double> truth_final) {
  if (pred.blowup_step) return {ic_param, kLog10RmseCap, true};
  return {ic_param, log10_capped(rmse(pred.state(pred.n_stored() - 1), truth_final)), false};
}

struct RolloutComparison {
  double ic_param = 0.0;
  Trajectory prediction;
  std::vector<double> truth_final;
};

inline std::vector<RmsRow> rms_error_curve(const std::vector<RolloutComparison>& runs) {
  std::vector<RmsRow> rows;
  rows.reserve(runs.size());
  for (const auto& r : runs) rows.push_back(rms_row(r.ic_param, r.prediction, r.truth_final));
  return rows;
}

// ---------------------------------------------------------------------------
// Energy

enum class EnergyWeight { plain_l2, gaussian_weighted };

struct EnergySeries {
  std::vector<double> times;
  std::vector<double> values;
  EnergyWeight mode = EnergyWeight::plain_l2;
  bool non_increasing = true;
  double max_increase = 0.0;  // largest E(t+dt) - E(t), 0 if none
  bool clamped = false;       // gaussian weight hit its exponent cap
};

/// E(t) = sum_i phi(t, x_i)^2 w(x_i) dx. The gaussian weight is e^{x^2/4} with
/// x measured from the domain centre and the exponent capped at 600.
inline EnergySeries energy_norm_series(const Trajectory& traj, EnergyWeight mode = EnergyWeight::plain_l2) {
  EnergySeries e;
  e.mode = mode;
  const auto& g = traj.grid;
  std::vector<double> w(traj.n_points(), 1.0);
  if (mode == EnergyWeight::gaussian_weighted) {
    for (int i = 0; i < g.n_points(); ++i) {
      const double x = g.x(i) - 0.5 * g.length();
      double ex = x * x / 4.0;
      if (ex > 600.0) {
        ex = 600.0;
        e.clamped = true;
      }
      w[i] = std::exp(ex);
    }
  }
  for (std::size_t k = 0; k < traj.n_stored(); ++k) {
    const auto s = traj.state(k);
    double acc = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) acc += s[i] * s[i] * w[i];
    e.times.push_back(traj.times[k]);
    e.values.push_back(acc * g.dx());
  }
  for (std::size_t k = 1; k < e.values.size(); ++k) {
    const double d = e.values[k] - e.values[k - 1];
    if (d > 0.0) {
      e.non_increasing = false;
      e.max_increase = std::max(e.max_increase, d);
    }
  }
  return e;
}

// ---------------------------------------------------------------------------
// Von Neumann analysis

/// One term c * D phi of a linear constant-coefficient right-hand side.
struct LinearTerm {
  double coefficient = 0.0;
  SchemeChoice scheme;
};

/// Fourier symbol of a stencil: dx^-p sum_j w_j e^{i k o_j dx}.
inline Complex stencil_symbol(const Stencil& s, double dx, double k) {
  Complex acc = 0.0;
  for (std::size_t j = 0; j < s.size(); ++j) acc += s.weights[j] * std::exp(Complex(0.0, k * s.offsets[j] * dx));
  return acc * std::pow(dx, -s.deriv_order);
}

/// Amplification of mode e^{ikx} over one output step dt taken as `substeps`
/// RK steps: g = R(h lambda(k))^m, h = dt/m.
inline Complex von_neumann_amplification(const std::vector<LinearTerm>& terms, const ButcherTableau& tab, double dt,
                                         double dx, double k, int substeps = 1) {
  Complex lambda = 0.0;
  for (const auto& t : terms)
    if (t.coefficient != 0.0) lambda += t.coefficient * stencil_symbol(t.scheme.resolve(), dx, k);
  const double h = dt / substeps;
  return std::pow(tab.stability_function(h * lambda), substeps);
}

struct AmplificationScan {
  double max_abs_g = 0.0;
  double worst_k = 0.0;
};

/// max |g| over the resolved modes k = 2 pi j / L, j = 0..N/2.
inline AmplificationScan von_neumann_scan(const std::vector<LinearTerm>& terms, const ButcherTableau& tab, double dt,
                                          const Grid1D& grid, int substeps = 1) {
  std::vector<std::pair<double, Stencil>> resolved;
  for (const auto& t : terms)
    if (t.coefficient != 0.0) resolved.emplace_back(t.coefficient, t.scheme.resolve());
  AmplificationScan s;
  const double h = dt / substeps;
  for (int j = 0; j <= grid.n_points() / 2; ++j) {
    const double k = 2.0 * std::numbers::pi * j / grid.length();
    Complex lambda = 0.0;
    for (const auto& [c, st] : resolved) lambda += c * stencil_symbol(st, grid.dx(), k);
    const double g = std::abs(std::pow(tab.stability_function(h * lambda), substeps));
    if (g > s.max_abs_g) {
      s.max_abs_g = g;
      s.worst_k = k;
    }
  }
  return s;
}

/// Linear terms of the true right-hand side with the nonlinearity frozen at a
/// background value: Burgers s phi_bar D1 + nu D2, gKdV (omega0 - 3/2 phi_bar) D1 - D3/6.
inline std::vector<LinearTerm> frozen_coefficient_terms(const PdeSpec& spec, double phi_bar) {
  if (const auto* b = std::get_if<BurgersSpec>(&spec))
    return {{b->advection_sign * phi_bar, b->advective}, {b->nu, b->diffusive}};
  const auto& k = std::get<GkdvSpec>(spec);
  return {{k.omega0 - 1.5 * phi_bar, k.advective}, {-1.0 / 6.0, k.dispersive}};
}

/// Worst amplification over `samples` background values evenly spanning [lo, hi].
inline AmplificationScan frozen_coefficient_scan(const PdeSpec& spec, const ButcherTableau& tab, double dt,
                                                 const Grid1D& grid, int substeps, double lo, double hi,
                                                 int samples = 41) {
  AmplificationScan worst;
  for (int q = 0; q < samples; ++q) {
    const double phi_bar = samples == 1 ? lo : lo + (hi - lo) * q / (samples - 1);
    const auto s = von_neumann_scan(frozen_coefficient_terms(spec, phi_bar), tab, dt, grid, substeps);
    if (s.max_abs_g > worst.max_abs_g) worst = s;
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Richardson extrapolation

struct RichardsonResult {
  Field improved;
  Field error_estimate;
};

/// Combines a solution at dx with one at dx/2 (restricted to the coarse
/// nodes) to cancel an O(dx^n) leading error term.
inline RichardsonResult richardson_extrapolate(const Field& coarse, const Field& fine, int order) {
  if (fine.grid.n_points() != 2 * coarse.grid.n_points() || fine.grid.length() != coarse.grid.length())
    throw Error(ErrorKind::config, "richardson: fine grid must be an exact 2x refinement");
  if (order < 1) throw Error(ErrorKind::config, "richardson: order must be >= 1");
  const double f = std::ldexp(1.0, order);
  RichardsonResult r{Field(coarse.grid), Field(coarse.grid)};
  for (std::size_t i = 0; i < coarse.size(); ++i) {
    const double fr = fine[2 * i];
    r.improved[i] = (f * fr - coarse[i]) / (f - 1.0);
    r.error_estimate[i] = (fr - coarse[i]) / (f - 1.0);
  }
  return r;
}

}  // namespace npde
