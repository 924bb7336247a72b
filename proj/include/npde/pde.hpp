#pragma once

// Right-hand sides of the viscous Burgers and geophysical KdV equations in their
// ground-truth and neural (one term replaced by f_NN) forms.
//
//   Burgers, true:    s * phi . D1 phi + nu * D2 phi
//   Burgers, neural:  s * phi . D1 phi + f_NN(phi)
//   gKdV, true:       (omega0 - 3/2 phi) . D1 phi - 1/6 * D3 phi
//   gKdV, neural:     f_NN(phi) - 1/6 * D3 phi
//
// The neural forms expose a vector-Jacobian product so rollouts built from them
// can be differentiated in reverse mode.

#include <span>
#include <variant>
#include <vector>

#include "npde/error.hpp"
#include "npde/grid.hpp"
#include "npde/mlp.hpp"
#include "npde/spectral.hpp"
#include "npde/stencil.hpp"

namespace npde {

struct BurgersSpec {
  double nu = 0.03;
  SchemeChoice advective{SchemePreset::backward1, 1};
  SchemeChoice diffusive{SchemePreset::central6, 2};
  int advection_sign = +1;

  void validate() const {
    if (!(nu > 0.0)) throw Error(ErrorKind::config, "Burgers viscosity must be positive");
    if (advective.deriv_order != 1 || diffusive.deriv_order != 2)
      throw Error(ErrorKind::config, "Burgers schemes must be first (advective) and second (diffusive) derivatives");
    if (advection_sign != 1 && advection_sign != -1)
      throw Error(ErrorKind::config, "advection sign must be +1 or -1");
  }
  friend bool operator==(const BurgersSpec&, const BurgersSpec&) = default;
};

struct GkdvSpec {
  double omega0 = 0.5;
  SchemeChoice advective{SchemePreset::central2, 1};
  SchemeChoice dispersive{SchemePreset::central2, 3};

  void validate() const {
    if (advective.deriv_order != 1 || dispersive.deriv_order != 3)
      throw Error(ErrorKind::config, "gKdV schemes must be first (advective) and third (dispersive) derivatives");
  }
  friend bool operator==(const GkdvSpec&, const GkdvSpec&) = default;
};

using PdeSpec = std::variant<BurgersSpec, GkdvSpec>;

namespace detail {

inline BoundStencil bind(const SchemeChoice& scheme, const Grid1D& grid) {
  const Stencil s = scheme.resolve();
  if (s.width() > grid.n_points()) throw Error(ErrorKind::config, "stencil wider than the grid");
  return BoundStencil(s, grid.dx());
}

inline std::vector<double>& scratch(int slot, std::size_t n) {
  thread_local std::vector<double> buffers[4];
  buffers[slot].resize(n);
  return buffers[slot];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Ground-truth right-hand sides

class BurgersTrueRhs {
 public:
  BurgersTrueRhs(const BurgersSpec& spec, const Grid1D& grid)
      : d1_(detail::bind(spec.advective, grid)),
        d2_(detail::bind(spec.diffusive, grid)),
        nu_(spec.nu),
        sign_(spec.advection_sign) {
    spec.validate();
  }

  void operator()(std::span<const double> f, std::span<double> out) const {
    auto& tmp = detail::scratch(0, f.size());
    d1_.apply(f, tmp);
    d2_.apply(f, out);
    for (std::size_t i = 0; i < f.size(); ++i) out[i] = sign_ * f[i] * tmp[i] + nu_ * out[i];
  }

 private:
  BoundStencil d1_, d2_;
  double nu_, sign_;
};

class GkdvTrueRhs {
 public:
  GkdvTrueRhs(const GkdvSpec& spec, const Grid1D& grid)
      : d1_(detail::bind(spec.advective, grid)), d3_(detail::bind(spec.dispersive, grid)), omega0_(spec.omega0) {
    spec.validate();
  }

  void operator()(std::span<const double> f, std::span<double> out) const {
    auto& tmp = detail::scratch(0, f.size());
    d1_.apply(f, tmp);
    d3_.apply(f, out);
    for (std::size_t i = 0; i < f.size(); ++i)
      out[i] = (omega0_ - 1.5 * f[i]) * tmp[i] - out[i] / 6.0;
  }

 private:
  BoundStencil d1_, d3_;
  double omega0_;
};

// ---------------------------------------------------------------------------
// Neural right-hand sides

/// f_NN alone as a right-hand side; no physics term.
class NetworkRhs {
 public:
  struct Tape {
    MlpTape mlp;
  };

  explicit NetworkRhs(const MlpParams& net) : net_(&net) {}

  void eval(std::span<const double> y, std::span<double> out, Tape* tape) const {
    mlp_forward(*net_, y, out, tape ? &tape->mlp : nullptr);
  }
  void operator()(std::span<const double> y, std::span<double> out) const { eval(y, out, nullptr); }
  void vjp(std::span<const double>, const Tape& tape, std::span<const double> cot, std::span<double> y_bar,
           GradientBundle& grads) const {
    mlp_backward(*net_, tape.mlp, cot, y_bar, grads);
  }
  [[nodiscard]] const MlpParams& net() const noexcept { return *net_; }

 private:
  const MlpParams* net_;
};

class BurgersNeuralRhs {
 public:
  struct Tape {
    MlpTape mlp;
    std::vector<double> d1;
  };

  BurgersNeuralRhs(const BurgersSpec& spec, const Grid1D& grid, const MlpParams& net)
      : d1_(detail::bind(spec.advective, grid)), sign_(spec.advection_sign), net_(&net) {
    if (spec.advective.deriv_order != 1) throw Error(ErrorKind::config, "Burgers advective scheme must be first order");
    if (net.layout.input_width() != grid.n_points() || net.layout.output_width() != grid.n_points())
      throw Error(ErrorKind::config, "network width does not match grid size");
  }

  void eval(std::span<const double> y, std::span<double> out, Tape* tape) const {
    const std::size_t n = y.size();
    auto& d1 = detail::scratch(1, n);
    d1_.apply(y, d1);
    mlp_forward(*net_, y, out, tape ? &tape->mlp : nullptr);
    for (std::size_t i = 0; i < n; ++i) out[i] += sign_ * y[i] * d1[i];
    if (tape) tape->d1.assign(d1.begin(), d1.end());
  }
  void operator()(std::span<const double> y, std::span<double> out) const { eval(y, out, nullptr); }

  // d/dy [s y.D1y] ^T c = s (c.D1y + D1^T (c.y))
  void vjp(std::span<const double> y, const Tape& tape, std::span<const double> cot, std::span<double> y_bar,
           GradientBundle& grads) const {
    const std::size_t n = y.size();
    auto& cy = detail::scratch(1, n);
    auto& back = detail::scratch(2, n);
    for (std::size_t i = 0; i < n; ++i) cy[i] = cot[i] * y[i];
    d1_.apply_transpose(cy, back);
    for (std::size_t i = 0; i < n; ++i) y_bar[i] += sign_ * (cot[i] * tape.d1[i] + back[i]);
    mlp_backward(*net_, tape.mlp, cot, y_bar, grads);
  }
  [[nodiscard]] const MlpParams& net() const noexcept { return *net_; }

 private:
  BoundStencil d1_;
  double sign_;
  const MlpParams* net_;
};

class GkdvNeuralRhs {
 public:
  struct Tape {
    MlpTape mlp;
  };

  GkdvNeuralRhs(const GkdvSpec& spec, const Grid1D& grid, const MlpParams& net)
      : d3_(detail::bind(spec.dispersive, grid)), net_(&net) {
    if (spec.dispersive.deriv_order != 3) throw Error(ErrorKind::config, "gKdV dispersive scheme must be third order");
    if (net.layout.input_width() != grid.n_points() || net.layout.output_width() != grid.n_points())
      throw Error(ErrorKind::config, "network width does not match grid size");
  }

  void eval(std::span<const double> y, std::span<double> out, Tape* tape) const {
    const std::size_t n = y.size();
    auto& d3 = detail::scratch(1, n);
    d3_.apply(y, d3);
    mlp_forward(*net_, y, out, tape ? &tape->mlp : nullptr);
    for (std::size_t i = 0; i < n; ++i) out[i] -= d3[i] / 6.0;
  }
  void operator()(std::span<const double> y, std::span<double> out) const { eval(y, out, nullptr); }

  void vjp(std::span<const double> y, const Tape& tape, std::span<const double> cot, std::span<double> y_bar,
           GradientBundle& grads) const {
    auto& back = detail::scratch(2, y.size());
    d3_.apply_transpose(cot, back);
    for (std::size_t i = 0; i < y.size(); ++i) y_bar[i] -= back[i] / 6.0;
    mlp_backward(*net_, tape.mlp, cot, y_bar, grads);
  }
  [[nodiscard]] const MlpParams& net() const noexcept { return *net_; }

 private:
  BoundStencil d3_;
  const MlpParams* net_;
};

// ---------------------------------------------------------------------------
// Field-level evaluators

namespace detail {
template <class Rhs>
Field eval_rhs(const Rhs& rhs, const Field& f) {
  require_finite(f.values, "rhs input");
  Field out(f.grid);
  rhs(f.span(), out.span());
  if (!out.finite()) throw Error(ErrorKind::non_finite, "right-hand side produced non-finite values (blow-up)");
  return out;
}
}  // namespace detail

inline Field burgers_rhs_true(const Field& f, const BurgersSpec& spec) {
  return detail::eval_rhs(BurgersTrueRhs(spec, f.grid), f);
}
inline Field burgers_rhs_neural(const Field& f, const BurgersSpec& spec, const MlpParams& net) {
  return detail::eval_rhs(BurgersNeuralRhs(spec, f.grid, net), f);
}
inline Field gkdv_rhs_true(const Field& f, const GkdvSpec& spec) {
  return detail::eval_rhs(GkdvTrueRhs(spec, f.grid), f);
}
inline Field gkdv_rhs_neural(const Field& f, const GkdvSpec& spec, const MlpParams& net) {
  return detail::eval_rhs(GkdvNeuralRhs(spec, f.grid, net), f);
}

// ---------------------------------------------------------------------------
// Truncation diagnostics

/// Finite-difference derivative minus the spectral reference derivative.
inline Field truncation_residual(const Field& f, const Stencil& s) {
  Field fd = apply_stencil(f, s);
  const Field exact = spectral_derivative(f, s.deriv_order);
  for (std::size_t i = 0; i < fd.size(); ++i) fd[i] -= exact[i];
  return fd;
}

/// Split of the pointwise discrepancy between the data-generating right-hand
/// side at phi_true and the NeuralPDE right-hand side at phi_hat.
///
/// The retained physics term is compared with exact (spectral) derivatives;
/// the replaced term compares the discretized ground-truth term with f_NN;
/// the numerical part collects the truncation residuals of the retained term
/// under the two schemes. The three parts sum to the discrete discrepancy.
/// `replaced_truncation` is the truncation carried by the discretized replaced
/// term in the data (the part f_NN absorbs); it is reported, not summed.
struct DiscrepancyReport {
  Field advective_error;
  Field diffusive_or_dispersive_error;
  Field numerical_error;
  Field total;
  Field replaced_truncation;
};

inline DiscrepancyReport discrepancy_decompose(const Field& phi_true, const Field& phi_hat, const BurgersSpec& true_spec,
                                               const BurgersSpec& neural_spec, const MlpParams& net) {
  if (!(phi_true.grid == phi_hat.grid)) throw Error(ErrorKind::config, "discrepancy: grids differ");
  true_spec.validate();
  const Grid1D g = phi_true.grid;
  const double s_true = true_spec.advection_sign, s_hat = neural_spec.advection_sign;
  const Stencil p = true_spec.advective.resolve(), k = neural_spec.advective.resolve(), q = true_spec.diffusive.resolve();

  const Field dphi = spectral_derivative(phi_true, 1);
  const Field dphi_hat = spectral_derivative(phi_hat, 1);
  const Field rp = truncation_residual(phi_true, p);
  const Field rk = truncation_residual(phi_hat, k);
  const Field rq = truncation_residual(phi_true, q);
  const Field d2 = apply_stencil(phi_true, q);
  const Field nn = mlp_forward(net, phi_hat);

  DiscrepancyReport r{Field(g), Field(g), Field(g), Field(g), Field(g)};
  for (int i = 0; i < g.n_points(); ++i) {
    r.advective_error[i] = s_true * phi_true[i] * dphi[i] - s_hat * phi_hat[i] * dphi_hat[i];
    r.diffusive_or_dispersive_error[i] = true_spec.nu * d2[i] - nn[i];
    r.numerical_error[i] = s_true * phi_true[i] * rp[i] - s_hat * phi_hat[i] * rk[i];
    r.total[i] = r.advective_error[i] + r.diffusive_or_dispersive_error[i] + r.numerical_error[i];
    r.replaced_truncation[i] = true_spec.nu * rq[i];
  }
  return r;
}

inline DiscrepancyReport discrepancy_decompose(const Field& phi_true, const Field& phi_hat, const GkdvSpec& true_spec,
                                               const GkdvSpec& neural_spec, const MlpParams& net) {
  if (!(phi_true.grid == phi_hat.grid)) throw Error(ErrorKind::config, "discrepancy: grids differ");
  true_spec.validate();
  const Grid1D g = phi_true.grid;
  const Stencil p = true_spec.advective.resolve(), k = true_spec.dispersive.resolve(), q = neural_spec.dispersive.resolve();

  const Field d3 = spectral_derivative(phi_true, 3);
  const Field d3_hat = spectral_derivative(phi_hat, 3);
  const Field rk = truncation_residual(phi_true, k);
  const Field rq = truncation_residual(phi_hat, q);
  const Field rp = truncation_residual(phi_true, p);
  const Field d1 = apply_stencil(phi_true, p);
  const Field nn = mlp_forward(net, phi_hat);

  DiscrepancyReport r{Field(g), Field(g), Field(g), Field(g), Field(g)};
  for (int i = 0; i < g.n_points(); ++i) {
    r.advective_error[i] = (true_spec.omega0 - 1.5 * phi_true[i]) * d1[i] - nn[i];
    r.diffusive_or_dispersive_error[i] = -(d3[i] - d3_hat[i]) / 6.0;
    r.numerical_error[i] = -(rk[i] - rq[i]) / 6.0;
    r.total[i] = r.advective_error[i] + r.diffusive_or_dispersive_error[i] + r.numerical_error[i];
    r.replaced_truncation[i] = (true_spec.omega0 - 1.5 * phi_true[i]) * rp[i];
  }
  return r;
}

inline DiscrepancyReport discrepancy_decompose(const Field& phi_true, const Field& phi_hat, const PdeSpec& true_spec,
                                               const PdeSpec& neural_spec, const MlpParams& net) {
  if (true_spec.index() != neural_spec.index())
    throw Error(ErrorKind::config, "discrepancy: true and neural specs describe different equations");
  if (const auto* b = std::get_if<BurgersSpec>(&true_spec))
    return discrepancy_decompose(phi_true, phi_hat, *b, std::get<BurgersSpec>(neural_spec), net);
  return discrepancy_decompose(phi_true, phi_hat, std::get<GkdvSpec>(true_spec), std::get<GkdvSpec>(neural_spec), net);
}

}  // namespace npde
