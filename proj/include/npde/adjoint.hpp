#pragma once

// Discrete adjoint of an unrolled explicit RK rollout.
//
// Forward: the state at the start of every RK substep is stored. Backward:
// each substep is replayed to rebuild its stage inputs and network tapes, then
// the stage cotangents are propagated in reverse stage order. The result is
// the exact gradient of the loss the forward pass computed.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "npde/mlp.hpp"
#include "npde/runge_kutta.hpp"

namespace npde {

/// Loss term weight * mean((state_at_step - target)^2).
struct RolloutTarget {
  int step = 0;
  std::span<const double> state;
  double weight = 1.0;
};

/// Requirements on a differentiable right-hand side.
template <class R>
concept DifferentiableRhs = requires(const R& r, std::span<const double> y, std::span<double> out,
                                     typename R::Tape* tape, const typename R::Tape& ct,
                                     GradientBundle& g) {
  r.eval(y, out, tape);
  r.vjp(y, ct, y, out, g);
  { r.net() } -> std::convertible_to<const MlpParams&>;
};

template <DifferentiableRhs Rhs>
class RolloutAdjoint {
 public:
  RolloutAdjoint(const Rhs& rhs, ButcherTableau tableau, double dt, int substeps)
      : rhs_(rhs), tab_(std::move(tableau)), dt_(dt), substeps_(substeps) {
    if (!(dt > 0.0) || substeps < 1) throw Error(ErrorKind::config, "rollout: dt > 0 and substeps >= 1 required");
    stages_ = tab_.effective_stages();
  }

  /// Forward-only loss. Returns +inf-free NaN when the rollout blows up.
  double loss(std::span<const double> phi0, int n_steps, std::span<const RolloutTarget> targets) {
    return run(phi0, n_steps, targets, nullptr, nullptr);
  }

  /// Loss and reverse-mode gradient. Parameter gradients are accumulated into
  /// `grads` (not cleared); if `phi0_bar` is non-null it receives dL/dphi0.
  double loss_and_grad(std::span<const double> phi0, int n_steps, std::span<const RolloutTarget> targets,
                       GradientBundle* grads, std::vector<double>* phi0_bar) {
    return run(phi0, n_steps, targets, grads, phi0_bar);
  }

  /// Vector-Jacobian product of the n-step map: returns cot^T d(phi_n)/d(phi0)
  /// and accumulates cot^T d(phi_n)/d(theta) into `grads` if given. Throws on
  /// blow-up.
  std::vector<double> pullback(std::span<const double> phi0, int n_steps, std::span<const double> cot,
                               GradientBundle* grads = nullptr) {
    if (!forward(phi0, n_steps)) throw Error(ErrorKind::non_finite, "rollout blew up");
    return pullback_stored(cot, grads);
  }

  /// As pullback, reusing the last forward pass.
  std::vector<double> pullback_stored(std::span<const double> cot, GradientBundle* grads = nullptr) {
    auto seed = [&](int step, std::vector<double>& ybar) {
      if (step == steps_)
        for (std::size_t i = 0; i < n_; ++i) ybar[i] += cot[i];
    };
    GradientBundle scratch;
    if (!grads) scratch = GradientBundle::zeros_like(rhs_.net());
    return backward(seed, grads ? *grads : scratch);
  }

  /// Final state of the last forward pass.
  [[nodiscard]] std::span<const double> final_state() const {
    return {history_.data() + (history_.size() - n_), n_};
  }

 private:
  // Forward rollout storing every substep state. False on blow-up.
  bool forward(std::span<const double> phi0, int n_steps) {
    n_ = phi0.size();
    steps_ = n_steps;
    const int total = n_steps * substeps_;
    const double h = dt_ / substeps_;
    history_.assign(phi0.begin(), phi0.end());
    history_.resize(static_cast<std::size_t>(total + 1) * n_);
    RkWorkspace ws;
    auto forward_rhs = [this](std::span<const double> y, std::span<double> out) { rhs_.eval(y, out, nullptr); };
    for (int j = 0; j < total; ++j) {
      std::span<const double> cur(history_.data() + j * n_, n_);
      std::span<double> next(history_.data() + (j + 1) * n_, n_);
      if (!rk_step(forward_rhs, cur, h, tab_, next, ws).ok) return false;
    }
    return true;
  }

  // Reverse sweep over the stored rollout. `seed(step, ybar)` adds the loss
  // cotangent of the output state at `step` into ybar.
  template <class Seed>
  std::vector<double> backward(Seed&& seed, GradientBundle& g) {
    const double h = dt_ / substeps_;
    std::vector<double> ybar(n_, 0.0);
    for (int step = steps_; step >= 1; --step) {
      seed(step, ybar);
      for (int sub = substeps_ - 1; sub >= 0; --sub) {
        const int j = (step - 1) * substeps_ + sub;
        step_backward(std::span<const double>(history_.data() + j * n_, n_), h, ybar, g);
      }
    }
    seed(0, ybar);
    return ybar;
  }

  double run(std::span<const double> phi0, int n_steps, std::span<const RolloutTarget> targets, GradientBundle* grads,
             std::vector<double>* phi0_bar) {
    if (!forward(phi0, n_steps)) return std::numeric_limits<double>::quiet_NaN();
    double loss = 0.0;
    for (const auto& t : targets) {
      if (t.step < 0 || t.step > n_steps || t.state.size() != n_)
        throw Error(ErrorKind::config, "rollout target out of range");
      auto y = state_at(t.step);
      double s = 0.0;
      for (std::size_t i = 0; i < n_; ++i) s += (y[i] - t.state[i]) * (y[i] - t.state[i]);
      loss += t.weight * s / static_cast<double>(n_);
    }
    if (!std::isfinite(loss) || (grads == nullptr && phi0_bar == nullptr)) return loss;

    auto seed = [&](int step, std::vector<double>& ybar) {
      for (const auto& t : targets) {
        if (t.step != step) continue;
        auto y = state_at(step);
        const double c = 2.0 * t.weight / static_cast<double>(n_);
        for (std::size_t i = 0; i < n_; ++i) ybar[i] += c * (y[i] - t.state[i]);
      }
    };
    GradientBundle scratch;
    if (!grads) scratch = GradientBundle::zeros_like(rhs_.net());
    auto ybar = backward(seed, grads ? *grads : scratch);
    if (phi0_bar) *phi0_bar = std::move(ybar);
    return loss;
  }

  [[nodiscard]] std::span<const double> state_at(int step) const {
    return {history_.data() + static_cast<std::size_t>(step) * substeps_ * n_, n_};
  }

  // ybar enters as the cotangent of the step output and leaves as that of y.
  void step_backward(std::span<const double> y, double h, std::vector<double>& ybar, GradientBundle& g) {
    const int s = stages_;
    stage_in_.resize(s);
    k_.resize(s);
    tapes_.resize(s);
    for (int i = 0; i < s; ++i) {
      auto& yi = stage_in_[i];
      yi.assign(y.begin(), y.end());
      for (int j = 0; j < i; ++j) {
        const double aij = h * tab_.coeff(i, j);
        if (aij == 0.0) continue;
        for (std::size_t q = 0; q < n_; ++q) yi[q] += aij * k_[j][q];
      }
      k_[i].resize(n_);
      rhs_.eval(yi, k_[i], &tapes_[i]);
    }

    kbar_.resize(s);
    for (int i = 0; i < s; ++i) {
      kbar_[i].resize(n_);
      const double w = h * tab_.b[i];
      for (std::size_t q = 0; q < n_; ++q) kbar_[i][q] = w * ybar[q];
    }
    stage_bar_.resize(n_);
    for (int i = s - 1; i >= 0; --i) {
      std::fill(stage_bar_.begin(), stage_bar_.end(), 0.0);
      rhs_.vjp(stage_in_[i], tapes_[i], kbar_[i], stage_bar_, g);
      for (std::size_t q = 0; q < n_; ++q) ybar[q] += stage_bar_[q];
      for (int j = 0; j < i; ++j) {
        const double aij = h * tab_.coeff(i, j);
        if (aij == 0.0) continue;
        for (std::size_t q = 0; q < n_; ++q) kbar_[j][q] += aij * stage_bar_[q];
      }
    }
  }

  const Rhs& rhs_;
  ButcherTableau tab_;
  double dt_;
  int substeps_;
  int stages_ = 0;
  int steps_ = 0;
  std::size_t n_ = 0;
  std::vector<double> history_;
  std::vector<std::vector<double>> stage_in_, k_, kbar_;
  std::vector<typename Rhs::Tape> tapes_;
  std::vector<double> stage_bar_;
};

struct LossAndGradient {
  double loss = 0.0;
  GradientBundle grads;
};

/// Loss of an unrolled rollout and its exact parameter gradient.
template <DifferentiableRhs Rhs>
LossAndGradient rollout_loss_grad(const Rhs& rhs, const ButcherTableau& tab, double dt, int substeps,
                                  std::span<const double> phi0, int n_steps, std::span<const RolloutTarget> targets) {
  RolloutAdjoint<Rhs> adj(rhs, tab, dt, substeps);
  LossAndGradient out{0.0, GradientBundle::zeros_like(rhs.net())};
  out.loss = adj.loss_and_grad(phi0, n_steps, targets, &out.grads, nullptr);
  if (!std::isfinite(out.loss)) throw Error(ErrorKind::training_divergence, "rollout loss is not finite");
  return out;
}

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::vector<std::size_t> indices;
  std::vector<double> analytic;
  std::vector<double> numeric;
};

/// Compares an analytic gradient with fourth-order central differences on
/// `samples` randomly chosen parameters. `loss` evaluates the objective for
/// given parameters; step h = rel_step * max(1, |theta_i|).
inline GradCheckResult grad_check(MlpParams net, const std::function<double(const MlpParams&)>& loss,
                                  const GradientBundle& analytic, int samples, std::uint64_t seed,
                                  double rel_step = 1e-3) {
  GradCheckResult r;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, net.values.size() - 1);
  double gmax = 0.0;
  for (double g : analytic.values) gmax = std::max(gmax, std::abs(g));
  for (int s = 0; s < samples; ++s) {
    const std::size_t i = pick(rng);
    const double orig = net.values[i];
    const double h = rel_step * std::max(1.0, std::abs(orig));
    auto at = [&](double d) {
      net.values[i] = orig + d;
      return loss(net);
    };
    const double fd = (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
    net.values[i] = orig;
    const double a = analytic.values[i];
    // Entries far below the gradient scale are compared against that scale.
    const double denom = std::max({std::abs(a), std::abs(fd), 1e-6 * gmax, 1e-300});
    r.indices.push_back(i);
    r.analytic.push_back(a);
    r.numeric.push_back(fd);
    r.max_relative_error = std::max(r.max_relative_error, std::abs(a - fd) / denom);
  }
  return r;
}

}  // namespace npde
