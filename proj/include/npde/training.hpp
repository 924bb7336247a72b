#pragma once

// Ground-truth datasets and the two training regimes.
//
// Autoregressive (Burgers): from every stored state t, roll the neural map
// `window` output steps and compare each with the data. One-shot (gKdV): roll
// the full horizon from phi0 and compare the final state only. Both take one
// Adam step per epoch on the full-trajectory loss.

#include <chrono>
#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <fmt/format.h>

#include "npde/adam.hpp"
#include "npde/adjoint.hpp"
#include "npde/hash.hpp"
#include "npde/pde.hpp"
#include "npde/runge_kutta.hpp"

namespace npde {

// ---------------------------------------------------------------------------
// Initial conditions

/// Step profile: max_phi0 on 0 <= x <= L/2, zero elsewhere.
struct BurgersIc {
  double max_phi0 = 2.0;
  friend bool operator==(const BurgersIc&, const BurgersIc&) = default;
};

/// u0 = -A sin(x/c + pi).
struct GkdvIc {
  double amplitude = 5.0;
  double wavespeed = 2.5;
  friend bool operator==(const GkdvIc&, const GkdvIc&) = default;
};

using ICParams = std::variant<BurgersIc, GkdvIc>;

inline Field initial_condition(const ICParams& ic, const Grid1D& g) {
  Field f(g);
  if (const auto* b = std::get_if<BurgersIc>(&ic)) {
    for (int i = 0; i < g.n_points(); ++i) f[i] = (2 * i <= g.n_points()) ? b->max_phi0 : 0.0;
  } else {
    const auto& k = std::get<GkdvIc>(ic);
    if (!(k.wavespeed != 0.0)) throw Error(ErrorKind::config, "gKdV wavespeed must be nonzero");
    for (int i = 0; i < g.n_points(); ++i) f[i] = -k.amplitude * std::sin(g.x(i) / k.wavespeed + std::numbers::pi);
  }
  return f;
}

/// The scalar that the test sweeps vary: max_phi0 or c.
inline double ic_parameter(const ICParams& ic) {
  if (const auto* b = std::get_if<BurgersIc>(&ic)) return b->max_phi0;
  return std::get<GkdvIc>(ic).wavespeed;
}

inline ICParams with_ic_parameter(ICParams ic, double value) {
  if (auto* b = std::get_if<BurgersIc>(&ic)) b->max_phi0 = value;
  else std::get<GkdvIc>(ic).wavespeed = value;
  return ic;
}

// ---------------------------------------------------------------------------
// Canonical text forms (hashed for provenance and checkpoint identity)

namespace detail {

inline std::string hexf(double v) { return fmt::format("{:a}", v); }

inline std::string canonical(const SchemeChoice& s) {
  return fmt::format("{}/d{}", scheme_name(s.preset), s.deriv_order);
}

}  // namespace detail

inline std::string canonical(const PdeSpec& spec) {
  if (const auto* b = std::get_if<BurgersSpec>(&spec))
    return fmt::format("burgers nu={} adv={} diff={} sign={}", detail::hexf(b->nu), detail::canonical(b->advective),
                       detail::canonical(b->diffusive), b->advection_sign);
  const auto& k = std::get<GkdvSpec>(spec);
  return fmt::format("gkdv omega0={} adv={} disp={}", detail::hexf(k.omega0), detail::canonical(k.advective),
                     detail::canonical(k.dispersive));
}

inline std::string canonical(const ICParams& ic) {
  if (const auto* b = std::get_if<BurgersIc>(&ic)) return fmt::format("step max_phi0={}", detail::hexf(b->max_phi0));
  const auto& k = std::get<GkdvIc>(ic);
  return fmt::format("sine A={} c={}", detail::hexf(k.amplitude), detail::hexf(k.wavespeed));
}

// ---------------------------------------------------------------------------
// Datasets

/// Everything needed to regenerate a ground-truth trajectory.
struct GenerationConfig {
  PdeSpec spec = BurgersSpec{};
  ICParams ic = BurgersIc{};
  int n_points = 100;
  double length = 2.0 * std::numbers::pi;
  double dt = 0.01;
  int n_steps = 50;
  std::string tableau = "rk4";
  int substeps = 1;

  [[nodiscard]] Grid1D grid() const { return Grid1D(n_points, length); }
  friend bool operator==(const GenerationConfig&, const GenerationConfig&) = default;

  [[nodiscard]] std::string canonical() const {
    return fmt::format("{}; {}; N={} L={} dt={} steps={} tableau={} substeps={}", npde::canonical(spec),
                       npde::canonical(ic), n_points, detail::hexf(length), detail::hexf(dt), n_steps, tableau,
                       substeps);
  }
};

/// Burgers reference preset: L = 2 pi, N = 100, T = 0.5, dt = 0.01, RK4.
inline GenerationConfig burgers_generation(const BurgersSpec& spec, const BurgersIc& ic, int substeps = 1) {
  return GenerationConfig{spec, ic, 100, 2.0 * std::numbers::pi, 0.01, 50, "rk4", substeps};
}

/// gKdV reference preset: L = 5 pi, N = 256, T = 1, dt = 0.01, fifth-order tableau.
inline GenerationConfig gkdv_generation(const GkdvSpec& spec, const GkdvIc& ic, int substeps = 1) {
  return GenerationConfig{spec, ic, 256, 5.0 * std::numbers::pi, 0.01, 100, "dp5", substeps};
}

struct TrajectoryDataset {
  GenerationConfig config;
  Trajectory trajectory;
  std::string provenance;  // SHA-256 of config.canonical(), hex

  [[nodiscard]] int n_steps() const { return static_cast<int>(trajectory.n_stored()) - 1; }
};

/// Rolls out a right-hand side from `f0`. The true or neural choice is made by
/// the caller through `rhs`.
template <class Rhs>
Trajectory rollout(const Rhs& rhs, const Field& f0, double dt, int n_steps, const std::string& tableau, int substeps) {
  return integrate(rhs, f0, dt, n_steps, ButcherTableau::by_name(tableau), substeps);
}

inline Trajectory rollout_true(const GenerationConfig& cfg, const Field& f0) {
  return std::visit(
      [&](const auto& spec) {
        using S = std::decay_t<decltype(spec)>;
        if constexpr (std::is_same_v<S, BurgersSpec>)
          return rollout(BurgersTrueRhs(spec, f0.grid), f0, cfg.dt, cfg.n_steps, cfg.tableau, cfg.substeps);
        else
          return rollout(GkdvTrueRhs(spec, f0.grid), f0, cfg.dt, cfg.n_steps, cfg.tableau, cfg.substeps);
      },
      cfg.spec);
}

inline TrajectoryDataset generate_dataset(const GenerationConfig& cfg) {
  if (cfg.spec.index() != cfg.ic.index())
    throw Error(ErrorKind::config, "initial condition does not match the equation");
  std::visit([](const auto& s) { s.validate(); }, cfg.spec);
  const Field f0 = initial_condition(cfg.ic, cfg.grid());
  Trajectory traj = rollout_true(cfg, f0);
  if (traj.blowup_step)
    throw Error(ErrorKind::ground_truth_blowup,
                fmt::format("ground truth blew up at step {} with {} ({} x{})", *traj.blowup_step,
                            canonical(cfg.spec), cfg.tableau, cfg.substeps));
  return TrajectoryDataset{cfg, std::move(traj), to_hex(sha256(cfg.canonical()))};
}

inline TrajectoryDataset generate_burgers_dataset(const BurgersIc& ic, const BurgersSpec& spec, int substeps = 1) {
  return generate_dataset(burgers_generation(spec, ic, substeps));
}

inline TrajectoryDataset generate_gkdv_dataset(const GkdvIc& ic, const GkdvSpec& spec, int substeps = 1) {
  return generate_dataset(gkdv_generation(spec, ic, substeps));
}

// ---------------------------------------------------------------------------
// Training configuration and state

enum class TrainMode { autoregressive, oneshot };

struct TrainConfig {
  TrainMode mode = TrainMode::autoregressive;
  int epochs = 1000;
  int window = 3;
  AdamConfig adam{};
  int checkpoint_every = 20;
  std::uint64_t seed = 0;
  PdeSpec neural_spec = BurgersSpec{};
  std::string tableau = "rk4";  // neural map integrator
  int substeps = 1;
  std::vector<int> hidden = {20, 20, 20};

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;

  void validate() const {
    if (window < 1) throw Error(ErrorKind::config, "train.window must be >= 1");
    if (epochs < 0) throw Error(ErrorKind::config, "train.epochs must be >= 0");
    if (substeps < 1) throw Error(ErrorKind::config, "train.substeps must be >= 1");
    if (checkpoint_every < 0) throw Error(ErrorKind::config, "train.checkpoint_every must be >= 0");
    if (!(adam.learning_rate > 0.0)) throw Error(ErrorKind::config, "train.learning_rate must be positive");
    ButcherTableau::by_name(tableau);
  }

  [[nodiscard]] std::string canonical() const {
    std::string h;
    for (int w : hidden) h += fmt::format("{},", w);
    return fmt::format("mode={} window={} lr={} b1={} b2={} eps={} seed={} neural={} tableau={} substeps={} hidden={}",
                       mode == TrainMode::autoregressive ? "autoregressive" : "oneshot", window,
                       detail::hexf(adam.learning_rate), detail::hexf(adam.beta1), detail::hexf(adam.beta2),
                       detail::hexf(adam.epsilon), seed, npde::canonical(neural_spec), tableau, substeps, h);
  }
};

/// Identity of a training run; stored in checkpoints to detect config drift.
/// The epoch budget is excluded so a run can be extended on resume.
inline Digest run_hash(const TrajectoryDataset& data, const TrainConfig& cfg) {
  return sha256(data.config.canonical() + " | " + cfg.canonical());
}

struct TrainHistory {
  std::vector<double> loss;
  std::vector<double> wall_seconds;
  std::vector<int> checkpoint_epochs;
  std::optional<int> diverged_epoch;
};

struct TrainState {
  MlpParams net;
  AdamState adam;
  GradientBundle grads;  // gradient of the last completed epoch
  TrainHistory history;
  int epoch = 0;         // completed epochs
};

inline TrainState initial_train_state(const TrainConfig& cfg, int n_points) {
  MlpParams net = mlp_init(default_layer_sizes(n_points, cfg.hidden), cfg.seed);
  AdamState adam = AdamState::for_params(net, cfg.adam);
  GradientBundle g = GradientBundle::zeros_like(net);
  return TrainState{std::move(net), std::move(adam), std::move(g), {}, 0};
}

// ---------------------------------------------------------------------------
// Neural maps

/// Calls `fn(rhs)` with the neural right-hand side for `spec`.
template <class Fn>
decltype(auto) with_neural_rhs(const PdeSpec& spec, const Grid1D& grid, const MlpParams& net, Fn&& fn) {
  return std::visit(
      [&](const auto& s) -> decltype(auto) {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, BurgersSpec>) {
          const BurgersNeuralRhs rhs(s, grid, net);
          return fn(rhs);
        } else {
          const GkdvNeuralRhs rhs(s, grid, net);
          return fn(rhs);
        }
      },
      spec);
}

inline Trajectory rollout_neural(const TrainConfig& cfg, const MlpParams& net, const Field& f0, double dt,
                                 int n_steps) {
  return with_neural_rhs(cfg.neural_spec, f0.grid, net, [&](const auto& rhs) {
    return rollout(rhs, f0, dt, n_steps, cfg.tableau, cfg.substeps);
  });
}

// ---------------------------------------------------------------------------
// Loss

namespace detail {

template <class Rhs>
double epoch_objective(const Rhs& rhs, const TrajectoryDataset& data, const TrainConfig& cfg, GradientBundle* grads) {
  const auto& traj = data.trajectory;
  const int n = data.n_steps();
  RolloutAdjoint<Rhs> adj(rhs, ButcherTableau::by_name(cfg.tableau), data.config.dt, cfg.substeps);
  if (cfg.mode == TrainMode::oneshot) {
    const RolloutTarget target{n, traj.state(n), 1.0};
    return adj.loss_and_grad(traj.state(0), n, std::span(&target, 1), grads, nullptr);
  }
  if (cfg.window > n) throw Error(ErrorKind::config, "training window longer than the trajectory");
  const int windows = n - cfg.window + 1;
  const double w = 1.0 / (static_cast<double>(windows) * cfg.window);
  std::vector<RolloutTarget> targets(cfg.window);
  double total = 0.0;
  for (int t = 0; t < windows; ++t) {
    for (int j = 0; j < cfg.window; ++j) targets[j] = RolloutTarget{j + 1, traj.state(t + j + 1), w};
    const double l = adj.loss_and_grad(traj.state(t), cfg.window, targets, grads, nullptr);
    if (!std::isfinite(l)) return l;
    total += l;
  }
  return total;
}

}  // namespace detail

/// Full-trajectory loss at `net`; accumulates its gradient into `grads` if given.
inline double training_loss(const TrajectoryDataset& data, const MlpParams& net, const TrainConfig& cfg,
                            GradientBundle* grads = nullptr) {
  return with_neural_rhs(cfg.neural_spec, data.trajectory.grid, net,
                         [&](const auto& rhs) { return detail::epoch_objective(rhs, data, cfg, grads); });
}

/// Number of autoregressive windows (stride 1).
inline int window_count(int n_steps, int window) { return n_steps - window + 1; }

// ---------------------------------------------------------------------------
// Loop

struct TrainOutcome {
  TrainState state;
  std::optional<TrainState> last_checkpoint;
  bool diverged = false;
};

using CheckpointSink = std::function<void(const TrainState&)>;

/// Continues `state` until cfg.epochs epochs are complete. On a non-finite loss
/// or gradient the loop stops, records the epoch and keeps the last checkpoint.
inline TrainOutcome train(const TrajectoryDataset& data, TrainState state, const TrainConfig& cfg,
                          const CheckpointSink& sink = {}) {
  cfg.validate();
  if (data.config.spec.index() != cfg.neural_spec.index())
    throw Error(ErrorKind::config, "neural spec and dataset describe different equations");
  if (state.net.layout.input_width() != data.config.n_points)
    throw Error(ErrorKind::config, "network width does not match the dataset grid");
  TrainOutcome out;
  for (int e = state.epoch; e < cfg.epochs; ++e) {
    const auto t0 = std::chrono::steady_clock::now();
    GradientBundle g = GradientBundle::zeros_like(state.net);
    const double loss = training_loss(data, state.net, cfg, &g);
    if (!std::isfinite(loss) || !all_finite(g.values)) {
      state.history.diverged_epoch = e;
      out.diverged = true;
      break;
    }
    adam_step(state.net, g, state.adam);
    state.grads = std::move(g);
    state.history.loss.push_back(loss);
    state.history.wall_seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    state.epoch = e + 1;
    if (cfg.checkpoint_every > 0 && state.epoch % cfg.checkpoint_every == 0) {
      state.history.checkpoint_epochs.push_back(state.epoch);
      out.last_checkpoint = state;
      if (sink) sink(state);
    }
  }
  out.state = std::move(state);
  return out;
}

inline std::pair<MlpParams, TrainHistory> train_with_mode(const TrajectoryDataset& data, const MlpParams& net,
                                                          const TrainConfig& cfg, TrainMode mode) {
  if (cfg.mode != mode) throw Error(ErrorKind::config, "training mode does not match the requested regime");
  TrainState s{net, AdamState::for_params(net, cfg.adam), GradientBundle::zeros_like(net), {}, 0};
  auto out = train(data, std::move(s), cfg);
  if (out.diverged)
    throw Error(ErrorKind::training_divergence,
                fmt::format("training diverged at epoch {}", *out.state.history.diverged_epoch));
  return {std::move(out.state.net), std::move(out.state.history)};
}

inline std::pair<MlpParams, TrainHistory> train_autoregressive(const TrajectoryDataset& data, const MlpParams& net,
                                                               const TrainConfig& cfg) {
  return train_with_mode(data, net, cfg, TrainMode::autoregressive);
}

inline std::pair<MlpParams, TrainHistory> train_oneshot(const TrajectoryDataset& data, const MlpParams& net,
                                                        const TrainConfig& cfg) {
  return train_with_mode(data, net, cfg, TrainMode::oneshot);
}

/// Moving average with a trailing window (shorter at the start).
inline std::vector<double> smoothed(const std::vector<double>& v, int window) {
  std::vector<double> out(v.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    acc += v[i];
    if (i >= static_cast<std::size_t>(window)) acc -= v[i - window];
    out[i] = acc / static_cast<double>(std::min<std::size_t>(i + 1, window));
  }
  return out;
}

}  // namespace npde
