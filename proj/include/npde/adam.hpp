#pragma once

#include <cmath>
#include <cstdint>

#include "npde/mlp.hpp"

namespace npde {

struct AdamConfig {
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

struct MomentTag;
using MomentTree = ParameterTree<MomentTag>;

struct AdamState {
  AdamConfig config;
  MomentTree m;
  MomentTree v;
  std::uint64_t t = 0;

  static AdamState for_params(const MlpParams& p, AdamConfig cfg = {}) {
    return AdamState{cfg, MomentTree(p.layout), MomentTree(p.layout), 0};
  }

  friend bool operator==(const AdamState& a, const AdamState& b) {
    return a.t == b.t && a.m == b.m && a.v == b.v && a.config.learning_rate == b.config.learning_rate &&
           a.config.beta1 == b.config.beta1 && a.config.beta2 == b.config.beta2 &&
           a.config.epsilon == b.config.epsilon;
  }
};

/// One bias-corrected Adam update, in place.
inline void adam_step(MlpParams& net, const GradientBundle& grads, AdamState& state) {
  if (!net.congruent(grads) || !net.congruent(state.m) || !net.congruent(state.v))
    throw Error(ErrorKind::config, "adam_step: parameter, gradient and moment shapes differ");
  const auto& c = state.config;
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  auto& m = state.m.values;
  auto& v = state.v.values;
  const auto& g = grads.values;
  auto& p = net.values;
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
    v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    p[i] -= c.learning_rate * mhat / (std::sqrt(vhat) + c.epsilon);
  }
}

}  // namespace npde
