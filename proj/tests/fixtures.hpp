#pragma once

#include <filesystem>
#include <string>

#include "npde/training.hpp"

namespace fixture {

inline npde::GenerationConfig small_burgers() {
  npde::BurgersSpec spec;
  spec.advection_sign = -1;
  npde::GenerationConfig g = npde::burgers_generation(spec, npde::BurgersIc{2.0}, 2);
  g.n_points = 16;
  g.n_steps = 6;
  return g;
}

inline npde::GenerationConfig small_gkdv() {
  npde::GenerationConfig g = npde::gkdv_generation(npde::GkdvSpec{}, npde::GkdvIc{1.0, 2.5}, 4);
  g.n_points = 16;
  g.n_steps = 5;
  return g;
}

inline npde::TrainConfig small_train(const npde::GenerationConfig& g, int epochs) {
  npde::TrainConfig t;
  t.mode = std::holds_alternative<npde::BurgersSpec>(g.spec) ? npde::TrainMode::autoregressive : npde::TrainMode::oneshot;
  t.epochs = epochs;
  t.window = 3;
  t.neural_spec = g.spec;
  t.tableau = "rk4";
  t.substeps = g.substeps;
  t.hidden = {6, 6};
  t.seed = 11;
  t.checkpoint_every = 5;
  return t;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("npde_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace fixture
