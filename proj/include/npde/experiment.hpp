#pragma once

// Experiment configuration, named presets and the end-to-end pipeline
// (generate -> train -> sweep -> diagnostics -> emit).
//
// Config files are line-oriented `key = value` with dotted keys; `#` starts a
// comment and lists are comma separated. Unknown keys are rejected.

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "npde/checkpoint.hpp"
#include "npde/diagnostics.hpp"
#include "npde/report.hpp"
#include "npde/training.hpp"

namespace npde {

inline constexpr const char* kVersion = "1.0.0";

struct ExperimentConfig {
  std::string name = "custom";
  GenerationConfig truth;  // ground-truth solver and training IC
  TrainConfig train;       // includes the NeuralPDE spec
  std::vector<double> test_ics;
  bool allow_train_in_test = false;
  std::vector<double> jacobian_times;  // one-step Jacobians along the rollout (autoregressive)
  std::vector<int> cumulative_steps;   // cumulative-Jacobian prefixes (one-shot)
  std::vector<double> jacobian_ics;
  double unit_circle_tol = 0.02;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::string output_dir = "out";

  [[nodiscard]] bool is_burgers() const { return std::holds_alternative<BurgersSpec>(truth.spec); }
  [[nodiscard]] double train_ic() const { return ic_parameter(truth.ic); }

  void validate() const {
    if (truth.spec.index() != train.neural_spec.index() || truth.spec.index() != truth.ic.index())
      throw Error(ErrorKind::config, "true spec, neural spec and IC must describe the same equation");
    std::visit([](const auto& s) { s.validate(); }, truth.spec);
    std::visit([](const auto& s) { s.validate(); }, train.neural_spec);
    train.validate();
    ButcherTableau::by_name(truth.tableau);
    if (truth.n_points < 8 || !(truth.length > 0.0) || !(truth.dt > 0.0) || truth.n_steps < 1 || truth.substeps < 1)
      throw Error(ErrorKind::config, "grid/time parameters out of range");
    if (!allow_train_in_test && std::find(test_ics.begin(), test_ics.end(), train_ic()) != test_ics.end())
      throw Error(ErrorKind::config, "training IC appears in the test sweep (set ic.allow_train_in_test = true)");
    if (seeds.empty()) throw Error(ErrorKind::config, "at least one seed is required");
    for (int n : cumulative_steps)
      if (n < 1 || n > truth.n_steps) throw Error(ErrorKind::config, "diag.cumulative_steps out of range");
    if (!(unit_circle_tol >= 0.0)) throw Error(ErrorKind::config, "diag.unit_circle_tol must be >= 0");
  }

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

// ---------------------------------------------------------------------------
// Presets

inline ExperimentConfig preset_burgers(SchemePreset neural_advective) {
  ExperimentConfig c;
  BurgersSpec truth;
  truth.advection_sign = -1;
  BurgersSpec neural = truth;
  neural.advective = {neural_advective, 1};
  c.truth = burgers_generation(truth, BurgersIc{2.0}, 4);
  c.train.mode = TrainMode::autoregressive;
  c.train.epochs = 1000;
  c.train.window = 3;
  c.train.neural_spec = neural;
  c.train.tableau = "rk4";
  c.train.substeps = 4;
  for (int p = 3; p <= 15; ++p) c.test_ics.push_back(p);
  for (int k = 0; k <= 10; ++k) c.jacobian_times.push_back(k / 20.0);
  c.jacobian_ics = {2.0, 10.0};
  return c;
}

inline ExperimentConfig preset_gkdv(SchemePreset neural_dispersive) {
  ExperimentConfig c;
  GkdvSpec truth;
  GkdvSpec neural = truth;
  neural.dispersive = {neural_dispersive, 3};
  c.truth = gkdv_generation(truth, GkdvIc{5.0, 2.5}, 24);
  c.train.mode = TrainMode::oneshot;
  c.train.epochs = 10000;
  c.train.neural_spec = neural;
  c.train.tableau = "rk4";
  c.train.substeps = 18;
  c.test_ics = {1.5, 2.0, 3.0, 3.5, 4.0, 4.5, 5.0};
  c.cumulative_steps = {25, 50, 75, 100};
  c.jacobian_ics = {2.5, 4.5, 5.0};
  return c;
}

inline std::vector<std::string> preset_names() { return {"burgers-expt1", "burgers-expt2", "gkdv-expt1", "gkdv-expt2"}; }

inline ExperimentConfig preset(const std::string& name) {
  ExperimentConfig c;
  if (name == "burgers-expt1") c = preset_burgers(SchemePreset::backward1);
  else if (name == "burgers-expt2") c = preset_burgers(SchemePreset::central6);
  else if (name == "gkdv-expt1") c = preset_gkdv(SchemePreset::central2);
  else if (name == "gkdv-expt2") c = preset_gkdv(SchemePreset::central6);
  else throw Error(ErrorKind::config, "unknown preset '" + name + "'");
  c.name = name;
  c.output_dir = "out/" + name;
  return c;
}

// ---------------------------------------------------------------------------
// Config text

namespace detail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw Error(ErrorKind::config, fmt::format("{}: '{}' is not a number", key, v));
  }
}

inline long long parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long d = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw Error(ErrorKind::config, fmt::format("{}: '{}' is not an integer", key, v));
  }
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  if (trim(v).empty()) return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

template <class T>
std::string join(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt::format("{}", v[i]);
  return s;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw Error(ErrorKind::config, key + ": expected true or false");
}

inline SchemeChoice parse_choice(const std::string& v, int order) { return {parse_scheme(v), order}; }

}  // namespace detail

/// Serializes every key that applies to the config's equation, in a fixed order.
inline std::string config_to_text(const ExperimentConfig& c) {
  using detail::join;
  std::string s;
  auto kv = [&](const std::string& k, const std::string& v) { s += k + " = " + v + "\n"; };
  kv("name", c.name);
  kv("equation", c.is_burgers() ? "burgers" : "gkdv");
  if (c.is_burgers()) {
    const auto& t = std::get<BurgersSpec>(c.truth.spec);
    const auto& n = std::get<BurgersSpec>(c.train.neural_spec);
    kv("true.nu", fmt::format("{}", t.nu));
    kv("true.advection_sign", fmt::format("{}", t.advection_sign));
    kv("true.advective", std::string(scheme_name(t.advective.preset)));
    kv("true.diffusive", std::string(scheme_name(t.diffusive.preset)));
    kv("neural.advective", std::string(scheme_name(n.advective.preset)));
    kv("ic.train", fmt::format("{}", std::get<BurgersIc>(c.truth.ic).max_phi0));
  } else {
    const auto& t = std::get<GkdvSpec>(c.truth.spec);
    const auto& n = std::get<GkdvSpec>(c.train.neural_spec);
    kv("true.omega0", fmt::format("{}", t.omega0));
    kv("true.advective", std::string(scheme_name(t.advective.preset)));
    kv("true.dispersive", std::string(scheme_name(t.dispersive.preset)));
    kv("neural.dispersive", std::string(scheme_name(n.dispersive.preset)));
    kv("ic.train", fmt::format("{}", std::get<GkdvIc>(c.truth.ic).wavespeed));
    kv("ic.amplitude", fmt::format("{}", std::get<GkdvIc>(c.truth.ic).amplitude));
  }
  kv("ic.test", join(c.test_ics));
  kv("ic.allow_train_in_test", c.allow_train_in_test ? "true" : "false");
  kv("grid.n", fmt::format("{}", c.truth.n_points));
  kv("grid.length", fmt::format("{}", c.truth.length));
  kv("time.dt", fmt::format("{}", c.truth.dt));
  kv("time.steps", fmt::format("{}", c.truth.n_steps));
  kv("time.tableau", c.truth.tableau);
  kv("time.substeps", fmt::format("{}", c.truth.substeps));
  kv("train.mode", c.train.mode == TrainMode::autoregressive ? "autoregressive" : "oneshot");
  kv("train.epochs", fmt::format("{}", c.train.epochs));
  kv("train.window", fmt::format("{}", c.train.window));
  kv("train.learning_rate", fmt::format("{}", c.train.adam.learning_rate));
  kv("train.beta1", fmt::format("{}", c.train.adam.beta1));
  kv("train.beta2", fmt::format("{}", c.train.adam.beta2));
  kv("train.epsilon", fmt::format("{}", c.train.adam.epsilon));
  kv("train.checkpoint_every", fmt::format("{}", c.train.checkpoint_every));
  kv("train.tableau", c.train.tableau);
  kv("train.substeps", fmt::format("{}", c.train.substeps));
  kv("train.hidden", join(c.train.hidden));
  kv("diag.jacobian_times", join(c.jacobian_times));
  kv("diag.cumulative_steps", join(c.cumulative_steps));
  kv("diag.jacobian_ics", join(c.jacobian_ics));
  kv("diag.unit_circle_tol", fmt::format("{}", c.unit_circle_tol));
  kv("seeds", join(c.seeds));
  kv("output.dir", c.output_dir);
  return s;
}

/// Applies `key = value` lines on top of `base`. An `equation` key that differs
/// from the base's switches to that equation's first preset before applying
/// the remaining keys.
inline ExperimentConfig parse_config(const std::string& text, ExperimentConfig base = preset("burgers-expt1")) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto h = line.find('#'); h != std::string::npos) line.resize(h);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::config, fmt::format("line {}: expected key = value", lineno));
    const std::string key = detail::trim(line.substr(0, eq));
    if (!kv.emplace(key, detail::trim(line.substr(eq + 1))).second)
      throw Error(ErrorKind::config, fmt::format("line {}: duplicate key '{}'", lineno, key));
  }

  ExperimentConfig c = std::move(base);
  if (auto it = kv.find("equation"); it != kv.end()) {
    if (it->second != "burgers" && it->second != "gkdv")
      throw Error(ErrorKind::config, "equation must be burgers or gkdv");
    if ((it->second == "burgers") != c.is_burgers()) c = preset(it->second == "burgers" ? "burgers-expt1" : "gkdv-expt1");
    kv.erase(it);
  }
  const bool burgers = c.is_burgers();
  const char* eqname = burgers ? "burgers" : "gkdv";
  auto wrong_eq = [&](const std::string& k) {
    throw Error(ErrorKind::config, fmt::format("key '{}' does not apply to equation {}", k, eqname));
  };

  for (const auto& [k, v] : kv) {
    using namespace detail;
    if (k == "name") c.name = v;
    else if (k == "true.nu") {
      if (!burgers) wrong_eq(k);
      std::get<BurgersSpec>(c.truth.spec).nu = parse_double(k, v);
      std::get<BurgersSpec>(c.train.neural_spec).nu = parse_double(k, v);
    } else if (k == "true.advection_sign") {
      if (!burgers) wrong_eq(k);
      const int s = static_cast<int>(parse_int(k, v));
      std::get<BurgersSpec>(c.truth.spec).advection_sign = s;
      std::get<BurgersSpec>(c.train.neural_spec).advection_sign = s;
    } else if (k == "true.omega0") {
      if (burgers) wrong_eq(k);
      std::get<GkdvSpec>(c.truth.spec).omega0 = parse_double(k, v);
      std::get<GkdvSpec>(c.train.neural_spec).omega0 = parse_double(k, v);
    } else if (k == "true.advective") {
      if (burgers) std::get<BurgersSpec>(c.truth.spec).advective = parse_choice(v, 1);
      else {
        std::get<GkdvSpec>(c.truth.spec).advective = parse_choice(v, 1);
        std::get<GkdvSpec>(c.train.neural_spec).advective = parse_choice(v, 1);
      }
    } else if (k == "true.diffusive") {
      if (!burgers) wrong_eq(k);
      std::get<BurgersSpec>(c.truth.spec).diffusive = parse_choice(v, 2);
      std::get<BurgersSpec>(c.train.neural_spec).diffusive = parse_choice(v, 2);
    } else if (k == "true.dispersive") {
      if (burgers) wrong_eq(k);
      std::get<GkdvSpec>(c.truth.spec).dispersive = parse_choice(v, 3);
    } else if (k == "neural.advective") {
      if (!burgers) wrong_eq(k);
      std::get<BurgersSpec>(c.train.neural_spec).advective = parse_choice(v, 1);
    } else if (k == "neural.dispersive") {
      if (burgers) wrong_eq(k);
      std::get<GkdvSpec>(c.train.neural_spec).dispersive = parse_choice(v, 3);
    } else if (k == "ic.train") {
      c.truth.ic = with_ic_parameter(c.truth.ic, parse_double(k, v));
    } else if (k == "ic.amplitude") {
      if (burgers) wrong_eq(k);
      std::get<GkdvIc>(c.truth.ic).amplitude = parse_double(k, v);
    } else if (k == "ic.test") {
      c.test_ics.clear();
      for (const auto& x : split_list(v)) c.test_ics.push_back(parse_double(k, x));
    } else if (k == "ic.allow_train_in_test") c.allow_train_in_test = parse_bool(k, v);
    else if (k == "grid.n") c.truth.n_points = static_cast<int>(parse_int(k, v));
    else if (k == "grid.length") c.truth.length = parse_double(k, v);
    else if (k == "time.dt") c.truth.dt = parse_double(k, v);
    else if (k == "time.steps") c.truth.n_steps = static_cast<int>(parse_int(k, v));
    else if (k == "time.tableau") c.truth.tableau = v;
    else if (k == "time.substeps") c.truth.substeps = static_cast<int>(parse_int(k, v));
    else if (k == "train.mode") {
      if (v == "autoregressive") c.train.mode = TrainMode::autoregressive;
      else if (v == "oneshot") c.train.mode = TrainMode::oneshot;
      else throw Error(ErrorKind::config, "train.mode must be autoregressive or oneshot");
    } else if (k == "train.epochs") c.train.epochs = static_cast<int>(parse_int(k, v));
    else if (k == "train.window") c.train.window = static_cast<int>(parse_int(k, v));
    else if (k == "train.learning_rate") c.train.adam.learning_rate = parse_double(k, v);
    else if (k == "train.beta1") c.train.adam.beta1 = parse_double(k, v);
    else if (k == "train.beta2") c.train.adam.beta2 = parse_double(k, v);
    else if (k == "train.epsilon") c.train.adam.epsilon = parse_double(k, v);
    else if (k == "train.checkpoint_every") c.train.checkpoint_every = static_cast<int>(parse_int(k, v));
    else if (k == "train.tableau") c.train.tableau = v;
    else if (k == "train.substeps") c.train.substeps = static_cast<int>(parse_int(k, v));
    else if (k == "train.hidden") {
      c.train.hidden.clear();
      for (const auto& x : split_list(v)) c.train.hidden.push_back(static_cast<int>(parse_int(k, x)));
    } else if (k == "diag.jacobian_times") {
      c.jacobian_times.clear();
      for (const auto& x : split_list(v)) c.jacobian_times.push_back(parse_double(k, x));
    } else if (k == "diag.cumulative_steps") {
      c.cumulative_steps.clear();
      for (const auto& x : split_list(v)) c.cumulative_steps.push_back(static_cast<int>(parse_int(k, x)));
    } else if (k == "diag.jacobian_ics") {
      c.jacobian_ics.clear();
      for (const auto& x : split_list(v)) c.jacobian_ics.push_back(parse_double(k, x));
    } else if (k == "diag.unit_circle_tol") c.unit_circle_tol = parse_double(k, v);
    else if (k == "seeds") {
      c.seeds.clear();
      for (const auto& x : split_list(v)) {
        const long long s = parse_int(k, x);
        if (s < 0) throw Error(ErrorKind::config, "seeds must be non-negative");
        c.seeds.push_back(static_cast<std::uint64_t>(s));
      }
    } else if (k == "output.dir") c.output_dir = v;
    else throw Error(ErrorKind::config, "unknown config key '" + k + "'");
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::string& path, ExperimentConfig base = preset("burgers-expt1")) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorKind::io, "cannot read config '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

inline Digest config_hash(const ExperimentConfig& c) { return sha256(config_to_text(c)); }

// ---------------------------------------------------------------------------
// Pipeline pieces

inline TrainConfig train_config_for_seed(const ExperimentConfig& c, std::uint64_t seed) {
  TrainConfig t = c.train;
  t.seed = seed;
  return t;
}

inline GenerationConfig generation_for_ic(const ExperimentConfig& c, double ic) {
  GenerationConfig g = c.truth;
  g.ic = with_ic_parameter(g.ic, ic);
  return g;
}

struct SweepEntry {
  double ic_param = 0.0;
  Trajectory truth;
  Trajectory prediction;
  RmsRow rms;
};

/// Rolls the trained model and the ground truth from each IC to the final time.
inline std::vector<SweepEntry> sweep_test_ics(const ExperimentConfig& c, const MlpParams& net,
                                              const std::vector<double>& ics) {
  std::vector<SweepEntry> out;
  out.reserve(ics.size());
  for (double p : ics) {
    const GenerationConfig g = generation_for_ic(c, p);
    TrajectoryDataset truth = generate_dataset(g);
    const Field f0 = initial_condition(g.ic, g.grid());
    Trajectory pred = rollout_neural(c.train, net, f0, g.dt, g.n_steps);
    RmsRow row = rms_row(p, pred, truth.trajectory.state(truth.trajectory.n_stored() - 1));
    out.push_back(SweepEntry{p, std::move(truth.trajectory), std::move(pred), row});
  }
  return out;
}

inline OneStepMap one_step_map(const ExperimentConfig& c, const MlpParams& net) {
  return OneStepMap(c.train.neural_spec, c.truth.grid(), net, c.train.tableau, c.train.substeps, c.truth.dt);
}

/// Autoregressive analysis: one-step Jacobians at predicted states phi_hat(T).
inline std::vector<JacobianReport> one_step_jacobians(const ExperimentConfig& c, const MlpParams& net, double ic,
                                                      const std::vector<double>& times) {
  const OneStepMap map = one_step_map(c, net);
  const GenerationConfig g = generation_for_ic(c, ic);
  const Trajectory pred = rollout_neural(c.train, net, initial_condition(g.ic, g.grid()), g.dt, g.n_steps);
  std::vector<JacobianReport> out;
  for (double t : times) {
    const auto k = static_cast<std::size_t>(std::llround(t / g.dt));
    const std::string ctx = fmt::format("{} ic={} T={}", c.name, ic, t);
    if (k >= pred.n_stored()) {
      JacobianReport r;
      r.rollout_time = t;
      r.blowup = true;
      r.context = ctx;
      out.push_back(std::move(r));
      continue;
    }
    out.push_back(jacobian_one_step(map, pred.state(k), t, ctx));
  }
  return out;
}

/// One-shot analysis: cumulative Jacobians of the n-step map from phi0.
inline std::vector<JacobianReport> cumulative_jacobians(const ExperimentConfig& c, const MlpParams& net, double ic,
                                                        const std::vector<int>& steps) {
  const OneStepMap map = one_step_map(c, net);
  const GenerationConfig g = generation_for_ic(c, ic);
  const Field f0 = initial_condition(g.ic, g.grid());
  return jacobian_cumulative_chain(map, f0.values, steps, g.dt, fmt::format("{} ic={}", c.name, ic));
}

/// Median; +inf entries (blow-ups) sort last.
inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  if (v.size() % 2) return v[m];
  if (std::isinf(v[m]) && v[m] == v[m - 1]) return v[m];
  return 0.5 * (v[m - 1] + v[m]);
}

inline double lambda_or_inf(const JacobianReport& r) {
  return r.blowup ? std::numeric_limits<double>::infinity() : r.lambda_max_abs;
}

// ---------------------------------------------------------------------------
// Run

struct SeedResult {
  std::uint64_t seed = 0;
  TrainState state;
  bool diverged = false;
  std::vector<SweepEntry> sweep;  // train IC first, then the test ICs
  std::map<double, std::vector<JacobianReport>> jacobians;
  EnergySeries energy_true, energy_pred;
};

struct ExperimentResult {
  ExperimentConfig config;
  std::string config_hash;
  std::vector<SeedResult> seeds;
  std::vector<RmsRow> median_rms;
};

struct RunOptions {
  std::optional<std::string> resume;  // checkpoint to continue the first seed from
  bool write_svg = true;
};

namespace detail {

class Manifest {
 public:
  explicit Manifest(std::filesystem::path p) : path_(std::move(p)) {}
  void set(const std::string& k, const std::string& v) {
    for (auto& e : entries_)
      if (e.first == k) {
        e.second = v;
        flush();
        return;
      }
    entries_.emplace_back(k, v);
    flush();
  }

 private:
  void flush() const {
    std::string s;
    for (const auto& [k, v] : entries_) s += k + " = " + v + "\n";
    try {
      write_text(path_, s);
    } catch (const Error&) {
    }
  }
  std::filesystem::path path_;
  std::vector<std::pair<std::string, std::string>> entries_;
};

inline std::string ic_tag(double p) { return fmt::format("{}", p); }

}  // namespace detail

/// Writes the per-seed CSVs (and SVGs) into `dir`.
inline void emit_seed(const ExperimentConfig& c, const SeedResult& r, const std::filesystem::path& dir, bool svg) {
  const Grid1D g = c.truth.grid();
  std::string loss = "epoch,loss\n";
  for (std::size_t e = 0; e < r.state.history.loss.size(); ++e)
    loss += fmt::format("{},{}\n", e + 1, r.state.history.loss[e]);
  write_text(dir / "loss.csv", loss);

  std::vector<RmsRow> rows;
  for (const auto& s : r.sweep) {
    rows.push_back(s.rms);
    write_text(dir / fmt::format("profile_ic{}.csv", detail::ic_tag(s.ic_param)),
               csv_profiles(g, s.truth.state(s.truth.n_stored() - 1), s.prediction.state(s.prediction.n_stored() - 1)));
    if (svg) {
      std::vector<double> xs;
      for (int i = 0; i < g.n_points(); ++i) xs.push_back(g.x(i));
      auto tf = s.truth.state(s.truth.n_stored() - 1), pf = s.prediction.state(s.prediction.n_stored() - 1);
      write_text(dir / fmt::format("profile_ic{}.svg", detail::ic_tag(s.ic_param)),
                 svg_line_plot({{"ground truth", xs, {tf.begin(), tf.end()}},
                                {s.rms.blowup ? "NeuralPDE (last finite, blew up)" : "NeuralPDE", xs, {pf.begin(), pf.end()}}},
                               fmt::format("{} final state, IC {}", c.name, s.ic_param), "x", "phi"));
    }
  }
  write_text(dir / "rms.csv", csv_rms(rows));

  std::string lam = "ic_param,rollout_time,lambda_max_abs,blowup_flag\n";
  for (const auto& [ic, reps] : r.jacobians) {
    write_text(dir / fmt::format("eigen_ic{}.csv", detail::ic_tag(ic)), csv_eigen(reps));
    for (const auto& rep : reps) lam += fmt::format("{},{},{},{}\n", ic, rep.rollout_time, lambda_or_inf(rep), rep.blowup ? 1 : 0);
    if (svg) {
      std::vector<ScatterSet> sets;
      for (const auto& rep : reps) sets.push_back({fmt::format("T = {}", rep.rollout_time), rep.eigenvalues});
      write_text(dir / fmt::format("eigen_ic{}.svg", detail::ic_tag(ic)),
                 svg_unit_circle(sets, fmt::format("{} Jacobian eigenvalues, IC {}", c.name, ic)));
    }
  }
  write_text(dir / "lambda_max.csv", lam);
  write_text(dir / "energy_true.csv", csv_energy(r.energy_true));
  write_text(dir / "energy_pred.csv", csv_energy(r.energy_pred));
  if (svg) {
    write_text(dir / "energy.svg", svg_line_plot({{"ground truth", r.energy_true.times, r.energy_true.values},
                                                  {"NeuralPDE", r.energy_pred.times, r.energy_pred.values}},
                                                 c.name + " energy (train IC)", "t", "E"));
    std::vector<double> xs, ys;
    for (const auto& row : rows) {
      xs.push_back(row.ic_param);
      ys.push_back(row.log10_rmse);
    }
    write_text(dir / "rms.svg", svg_line_plot({{"log10 RMSE", xs, ys}}, c.name + " final-state error", "IC parameter",
                                              "log10 RMSE"));
  }
}

/// Sweep, Jacobians and energy for a trained model (fills everything but training state).
inline void analyse_seed(const ExperimentConfig& c, SeedResult& r, std::string& stage) {
  stage = "sweep";
  std::vector<double> ics{c.train_ic()};
  ics.insert(ics.end(), c.test_ics.begin(), c.test_ics.end());
  r.sweep = sweep_test_ics(c, r.state.net, ics);

  stage = "diagnostics";
  for (double ic : c.jacobian_ics)
    r.jacobians[ic] = c.train.mode == TrainMode::autoregressive ? one_step_jacobians(c, r.state.net, ic, c.jacobian_times)
                                                                : cumulative_jacobians(c, r.state.net, ic, c.cumulative_steps);
  r.energy_true = energy_norm_series(r.sweep.front().truth);
  r.energy_pred = energy_norm_series(r.sweep.front().prediction);
}

/// Trains and analyses one seed. Throws with the failing stage recorded in `stage`.
inline SeedResult run_seed(const ExperimentConfig& c, const TrajectoryDataset& data, std::uint64_t seed,
                           const std::filesystem::path& dir, const std::optional<std::string>& resume,
                           std::string& stage) {
  SeedResult r;
  r.seed = seed;
  stage = "train";
  const TrainConfig tc = train_config_for_seed(c, seed);
  const Digest hash = run_hash(data, tc);
  TrainState state = initial_train_state(tc, c.truth.n_points);
  if (resume) state = checkpoint_load(*resume, &hash).state;
  std::filesystem::create_directories(dir);
  const std::string ckpt = (dir / "checkpoint.npde").string();
  auto out = train(data, std::move(state), tc, [&](const TrainState& s) { checkpoint_save(ckpt, {hash, s}); });
  r.diverged = out.diverged;
  if (out.diverged) {
    r.state = out.last_checkpoint ? *out.last_checkpoint : out.state;
    throw Error(ErrorKind::training_divergence,
                fmt::format("seed {}: training diverged at epoch {}", seed, *out.state.history.diverged_epoch));
  }
  r.state = std::move(out.state);
  checkpoint_save(ckpt, {hash, r.state});
  analyse_seed(c, r, stage);
  return r;
}

/// Full pipeline over all seeds. The manifest in the output directory records
/// every stage and, on failure, the stage that failed; the error is rethrown.
inline ExperimentResult run_experiment(const ExperimentConfig& c, const RunOptions& opt = {}) {
  c.validate();
  const std::filesystem::path root(c.output_dir);
  std::filesystem::create_directories(root);
  detail::Manifest manifest(root / "manifest.txt");
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentResult res;
  res.config = c;
  res.config_hash = to_hex(config_hash(c));
  manifest.set("experiment", c.name);
  manifest.set("version", kVersion);
  manifest.set("config_hash", res.config_hash);
  manifest.set("seeds", detail::join(c.seeds));
  manifest.set("status", "running");
  write_text(root / "config.cfg", config_to_text(c));

  std::string stage = "generate";
  try {
    const TrajectoryDataset data = generate_dataset(c.truth);
    manifest.set("dataset_provenance", data.provenance);
    manifest.set("stage.generate", "ok");
    for (std::size_t i = 0; i < c.seeds.size(); ++i) {
      const auto seed = c.seeds[i];
      const auto dir = root / fmt::format("seed{}", seed);
      res.seeds.push_back(run_seed(c, data, seed, dir, i == 0 ? opt.resume : std::nullopt, stage));
      stage = "emit";
      emit_seed(c, res.seeds.back(), dir, opt.write_svg);
      manifest.set(fmt::format("stage.seed{}", seed), "ok");
    }
    stage = "summary";
    const std::size_t n_ic = res.seeds.front().sweep.size();
    for (std::size_t k = 0; k < n_ic; ++k) {
      std::vector<double> vals;
      int blow = 0;
      for (const auto& s : res.seeds) {
        vals.push_back(s.sweep[k].rms.log10_rmse);
        blow += s.sweep[k].rms.blowup ? 1 : 0;
      }
      res.median_rms.push_back({res.seeds.front().sweep[k].ic_param, median(vals), 2 * blow > static_cast<int>(vals.size())});
    }
    write_text(root / "rms_median.csv", csv_rms(res.median_rms));
    std::string lam = "ic_param,rollout_time,lambda_max_abs,blowup_flag\n";
    for (const auto& [ic, reps] : res.seeds.front().jacobians)
      for (std::size_t j = 0; j < reps.size(); ++j) {
        std::vector<double> v;
        for (const auto& s : res.seeds) v.push_back(lambda_or_inf(s.jacobians.at(ic)[j]));
        const double m = median(v);
        lam += fmt::format("{},{},{},{}\n", ic, reps[j].rollout_time, m, std::isinf(m) ? 1 : 0);
      }
    write_text(root / "lambda_max_median.csv", lam);
    manifest.set("stage.summary", "ok");
    manifest.set("status", "ok");
  } catch (const Error& e) {
    manifest.set("status", "failed");
    manifest.set("failed_stage", stage);
    manifest.set("error", e.what());
    manifest.set("wall_seconds", fmt::format("{:.3f}", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()));
    throw;
  }
  manifest.set("wall_seconds", fmt::format("{:.3f}", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()));
  return res;
}

}  // namespace npde
