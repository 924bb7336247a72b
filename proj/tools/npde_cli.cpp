// npde: command-line front end for the NeuralPDE experiments.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "npde/experiment.hpp"

namespace {

struct Options {
  std::string config_path;
  std::string preset_name;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string resume;
  std::string checkpoint;
  std::vector<std::string> overrides;
  std::optional<double> ic;
  bool no_svg = false;
};

npde::ExperimentConfig resolve_config(const Options& o) {
  npde::ExperimentConfig base = npde::preset(o.preset_name.empty() ? "burgers-expt1" : o.preset_name);
  npde::ExperimentConfig c = o.config_path.empty() ? base : npde::load_config(o.config_path, base);
  if (!o.overrides.empty()) {
    std::string text;
    for (const auto& kv : o.overrides) text += kv + "\n";
    c = npde::parse_config(text, c);
  }
  if (o.seed) c.seeds = {*o.seed};
  if (!o.out.empty()) c.output_dir = o.out;
  c.validate();
  return c;
}

std::uint64_t first_seed(const npde::ExperimentConfig& c) { return c.seeds.front(); }

std::filesystem::path seed_dir(const npde::ExperimentConfig& c) {
  return std::filesystem::path(c.output_dir) / fmt::format("seed{}", first_seed(c));
}

/// Loads the trained state for the first seed, checking it against the config's run hash.
npde::TrainState load_trained(const npde::ExperimentConfig& c, const Options& o) {
  const std::string path = o.checkpoint.empty() ? (seed_dir(c) / "checkpoint.npde").string() : o.checkpoint;
  const auto data = npde::generate_dataset(c.truth);
  const auto hash = npde::run_hash(data, npde::train_config_for_seed(c, first_seed(c)));
  return npde::checkpoint_load(path, &hash).state;
}

int cmd_generate(const Options& o) {
  const auto c = resolve_config(o);
  const auto g = o.ic ? npde::generation_for_ic(c, *o.ic) : c.truth;
  const auto data = npde::generate_dataset(g);
  const auto& tr = data.trajectory;
  const auto grid = g.grid();
  std::string csv = "t,x,phi\n";
  for (std::size_t k = 0; k < tr.n_stored(); ++k) {
    const auto s = tr.state(k);
    for (int i = 0; i < grid.n_points(); ++i) csv += fmt::format("{},{},{}\n", tr.times[k], grid.x(i), s[i]);
  }
  const auto path = std::filesystem::path(c.output_dir) / fmt::format("truth_ic{}.csv", npde::ic_parameter(g.ic));
  npde::write_text(path, csv);
  fmt::print("wrote {} ({} steps, provenance {})\n", path.string(), tr.n_stored() - 1, data.provenance);
  return 0;
}

int cmd_train(const Options& o) {
  const auto c = resolve_config(o);
  const auto data = npde::generate_dataset(c.truth);
  std::string stage;
  std::optional<std::string> resume;
  if (!o.resume.empty()) resume = o.resume;
  const auto dir = seed_dir(c);
  npde::SeedResult r;
  r.seed = first_seed(c);
  const auto tc = npde::train_config_for_seed(c, r.seed);
  const auto hash = npde::run_hash(data, tc);
  auto state = resume ? npde::checkpoint_load(*resume, &hash).state : npde::initial_train_state(tc, c.truth.n_points);
  const std::string ckpt = (dir / "checkpoint.npde").string();
  std::filesystem::create_directories(dir);
  auto out = npde::train(data, std::move(state), tc, [&](const npde::TrainState& s) { npde::checkpoint_save(ckpt, {hash, s}); });
  if (out.diverged)
    throw npde::Error(npde::ErrorKind::training_divergence,
                      fmt::format("training diverged at epoch {}", *out.state.history.diverged_epoch));
  npde::checkpoint_save(ckpt, {hash, out.state});
  std::string loss = "epoch,loss\n";
  for (std::size_t e = 0; e < out.state.history.loss.size(); ++e) loss += fmt::format("{},{}\n", e + 1, out.state.history.loss[e]);
  npde::write_text(dir / "loss.csv", loss);
  const auto& h = out.state.history.loss;
  fmt::print("trained {} epochs, final loss {:.6e}, checkpoint {}\n", out.state.epoch, h.empty() ? 0.0 : h.back(), ckpt);
  return 0;
}

int cmd_infer(const Options& o) {
  const auto c = resolve_config(o);
  const auto state = load_trained(c, o);
  const double ic = o.ic.value_or(c.train_ic());
  const auto entries = npde::sweep_test_ics(c, state.net, {ic});
  const auto& e = entries.front();
  const auto path = seed_dir(c) / fmt::format("profile_ic{}.csv", ic);
  npde::write_text(path, npde::csv_profiles(c.truth.grid(), e.truth.state(e.truth.n_stored() - 1),
                                            e.prediction.state(e.prediction.n_stored() - 1)));
  fmt::print("ic {}: log10 RMSE {}{}\n", ic, e.rms.log10_rmse, e.rms.blowup ? " (blow-up)" : "");
  return 0;
}

int cmd_jacobian(const Options& o) {
  const auto c = resolve_config(o);
  const auto state = load_trained(c, o);
  std::vector<double> ics = c.jacobian_ics;
  if (o.ic) ics = {*o.ic};
  for (double ic : ics) {
    const auto reps = c.train.mode == npde::TrainMode::autoregressive
                          ? npde::one_step_jacobians(c, state.net, ic, c.jacobian_times)
                          : npde::cumulative_jacobians(c, state.net, ic, c.cumulative_steps);
    npde::write_text(seed_dir(c) / fmt::format("eigen_ic{}.csv", ic), npde::csv_eigen(reps));
    for (const auto& r : reps) fmt::print("ic {} T {}: |lambda_max| {}{}\n", ic, r.rollout_time, r.lambda_max_abs, r.blowup ? " (blow-up)" : "");
  }
  return 0;
}

int cmd_sweep(const Options& o) {
  const auto c = resolve_config(o);
  const auto state = load_trained(c, o);
  std::vector<npde::RmsRow> rows;
  for (const auto& e : npde::sweep_test_ics(c, state.net, c.test_ics)) rows.push_back(e.rms);
  npde::write_text(seed_dir(c) / "rms.csv", npde::csv_rms(rows));
  std::cout << npde::csv_rms(rows);
  return 0;
}

int cmd_report(const Options& o) {
  const auto c = resolve_config(o);
  npde::SeedResult r;
  r.seed = first_seed(c);
  r.state = load_trained(c, o);
  std::string stage;
  npde::analyse_seed(c, r, stage);
  npde::emit_seed(c, r, seed_dir(c), !o.no_svg);
  fmt::print("report written to {}\n", seed_dir(c).string());
  return 0;
}

int cmd_run(const Options& o) {
  const auto c = resolve_config(o);
  npde::RunOptions ro;
  if (!o.resume.empty()) ro.resume = o.resume;
  ro.write_svg = !o.no_svg;
  const auto res = npde::run_experiment(c, ro);
  fmt::print("{}: config {}\n", c.name, res.config_hash);
  std::cout << npde::csv_rms(res.median_rms);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"NeuralPDE finite-difference experiments"};
  app.set_version_flag("--version", npde::kVersion);
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "config file (key = value)")->check(CLI::ExistingFile);
    sub->add_option("--preset", o.preset_name, "burgers-expt1|burgers-expt2|gkdv-expt1|gkdv-expt2");
    sub->add_option("--seed", o.seed, "single seed (overrides the config's seed list)");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--set", o.overrides, "extra key=value override (repeatable)");
    sub->add_flag("--no-svg", o.no_svg, "skip SVG plots");
  };

  struct Cmd {
    const char* name;
    const char* help;
    int (*fn)(const Options&);
  };
  const Cmd cmds[] = {
      {"generate", "integrate the ground truth and write the trajectory", cmd_generate},
      {"train", "train the NeuralPDE for one seed", cmd_train},
      {"infer", "roll out a trained model from one IC", cmd_infer},
      {"jacobian", "Jacobian eigen-spectra of a trained model", cmd_jacobian},
      {"sweep", "final-state RMSE over the test ICs", cmd_sweep},
      {"report", "sweep, diagnostics and plots from a checkpoint", cmd_report},
      {"run", "full pipeline over all seeds", cmd_run},
  };
  int (*selected)(const Options&) = nullptr;
  for (const auto& c : cmds) {
    auto* sub = app.add_subcommand(c.name, c.help);
    add_common(sub);
    if (std::string(c.name) == "train" || std::string(c.name) == "run")
      sub->add_option("--resume", o.resume, "continue training from a checkpoint")->check(CLI::ExistingFile);
    if (std::string(c.name) != "train" && std::string(c.name) != "run") {
      sub->add_option("--checkpoint", o.checkpoint, "trained checkpoint (default <out>/seed<seed>/checkpoint.npde)");
    }
    if (std::string(c.name) == "generate" || std::string(c.name) == "infer" || std::string(c.name) == "jacobian")
      sub->add_option("--ic", o.ic, "IC parameter (phi0 for Burgers, c for gKdV)");
    sub->callback([&selected, fn = c.fn] { selected = fn; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  try {
    return selected(o);
  } catch (const npde::Error& e) {
    std::fprintf(stderr, "npde: %s\n", e.what());
    return npde::exit_code(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "npde: %s\n", e.what());
    return 5;
  }
}
