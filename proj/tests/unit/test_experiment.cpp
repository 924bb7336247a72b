#include <gtest/gtest.h>

#include <fstream>

#include "fixtures.hpp"
#include "npde/experiment.hpp"

using namespace npde;

namespace {

std::string read_all(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

/// A Burgers config small enough to run the whole pipeline in well under a second.
ExperimentConfig tiny(const std::filesystem::path& out) {
  ExperimentConfig c = preset("burgers-expt2");
  c.truth.n_points = 16;
  c.truth.n_steps = 6;
  c.truth.substeps = 2;
  c.train.substeps = 2;
  c.train.epochs = 4;
  c.train.hidden = {4};
  c.train.checkpoint_every = 2;
  c.test_ics = {3.0, 4.0};
  c.jacobian_times = {0.0, 0.03};
  c.jacobian_ics = {2.0};
  c.seeds = {1, 2};
  c.output_dir = out.string();
  return c;
}

}  // namespace

TEST(Config, PresetsEncodeSchemeTables) {
  const auto b1 = preset("burgers-expt1"), b2 = preset("burgers-expt2");
  const auto& t1 = std::get<BurgersSpec>(b1.truth.spec);
  EXPECT_EQ(t1.advective.preset, SchemePreset::backward1);
  EXPECT_EQ(t1.diffusive.preset, SchemePreset::central6);
  EXPECT_EQ(t1.nu, 0.03);
  EXPECT_EQ(std::get<BurgersSpec>(b1.train.neural_spec).advective.preset, SchemePreset::backward1);
  EXPECT_EQ(std::get<BurgersSpec>(b2.train.neural_spec).advective.preset, SchemePreset::central6);
  EXPECT_EQ(b1.truth.spec, b2.truth.spec);
  EXPECT_EQ(b1.train.mode, TrainMode::autoregressive);
  EXPECT_EQ(b1.train.epochs, 1000);
  EXPECT_EQ(b1.train.window, 3);
  EXPECT_EQ(b1.train.adam.learning_rate, 0.01);
  EXPECT_EQ(b1.train.checkpoint_every, 20);
  EXPECT_EQ(b1.test_ics.size(), 13u);
  EXPECT_EQ(b1.train_ic(), 2.0);

  const auto g1 = preset("gkdv-expt1"), g2 = preset("gkdv-expt2");
  const auto& k1 = std::get<GkdvSpec>(g1.truth.spec);
  EXPECT_EQ(k1.advective.preset, SchemePreset::central2);
  EXPECT_EQ(k1.dispersive.preset, SchemePreset::central2);
  EXPECT_EQ(std::get<GkdvSpec>(g1.train.neural_spec).dispersive.preset, SchemePreset::central2);
  EXPECT_EQ(std::get<GkdvSpec>(g2.train.neural_spec).dispersive.preset, SchemePreset::central6);
  EXPECT_EQ(g1.train.mode, TrainMode::oneshot);
  EXPECT_EQ(g1.test_ics, (std::vector<double>{1.5, 2, 3, 3.5, 4, 4.5, 5}));
  EXPECT_EQ(g1.train_ic(), 2.5);
  EXPECT_EQ(g1.truth.n_points, 256);
  EXPECT_EQ(g1.truth.n_steps, 100);
  EXPECT_THROW(preset("burgers-expt3"), Error);
}

TEST(Config, RoundTripsLosslessly) {
  for (const auto& name : preset_names()) {
    const auto c = preset(name);
    const auto text = config_to_text(c);
    const auto back = parse_config(text, preset(name == "burgers-expt1" ? "gkdv-expt2" : "burgers-expt1"));
    EXPECT_EQ(back, c) << name;
    EXPECT_EQ(config_to_text(back), text);
  }
  auto odd = preset("gkdv-expt1");
  odd.truth.length = 0.1 + 0.2;
  odd.train.adam.learning_rate = 1.0 / 3.0;
  odd.test_ics = {1.0 / 7.0};
  EXPECT_EQ(parse_config(config_to_text(odd)), odd);
}

TEST(Config, ParsesCommentsListsAndOverrides) {
  const auto c = parse_config(
      "# a comment\n"
      "equation = gkdv   # trailing\n"
      "neural.dispersive = central6\n"
      "train.epochs = 2000\n"
      "seeds = 4, 5\n"
      "\n"
      "ic.test = 3, 4.5\n");
  EXPECT_TRUE(!c.is_burgers());
  EXPECT_EQ(c.train.epochs, 2000);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{4, 5}));
  EXPECT_EQ(c.test_ics, (std::vector<double>{3.0, 4.5}));
  EXPECT_EQ(std::get<GkdvSpec>(c.train.neural_spec).dispersive.preset, SchemePreset::central6);
}

TEST(Config, RejectsBadInput) {
  auto kind_of = [](const std::string& text) {
    try {
      parse_config(text);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::io;
  };
  EXPECT_EQ(kind_of("train.epoks = 5\n"), ErrorKind::config);
  EXPECT_EQ(kind_of("equation = burgers\ntrue.omega0 = 1\n"), ErrorKind::config);
  EXPECT_EQ(kind_of("equation = gkdv\ntrue.nu = 0.1\n"), ErrorKind::config);
  EXPECT_EQ(kind_of("train.epochs = many\n"), ErrorKind::config);
  EXPECT_EQ(kind_of("no equals sign\n"), ErrorKind::config);
  EXPECT_EQ(kind_of("seeds = 1\nseeds = 2\n"), ErrorKind::config);
  EXPECT_EQ(kind_of("neural.advective = central4\n"), ErrorKind::config);
  EXPECT_EQ(kind_of("ic.test = 2, 3\n"), ErrorKind::config);  // train IC inside the sweep
  EXPECT_NO_THROW(parse_config("ic.test = 2, 3\nic.allow_train_in_test = true\n"));
  EXPECT_THROW(load_config("/nonexistent/x.cfg"), Error);
}

TEST(Sweep, OneRowPerIc) {
  const auto c = preset("burgers-expt1");
  const auto net = initial_train_state(c.train, c.truth.n_points).net;
  EXPECT_TRUE(sweep_test_ics(c, net, {}).empty());
  const auto rows = sweep_test_ics(c, net, c.test_ics);
  EXPECT_EQ(rows.size(), 13u);
  for (std::size_t i = 0; i < rows.size(); ++i) EXPECT_EQ(rows[i].ic_param, c.test_ics[i]);
}

TEST(Sweep, GkdvDefaultHasSevenRows) {
  auto c = preset("gkdv-expt1");
  c.truth.n_steps = 2;
  const auto net = initial_train_state(c.train, c.truth.n_points).net;
  EXPECT_EQ(sweep_test_ics(c, net, c.test_ics).size(), 7u);
}

TEST(Run, ZeroEpochsGivesUntrainedError) {
  const auto dir = fixture::scratch_dir("exp_zero");
  auto c = tiny(dir);
  c.train.epochs = 0;
  c.seeds = {1};
  c.test_ics = {};
  const auto res = run_experiment(c, {std::nullopt, false});
  ASSERT_EQ(res.median_rms.size(), 1u);
  const auto net = initial_train_state(train_config_for_seed(c, 1), 16).net;
  const auto direct = sweep_test_ics(c, net, {2.0});
  EXPECT_EQ(res.median_rms[0].log10_rmse, direct[0].rms.log10_rmse);
}

TEST(Run, CsvArtifactsAreByteIdenticalAcrossRuns) {
  const auto da = fixture::scratch_dir("exp_a"), db = fixture::scratch_dir("exp_b");
  run_experiment(tiny(da));
  auto cb = tiny(db);
  run_experiment(cb);
  int compared = 0;
  for (const auto& e : std::filesystem::recursive_directory_iterator(da)) {
    const auto rel = std::filesystem::relative(e.path(), da);
    const auto ext = e.path().extension();
    if (ext != ".csv" && ext != ".svg" && ext != ".npde") continue;
    EXPECT_EQ(read_all(e.path()), read_all(db / rel)) << rel;
    ++compared;
  }
  EXPECT_GT(compared, 20);
  EXPECT_EQ(read_all(da / "seed1" / "rms.csv").substr(0, 32), "ic_param,log10_rmse,blowup_flag\n");
  EXPECT_EQ(read_all(da / "seed1" / "profile_ic2.csv").substr(0, 19), "x,phi_true,phi_pred");
  EXPECT_EQ(read_all(da / "seed1" / "eigen_ic2.csv").substr(0, 22), "rollout_time,re,im,abs");
  EXPECT_EQ(read_all(da / "seed1" / "energy_true.csv").substr(0, 4), "t,E\n");
}

TEST(Run, ManifestNamesFailedStage) {
  const auto dir = fixture::scratch_dir("exp_fail");
  auto c = tiny(dir);
  c.truth.tableau = "euler";
  c.truth.substeps = 1;
  c.truth.ic = BurgersIc{200.0};
  c.truth.n_steps = 200;
  try {
    run_experiment(c);
    FAIL() << "expected ground-truth blow-up";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ground_truth_blowup);
  }
  const auto m = read_all(dir / "manifest.txt");
  EXPECT_NE(m.find("status = failed"), std::string::npos);
  EXPECT_NE(m.find("failed_stage = generate"), std::string::npos);
}

TEST(Run, ResumeFromCheckpointMatchesStraightRun) {
  const auto da = fixture::scratch_dir("exp_resume_a"), db = fixture::scratch_dir("exp_resume_b");
  auto full = tiny(da);
  full.seeds = {1};
  full.train.epochs = 6;
  run_experiment(full, {std::nullopt, false});
  auto half = full;
  half.output_dir = db.string();
  half.train.epochs = 2;
  run_experiment(half, {std::nullopt, false});
  auto rest = half;
  rest.train.epochs = 6;
  const auto saved = db / "seed1" / "checkpoint.npde";
  std::filesystem::copy_file(saved, db / "start.npde");
  run_experiment(rest, {(db / "start.npde").string(), false});
  EXPECT_EQ(read_all(da / "seed1" / "checkpoint.npde"), read_all(db / "seed1" / "checkpoint.npde"));
  EXPECT_EQ(read_all(da / "seed1" / "rms.csv"), read_all(db / "seed1" / "rms.csv"));
}

TEST(Svg, EmptyAndUnitCircle) {
  const auto empty = svg_line_plot({}, "t", "x", "y");
  EXPECT_NE(empty.find("<svg"), std::string::npos);
  EXPECT_NE(empty.find("</svg>"), std::string::npos);
  const auto circle = svg_unit_circle({{"identity", std::vector<Complex>(4, Complex(1.0, 0.0))}}, "id");
  EXPECT_NE(circle.find("<ellipse"), std::string::npos);
  // the circle's right-most point and the eigenvalue marker share an x coordinate
  const auto cx_pos = circle.find("cx=\"", circle.find("<ellipse"));
  const auto rx_pos = circle.find("rx=\"", cx_pos);
  const double cx = std::stod(circle.substr(cx_pos + 4)), rx = std::stod(circle.substr(rx_pos + 4));
  const auto pt = circle.find("cx=\"", circle.find("<circle"));
  EXPECT_NEAR(std::stod(circle.substr(pt + 4)), cx + rx, 0.02);
}
