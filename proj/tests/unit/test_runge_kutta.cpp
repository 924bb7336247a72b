#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "npde/pde.hpp"
#include "npde/runge_kutta.hpp"
#include "oracles.hpp"

using namespace npde;

TEST(Tableau, BuiltinsAreConsistent) {
  for (const char* name : {"euler", "rk4", "dp5", "tsit5"}) {
    const auto t = ButcherTableau::by_name(name);
    EXPECT_NO_THROW(t.validate()) << name;
  }
  EXPECT_THROW(ButcherTableau::by_name("rk7"), Error);
}

TEST(Tableau, ObservedOrdersOnScalarDecay) {
  const std::vector<int> coarse{4, 8, 16, 32};
  const std::vector<int> fine{2, 4, 8, 16};
  const double rk4 = measured_integrator_order(ButcherTableau::rk4(), coarse);
  EXPECT_GE(rk4, 3.7);
  EXPECT_LE(rk4, 4.3);
  const double dp5 = measured_integrator_order(ButcherTableau::dormand_prince5(), fine);
  EXPECT_GE(dp5, 4.6);
  EXPECT_LE(dp5, 5.4);
  const double ts5 = measured_integrator_order(ButcherTableau::tsit5(), std::vector<int>{16, 32, 64});
  EXPECT_GE(ts5, 4.6);
  EXPECT_LE(ts5, 5.4);
  const double euler = measured_integrator_order(ButcherTableau::forward_euler(), std::vector<int>{64, 128, 256});
  EXPECT_NEAR(euler, 1.0, 0.1);
}

TEST(RkStep, Rk4OnLinearSystemMatchesMatrixPolynomial) {
  const int n = 16;
  const Grid1D g(n, 2.0 * std::numbers::pi);
  const Stencil d1 = SchemeChoice{SchemePreset::central2, 1}.resolve();
  const Stencil d2 = SchemeChoice{SchemePreset::central6, 2}.resolve();
  const Eigen::MatrixXd L = 0.7 * oracle::periodic_matrix(n, d1.offsets, d1.weights, 1.0 / g.dx()) +
                            0.05 * oracle::periodic_matrix(n, d2.offsets, d2.weights, 1.0 / (g.dx() * g.dx()));
  const auto rhs = [&](std::span<const double> y, std::span<double> out) {
    Eigen::Map<Eigen::VectorXd>(out.data(), n) = L * Eigen::Map<const Eigen::VectorXd>(y.data(), n);
  };
  Field y = Field::sample(g, [](double x) { return std::sin(x) + 0.3 * std::cos(3 * x); });
  const double h = 0.02;
  const Field stepped = rk_step(rhs, y, h, ButcherTableau::rk4());
  const Eigen::VectorXd expect = oracle::rk4_update(L, h) * Eigen::Map<const Eigen::VectorXd>(y.values.data(), n);
  for (int i = 0; i < n; ++i) EXPECT_NEAR(stepped[i], expect(i), 1e-13);
}

TEST(RkStep, SubstepsEqualRepeatedSmallerSteps) {
  const Grid1D g(16, 2.0 * std::numbers::pi);
  BurgersSpec spec;
  const BurgersTrueRhs rhs(spec, g);
  const Field f0 = Field::sample(g, [](double x) { return 1.0 + 0.5 * std::sin(x); });
  const auto tab = ButcherTableau::rk4();
  RkWorkspace ws;
  std::vector<double> a(16), b(16), tmp(16);
  ASSERT_TRUE(advance(rhs, f0.values, 0.01, 4, tab, a, ws));
  b = f0.values;
  for (int k = 0; k < 4; ++k) {
    rk_step(rhs, std::span<const double>(b), 0.0025, tab, tmp, ws);
    b = tmp;
  }
  EXPECT_EQ(a, b);
}

TEST(RkStep, EmbeddedEstimateMatchesWeightDifference) {
  const auto tab = ButcherTableau::dormand_prince5();
  const auto decay = [](std::span<const double> y, std::span<double> out) { out[0] = -y[0]; };
  std::vector<double> y{1.0}, out(1), err(1);
  RkWorkspace ws;
  ASSERT_TRUE(rk_step(decay, y, 0.1, tab, out, ws, err).ok);
  EXPECT_NEAR(out[0], std::exp(-0.1), 1e-9);
  EXPECT_LT(std::abs(err[0]), 1e-6);
  EXPECT_GT(std::abs(err[0]), 0.0);
}

TEST(Integrate, BlowUpIsFlaggedAndRowsStayFinite) {
  const Grid1D g(8, 1.0);
  const auto grow = [](std::span<const double> y, std::span<double> out) {
    for (std::size_t i = 0; i < y.size(); ++i) out[i] = y[i] * y[i];
  };
  const Field f0 = Field::sample(g, [](double) { return 1.0; });
  const auto traj = integrate(grow, f0, 0.25, 40, ButcherTableau::rk4());
  ASSERT_TRUE(traj.blowup_step.has_value());
  EXPECT_EQ(traj.n_stored(), static_cast<std::size_t>(*traj.blowup_step));
  for (std::size_t k = 0; k < traj.n_stored(); ++k) EXPECT_TRUE(all_finite(traj.state(k)));
}

TEST(Integrate, RejectsBadArguments) {
  const Grid1D g(8, 1.0);
  const auto zero = [](std::span<const double>, std::span<double> out) { std::fill(out.begin(), out.end(), 0.0); };
  const Field f0(g);
  EXPECT_THROW(integrate(zero, f0, 0.0, 5, ButcherTableau::rk4()), Error);
  EXPECT_THROW(integrate(zero, f0, 0.1, 5, ButcherTableau::rk4(), 0), Error);
  const auto traj = integrate(zero, f0, 0.1, 0, ButcherTableau::rk4());
  EXPECT_EQ(traj.n_stored(), 1u);
}
