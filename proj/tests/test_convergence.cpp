#include <gtest/gtest.h>

#include <random>

#include "blochforge/convergence.hpp"

namespace blochforge {
namespace {

KPoint kp(std::initializer_list<const char*> parts) {
  return KPoint::parse(std::vector<std::string>(parts.begin(), parts.end()));
}

// Normal equations for y = a x + b, solved by Cramer's rule.
std::pair<double, double> normal_equations(const std::vector<double>& eps, const std::vector<double>& err) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(eps.size());
  for (std::size_t i = 0; i < eps.size(); ++i) {
    const double x = std::log(eps[i]), y = std::log(err[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double det = n * sxx - sx * sx;
  return {(n * sxy - sx * sy) / det, (sxx * sy - sx * sxy) / det};
}

TEST(FitRate, ExactPowerLaws) {
  std::vector<double> eps{0.12, 0.09, 0.06, 0.045, 0.03}, e3, e2;
  for (double e : eps) {
    e3.push_back(e * e * e);
    e2.push_back(2 * e * e);
  }
  EXPECT_NEAR(fit_rate(eps, e3).slope, 3.0, 1e-12);
  auto f = fit_rate(eps, e2);
  EXPECT_NEAR(f.slope, 2.0, 1e-12);
  EXPECT_NEAR(f.intercept, std::log(2.0), 1e-12);
  EXPECT_NEAR(f.residual, 0.0, 1e-12);
  EXPECT_THROW(fit_rate({0.1, 0.0}, {1.0, 1.0}), InvalidArgument);
  EXPECT_THROW(fit_rate({0.1, 0.2}, {1.0, -1.0}), InvalidArgument);
  EXPECT_THROW(fit_rate({0.1}, {1.0}), InvalidArgument);
}

TEST(FitRate, NoisyDataMatchesNormalEquations) {
  std::mt19937 rng(11);
  std::normal_distribution<double> noise(0.0, 0.1);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> eps, err;
    for (double e = 0.12; e > 0.02; e *= 0.8) {
      eps.push_back(e);
      err.push_back(0.9 * std::pow(e, 3.11) * std::exp(noise(rng)));
    }
    auto [slope, icpt] = normal_equations(eps, err);
    auto f = fit_rate(eps, err);
    EXPECT_NEAR(f.slope, slope, 1e-9);
    EXPECT_NEAR(f.intercept, icpt, 1e-9);
    EXPECT_NEAR(f.slope, 3.11, 0.5);
  }
}

struct Setup {
  ModeSelection sel;
  std::vector<BlochMode> modes;
  CVec A;
  std::shared_ptr<const NlbProblem> problem;
};

Setup example(bool b, int n, double sigma) {
  auto pot = PotentialSpec::smoothed_square_2d();
  TorusGrid g(2, n);
  Setup s;
  if (!b) {
    auto k = kp({"1/2", "1/2"});
    s.modes = solve_bloch(pot, g, k.to_double(), 1);
    s.sel = make_selection(s.modes[0].omega, {{k, 1}});
    auto sys = build_system(s.sel, s.modes, sigma, sigma);
    s.A = {1.0 / std::sqrt(sys.mu[0][0].real())};
  } else {
    auto k1 = kp({"1/2", "0"}), k2 = kp({"0", "1/2"});
    s.modes = {solve_bloch(pot, g, k1.to_double(), 2)[1], solve_bloch(pot, g, k2.to_double(), 2)[1]};
    s.sel = make_selection(s.modes[0].omega, {{k1, 2}, {k2, 2}});
    auto sys = build_system(s.sel, s.modes, sigma, sigma);
    for (const auto& sol : solve_general_newton(sys))
      if (sol.reversible && sol.nondegenerate && std::abs(sol.A[0] - sol.A[1]) < 1e-8 && sol.A[0].real() > 0)
        s.A = sol.A;
  }
  s.problem = std::make_shared<const NlbProblem>(NlbProblem::from_selection(s.sel, pot, g, sigma));
  return s;
}

const std::vector<double> kEps{0.12, 0.09, 0.06, 0.045, 0.03};

TEST(EpsilonSweep, ExampleARateIsThree) {
  auto s = example(false, 32, -1.0);
  SweepOptions opt;
  opt.threads = 2;
  auto r = epsilon_sweep(s.problem, s.sel, s.modes, s.A, -1.0, kEps, opt);
  EXPECT_EQ(r.s, 2.0);
  EXPECT_EQ(r.epsilons.size(), 5u);
  EXPECT_NEAR(r.fitted_rate, 3.0, 0.3);
  EXPECT_NEAR(r.fitted_rate_l2, r.fitted_rate, 0.3);
  EXPECT_TRUE(r.outside_asymptotic_regime.empty());
  EXPECT_FALSE(r.degenerate);
}

TEST(EpsilonSweep, ExampleBRateIsThree) {
  auto s = example(true, 32, -1.0);
  ASSERT_EQ(s.A.size(), 2u);
  auto r = epsilon_sweep(s.problem, s.sel, s.modes, s.A, -1.0, kEps);
  EXPECT_NEAR(r.fitted_rate, 3.0, 0.3);
  EXPECT_NEAR(r.fitted_rate_l2, r.fitted_rate, 0.3);
}

TEST(EpsilonSweep, LinearProblemIsDegenerate) {
  auto pot = PotentialSpec::smoothed_square_2d();
  TorusGrid g(2, 16);
  auto k = kp({"1/2", "1/2"});
  auto modes = solve_bloch(pot, g, k.to_double(), 1);
  auto sel = make_selection(modes[0].omega, {{k, 1}});
  auto prob = std::make_shared<const NlbProblem>(NlbProblem::from_selection(sel, pot, g, 0.0));
  auto r = epsilon_sweep(prob, sel, modes, {1.0}, 0.0, kEps);
  EXPECT_TRUE(r.degenerate);
  EXPECT_TRUE(std::isnan(r.fitted_rate));
}

TEST(EpsilonSweep, RejectsBadEpsilonLists) {
  auto s = example(false, 16, -1.0);
  EXPECT_THROW(epsilon_sweep(s.problem, s.sel, s.modes, s.A, -1.0, {0.03, 0.06}), InvalidArgument);
  EXPECT_THROW(epsilon_sweep(s.problem, s.sel, s.modes, s.A, -1.0, {0.1, -0.1}), InvalidArgument);
  // Too few usable points.
  EXPECT_THROW(epsilon_sweep(s.problem, s.sel, s.modes, s.A, -1.0, {0.1, 0.05, 0.03}), ConvergenceError);
}

}  // namespace
}  // namespace blochforge
