#include <gtest/gtest.h>

#include <random>

#include "blochforge/nlb.hpp"

namespace blochforge {
namespace {

KPoint kp(std::initializer_list<const char*> parts) {
  return KPoint::parse(std::vector<std::string>(parts.begin(), parts.end()));
}

Eigen::VectorXd random_vector(std::mt19937& rng, Eigen::Index n, double scale = 1.0) {
  std::normal_distribution<double> g;
  Eigen::VectorXd v(n);
  for (auto& x : v) x = scale * g(rng);
  return v;
}

// Smooth random fields: low Fourier modes only, so FD checks are not
// dominated by grid-scale noise.
Eigen::VectorXd smooth_state(const NlbProblem& p, std::mt19937& rng, double scale) {
  const auto& g = p.grid();
  Eigen::VectorXd u(static_cast<Eigen::Index>(p.unknowns()));
  std::normal_distribution<double> nd;
  for (int j = 0; j < p.components(); ++j) {
    CplxVec c(g.size(), cplx{});
    for (std::size_t i = 0; i < g.size(); ++i) {
      auto m = g.mode_vector(i);
      bool low = true;
      for (int v : m) low &= std::abs(v) <= 3;
      if (low) c[i] = {scale * nd(rng), scale * nd(rng)};
    }
    auto vals = from_coefficients(g, c);
    for (std::size_t i = 0; i < g.size(); ++i) {
      u(2 * (j * g.size() + i)) = vals[i].real();
      u(2 * (j * g.size() + i) + 1) = vals[i].imag();
    }
  }
  return u;
}

struct ExampleSetup {
  ModeSelection sel;
  std::vector<BlochMode> modes;
  CVec A;
  std::shared_ptr<const NlbProblem> problem;
};

ExampleSetup example_a(int n, double sigma) {
  auto pot = PotentialSpec::smoothed_square_2d();
  TorusGrid g(2, n);
  auto k = kp({"1/2", "1/2"});
  auto modes = solve_bloch(pot, g, k.to_double(), 1);
  auto sel = make_selection(modes[0].omega, {{k, 1}});
  auto sys = build_system(sel, modes, sigma, sigma);
  CVec A{1.0 / std::sqrt(sys.mu[0][0].real())};
  auto prob = std::make_shared<const NlbProblem>(NlbProblem::from_selection(sel, pot, g, sigma));
  return {sel, modes, A, prob};
}

ExampleSetup example_b(int n, double sigma) {
  auto pot = PotentialSpec::smoothed_square_2d();
  TorusGrid g(2, n);
  auto k1 = kp({"1/2", "0"}), k2 = kp({"0", "1/2"});
  std::vector<BlochMode> modes{solve_bloch(pot, g, k1.to_double(), 2)[1], solve_bloch(pot, g, k2.to_double(), 2)[1]};
  auto sel = make_selection(modes[0].omega, {{k1, 2}, {k2, 2}});
  auto sys = build_system(sel, modes, sigma, sigma);
  CVec A;
  for (const auto& s : solve_general_newton(sys))
    if (s.reversible && s.nondegenerate && std::abs(s.A[0] - s.A[1]) < 1e-8 && s.A[0].real() > 0) A = s.A;
  EXPECT_EQ(A.size(), 2u);
  auto prob = std::make_shared<const NlbProblem>(NlbProblem::from_selection(sel, pot, g, sigma));
  return {sel, modes, A, prob};
}

TEST(NlbResidual, ZeroStateIsASolution) {
  auto ex = example_a(16, 1.0);
  EXPECT_EQ(zero_state(ex.problem, 1.7).residual_norm(), 0.0);
}

TEST(NlbResidual, LinearBlochModeWithoutNonlinearity) {
  auto pot = PotentialSpec::smoothed_square_2d();
  TorusGrid g(2, 32);
  auto k = kp({"1/4", "1/4"});
  auto mode = solve_bloch(pot, g, k.to_double(), 1)[0];
  auto sel = make_selection(mode.omega, {{k, 1}, {k.negated(), 1}});
  auto prob = std::make_shared<const NlbProblem>(NlbProblem::from_selection(sel, pot, g, 0.0));
  const double t = 0.7;
  auto s = asymptotic_guess(prob, sel, {mode, mode}, {t, 0.0}, 0.0, 1.0);
  EXPECT_LE(s.residual_norm(), 1e-8 * t);
  EXPECT_NEAR(s.norm(), t, 1e-12);
}

TEST(NlbJacobian, MatchesFiniteDifferences) {
  std::mt19937 rng(3);
  auto pot = PotentialSpec::smoothed_square_2d();
  TorusGrid g(2, 16);
  // An inconsistent selection: the closure adds Gamma as a third component.
  auto sel = make_selection(1.0, {{kp({"1/3", "0"}), 1}, {kp({"-1/3", "0"}), 1}});
  ASSERT_EQ(sel.M(), 3);
  for (double sigma : {1.0, -1.0}) {
    NlbProblem p = NlbProblem::from_selection(sel, pot, g, sigma);
    NlbPath path(std::make_shared<const NlbProblem>(p));
    for (int trial = 0; trial < 3; ++trial) {
      Eigen::VectorXd u = smooth_state(p, rng, 0.3), v = smooth_state(p, rng, 1.0);
      const double omega = 1.5, h = 1e-6;
      Eigen::VectorXd fd = (path.residual(u + h * v, omega) - path.residual(u - h * v, omega)) / (2 * h);
      Eigen::VectorXd jv(u.size());
      p.apply_jacobian(detail::as_complex(u), omega, detail::as_complex(v), detail::as_complex(jv));
      EXPECT_LE((jv - fd).norm(), 1e-6 * jv.norm());
    }
  }
}

TEST(NlbResidual, PhaseInvariance) {
  std::mt19937 rng(8);
  auto ex = example_b(16, -1.0);
  NlbPath path(ex.problem);
  Eigen::VectorXd u = smooth_state(*ex.problem, rng, 0.5);
  const double r0 = path.residual(u, 2.0).norm();
  Eigen::VectorXd rot = u;
  auto c = detail::as_complex(rot);
  for (auto& z : c) z *= std::polar(1.0, 0.9);
  EXPECT_NEAR(path.residual(rot, 2.0).norm(), r0, 1e-12 * r0);
}

TEST(NlbReversibility, ProjectionIsIdempotentAndCommutesWithResidual) {
  std::mt19937 rng(4);
  for (auto ex : {example_a(16, 1.0), example_b(16, 1.0)}) {
    NlbPath path(ex.problem);
    Eigen::VectorXd u = smooth_state(*ex.problem, rng, 0.5);
    path.project(u);
    EXPECT_LE(ex.problem->reversibility_defect(detail::as_complex(u)), 1e-14);
    Eigen::VectorXd again = u;
    path.project(again);
    EXPECT_LE((again - u).norm(), 1e-14 * u.norm());
    Eigen::VectorXd F = path.residual(u, 1.9);
    EXPECT_LE(ex.problem->reversibility_defect(detail::as_complex(F)), 1e-11 * F.norm());
  }
}

TEST(AsymptoticGuess, ZeroEpsilonAndExampleB) {
  auto a = example_a(16, -1.0);
  auto z = asymptotic_guess(a.problem, a.sel, a.modes, a.A, -1.0, 0.0);
  EXPECT_EQ(z.norm(), 0.0);
  EXPECT_EQ(z.omega, a.sel.omega_star);

  auto b = example_b(32, -1.0);
  auto s = asymptotic_guess(b.problem, b.sel, b.modes, b.A, -1.0, 0.452);
  EXPECT_DOUBLE_EQ(s.omega, b.sel.omega_star - 0.452 * 0.452);
  ASSERT_EQ(s.components(), 2);
  EXPECT_NEAR(l2_norm(s.eta(0)), 0.452 * std::abs(b.A[0]), 1e-10);
  EXPECT_NEAR(l2_norm(s.eta(1)), 0.452 * std::abs(b.A[1]), 1e-10);
}

TEST(NewtonSolve, TinyGuessInAGapFallsToZero) {
  auto a = example_a(16, 1.0);
  auto guess = asymptotic_guess(a.problem, a.sel, a.modes, {1e-3}, 0.0, 1.0);
  guess.omega = 1.85;  // between the first two bands
  auto r = newton_solve(guess);
  EXPECT_EQ(r.status, NewtonStatus::converged_to_zero);
}

TEST(NewtonSolve, ExampleANearBifurcationAndIdempotence) {
  auto a = example_a(32, -1.0);
  const double eps = 0.12;
  auto r = newton_solve(asymptotic_guess(a.problem, a.sel, a.modes, a.A, -1.0, eps));
  ASSERT_EQ(r.status, NewtonStatus::converged);
  const double n = r.state.norm();
  EXPECT_NEAR(n, eps * std::abs(a.A[0]), 0.05 * eps * std::abs(a.A[0]));
  EXPECT_LE(r.state.residual_norm(), 1e-8 * (1 + std::pow(n, 3)));
  EXPECT_LE(r.state.reversibility_defect(), 1e-8);
  auto again = newton_solve(r.state);
  EXPECT_EQ(again.iterations, 0);
  EXPECT_EQ(again.status, NewtonStatus::converged);
}

TEST(ContinueBranch, ExampleAFollowsTheAsymptoticCurve) {
  for (double sigma : {1.0, -1.0}) {
    auto a = example_a(32, sigma);
    auto seed = newton_solve(asymptotic_guess(a.problem, a.sel, a.modes, a.A, sigma, 0.02));
    ASSERT_EQ(seed.status, NewtonStatus::converged);
    ContinuationOptions opt;
    opt.ds = 0.005;
    opt.ds_max = 0.02;
    opt.max_steps = 60;
    auto br = continue_branch(seed.state, sigma > 0 ? 1 : -1, opt);
    ASSERT_GE(br.points.size(), 11u);
    int near = 0;
    for (std::size_t i = 0; i < br.points.size(); ++i) {
      const auto& p = br.points[i];
      const double dw = (p.omega - a.sel.omega_star) * sigma;
      EXPECT_LE(p.state.residual_norm(), 1e-8 * (1 + std::pow(p.norm, 3)));
      EXPECT_LE(p.state.reversibility_defect(), 1e-7);
      if (i > 0) EXPECT_GT(p.arclength, br.points[i - 1].arclength);
      if (i > 0 && i < 10) EXPECT_GT(p.norm, br.points[i - 1].norm);
      if (dw <= 0.01) {
        ++near;
        EXPECT_NEAR(p.norm, std::abs(a.A[0]) * std::sqrt(dw), 0.05 * p.norm);
      }
    }
    EXPECT_GE(near, 3);
  }
}

TEST(ContinueBranch, ExampleBReachesOmega18304Symmetrically) {
  auto b = example_b(32, -1.0);
  auto seed = newton_solve(asymptotic_guess(b.problem, b.sel, b.modes, b.A, -1.0, 0.05));
  ASSERT_EQ(seed.status, NewtonStatus::converged);
  ContinuationOptions opt;
  opt.ds = 0.02;
  opt.omega_min = 1.82;
  auto br = continue_branch(seed.state, -1, opt);
  EXPECT_LT(br.points.back().omega, 1.8304);
  EXPECT_TRUE(br.folds.empty());
  auto s = solve_on_branch(br, 1.8304);
  ASSERT_TRUE(s);
  EXPECT_LE(s->reversibility_defect(), 1e-8);
  // The two components carry the same profile up to the x1 <-> x2 swap.
  EXPECT_NEAR(l2_norm(s->eta(0)), l2_norm(s->eta(1)), 1e-8);
  const double eps = std::sqrt(b.sel.omega_star - 1.8304);
  const double asym = eps * std::sqrt(std::norm(b.A[0]) + std::norm(b.A[1]));
  EXPECT_NEAR(s->norm(), asym, 0.1 * asym);
}

TEST(ContinueBranch, TrivialBranchStaysZero) {
  auto a = example_a(16, 1.0);
  ContinuationOptions opt;
  opt.max_steps = 5;
  opt.ds = 0.05;
  auto br = continue_branch(zero_state(a.problem, 1.85), 1, opt);
  EXPECT_EQ(br.points.size(), 6u);
  for (const auto& p : br.points) EXPECT_EQ(p.norm, 0.0);
  EXPECT_EQ(br.status, BranchStatus::max_steps);
}

TEST(NlbGrid, RefinementChangesNormBelowTolerance) {
  const double omega = 1.7023 - 0.0144;
  std::vector<double> norms;
  for (int n : {128, 256}) {
    auto a = example_a(n, -1.0);
    const double eps = std::sqrt(a.sel.omega_star - omega);
    auto guess = asymptotic_guess(a.problem, a.sel, a.modes, a.A, -1.0, eps);
    auto r = newton_solve(guess);
    ASSERT_EQ(r.status, NewtonStatus::converged);
    norms.push_back(r.state.norm());
  }
  EXPECT_LE(std::abs(norms[0] - norms[1]), 1e-6);
}

TEST(NlbJson, StateRoundTrip) {
  std::mt19937 rng(2);
  auto b = example_b(16, 1.0);
  NlbState s{b.problem, smooth_state(*b.problem, rng, 1.0), 1.9};
  auto back = state_from_json(nlohmann::json::parse(state_to_json(s).dump()), b.problem);
  EXPECT_EQ(back.omega, s.omega);
  EXPECT_LE((back.u - s.u).norm(), 1e-15 * s.u.norm());
}

}  // namespace
}  // namespace blochforge
