#include <gtest/gtest.h>

#include <random>

#include "blochforge/acme.hpp"

namespace blochforge {
namespace {

KPoint kp(std::initializer_list<const char*> parts) {
  return KPoint::parse(std::vector<std::string>(parts.begin(), parts.end()));
}

struct RandomTensor {
  AcmeSystem system;
  bool swap = false;
};

// Random N = 2 tensor with the reversal symmetry of its pairing: swap pairs
// force mu_1111 = mu_2222; identity pairing forces every coefficient real.
RandomTensor random_tensor(std::mt19937& rng, bool swap, bool consistent) {
  std::uniform_real_distribution<double> u(0.05, 1.0), ph(-std::numbers::pi, std::numbers::pi);
  std::bernoulli_distribution coin;
  const double s = coin(rng) ? 1.0 : -1.0, o = coin(rng) ? 1.0 : -1.0;
  const double m11 = u(rng), m22 = swap ? m11 : u(rng), m1221 = u(rng);
  const cplx m2121 = swap ? std::polar(u(rng), ph(rng)) : cplx{(coin(rng) ? 1.0 : -1.0) * u(rng), 0.0};
  return {two_mode_system(m11, m22, m1221, m2121, consistent, swap ? std::vector<int>{1, 0} : std::vector<int>{0, 1},
                          s, o * u(rng) * 2.0),
          swap};
}

CVec random_amplitudes(std::mt19937& rng, int n) {
  std::normal_distribution<double> g;
  CVec A(n);
  for (auto& a : A) a = {g(rng), g(rng)};
  return A;
}

double rel_diff(const CVec& a, const CVec& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += std::norm(a[i] - b[i]);
  return std::sqrt(d) / std::max(1.0, norm(b));
}

TEST(AcmeResidual, TrivialCases) {
  auto s = scalar_system(1.0, 1.0, 1.0);
  EXPECT_EQ(norm(acme_residual({0.0}, s)), 0.0);
  EXPECT_NEAR(norm(acme_residual({1.0}, s)), 0.0, 1e-15);
}

TEST(SolveScalar, FormulaAndSignRule) {
  auto a = solve_scalar(1.0, 1.0, 1.0);
  ASSERT_TRUE(a);
  EXPECT_NEAR(std::abs(a->A[0] - 1.0), 0.0, 1e-15);
  EXPECT_TRUE(a->nondegenerate);
  EXPECT_TRUE(a->reversible);
  EXPECT_FALSE(solve_scalar(1.0, 1.0, -1.0));
  auto ex = solve_scalar(0.0765, -1.0, -1.0);
  ASSERT_TRUE(ex);
  EXPECT_NEAR(std::abs(ex->A[0]), 3.6154, 2e-3);
}

TEST(Jacobian, MatchesFiniteDifferences) {
  std::mt19937 rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    auto t = random_tensor(rng, trial % 2 == 0, trial % 3 != 0);
    auto A = random_amplitudes(rng, 2);
    auto J = acme_jacobian_real(A, t.system), F = acme_jacobian_fd(A, t.system);
    EXPECT_LE((J - F).norm(), 1e-6 * J.norm());
  }
}

TEST(KernelDirection, ScalarAndZero) {
  auto s = scalar_system(1.0, 1.0, 1.0);
  auto k = kernel_direction({1.0}, s);
  EXPECT_FALSE(k.degenerate);
  EXPECT_NEAR(k.v[0], 0.0, 1e-15);
  EXPECT_NEAR(k.v[1], 1.0, 1e-15);
  EXPECT_TRUE(kernel_direction({0.0}, s).degenerate);
  EXPECT_THROW(kernel_direction({2.0}, s), InvalidArgument);
}

TEST(Reversibility, CheckAndProjection) {
  EXPECT_TRUE(reversibility_check({1.5, -2.0}, {0, 1}));
  EXPECT_TRUE(reversibility_check({cplx{1, 1}, cplx{1, -1}}, {1, 0}));
  EXPECT_FALSE(reversibility_check({cplx{1, 1}, cplx{1, 1}}, {1, 0}));
  auto p = project_reversible({cplx{1, 1}, cplx{1, 1}}, {1, 0});
  EXPECT_NEAR(std::abs(p[0] - 1.0), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(p[1] - 1.0), 0.0, 1e-15);
}

TEST(AcmeProperties, PhaseInvarianceEquivarianceAndScaling) {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> nu(0, 2 * std::numbers::pi);
  for (int trial = 0; trial < 100; ++trial) {
    auto t = random_tensor(rng, trial % 2 == 0, true);
    auto A = random_amplitudes(rng, 2);
    const double f = norm(acme_residual(A, t.system));
    CVec rot = A;
    const cplx e = std::polar(1.0, nu(rng));
    for (auto& a : rot) a *= e;
    EXPECT_NEAR(norm(acme_residual(rot, t.system)), f, 1e-12 * (1 + f));

    const auto S = symmetry_matrix(t.system.pairing);
    const Eigen::VectorXd v = to_real(A);
    const Eigen::VectorXd lhs = to_real(acme_residual(from_real(S * v), t.system));
    const Eigen::VectorXd rhs = S * to_real(acme_residual(A, t.system));
    EXPECT_LE((lhs - rhs).norm(), 1e-13 * (1 + rhs.norm()));
  }
  auto t = random_tensor(rng, true, true);
  for (const auto& sol : solve_two_mode(t.system)) {
    for (double lambda : {0.5, 2.0}) {
      AcmeSystem scaled = t.system;
      scaled.Omega *= lambda;
      CVec B = sol.A;
      for (auto& b : B) b *= std::sqrt(lambda);
      EXPECT_LE(norm(acme_residual(B, scaled)), 1e-12 * (1 + norm(B)));
    }
  }
}

TEST(SolveTwoMode, DecoupledToyTensor) {
  auto s = two_mode_system(1.0, 1.0, 0.0, 0.0, true, {0, 1}, 1.0, 1.0);
  auto sols = solve_two_mode(s);
  ASSERT_FALSE(sols.empty());
  for (const auto& sol : sols) {
    EXPECT_NEAR(std::abs(sol.A[0]), 1.0, 1e-14);
    EXPECT_NEAR(std::abs(sol.A[1]), 1.0, 1e-14);
    EXPECT_LE(sol.residual, 1e-12);
  }
}

TEST(SolveTwoMode, ReferenceCoefficientsGiveReferenceAmplitudes) {
  // Example B, rounded coefficients, identity pairing.
  auto b = two_mode_system(0.0901, 0.0901, 0.003, 0.003, true, {0, 1}, -1.0, -1.0);
  bool found = false;
  for (const auto& sol : solve_two_mode(b))
    if (sol.reversible && std::abs(sol.A[0] - sol.A[1]) < 1e-12) {
      found = true;
      EXPECT_NEAR(sol.A[0].real(), 3.17567, 0.02 * 3.17567);
      EXPECT_TRUE(sol.nondegenerate);
    }
  EXPECT_TRUE(found);
  // Example C, rounded coefficients, swap pairing.
  auto c = two_mode_system(0.0526, 0.0526, 0.0526, 0.0412, true, {1, 0}, -1.0, -1.0);
  found = false;
  for (const auto& sol : solve_two_mode(c))
    if (std::abs(sol.A[0].imag()) < 1e-12 && sol.A[0].real() > 0 && std::abs(sol.A[0] - sol.A[1]) < 1e-12) {
      found = true;
      EXPECT_NEAR(sol.A[0].real(), 2.242, 0.02 * 2.242);
      EXPECT_TRUE(sol.reversible);
    }
  EXPECT_TRUE(found);
}

TEST(SolveTwoMode, UnequalDiagonalHasNoReversibleSwapSolution) {
  auto s = two_mode_system(1.0, 2.0, 0.1, cplx{0.2, 0.1}, true, {1, 0}, 1.0, 1.0);
  for (const auto& sol : solve_two_mode(s)) {
    EXPECT_FALSE(sol.reversible);
    EXPECT_LE(sol.residual, 1e-12);
  }
}

TEST(SolveGeneralNewton, ScalarMatchesClosedForm) {
  auto s = scalar_system(0.3, -1.0, -2.0);
  auto sols = solve_general_newton(s);
  ASSERT_EQ(sols.size(), 1u);
  EXPECT_NEAR(std::abs(sols[0].A[0] - solve_scalar(0.3, -1.0, -2.0)->A[0]), 0.0, 1e-12);
}

// For random symmetric tensors, every reversible closed-form branch is found
// by multi-start Newton, and every Newton solution with both amplitudes
// nonzero is a closed-form branch.
TEST(SolveGeneralNewton, AgreesWithClosedFormOnRandomTensors) {
  std::mt19937 rng(2024);
  int compared = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const bool swap = trial % 2 == 0, consistent = trial % 4 < 3;
    auto t = random_tensor(rng, swap, consistent);
    auto closed = solve_two_mode(t.system);
    auto newton = solve_general_newton(t.system);
    // Without the mu_2121 coupling each amplitude has its own phase symmetry,
    // so only the moduli are determined.
    auto matches = [consistent](const CVec& a, const CVec& b) {
      if (!consistent) return rel_diff({std::abs(a[0]), std::abs(a[1])}, {std::abs(b[0]), std::abs(b[1])});
      CVec mb = b;
      for (auto& x : mb) x = -x;
      return std::min(rel_diff(a, b), rel_diff(a, mb));
    };
    for (const auto& c : closed) {
      if (!c.reversible) continue;
      double best = 1e300;
      for (const auto& n : newton) best = std::min(best, matches(n.A, c.A));
      EXPECT_LE(best, 1e-9) << "trial " << trial << " branch " << c.label;
      ++compared;
    }
    for (const auto& n : newton) {
      EXPECT_LE(n.residual, 1e-10 * (1 + norm(n.A)));
      EXPECT_TRUE(reversibility_check(n.A, t.system.pairing, 1e-12));
      if (std::abs(n.A[0]) < 1e-6 * norm(n.A) || std::abs(n.A[1]) < 1e-6 * norm(n.A)) continue;
      double best = 1e300;
      for (const auto& c : closed) best = std::min(best, matches(n.A, c.A));
      EXPECT_LE(best, 1e-9) << "trial " << trial;
    }
  }
  EXPECT_GT(compared, 200);
}

// Bloch modes of the smoothed square potential at the reference examples.
class ReferenceExamples : public ::testing::Test {
 protected:
  static AcmeSystem system_for(std::vector<Star> stars, double sigma, double Omega) {
    TorusGrid g(2, 64);
    auto spec = PotentialSpec::smoothed_square_2d();
    std::vector<BlochMode> modes;
    for (const auto& st : stars) modes.push_back(solve_bloch(spec, g, st.k.to_double(), st.n)[st.n - 1]);
    auto sel = make_selection(modes[0].omega, stars);
    return build_system(sel, modes, sigma, Omega);
  }
  static void expect_reversal_symmetry(const AcmeSystem& s) {
    for (int j = 0; j < s.N; ++j)
      for (std::size_t t = 0; t < s.A[j].size(); ++t) {
        const auto& tr = s.A[j][t];
        auto image = s.mu_at(s.pairing[tr.a], s.pairing[tr.b], s.pairing[tr.c], s.pairing[j]);
        ASSERT_TRUE(image);
        EXPECT_LE(std::abs(*image - std::conj(s.mu[j][t])), 1e-8);
      }
  }
};

TEST_F(ReferenceExamples, ExampleA) {
  auto s = system_for({{kp({"1/2", "1/2"}), 1}}, -1.0, -1.0);
  const double mu = s.mu[0][0].real();
  EXPECT_NEAR(mu, 0.0765, 5e-3);
  EXPECT_NEAR(s.mu[0][0].imag(), 0.0, 1e-12);
  expect_reversal_symmetry(s);
  EXPECT_NEAR(std::abs(solve_scalar(mu, -1.0, -1.0)->A[0]), 3.6154, 0.02 * 3.6154);
}

TEST_F(ReferenceExamples, ExampleB) {
  auto s = system_for({{kp({"1/2", "0"}), 2}, {kp({"0", "1/2"}), 2}}, -1.0, -1.0);
  EXPECT_NEAR(std::abs(*s.mu_at(0, 0, 0, 0)), 0.0901, 5e-3);
  EXPECT_NEAR(std::abs(*s.mu_at(1, 1, 1, 1)), 0.0901, 5e-3);
  EXPECT_NEAR(std::abs(*s.mu_at(1, 0, 1, 0)), 0.003, 2e-3);
  EXPECT_NEAR(std::abs(*s.mu_at(0, 1, 1, 0)), 0.003, 2e-3);
  expect_reversal_symmetry(s);
  const std::vector<double> expected{-0.1223, 0.0, 1.6332, 2.0};
  int hits = 0;
  for (const auto& sol : solve_two_mode(s)) {
    if (!sol.reversible || std::abs(std::abs(sol.A[0]) - std::abs(sol.A[1])) > 1e-9) continue;
    if (std::abs(sol.A[0] - sol.A[1]) > 1e-9) continue;
    ++hits;
    EXPECT_NEAR(std::abs(sol.A[0]), 3.17567, 0.02 * 3.17567);
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(sol.jacobian_eigenvalues[i], expected[i], 2e-2) << i;
    EXPECT_LE(std::abs(sol.jacobian_eigenvalues[1]), 1e-8);
    EXPECT_TRUE(sol.nondegenerate);
  }
  EXPECT_EQ(hits, 1);
}

TEST_F(ReferenceExamples, ExampleC) {
  auto s = system_for({{kp({"1/4", "1/4"}), 1}, {kp({"-1/4", "-1/4"}), 1}}, -1.0, -1.0);
  EXPECT_NEAR(std::abs(*s.mu_at(0, 0, 0, 0)), 0.0526, 5e-3);
  EXPECT_NEAR(std::abs(*s.mu_at(0, 1, 1, 0)), 0.0526, 5e-3);
  EXPECT_NEAR(std::abs(*s.mu_at(1, 0, 1, 0)), 0.0412, 5e-3);
  EXPECT_NEAR(s.mu_at(1, 0, 1, 0)->imag(), 0.0, 1e-8);
  expect_reversal_symmetry(s);
  const std::vector<double> expected{-0.9427, -0.828, 0.0, 2.0};
  int hits = 0;
  for (const auto& sol : solve_two_mode(s)) {
    if (std::abs(sol.A[0] - sol.A[1]) > 1e-9 || sol.A[0].real() <= 0) continue;
    ++hits;
    EXPECT_NEAR(sol.A[0].real(), 2.242, 0.02 * 2.242);
    EXPECT_TRUE(sol.reversible);
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(sol.jacobian_eigenvalues[i], expected[i], 2e-2) << i;
    EXPECT_LE(std::abs(sol.jacobian_eigenvalues[2]), 1e-8);
  }
  EXPECT_EQ(hits, 1);
  // Multi-start Newton recovers the closed-form branches.
  auto newton = solve_general_newton(s);
  for (const auto& c : solve_two_mode(s)) {
    double best = 1e300;
    for (const auto& n : newton) {
      best = std::min(best, rel_diff(n.A, c.A));
      CVec m = c.A;
      for (auto& x : m) x = -x;
      best = std::min(best, rel_diff(n.A, m));
    }
    EXPECT_LE(best, 1e-10) << c.label;
  }
}

TEST(AcmeJson, ComplexPairs) {
  auto s = two_mode_system(1.0, 1.0, 0.5, cplx{0.1, 0.2}, true, {1, 0}, 1.0, 1.0);
  auto j = system_to_json(s);
  EXPECT_EQ(j["mu"].size(), 8u);
  EXPECT_DOUBLE_EQ(j["mu"][3]["value"][1].get<double>(), 0.2);
  EXPECT_DOUBLE_EQ(j["mu"][7]["value"][1].get<double>(), -0.2);
  auto sol = solve_two_mode(s);
  ASSERT_FALSE(sol.empty());
  EXPECT_EQ(solution_to_json(sol[0])["A"].size(), 2u);
}

}  // namespace
}  // namespace blochforge
