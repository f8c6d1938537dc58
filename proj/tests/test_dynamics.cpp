#include <gtest/gtest.h>

#include <sstream>

#include "blochforge/dynamics.hpp"

namespace blochforge {
namespace {

double max_diff(const CplxVec& a, const CplxVec& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

CplxVec smooth_state(const PeriodicBox& box) {
  CplxVec v(box.n);
  for (int i = 0; i < box.n; ++i) {
    const double y = 2 * std::numbers::pi * box.x(i) / box.length;
    v[i] = {0.6 + 0.3 * std::cos(y), 0.2 * std::sin(2 * y)};
  }
  return v;
}

TEST(SplitStep, SingleFourierModeIsExact) {
  PeriodicBox box{64, 20.0};
  const int m = 3;
  const double kappa = 2 * std::numbers::pi * m / box.length, omega = 0.4, T = 2.0;
  CplxVec phi(box.n);
  for (int i = 0; i < box.n; ++i) phi[i] = std::polar(1.0, kappa * box.x(i));
  EvolutionOptions o;
  o.dt = 1e-3;
  o.T = T;
  auto r = split_step(phi, RealVec(box.n, 0.0), box, 0.0, omega, o);
  CplxVec exact(box.n);
  for (int i = 0; i < box.n; ++i) exact[i] = phi[i] * std::polar(1.0, (kappa * kappa - omega) * T);
  EXPECT_LE(max_diff(r.final, exact), 1e-10);
  for (auto z : r.final) EXPECT_NEAR(std::abs(z), 1.0, 1e-12);
}

TEST(SplitStep, NonlinearSubstepPreservesModulus) {
  PeriodicBox box{128, 20.0};
  auto phi = smooth_state(box);
  const auto V = sin2_box_potential(box);
  auto before = phi;
  nonlinear_substep(phi, V, 1.0, 0.8, 0.37);
  for (std::size_t i = 0; i < phi.size(); ++i) EXPECT_NEAR(std::abs(phi[i]), std::abs(before[i]), 1e-14);
}

TEST(SplitStep, LinearFlowIsTimeReversible) {
  PeriodicBox box{128, 20.0};
  const auto phi = smooth_state(box);
  const auto V = sin2_box_potential(box);
  EvolutionOptions o;
  o.T = 3.0;
  auto fwd = split_step(phi, V, box, 0.0, 0.5, o);
  o.dt = -o.dt;
  auto back = split_step(fwd.final, V, box, 0.0, 0.5, o);
  EXPECT_LE(max_diff(back.final, phi), 1e-10);
}

TEST(SplitStep, SecondOrderInTime) {
  PeriodicBox box{128, 20.0};
  const auto phi = smooth_state(box);
  const auto V = sin2_box_potential(box);
  auto run = [&](double dt) {
    EvolutionOptions o;
    o.dt = dt;
    o.T = 1.0;
    return split_step(phi, V, box, 1.0, 0.5, o).final;
  };
  const auto a = run(0.02), b = run(0.01), c = run(0.005);
  const double ratio = max_diff(a, b) / max_diff(b, c);
  EXPECT_NEAR(ratio, 4.0, 0.4);
}

TEST(SplitStep, ConservesMassAndSamples) {
  PeriodicBox box{128, 20.0};
  const auto phi = smooth_state(box);
  EvolutionOptions o;
  o.T = 10.0;
  o.sample_stride = 700;
  auto r = split_step(phi, sin2_box_potential(box), box, -1.0, 0.3, o);
  EXPECT_TRUE(r.completed);
  EXPECT_LE(r.mass_drift(), 1e-6);
  EXPECT_DOUBLE_EQ(r.times.back(), 10.0);
  for (std::size_t i = 1; i < r.times.size(); ++i) EXPECT_GT(r.times[i], r.times[i - 1]);
  EXPECT_EQ(r.times.size(), 16u);
}

TEST(SplitStep, GuardsAndValidation) {
  PeriodicBox box{128, 20.0};
  const auto phi = smooth_state(box);
  const auto V = sin2_box_potential(box);
  EvolutionOptions o;
  o.dt = 0.1;
  EXPECT_THROW(split_step(phi, V, box, 1.0, 0.5, o), InvalidArgument);
  o.dt = 0.0;
  EXPECT_THROW(split_step(phi, V, box, 1.0, 0.5, o), InvalidArgument);
  EXPECT_THROW(split_step(CplxVec(5), V, box, 1.0, 0.5), InvalidArgument);
}

TEST(SplitStep, BlowupStopsWithLastValidTime) {
  PeriodicBox box{64, 20.0};
  CplxVec phi(box.n, cplx(1.0, 0.0));
  EvolutionOptions o;
  o.T = 1.0;
  o.sample_stride = 10;
  o.blowup = 0.5;  // any sample after the first counts as overflow
  auto r = split_step(phi, RealVec(box.n, 0.0), box, 1.0, 0.0, o);
  EXPECT_FALSE(r.completed);
  EXPECT_EQ(r.times.size(), 1u);
  EXPECT_EQ(r.last_valid_time, 0.0);
  EXPECT_FALSE(r.failure.empty());
}

TEST(Stability, ZeroStateHasNoShapeError) {
  PeriodicBox box{64, 20.0};
  CplxVec zero(box.n);
  StabilityOptions o;
  o.rel_amp = 0.0;
  o.evolution.T = 5.0;
  auto r = stability_experiment(zero, sin2_box_potential(box), box, 1.0, 0.5, o);
  for (double e : r.run.shape_error) EXPECT_EQ(e, 0.0);
  EXPECT_EQ(r.verdict, StabilityVerdict::no_growth);
}

TEST(Stability, PerturbationIsSeededAndScaled) {
  PeriodicBox box{128, 20.0};
  const auto phi = smooth_state(box);
  auto a = random_perturbation(phi, 0.1, 7), b = random_perturbation(phi, 0.1, 7), c = random_perturbation(phi, 0.1, 8);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  double sup = 0.0, amp = 0.0;
  for (auto z : a) sup = std::max(sup, std::abs(z));
  for (auto z : phi) amp = std::max(amp, std::abs(z));
  EXPECT_NEAR(sup, 0.1 * amp, 1e-14);
}

struct S3Nlb {
  CplxVec phi;
  PeriodicBox box;
  RealVec V;
};

S3Nlb s3_nlb(double omega) {
  const auto pot = PotentialSpec::sin2_1d();
  static const auto setup = periodic_nlb_setup(pot, 128, KPoint({Rational(0)}), 3, 1.0);
  auto nlb = periodic_nlb_at(setup, omega);
  require(nlb.has_value(), "no NLB");
  auto [phi, box] = nlb_on_box(*nlb, native_scaling(pot));
  return {phi, box, sin2_box_potential(box)};
}

TEST(Stability, NlbIsSteadyUnderTheFlow) {
  auto s = s3_nlb(0.8);
  EvolutionOptions o;
  o.T = 5.0;
  auto r = split_step(s.phi, s.V, s.box, 1.0, 0.8, o);
  EXPECT_LE(r.shape_error.back(), 1e-6);
}

TEST(Stability, S3NlbStableNearEdgeUnstableAway) {
  for (auto [omega, expected] : {std::pair{0.76, StabilityVerdict::no_growth}, {0.9, StabilityVerdict::unstable}}) {
    auto s = s3_nlb(omega);
    StabilityOptions o;
    auto r = stability_experiment(s.phi, s.V, s.box, 1.0, omega, o);
    EXPECT_EQ(r.verdict, expected) << omega;
    EXPECT_LE(r.run.mass_drift(), 1e-6);
    EXPECT_EQ(r.run.times.back(), 1000.0);
    if (expected == StabilityVerdict::unstable) {
      ASSERT_TRUE(r.onset_time.has_value());
      EXPECT_LT(*r.onset_time, 1000.0);
    }
  }
}

TEST(Stability, EmbeddedGapSolitonStaysPut) {
  LineGrid g{};
  auto gs = solve_line(sin2_line_potential(g), 0.5, 1.0, sech_guess(0.5, 50.0, g));
  ASSERT_EQ(gs.status, NewtonStatus::converged);
  auto [phi, box] = line_on_box(gs.profile, 4096);
  EvolutionOptions o;
  o.T = 2.0;
  o.sample_stride = 500;
  auto r = split_step(phi, sin2_box_potential(box), box, 1.0, 0.5, o);
  EXPECT_LE(r.shape_error.back(), 1e-3);
}

TEST(Stability, OutputLayout) {
  PeriodicBox box{64, 20.0};
  StabilityOptions o;
  o.evolution.T = 1.0;
  o.seed = 42;
  auto phi = smooth_state(box);
  auto r = stability_experiment(phi, sin2_box_potential(box), box, 1.0, 0.5, o);
  std::ostringstream os;
  write_evolution_csv(os, r.run);
  EXPECT_EQ(os.str().substr(0, 18), "t,mass,shape_error");
  auto j = stability_to_json(r, 0.5, 1.0, 0.1);
  EXPECT_EQ(j["seed"], 42);
  EXPECT_EQ(j["verdict"], to_string(r.verdict));
  EXPECT_DOUBLE_EQ(j["dt"].get<double>(), 1e-3);
}

}  // namespace
}  // namespace blochforge
