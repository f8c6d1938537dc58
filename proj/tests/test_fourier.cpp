#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "blochforge/fourier.hpp"
#include "blochforge/potential.hpp"

namespace blochforge {
namespace {

constexpr double kPi = std::numbers::pi;

ComplexField exp_mode(const TorusGrid& g, int m) {
  ComplexField f(g);
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = std::polar(1.0, m * g.point(i)[0]);
  return f;
}

// Random trigonometric polynomial with modes |m_d| <= cutoff.
ComplexField band_limited(const TorusGrid& g, int cutoff, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<std::pair<std::vector<int>, cplx>> terms;
  std::vector<int> m(g.dim, -cutoff);
  while (true) {
    terms.emplace_back(m, cplx{normal(rng), normal(rng)} / (1.0 + std::abs(m[0]) + (g.dim > 1 ? std::abs(m[1]) : 0)));
    int d = g.dim - 1;
    while (d >= 0 && ++m[d] > cutoff) m[d--] = -cutoff;
    if (d < 0) break;
  }
  ComplexField f(g);
  for (std::size_t i = 0; i < f.size(); ++i) {
    auto x = g.point(i);
    for (const auto& [mm, c] : terms) {
      double ph = 0.0;
      for (int d = 0; d < g.dim; ++d) ph += mm[d] * x[d];
      f[i] += c * std::polar(1.0, ph);
    }
  }
  return f;
}

TEST(TorusGrid, PointsCoverCellOnce) {
  TorusGrid g(2, 16);
  EXPECT_EQ(g.size(), 256u);
  EXPECT_DOUBLE_EQ(g.coordinate(0), -kPi);
  EXPECT_NEAR(g.coordinate(15) + g.spacing(), kPi, 1e-14);
  EXPECT_EQ(g.point(g.origin_index())[0], 0.0);
  EXPECT_EQ(g.point(g.origin_index())[1], 0.0);
  EXPECT_THROW(TorusGrid(1, 12), InvalidArgument);
}

TEST(Fft, RoundTripIsIdentity) {
  for (int dim : {1, 2}) {
    TorusGrid g(dim, dim == 1 ? 128 : 32);
    std::mt19937 rng(7);
    std::normal_distribution<double> normal;
    CplxVec v(g.size());
    for (auto& z : v) z = {normal(rng), normal(rng)};
    auto back = from_coefficients(g, to_coefficients(g, v));
    double err = 0, ref = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      err += std::norm(back[i] - v[i]);
      ref += std::norm(v[i]);
    }
    EXPECT_LE(std::sqrt(err / ref), 1e-12);
  }
}

TEST(Fft, CoefficientsOfSingleMode) {
  TorusGrid g(1, 32);
  auto c = to_coefficients(g, exp_mode(g, -3).values);
  for (int j = 0; j < 32; ++j) EXPECT_NEAR(std::abs(c[j]), g.mode(j) == -3 ? 1.0 : 0.0, 1e-13);
}

TEST(InnerProduct, NormalizedConstantHasUnitNorm) {
  for (int dim : {1, 2}) {
    TorusGrid g(dim, 16);
    ComplexField f(g);
    for (auto& z : f.values) z = 1.0 / std::pow(2 * kPi, dim / 2.0);
    EXPECT_NEAR(std::abs(inner_product(f, f) - 1.0), 0.0, 1e-13);
  }
}

TEST(InnerProduct, DistinctFourierModesAreOrthogonal) {
  TorusGrid g(1, 64);
  EXPECT_LE(std::abs(inner_product(exp_mode(g, 1), exp_mode(g, 2))), 1e-12);
}

TEST(InnerProduct, MatchesDirectSumAndIsConjugateSymmetric) {
  TorusGrid g(2, 16);
  auto f = band_limited(g, 3, 1), h = band_limited(g, 3, 2);
  cplx direct{};
  const double w = std::pow(2 * kPi / 16, 2);
  for (std::size_t i = 0; i < f.size(); ++i) direct += f[i] * std::conj(h[i]) * w;
  EXPECT_LE(std::abs(inner_product(f, h) - direct), 1e-12 * std::abs(direct));
  EXPECT_LE(std::abs(inner_product(f, h) - std::conj(inner_product(h, f))), 1e-12);
  EXPECT_THROW(inner_product(f, ComplexField(TorusGrid(2, 8))), InvalidArgument);
}

TEST(InnerProduct, GridDoublingChangesSmoothProductsNegligibly) {
  auto smooth = [](const TorusGrid& g) {
    ComplexField f(g);
    for (std::size_t i = 0; i < f.size(); ++i) {
      auto x = g.point(i);
      f[i] = std::exp(std::cos(x[0]) + cplx{0, 1} * std::sin(x[1]));
    }
    return f;
  };
  TorusGrid g1(2, 32), g2(2, 64);
  auto a = inner_product(smooth(g1), smooth(g1));
  auto b = inner_product(smooth(g2), smooth(g2));
  EXPECT_LE(std::abs(a - b), 1e-10);
}

TEST(SobolevNorm, ConstantAndSingleMode) {
  TorusGrid g(2, 16);
  ComplexField c(g);
  for (auto& z : c.values) z = {0.3, -0.4};
  for (double s : {0.0, 1.0, 2.5}) EXPECT_NEAR(sobolev_norm(c, s), 0.5 * 2 * kPi, 1e-12);

  TorusGrid g1(1, 64);
  for (int m : {1, 4, -7})
    EXPECT_NEAR(sobolev_norm(exp_mode(g1, m), 1.0), std::sqrt(2 * kPi * (1.0 + m * m)), 1e-11);
  EXPECT_THROW(sobolev_norm(c, -1.0), InvalidArgument);
}

TEST(SobolevNorm, QuasimomentumTagShiftsWeights) {
  TorusGrid g(1, 32);
  auto f = exp_mode(g, 2);
  f.k = std::vector<double>{0.5};
  EXPECT_NEAR(sobolev_norm(f, 1.0), std::sqrt(2 * kPi * (1.0 + 2.5 * 2.5)), 1e-12);
}

TEST(SobolevNorm, H1MatchesDerivativeOracle) {
  TorusGrid g(2, 32);
  auto f = band_limited(g, 5, 11);
  // ||f||_{H^1}^2 = ||f||^2 + ||d1 f||^2 + ||d2 f||^2
  const double l2 = l2_norm(f), d1 = l2_norm(spectral_derivative(f, 0)), d2 = l2_norm(spectral_derivative(f, 1));
  const double oracle = std::sqrt(l2 * l2 + d1 * d1 + d2 * d2);
  EXPECT_NEAR(sobolev_norm(f, 1.0), oracle, 1e-10 * oracle);
}

TEST(Parseval, PhysicalAndSpectralNormsAgree) {
  for (int dim : {1, 2}) {
    TorusGrid g(dim, 32);
    auto f = band_limited(g, 6, 3 + dim);
    EXPECT_NEAR(l2_norm(f), l2_norm_spectral(f), 1e-12 * l2_norm(f));
    EXPECT_NEAR(sobolev_norm(f, 0.0), l2_norm(f), 1e-12 * l2_norm(f));
  }
}

TEST(Potential, ZeroIsZero) {
  TorusGrid g(2, 16);
  for (double v : sample_potential(PotentialSpec::zero(2), g)) EXPECT_EQ(v, 0.0);
}

TEST(Potential, SmoothedSquareMatchesPointwiseFormula) {
  TorusGrid g(2, 64);
  auto v = sample_potential(PotentialSpec::smoothed_square_2d(), g);
  auto W = [](double s) {
    return 0.5 * (std::tanh(7 * (s + 3 * kPi / 5)) + std::tanh(7 * (3 * kPi / 5 - s)));
  };
  double lo = 1e9, hi = -1e9;
  for (std::size_t i = 0; i < v.size(); ++i) {
    auto x = g.point(i);
    EXPECT_NEAR(v[i], 1.0 + 4.35 * W(x[0]) * W(x[1]), 1e-14);
    lo = std::min(lo, v[i]);
    hi = std::max(hi, v[i]);
  }
  EXPECT_NEAR(lo, 1.0, 1e-3);
  EXPECT_NEAR(hi, 5.35, 1e-3);
  // Periodic across the cell boundary.
  auto spec = PotentialSpec::smoothed_square_2d();
  for (double y : {-2.0, 0.3, 1.7}) {
    std::vector<double> a{-kPi, y}, b{kPi, y};
    EXPECT_NEAR(evaluate_potential(spec, a), evaluate_potential(spec, b), 1e-10);
  }
}

TEST(Potential, Sin2HasNativeMeanOneHalf) {
  TorusGrid g(1, 256);
  auto spec = PotentialSpec::sin2_1d();
  auto v = sample_potential(spec, g);
  const auto scaling = native_scaling(spec);
  double mean = 0;
  for (double x : v) mean += x;
  mean /= v.size();
  EXPECT_NEAR(mean / (scaling.length * scaling.length), 0.5, 1e-13);
}

TEST(Potential, FourierTableAndDimensionMismatch) {
  TorusGrid g(1, 32);
  PotentialSpec table{FourierTablePotential{1, {{{1}, {0.5, 0}}, {{-1}, {0.5, 0}}}}};
  auto v = sample_potential(table, g);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(v[i], std::cos(g.point(i)[0]), 1e-13);
  EXPECT_THROW(sample_potential(PotentialSpec::smoothed_square_2d(), g), InvalidArgument);
}

}  // namespace
}  // namespace blochforge
