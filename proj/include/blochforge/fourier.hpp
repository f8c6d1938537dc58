#pragma once

#include <cmath>
#include <numeric>

#include "blochforge/fft.hpp"

namespace blochforge {

/// <f, g>_{L^2(P)} = int_P f conj(g) dx by the rectangle rule.
inline cplx inner_product(const ComplexField& f, const ComplexField& g) {
  require_same_grid(f.grid, g.grid, "inner_product");
  cplx acc{};
  for (std::size_t i = 0; i < f.size(); ++i) acc += f[i] * std::conj(g[i]);
  return acc * f.grid.weight();
}

inline double l2_norm(const ComplexField& f) {
  double acc = 0.0;
  for (const auto& v : f.values) acc += std::norm(v);
  return std::sqrt(acc * f.grid.weight());
}

/// L^2 norm evaluated from the Fourier coefficients (Parseval).
inline double l2_norm_spectral(const ComplexField& f) {
  auto c = to_coefficients(f.grid, f.values);
  double acc = 0.0;
  for (const auto& v : c) acc += std::norm(v);
  return std::sqrt(acc * f.grid.cell_volume());
}

/// H^s(P) norm (sum_m (1 + |m + k|^2)^s |f_m|^2)^{1/2}, where f_m are the
/// L^2-normalized Fourier coefficients and k the field's quasimomentum tag.
inline double sobolev_norm(const ComplexField& f, double s) {
  require(s >= 0.0, "sobolev_norm: s must be non-negative");
  auto c = to_coefficients(f.grid, f.values);
  std::vector<double> zero(f.grid.dim, 0.0);
  auto sym = shifted_laplacian_symbol(f.grid, f.k ? std::span<const double>(*f.k)
                                                  : std::span<const double>(zero));
  double acc = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) acc += std::pow(1.0 + sym[i], s) * std::norm(c[i]);
  return std::sqrt(acc * f.grid.cell_volume());
}

/// Spectral partial derivative d/dx_axis of (the periodic part of) f.
inline ComplexField spectral_derivative(const ComplexField& f, int axis) {
  require(axis >= 0 && axis < f.grid.dim, "spectral_derivative: bad axis");
  ComplexField out = f;
  const int n = f.grid.n;
  apply_symbol(f.grid, std::span<cplx>(out.values), [&](std::span<const int> m) {
    // The Nyquist mode of an even grid has no odd-derivative partner.
    if (m[axis] == -n / 2) return cplx{};
    return cplx{0.0, static_cast<double>(m[axis])};
  });
  return out;
}

}  // namespace blochforge
