#pragma once

#include <fftw3.h>

#include <algorithm>
#include <map>
#include <mutex>
#include <span>
#include <tuple>

#include "blochforge/grid.hpp"

namespace blochforge {

namespace detail {

// FFTW planning is not thread-safe; execution with the new-array interface
// is. Plans are built once per (dim, n, sign) and shared.
inline fftw_plan cached_plan(int dim, int n, int sign) {
  static std::mutex mutex;
  static std::map<std::tuple<int, int, int>, fftw_plan> plans;
  std::lock_guard lock(mutex);
  auto key = std::make_tuple(dim, n, sign);
  if (auto it = plans.find(key); it != plans.end()) return it->second;
  std::size_t total = 1;
  for (int d = 0; d < dim; ++d) total *= static_cast<std::size_t>(n);
  auto* in = fftw_alloc_complex(total);
  auto* out = fftw_alloc_complex(total);
  std::vector<int> dims(dim, n);
  fftw_plan plan =
      fftw_plan_dft(dim, dims.data(), in, out, sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
  fftw_free(in);
  fftw_free(out);
  plans.emplace(key, plan);
  return plan;
}

inline int parity_sign(const TorusGrid& g, std::size_t idx) {
  int s = 0;
  for (int d = 0; d < g.dim; ++d) {
    s += static_cast<int>(idx % g.n);
    idx /= g.n;
  }
  return (s & 1) ? -1 : 1;
}

}  // namespace detail

/// Unnormalized DFT, out_j = sum_i in_i exp(sign * 2 pi i ij / n).
inline void dft(const TorusGrid& g, std::span<const cplx> in, std::span<cplx> out, int sign) {
  require(in.size() == g.size() && out.size() == g.size(), "dft: size mismatch");
  require(in.data() != out.data(), "dft: in-place transforms are not supported");
  fftw_plan plan = detail::cached_plan(g.dim, g.n, sign);
  // fftw_execute_dft takes a non-const input pointer but does not modify it
  // for out-of-place plans.
  fftw_execute_dft(plan, reinterpret_cast<fftw_complex*>(const_cast<cplx*>(in.data())),
                   reinterpret_cast<fftw_complex*>(out.data()));
}

/// Fourier coefficients c_m of f(x) = sum_m c_m e^{i m.x}, in FFT index order.
inline CplxVec to_coefficients(const TorusGrid& g, std::span<const cplx> values) {
  CplxVec out(g.size());
  dft(g, values, out, FFTW_FORWARD);
  const double scale = 1.0 / static_cast<double>(g.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= scale * detail::parity_sign(g, i);
  return out;
}

/// Grid samples of sum_m c_m e^{i m.x}.
inline CplxVec from_coefficients(const TorusGrid& g, std::span<const cplx> coeffs) {
  CplxVec tmp(coeffs.begin(), coeffs.end());
  for (std::size_t i = 0; i < tmp.size(); ++i) tmp[i] *= detail::parity_sign(g, i);
  CplxVec out(g.size());
  dft(g, tmp, out, FFTW_BACKWARD);
  return out;
}

/// Multiplies the Fourier coefficients of `values` by symbol(m) in place,
/// where m is the signed mode vector.
template <class Symbol>
void apply_symbol(const TorusGrid& g, std::span<cplx> values, Symbol&& symbol) {
  CplxVec hat(g.size());
  dft(g, values, hat, FFTW_FORWARD);
  const double scale = 1.0 / static_cast<double>(g.size());
  std::vector<int> m(g.dim);
  for (std::size_t idx = 0; idx < hat.size(); ++idx) {
    std::size_t r = idx;
    for (int d = g.dim - 1; d >= 0; --d) {
      m[d] = g.mode(static_cast<int>(r % g.n));
      r /= g.n;
    }
    hat[idx] *= scale * symbol(std::span<const int>(m));
  }
  dft(g, hat, values, FFTW_BACKWARD);
}

/// Wavenumber m + k of FFT index j, folded by multiples of n into
/// (-n/2, n/2]. The folded set is symmetric under k -> -k and, for
/// k in {0, 1/2}, under the realness pairing m -> -m - 2k, so the discrete
/// Bloch operators inherit both conjugation symmetries exactly.
inline double shifted_wavenumber(int j, double k, int n) {
  double q = j + k;
  while (q > 0.5 * n) q -= n;
  while (q <= -0.5 * n) q += n;
  return q;
}

/// Folded wavevector components for the flat spectral index `idx`.
inline void shifted_wavevector(const TorusGrid& g, std::size_t idx, std::span<const double> k,
                               std::span<double> q) {
  for (int d = g.dim - 1; d >= 0; --d) {
    q[d] = shifted_wavenumber(static_cast<int>(idx % g.n), k.empty() ? 0.0 : k[d], g.n);
    idx /= g.n;
  }
}

/// |m + k|^2 for every spectral index, FFT order, with folded wavenumbers.
inline RealVec shifted_laplacian_symbol(const TorusGrid& g, std::span<const double> k) {
  RealVec out(g.size());
  std::vector<double> q(g.dim);
  for (std::size_t idx = 0; idx < out.size(); ++idx) {
    shifted_wavevector(g, idx, k, q);
    double s = 0.0;
    for (double c : q) s += c * c;
    out[idx] = s;
  }
  return out;
}

/// Applies a precomputed diagonal spectral multiplier (FFT order) in place.
/// Works on raw DFT ordering, so no parity correction is needed.
inline void apply_diagonal(const TorusGrid& g, std::span<cplx> values, std::span<const double> diag,
                           CplxVec& scratch) {
  scratch.resize(g.size());
  dft(g, values, scratch, FFTW_FORWARD);
  const double scale = 1.0 / static_cast<double>(g.size());
  for (std::size_t i = 0; i < scratch.size(); ++i) scratch[i] *= diag[i] * scale;
  dft(g, scratch, values, FFTW_BACKWARD);
}

}  // namespace blochforge
