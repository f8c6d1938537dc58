#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include "blochforge/error.hpp"

namespace blochforge {

using cplx = std::complex<double>;
using RealVec = std::vector<double>;
using CplxVec = std::vector<cplx>;

/// Uniform grid on the periodicity cell (-pi, pi]^dim with n points per
/// direction. Points are x_i = -pi + i h, h = 2 pi / n, stored row-major
/// (the last coordinate varies fastest).
struct TorusGrid {
  int dim = 1;
  int n = 64;

  TorusGrid() = default;
  TorusGrid(int dim_, int n_) : dim(dim_), n(n_) {
    require(dim >= 1 && dim <= 3, "TorusGrid: dim must be 1, 2 or 3");
    require(n >= 2 && (n & (n - 1)) == 0, "TorusGrid: n must be a power of two");
  }

  [[nodiscard]] std::size_t size() const {
    std::size_t s = 1;
    for (int d = 0; d < dim; ++d) s *= static_cast<std::size_t>(n);
    return s;
  }
  [[nodiscard]] double spacing() const { return 2.0 * std::numbers::pi / n; }
  [[nodiscard]] double cell_volume() const { return std::pow(2.0 * std::numbers::pi, dim); }
  [[nodiscard]] double weight() const { return std::pow(spacing(), dim); }

  [[nodiscard]] double coordinate(int i) const { return -std::numbers::pi + i * spacing(); }

  /// Multi-index of the flat point index `idx`.
  [[nodiscard]] std::vector<int> unflatten(std::size_t idx) const {
    std::vector<int> out(dim);
    for (int d = dim - 1; d >= 0; --d) {
      out[d] = static_cast<int>(idx % n);
      idx /= n;
    }
    return out;
  }

  /// Position of the flat point index `idx` in the cell.
  [[nodiscard]] std::vector<double> point(std::size_t idx) const {
    auto mi = unflatten(idx);
    std::vector<double> x(dim);
    for (int d = 0; d < dim; ++d) x[d] = coordinate(mi[d]);
    return x;
  }

  /// Signed Fourier mode number of FFT index j.
  [[nodiscard]] int mode(int j) const { return j < n / 2 ? j : j - n; }

  /// Signed Fourier mode vector of the flat spectral index `idx`.
  [[nodiscard]] std::vector<int> mode_vector(std::size_t idx) const {
    auto mi = unflatten(idx);
    for (auto& v : mi) v = mode(v);
    return mi;
  }

  /// Flat index of the point x = 0.
  [[nodiscard]] std::size_t origin_index() const {
    std::size_t idx = 0;
    for (int d = 0; d < dim; ++d) idx = idx * n + static_cast<std::size_t>(n / 2);
    return idx;
  }

  friend bool operator==(const TorusGrid&, const TorusGrid&) = default;
};

/// Complex samples on a TorusGrid. When `k` is set the field is the periodic
/// factor p of the quasi-periodic function p(x) e^{i k.x}.
struct ComplexField {
  TorusGrid grid;
  CplxVec values;
  std::optional<std::vector<double>> k;

  ComplexField() = default;
  explicit ComplexField(TorusGrid g) : grid(g), values(g.size(), cplx{}) {}
  ComplexField(TorusGrid g, CplxVec v, std::optional<std::vector<double>> k_ = std::nullopt)
      : grid(g), values(std::move(v)), k(std::move(k_)) {
    require(values.size() == grid.size(), "ComplexField: value array does not match grid");
    if (k) require(static_cast<int>(k->size()) == grid.dim, "ComplexField: k has wrong dimension");
  }

  [[nodiscard]] std::size_t size() const { return values.size(); }
  cplx& operator[](std::size_t i) { return values[i]; }
  const cplx& operator[](std::size_t i) const { return values[i]; }
};

inline void require_same_grid(const TorusGrid& a, const TorusGrid& b, const char* where) {
  if (!(a == b)) throw InvalidArgument(std::string(where) + ": grid mismatch");
}

}  // namespace blochforge
