#pragma once

#include <cmath>
#include <map>
#include <numbers>
#include <string>
#include <variant>
#include <vector>

#include "blochforge/fft.hpp"

namespace blochforge {

/// A named potential family on the canonical 2 pi cell.
///
/// `sin2_1d` is sin^2(pi x / 10) on the native line. Its cell of width 20 is
/// mapped onto (-pi, pi] by x = (10 / pi) y, which turns the operator into
/// (pi/10)^2 [ -d^2/dy^2 + (10/pi)^2 sin^2(y) ]. The sampled potential is
/// therefore (10/pi)^2 sin^2(y), and native frequencies are recovered with
/// `NativeScaling`.
struct NamedPotential {
  std::string family;  // zero | cosine | sin2_1d | smoothed_square_2d
  std::map<std::string, double> params;
  int dim = 1;
};

/// Real potential given by Fourier coefficients on integer modes.
struct FourierTablePotential {
  int dim = 1;
  std::vector<std::pair<std::vector<int>, cplx>> terms;  // (mode, coefficient)
};

struct PotentialSpec {
  std::variant<NamedPotential, FourierTablePotential> variant;

  [[nodiscard]] int dim() const {
    return std::visit([](const auto& v) { return v.dim; }, variant);
  }
  [[nodiscard]] std::string name() const {
    if (auto* p = std::get_if<NamedPotential>(&variant)) return p->family;
    return "fourier_table";
  }

  static PotentialSpec zero(int dim) { return {NamedPotential{"zero", {}, dim}}; }
  /// amplitude * sum_d cos(x_d)
  static PotentialSpec cosine(int dim, double amplitude) {
    return {NamedPotential{"cosine", {{"amplitude", amplitude}}, dim}};
  }
  static PotentialSpec sin2_1d() { return {NamedPotential{"sin2_1d", {}, 1}}; }
  /// 1 + height W(x1) W(x2), W a smoothed indicator of |s| < 3 pi / 5.
  static PotentialSpec smoothed_square_2d(double height = 4.35, double steepness = 7.0,
                                          double half_width = 3.0 * std::numbers::pi / 5.0) {
    return {NamedPotential{"smoothed_square_2d",
                           {{"height", height}, {"steepness", steepness}, {"half_width", half_width}},
                           2}};
  }
};

/// Conversion between the canonical cell and the native coordinates of a
/// potential. Identity for everything but `sin2_1d`.
struct NativeScaling {
  double length = 1.0;  // x_native = length * y

  [[nodiscard]] double omega_to_native(double w) const { return w / (length * length); }
  [[nodiscard]] double omega_from_native(double w) const { return w * length * length; }
  [[nodiscard]] double amplitude_to_native(double a) const { return a / length; }
  [[nodiscard]] double amplitude_from_native(double a) const { return a * length; }
};

inline NativeScaling native_scaling(const PotentialSpec& spec) {
  if (auto* p = std::get_if<NamedPotential>(&spec.variant); p && p->family == "sin2_1d")
    return {10.0 / std::numbers::pi};
  return {};
}

namespace detail {

inline double param(const NamedPotential& p, const std::string& key, double fallback) {
  auto it = p.params.find(key);
  return it == p.params.end() ? fallback : it->second;
}

inline double smoothed_step(double s, double steepness, double half_width) {
  return 0.5 * (std::tanh(steepness * (s + half_width)) + std::tanh(steepness * (half_width - s)));
}

inline double named_value(const NamedPotential& p, std::span<const double> x) {
  if (p.family == "zero") return 0.0;
  if (p.family == "cosine") {
    double s = 0.0;
    for (double xi : x) s += std::cos(xi);
    return param(p, "amplitude", 1.0) * s;
  }
  if (p.family == "sin2_1d") {
    const double scale = 10.0 / std::numbers::pi;
    const double s = std::sin(x[0]);
    return scale * scale * s * s;
  }
  if (p.family == "smoothed_square_2d") {
    const double a = param(p, "steepness", 7.0);
    const double w = param(p, "half_width", 3.0 * std::numbers::pi / 5.0);
    return 1.0 + param(p, "height", 4.35) * smoothed_step(x[0], a, w) * smoothed_step(x[1], a, w);
  }
  throw InvalidArgument("unknown potential family '" + p.family + "'");
}

}  // namespace detail

/// Potential values at the grid points.
inline RealVec sample_potential(const PotentialSpec& spec, const TorusGrid& grid) {
  require(spec.dim() == grid.dim, "sample_potential: potential dimension " +
                                      std::to_string(spec.dim()) + " does not match grid dimension " +
                                      std::to_string(grid.dim));
  RealVec out(grid.size());
  if (auto* named = std::get_if<NamedPotential>(&spec.variant)) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = detail::named_value(*named, grid.point(i));
    return out;
  }
  const auto& table = std::get<FourierTablePotential>(spec.variant);
  CplxVec coeffs(grid.size(), cplx{});
  for (const auto& [m, c] : table.terms) {
    require(static_cast<int>(m.size()) == grid.dim, "sample_potential: mode has wrong dimension");
    std::size_t idx = 0;
    for (int d = 0; d < grid.dim; ++d) {
      require(std::abs(m[d]) < grid.n / 2, "sample_potential: Fourier mode beyond grid cutoff");
      idx = idx * grid.n + static_cast<std::size_t>((m[d] % grid.n + grid.n) % grid.n);
    }
    coeffs[idx] += c;
  }
  auto vals = from_coefficients(grid, coeffs);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = vals[i].real();
  return out;
}

/// Pointwise evaluation at an arbitrary position (named families only);
/// used to check periodicity across the cell boundary.
inline double evaluate_potential(const PotentialSpec& spec, std::span<const double> x) {
  auto* named = std::get_if<NamedPotential>(&spec.variant);
  require(named != nullptr, "evaluate_potential: only named families support pointwise evaluation");
  return detail::named_value(*named, x);
}

}  // namespace blochforge
