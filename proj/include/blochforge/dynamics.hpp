#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>

#include "blochforge/line1d.hpp"

namespace blochforge {

/// Periodic 1D box [-length/2, length/2) with n equispaced points.
struct PeriodicBox {
  int n = 128;
  double length = 20.0;

  [[nodiscard]] double h() const { return length / n; }
  [[nodiscard]] double x(int i) const { return -0.5 * length + i * h(); }
  [[nodiscard]] TorusGrid grid() const { return TorusGrid(1, n); }
  /// kappa^2 in FFT order.
  [[nodiscard]] RealVec laplacian_symbol() const {
    RealVec s(n);
    const double unit = 2.0 * std::numbers::pi / length;
    for (int j = 0; j < n; ++j) {
      const double k = unit * shifted_wavenumber(j, 0.0, n);
      s[j] = k * k;
    }
    return s;
  }
};

inline RealVec sin2_box_potential(const PeriodicBox& b, double period = 10.0) {
  RealVec v(b.n);
  for (int i = 0; i < b.n; ++i) v[i] = std::pow(std::sin(std::numbers::pi * b.x(i) / period), 2);
  return v;
}

inline double box_mass(const PeriodicBox& b, std::span<const cplx> phi) {
  double s = 0.0;
  for (auto z : phi) s += std::norm(z);
  return std::sqrt(s * b.h());
}

inline double shape_error(std::span<const cplx> phi, std::span<const cplx> reference) {
  double e = 0.0;
  for (std::size_t i = 0; i < phi.size(); ++i) e = std::max(e, std::abs(std::abs(phi[i]) - std::abs(reference[i])));
  return e;
}

/// phi <- exp(i (V - omega + sigma |phi|^2) dt) phi, the exact flow of the
/// pointwise part.
inline void nonlinear_substep(std::span<cplx> phi, std::span<const double> V, double sigma, double omega, double dt) {
  for (std::size_t i = 0; i < phi.size(); ++i) phi[i] *= std::polar(1.0, (V[i] - omega + sigma * std::norm(phi[i])) * dt);
}

struct EvolutionOptions {
  double dt = 1e-3;  // negative integrates backward in time
  double T = 1000.0;
  int sample_stride = 1000;  // steps between recorded samples
  double max_phase = 10.0;   // guard on |dt| max kappa^2
  double blowup = 1e6;       // mass growth factor treated as overflow
};

struct EvolutionRun {
  CplxVec initial, final;
  double dt = 0.0, T = 0.0;
  int sample_stride = 0;
  std::vector<double> times, mass, shape_error;
  bool completed = true;
  double last_valid_time = 0.0;
  std::string failure;

  [[nodiscard]] double mass_drift() const {
    double d = 0.0;
    for (double m : mass) d = std::max(d, std::abs(m - mass.front()));
    return mass.front() > 0.0 ? d / mass.front() : d;
  }
};

/// Strang splitting for i phi_t = phi_xx - (V - omega) phi - sigma |phi|^2 phi
/// on a periodic box: half linear step, full pointwise step, half linear
/// step. Shape errors are measured against `reference` (the initial state
/// when absent).
inline EvolutionRun split_step(std::span<const cplx> initial, std::span<const double> V, const PeriodicBox& box,
                               double sigma, double omega, const EvolutionOptions& opt = {},
                               std::optional<std::span<const cplx>> reference = std::nullopt) {
  require(static_cast<int>(initial.size()) == box.n && static_cast<int>(V.size()) == box.n,
          "split_step: state and potential must match the box");
  require(opt.dt != 0.0 && std::isfinite(opt.dt), "split_step: dt must be nonzero");
  require(opt.T >= 0.0, "split_step: T must be nonnegative");
  require(opt.sample_stride >= 1, "split_step: sample_stride must be positive");
  const auto kappa2 = box.laplacian_symbol();
  const double kmax = *std::max_element(kappa2.begin(), kappa2.end());
  require(std::abs(opt.dt) * kmax <= opt.max_phase,
          "split_step: |dt| max kappa^2 = " + std::to_string(std::abs(opt.dt) * kmax) + " exceeds the stability guard");
  if (reference) require(static_cast<int>(reference->size()) == box.n, "split_step: reference size mismatch");

  const TorusGrid g = box.grid();
  const double dt = opt.dt;
  const long steps = std::lround(opt.T / std::abs(dt));
  const double scale = 1.0 / box.n;
  CplxVec half(box.n), full(box.n);
  for (int j = 0; j < box.n; ++j) {
    half[j] = std::polar(scale, kappa2[j] * dt / 2);
    full[j] = std::polar(scale, kappa2[j] * dt);
  }
  CplxVec phi(initial.begin(), initial.end()), hat(box.n);
  const CplxVec ref = reference ? CplxVec(reference->begin(), reference->end()) : phi;
  auto linear = [&](const CplxVec& mult) {
    dft(g, phi, hat, FFTW_FORWARD);
    for (int j = 0; j < box.n; ++j) hat[j] *= mult[j];
    dft(g, hat, phi, FFTW_BACKWARD);
  };

  EvolutionRun run;
  run.initial = phi;
  run.dt = dt;
  run.T = opt.T;
  run.sample_stride = opt.sample_stride;
  auto record = [&](double t) {
    const double m = box_mass(box, phi);
    if (!std::isfinite(m) || (!run.mass.empty() && m > opt.blowup * std::max(run.mass.front(), 1e-300))) {
      run.completed = false;
      run.failure = "non-finite or overflowing state at t = " + std::to_string(t);
      return false;
    }
    run.times.push_back(t);
    run.mass.push_back(m);
    run.shape_error.push_back(shape_error(phi, ref));
    run.last_valid_time = t;
    return true;
  };
  record(0.0);
  if (steps > 0) linear(half);
  for (long s = 1; s <= steps; ++s) {
    nonlinear_substep(phi, V, sigma, omega, dt);
    if (s % opt.sample_stride == 0 || s == steps) {
      linear(half);
      if (!record(static_cast<double>(s) * std::abs(dt))) break;
      if (s < steps) linear(half);
    } else {
      linear(full);
    }
  }
  run.final = phi;
  return run;
}

enum class StabilityVerdict { no_growth, unstable };

inline std::string to_string(StabilityVerdict v) {
  return v == StabilityVerdict::no_growth ? "no growth observed up to T" : "instability onset";
}

struct StabilityOptions {
  double rel_amp = 0.1;
  std::uint64_t seed = 1;
  double growth_factor = 3.0;
  EvolutionOptions evolution{};
};

struct StabilityResult {
  EvolutionRun run;
  StabilityVerdict verdict = StabilityVerdict::no_growth;
  double initial_shape_error = 0.0;
  double max_shape_error = 0.0;
  std::optional<double> onset_time;
  std::uint64_t seed = 0;
};

/// Uniform complex noise in the unit square, scaled to sup modulus
/// rel_amp * max |steady|.
inline CplxVec random_perturbation(std::span<const cplx> steady, double rel_amp, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  CplxVec r(steady.size());
  double sup = 0.0, amp = 0.0;
  for (auto& z : r) {
    const double a = u(rng), b = u(rng);
    z = {a, b};
    sup = std::max(sup, std::abs(z));
  }
  for (auto z : steady) amp = std::max(amp, std::abs(z));
  const double s = sup > 0.0 ? rel_amp * amp / sup : 0.0;
  for (auto& z : r) z *= s;
  return r;
}

inline StabilityResult stability_experiment(std::span<const cplx> steady, std::span<const double> V,
                                            const PeriodicBox& box, double sigma, double omega,
                                            const StabilityOptions& opt = {}) {
  require(opt.rel_amp >= 0.0, "stability_experiment: rel_amp must be nonnegative");
  require(opt.growth_factor > 1.0, "stability_experiment: growth_factor must exceed 1");
  auto init = random_perturbation(steady, opt.rel_amp, opt.seed);
  for (std::size_t i = 0; i < init.size(); ++i) init[i] += steady[i];
  StabilityResult r;
  r.seed = opt.seed;
  r.run = split_step(init, V, box, sigma, omega, opt.evolution, steady);
  r.initial_shape_error = r.run.shape_error.front();
  for (std::size_t i = 0; i < r.run.times.size(); ++i) {
    r.max_shape_error = std::max(r.max_shape_error, r.run.shape_error[i]);
    if (!r.onset_time && r.run.shape_error[i] > opt.growth_factor * r.initial_shape_error)
      r.onset_time = r.run.times[i];
  }
  if (r.onset_time || !r.run.completed) r.verdict = StabilityVerdict::unstable;
  return r;
}

/// Native samples of a 1D one-component NLB on its periodic box.
inline std::pair<CplxVec, PeriodicBox> nlb_on_box(const NlbState& s, const NativeScaling& scaling) {
  require(s.problem->grid().dim == 1 && s.components() == 1, "nlb_on_box: need a 1D one-component NLB");
  const auto e = s.eta(0);
  const auto& k = s.problem->kpoints()[0];
  require(k == KPoint({Rational(0)}), "nlb_on_box: NLB must be periodic on its cell (k = 0)");
  PeriodicBox box{s.problem->grid().n, 2.0 * std::numbers::pi * scaling.length};
  CplxVec v(e.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = e[i] / scaling.length;
  return {v, box};
}

/// Linear interpolation of a Neumann-grid profile onto the periodic box of
/// width 2L with n points.
inline std::pair<CplxVec, PeriodicBox> line_on_box(const LineProfile& p, int n) {
  PeriodicBox box{n, 2.0 * p.grid.L};
  CplxVec v(n);
  const double h = p.grid.h();
  for (int i = 0; i < n; ++i) {
    const double t = (box.x(i) + p.grid.L) / h;
    const int j = std::min(static_cast<int>(t), p.grid.n - 2);
    const double f = t - j;
    v[i] = (1 - f) * p.values[j] + f * p.values[j + 1];
  }
  return {v, box};
}

inline void write_evolution_csv(std::ostream& os, const EvolutionRun& r) {
  os << "t,mass,shape_error\n";
  os.precision(12);
  for (std::size_t i = 0; i < r.times.size(); ++i) os << r.times[i] << ',' << r.mass[i] << ',' << r.shape_error[i] << '\n';
}

inline nlohmann::json stability_to_json(const StabilityResult& r, double omega, double sigma, double rel_amp) {
  nlohmann::json j;
  j["seed"] = r.seed;
  j["dt"] = r.run.dt;
  j["T"] = r.run.T;
  j["omega"] = omega;
  j["sigma"] = sigma;
  j["rel_amp"] = rel_amp;
  j["verdict"] = to_string(r.verdict);
  j["onset_time"] = r.onset_time ? nlohmann::json(*r.onset_time) : nlohmann::json(nullptr);
  j["initial_shape_error"] = r.initial_shape_error;
  j["max_shape_error"] = r.max_shape_error;
  j["mass_drift"] = r.run.mass_drift();
  j["completed"] = r.run.completed;
  j["last_valid_time"] = r.run.last_valid_time;
  if (!r.run.failure.empty()) j["failure"] = r.run.failure;
  return j;
}

}  // namespace blochforge
