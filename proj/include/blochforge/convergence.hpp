#pragma once

#include <cmath>
#include <limits>
#include <mutex>
#include <ostream>
#include <thread>

#include "blochforge/nlb.hpp"

namespace blochforge {

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;  // log(C) in error = C eps^slope
  double residual = 0.0;   // root-mean-square misfit in log coordinates
};

/// Least-squares line through (log eps, log error).
inline RateFit fit_rate(const std::vector<double>& eps, const std::vector<double>& errors) {
  require(eps.size() == errors.size(), "fit_rate: size mismatch");
  require(eps.size() >= 2, "fit_rate: need at least two points");
  const auto n = static_cast<Eigen::Index>(eps.size());
  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    require(eps[i] > 0.0 && errors[i] > 0.0, "fit_rate: inputs must be positive");
    X(i, 0) = std::log(eps[i]);
    X(i, 1) = 1.0;
    y(i) = std::log(errors[i]);
  }
  Eigen::Vector2d c = X.colPivHouseholderQr().solve(y);
  RateFit f{c(0), c(1), std::sqrt((X * c - y).squaredNorm() / static_cast<double>(n))};
  return f;
}

inline double default_sobolev_index(int dim) { return dim == 1 ? 1.0 : 2.0; }

struct SweepOptions {
  double s = -1.0;  // negative selects default_sobolev_index
  int threads = 1;
  double noise_floor = 1e-11;  // errors below this (relative to eps|A|) make the sweep degenerate
  NlbNewtonOptions newton{};
};

struct SweepResult {
  std::vector<double> epsilons;
  std::vector<double> errors;     // H^s error, components combined in l^2
  std::vector<double> errors_l2;  // same with s = 0
  std::vector<double> failed;     // epsilons where Newton did not converge
  double s = 0.0;
  double fitted_rate = std::numeric_limits<double>::quiet_NaN();
  double fit_residual = std::numeric_limits<double>::quiet_NaN();
  double intercept = std::numeric_limits<double>::quiet_NaN();
  double fitted_rate_l2 = std::numeric_limits<double>::quiet_NaN();
  bool degenerate = false;
  std::vector<std::pair<double, double>> outside_asymptotic_regime;  // (eps, larger eps) with error growth
};

/// (sum_j ||a_j - b_j||^2_{H^s})^{1/2}
inline double component_error(const NlbState& a, const NlbState& b, double s) {
  double acc = 0.0;
  for (int j = 0; j < a.components(); ++j) {
    ComplexField d = a.eta(j);
    auto e = b.eta(j);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] -= e[i];
    acc += std::pow(sobolev_norm(d, s), 2);
  }
  return std::sqrt(acc);
}

/// Solves the NLB at omega* + eps^2 Omega from the asymptotic guess for
/// every eps and fits the decay of ||phi - eps sum A_j xi_j||.
inline SweepResult epsilon_sweep(std::shared_ptr<const NlbProblem> problem, const ModeSelection& sel,
                                 const std::vector<BlochMode>& modes, const CVec& A, double Omega,
                                 const std::vector<double>& eps_list, const SweepOptions& opt = {}) {
  require(!eps_list.empty(), "epsilon_sweep: empty epsilon list");
  for (std::size_t i = 0; i < eps_list.size(); ++i) {
    require(eps_list[i] > 0.0, "epsilon_sweep: epsilons must be positive");
    if (i) require(eps_list[i] < eps_list[i - 1], "epsilon_sweep: epsilons must be strictly decreasing");
  }
  SweepResult out;
  out.s = opt.s < 0.0 ? default_sobolev_index(problem->grid().dim) : opt.s;
  struct Item {
    bool ok = false;
    double err = 0.0, err_l2 = 0.0, scale = 0.0;
  };
  std::vector<Item> items(eps_list.size());
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < eps_list.size(); i += stride) {
      try {
        auto guess = asymptotic_guess(problem, sel, modes, A, Omega, eps_list[i]);
        auto r = newton_solve(guess, opt.newton);
        if (r.status != NewtonStatus::converged) continue;
        items[i] = {true, component_error(r.state, guess, out.s), component_error(r.state, guess, 0.0),
                    guess.norm()};
      } catch (const ConvergenceError&) {
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const auto workers = static_cast<std::size_t>(std::max(1, opt.threads));
  if (workers == 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(work, t, workers);
  }
  if (failure) std::rethrow_exception(failure);

  double largest = 0.0;
  for (std::size_t i = 0; i < eps_list.size(); ++i) {
    if (!items[i].ok) {
      out.failed.push_back(eps_list[i]);
      continue;
    }
    out.epsilons.push_back(eps_list[i]);
    out.errors.push_back(items[i].err);
    out.errors_l2.push_back(items[i].err_l2);
    largest = std::max(largest, items[i].err / std::max(items[i].scale, 1e-300));
  }
  if (out.epsilons.size() < 4)
    throw ConvergenceError("epsilon_sweep: only " + std::to_string(out.epsilons.size()) +
                           " epsilons converged, at least 4 are needed");
  if (largest <= opt.noise_floor) {
    out.degenerate = true;
    return out;
  }
  auto fit = fit_rate(out.epsilons, out.errors);
  out.fitted_rate = fit.slope;
  out.fit_residual = fit.residual;
  out.intercept = fit.intercept;
  out.fitted_rate_l2 = fit_rate(out.epsilons, out.errors_l2).slope;
  for (std::size_t i = 0; i < out.epsilons.size(); ++i)
    for (std::size_t j = i + 1; j < out.epsilons.size(); ++j)
      if (out.epsilons[i] >= 2.0 * out.epsilons[j] * (1.0 - 1e-12) && out.errors[j] > out.errors[i])
        out.outside_asymptotic_regime.emplace_back(out.epsilons[j], out.epsilons[i]);
  return out;
}

inline void write_sweep_csv(std::ostream& os, const SweepResult& r) {
  os << "epsilon,error_hs,error_l2\n";
  os.precision(12);
  for (std::size_t i = 0; i < r.epsilons.size(); ++i)
    os << r.epsilons[i] << ',' << r.errors[i] << ',' << r.errors_l2[i] << '\n';
}

inline nlohmann::json sweep_to_json(const SweepResult& r) {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  nlohmann::json j;
  j["s"] = r.s;
  j["epsilons"] = r.epsilons;
  j["errors"] = r.errors;
  j["errors_l2"] = r.errors_l2;
  j["failed"] = r.failed;
  j["fitted_rate"] = num(r.fitted_rate);
  j["fitted_rate_l2"] = num(r.fitted_rate_l2);
  j["fit_residual"] = num(r.fit_residual);
  j["intercept"] = num(r.intercept);
  j["degenerate"] = r.degenerate;
  j["outside_asymptotic_regime"] = nlohmann::json::array();
  for (const auto& [a, b] : r.outside_asymptotic_regime) j["outside_asymptotic_regime"].push_back({a, b});
  return j;
}

}  // namespace blochforge
