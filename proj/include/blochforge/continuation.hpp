#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "blochforge/error.hpp"

namespace blochforge {

/// A one-parameter family F(u, omega) = 0 with real unknowns u.
///
/// `linearize` fixes the point at which `solve` inverts the Jacobian dF/du.
/// Problems with a continuous symmetry border the Jacobian internally (for
/// instance with a gauge row built from `reference`), so `solve` always acts
/// on a nonsingular system and its results satisfy the constraint.
class PathProblem {
 public:
  virtual ~PathProblem() = default;
  [[nodiscard]] virtual Eigen::Index size() const = 0;
  [[nodiscard]] virtual Eigen::VectorXd residual(const Eigen::VectorXd& u, double omega) const = 0;
  [[nodiscard]] virtual Eigen::VectorXd residual_omega(const Eigen::VectorXd& u, double omega) const = 0;
  virtual void linearize(const Eigen::VectorXd& u, double omega, const Eigen::VectorXd& reference) = 0;
  [[nodiscard]] virtual Eigen::VectorXd solve(const Eigen::VectorXd& rhs) = 0;
  /// Inner product approximating the continuum L^2 product.
  [[nodiscard]] virtual double dot(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const { return a.dot(b); }
  /// Projection onto an invariant subspace, applied after every update when enabled.
  virtual void project(Eigen::VectorXd&) const {}

  [[nodiscard]] double norm(const Eigen::VectorXd& a) const { return std::sqrt(std::max(0.0, dot(a, a))); }
};

enum class NewtonStatus { converged, converged_to_zero, not_converged };

inline std::string to_string(NewtonStatus s) {
  switch (s) {
    case NewtonStatus::converged: return "converged";
    case NewtonStatus::converged_to_zero: return "converged-to-zero";
    case NewtonStatus::not_converged: return "not-converged";
  }
  return "unknown";
}

struct PathNewtonOptions {
  double tol = 1e-10;  // ||F|| <= tol (1 + ||u||^3)
  int max_iter = 30;
  double zero_tol = 1e-6;  // relative to the guess norm
  bool project = false;
};

struct PathNewtonResult {
  Eigen::VectorXd u;
  NewtonStatus status = NewtonStatus::not_converged;
  int iterations = 0;
  double residual = 0.0;
};

/// Damped Newton for F(., omega) = 0 at fixed omega, gauge anchored at the guess.
inline PathNewtonResult path_newton(PathProblem& p, Eigen::VectorXd u, double omega,
                                    const PathNewtonOptions& opt = {}) {
  PathNewtonResult out;
  if (opt.project) p.project(u);
  const Eigen::VectorXd reference = u;
  const double guess_norm = p.norm(u);
  auto scale = [&](const Eigen::VectorXd& v) { return 1.0 + std::pow(p.norm(v), 3); };
  Eigen::VectorXd F = p.residual(u, omega);
  out.residual = p.norm(F);
  while (out.residual > opt.tol * scale(u)) {
    if (out.iterations == opt.max_iter || !std::isfinite(out.residual)) {
      out.u = u;
      return out;
    }
    ++out.iterations;
    Eigen::VectorXd step;
    try {
      p.linearize(u, omega, reference);
      step = p.solve(-F);
    } catch (const ConvergenceError&) {
      out.u = u;
      return out;
    }
    double t = 1.0;
    Eigen::VectorXd trial;
    double trial_res = 0.0;
    for (int k = 0; k < 30; ++k, t *= 0.5) {
      trial = u + t * step;
      if (opt.project) p.project(trial);
      Eigen::VectorXd Ft = p.residual(trial, omega);
      trial_res = p.norm(Ft);
      if (trial_res <= (1.0 - 1e-4 * t) * out.residual || k == 29) {
        F = std::move(Ft);
        break;
      }
    }
    u = std::move(trial);
    out.residual = trial_res;
  }
  out.u = u;
  const double n = p.norm(u);
  out.status = (n <= opt.zero_tol * guess_norm || n <= 1e-12) ? NewtonStatus::converged_to_zero
                                                               : NewtonStatus::converged;
  return out;
}

enum class BranchStatus { active, fold_detected, max_steps, newton_failed };

inline std::string to_string(BranchStatus s) {
  switch (s) {
    case BranchStatus::active: return "active";
    case BranchStatus::fold_detected: return "fold-detected";
    case BranchStatus::max_steps: return "max-steps";
    case BranchStatus::newton_failed: return "newton-failed";
  }
  return "unknown";
}

struct ContinuationOptions {
  double ds = 0.05;
  double ds_min = 1e-6;
  double ds_max = 0.5;
  int max_steps = 100;
  double omega_min = -std::numeric_limits<double>::infinity();
  double omega_max = std::numeric_limits<double>::infinity();
  double max_norm = std::numeric_limits<double>::infinity();
  int corrector_max_iter = 8;
  int fast_iterations = 3;  // grow the step when the corrector needs at most this many
  double grow = 1.3;
  bool stop_at_fold = false;
  double tol = 1e-10;
  bool project = false;
};

struct PathPoint {
  Eigen::VectorXd u;
  double omega = 0.0;
  double norm = 0.0;
  double arclength = 0.0;
  double domega_ds = 0.0;
  int corrector_iterations = 0;
};

struct PathResult {
  std::vector<PathPoint> points;
  std::vector<std::size_t> folds;  // index of the first point past each fold
  BranchStatus status = BranchStatus::active;
  int direction = 1;
};

namespace detail {

// Keller bordering by block elimination:
//   J du + F_w dw = r,  <t_u, du> + t_w dw = s.
struct BorderedStep {
  Eigen::VectorXd du;
  double dw = 0.0;
  Eigen::VectorXd x2;  // J^{-1} F_w
};

inline BorderedStep bordered_solve(PathProblem& p, const Eigen::VectorXd& Fw, const Eigen::VectorXd& r, double s,
                                   const Eigen::VectorXd& tu, double tw) {
  BorderedStep out;
  Eigen::VectorXd x1 = p.solve(r);
  out.x2 = p.solve(Fw);
  const double denom = tw - p.dot(tu, out.x2);
  require(std::abs(denom) > 1e-300, "bordered_solve: singular arclength system");
  out.dw = (s - p.dot(tu, x1)) / denom;
  out.du = x1 - out.dw * out.x2;
  return out;
}

inline void normalize_tangent(const PathProblem& p, Eigen::VectorXd& tu, double& tw) {
  const double n = std::sqrt(p.dot(tu, tu) + tw * tw);
  tu /= n;
  tw /= n;
}

}  // namespace detail

/// Pseudo-arclength continuation from a converged seed. The initial tangent
/// points toward increasing omega for direction = +1.
inline PathResult continue_path(PathProblem& p, const Eigen::VectorXd& seed, double omega0, int direction,
                                const ContinuationOptions& opt = {}) {
  require(direction == 1 || direction == -1, "continue_path: direction must be +1 or -1");
  PathResult out;
  out.direction = direction;
  auto scale = [&](const Eigen::VectorXd& v) { return 1.0 + std::pow(p.norm(v), 3); };
  {
    const double r0 = p.norm(p.residual(seed, omega0));
    if (r0 > 1e3 * opt.tol * scale(seed)) throw InvalidArgument("continue_path: seed is not converged");
  }
  Eigen::VectorXd tu;
  double tw = 1.0;
  p.linearize(seed, omega0, seed);
  tu = -p.solve(p.residual_omega(seed, omega0));
  if (opt.project) p.project(tu);
  detail::normalize_tangent(p, tu, tw);
  tu *= direction;
  tw *= direction;
  out.points.push_back({seed, omega0, p.norm(seed), 0.0, tw, 0});

  double ds = opt.ds;
  while (true) {
    if (static_cast<int>(out.points.size()) > opt.max_steps) {
      out.status = BranchStatus::max_steps;
      return out;
    }
    const PathPoint& last = out.points.back();
    if (last.omega < opt.omega_min || last.omega > opt.omega_max || last.norm > opt.max_norm) {
      out.status = BranchStatus::active;
      return out;
    }
    bool accepted = false;
    while (!accepted) {
      if (ds < opt.ds_min) {
        out.status = BranchStatus::newton_failed;
        return out;
      }
      Eigen::VectorXd u = last.u + ds * tu;
      double w = last.omega + ds * tw;
      if (opt.project) p.project(u);
      int it = 0;
      bool ok = false;
      Eigen::VectorXd x2;
      try {
        for (; it <= opt.corrector_max_iter; ++it) {
          Eigen::VectorXd F = p.residual(u, w);
          const double arc = p.dot(tu, u - last.u) + tw * (w - last.omega) - ds;
          if (!std::isfinite(F.norm())) break;
          p.linearize(u, w, last.u);
          if (p.norm(F) <= opt.tol * scale(u) && std::abs(arc) <= 1e-8 * std::max(1.0, ds)) {
            x2 = p.solve(p.residual_omega(u, w));
            ok = true;
            break;
          }
          if (it == opt.corrector_max_iter) break;
          auto step = detail::bordered_solve(p, p.residual_omega(u, w), -F, -arc, tu, tw);
          u += step.du;
          w += step.dw;
          if (opt.project) p.project(u);
        }
      } catch (const ConvergenceError&) {
        ok = false;
      }
      if (!ok) {
        ds *= 0.5;
        continue;
      }
      Eigen::VectorXd ntu = -x2;
      double ntw = 1.0;
      if (opt.project) p.project(ntu);
      detail::normalize_tangent(p, ntu, ntw);
      if (p.dot(ntu, tu) + ntw * tw < 0.0) {
        ntu = -ntu;
        ntw = -ntw;
      }
      PathPoint pt;
      pt.u = u;
      pt.omega = w;
      pt.norm = p.norm(u);
      const Eigen::VectorXd du = u - last.u;
      pt.arclength = last.arclength + std::sqrt(p.dot(du, du) + (w - last.omega) * (w - last.omega));
      pt.domega_ds = ntw;
      pt.corrector_iterations = it;
      const bool fold = (ntw > 0.0) != (last.domega_ds > 0.0);
      out.points.push_back(std::move(pt));
      tu = std::move(ntu);
      tw = ntw;
      accepted = true;
      if (fold) {
        out.folds.push_back(out.points.size() - 1);
        if (opt.stop_at_fold) {
          out.status = BranchStatus::fold_detected;
          return out;
        }
      }
      if (it <= opt.fast_iterations) ds = std::min(opt.ds_max, ds * opt.grow);
    }
  }
}

}  // namespace blochforge
