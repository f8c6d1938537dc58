#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>

#include "blochforge/error.hpp"

namespace blochforge {

using LinearMap = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct GmresOptions {
  double tol = 1e-10;  // relative to ||b||
  int max_iter = 600;
  int restart = 150;
};

struct GmresResult {
  Eigen::VectorXd x;
  int iterations = 0;
  double relative_residual = 0.0;
  bool converged = false;
};

/// Restarted GMRES with right preconditioning: solves A x = b through
/// A M^{-1} y = b, x = M^{-1} y. `precond` applies M^{-1}.
inline GmresResult gmres(const LinearMap& apply, const LinearMap& precond, const Eigen::VectorXd& b,
                         const GmresOptions& opt = {}) {
  const Eigen::Index n = b.size();
  GmresResult out;
  out.x = Eigen::VectorXd::Zero(n);
  const double bnorm = b.norm();
  if (bnorm == 0.0) {
    out.converged = true;
    return out;
  }
  const int m = std::max(1, std::min<int>(opt.restart, static_cast<int>(n)));
  Eigen::MatrixXd V(n, m + 1), H = Eigen::MatrixXd::Zero(m + 1, m);
  Eigen::VectorXd cs(m), sn(m), g(m + 1);
  Eigen::VectorXd r = b;
  while (out.iterations < opt.max_iter) {
    double beta = r.norm();
    out.relative_residual = beta / bnorm;
    if (out.relative_residual <= opt.tol) {
      out.converged = true;
      return out;
    }
    V.col(0) = r / beta;
    g.setZero();
    g(0) = beta;
    H.setZero();
    int k = 0;
    for (; k < m && out.iterations < opt.max_iter; ++k, ++out.iterations) {
      Eigen::VectorXd w = apply(precond(V.col(k)));
      // Two passes of modified Gram-Schmidt.
      for (int pass = 0; pass < 2; ++pass)
        for (int i = 0; i <= k; ++i) {
          const double h = V.col(i).dot(w);
          H(i, k) += h;
          w -= h * V.col(i);
        }
      H(k + 1, k) = w.norm();
      if (H(k + 1, k) > 0.0) V.col(k + 1) = w / H(k + 1, k);
      for (int i = 0; i < k; ++i) {
        const double t = cs(i) * H(i, k) + sn(i) * H(i + 1, k);
        H(i + 1, k) = -sn(i) * H(i, k) + cs(i) * H(i + 1, k);
        H(i, k) = t;
      }
      const double d = std::hypot(H(k, k), H(k + 1, k));
      cs(k) = d == 0.0 ? 1.0 : H(k, k) / d;
      sn(k) = d == 0.0 ? 0.0 : H(k + 1, k) / d;
      H(k, k) = d;
      H(k + 1, k) = 0.0;
      g(k + 1) = -sn(k) * g(k);
      g(k) = cs(k) * g(k);
      if (std::abs(g(k + 1)) / bnorm <= opt.tol || d == 0.0) {
        ++k;
        ++out.iterations;
        break;
      }
    }
    Eigen::VectorXd y = H.topLeftCorner(k, k).triangularView<Eigen::Upper>().solve(g.head(k));
    out.x += precond(V.leftCols(k) * y);
    r = b - apply(out.x);
  }
  out.relative_residual = r.norm() / bnorm;
  out.converged = out.relative_residual <= opt.tol;
  return out;
}

/// Dense matrix of a linear map, column by column.
inline Eigen::MatrixXd dense_matrix(const LinearMap& apply, Eigen::Index n) {
  Eigen::MatrixXd A(n, n);
  Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
  for (Eigen::Index c = 0; c < n; ++c) {
    e(c) = 1.0;
    A.col(c) = apply(e);
    e(c) = 0.0;
  }
  return A;
}

}  // namespace blochforge
