#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <functional>
#include <random>

#include "blochforge/error.hpp"

namespace blochforge {

using MatrixXc = Eigen::MatrixXcd;
using VectorXc = Eigen::VectorXcd;

struct EigenResult {
  Eigen::VectorXd values;  // ascending
  MatrixXc vectors;        // unit columns
  int iterations = 0;
};

namespace detail {

/// Modified Gram-Schmidt (two passes) on the columns of S against a prefix
/// that is already orthonormal. Columns that collapse are dropped.
inline MatrixXc orthonormalize(const MatrixXc& S, int keep_prefix) {
  MatrixXc Q(S.rows(), S.cols());
  int q = 0;
  for (int c = 0; c < S.cols(); ++c) {
    VectorXc v = S.col(c);
    if (c < keep_prefix) {
      Q.col(q++) = v;
      continue;
    }
    const double original = v.norm();
    if (original == 0.0) continue;
    for (int pass = 0; pass < 2; ++pass) {
      for (int j = 0; j < q; ++j) v -= Q.col(j) * Q.col(j).dot(v);
    }
    const double nv = v.norm();
    if (nv <= 1e-10 * original) continue;
    Q.col(q++) = v / nv;
  }
  return Q.leftCols(q);
}

}  // namespace detail

/// Lowest `count` eigenpairs of a Hermitian operator by block LOBPCG.
///
/// `apply` maps a block of columns to the operator times that block;
/// `precondition` applies an approximate inverse (Hermitian positive).
/// Convergence: ||A x - lambda x|| <= tol * (1 + |lambda|) for the first
/// `count` pairs.
inline EigenResult lobpcg(Eigen::Index dim, int count,
                          const std::function<MatrixXc(const MatrixXc&)>& apply,
                          const std::function<MatrixXc(const MatrixXc&)>& precondition, double tol,
                          int max_iter = 500, int guard = 4, unsigned seed = 1234) {
  const int block = std::min<Eigen::Index>(count + guard, dim);
  require(count >= 1 && count <= block, "lobpcg: bad block size");
  std::mt19937 rng(seed);
  std::normal_distribution<double> normal;
  MatrixXc X(dim, block);
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = {normal(rng), normal(rng)};
  X = detail::orthonormalize(X, 0);

  MatrixXc AX = apply(X);
  {
    Eigen::SelfAdjointEigenSolver<MatrixXc> es(X.adjoint() * AX);
    X = X * es.eigenvectors();
    AX = AX * es.eigenvectors();
  }
  MatrixXc P(dim, 0);
  Eigen::VectorXd lambda(block);
  for (int it = 0; it < max_iter; ++it) {
    for (int j = 0; j < X.cols(); ++j) lambda[j] = X.col(j).dot(AX.col(j)).real();
    MatrixXc R = AX - X * lambda.head(X.cols()).asDiagonal();
    bool converged = true;
    for (int j = 0; j < count; ++j)
      if (R.col(j).norm() > tol * (1.0 + std::abs(lambda[j]))) converged = false;
    if (converged) {
      EigenResult out;
      out.values = lambda.head(count);
      out.vectors = X.leftCols(count);
      out.iterations = it;
      return out;
    }
    MatrixXc W = precondition(R);
    MatrixXc S(dim, X.cols() + W.cols() + P.cols());
    S << X, W, P;
    MatrixXc Q = detail::orthonormalize(S, static_cast<int>(X.cols()));
    MatrixXc AQ(dim, Q.cols());
    AQ.leftCols(X.cols()) = AX;
    AQ.rightCols(Q.cols() - X.cols()) = apply(Q.rightCols(Q.cols() - X.cols()));
    MatrixXc G = Q.adjoint() * AQ;
    G = 0.5 * (G + G.adjoint()).eval();
    Eigen::SelfAdjointEigenSolver<MatrixXc> es(G);
    const MatrixXc C = es.eigenvectors().leftCols(block);
    const Eigen::Index rest = Q.cols() - X.cols();
    P = Q.rightCols(rest) * C.bottomRows(rest);
    X = Q * C;
    AX = AQ * C;
  }
  throw ConvergenceError("lobpcg: no convergence after " + std::to_string(max_iter) + " iterations");
}

/// Dense Hermitian eigensolver, lowest `count` pairs.
inline EigenResult dense_lowest(const MatrixXc& H, int count) {
  require(count >= 1 && count <= H.rows(), "dense_lowest: bad count");
  Eigen::SelfAdjointEigenSolver<MatrixXc> es(0.5 * (H + H.adjoint()));
  if (es.info() != Eigen::Success) throw ConvergenceError("dense eigensolver failed");
  EigenResult out;
  out.values = es.eigenvalues().head(count);
  out.vectors = es.eigenvectors().leftCols(count);
  return out;
}

}  // namespace blochforge
