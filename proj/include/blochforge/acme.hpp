#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "blochforge/bloch.hpp"
#include "blochforge/modeset.hpp"
#include "json.hpp"

namespace blochforge {

using CVec = std::vector<cplx>;

/// The algebraic coupled mode equations
///   F_j = Omega A_j - sigma sum_{(a,b,c) in A_j} mu_{abcj} A_a conj(A_b) A_c.
struct AcmeSystem {
  int N = 0;
  std::vector<std::vector<Triple>> A;  // index sets over the stars
  std::vector<std::vector<cplx>> mu;   // mu[j][t] belongs to A[j][t]
  double sigma = 1.0;
  double Omega = 1.0;
  std::vector<int> pairing;  // j -> j'

  [[nodiscard]] std::optional<cplx> mu_at(int a, int b, int c, int j) const {
    for (std::size_t t = 0; t < A[j].size(); ++t)
      if (A[j][t].a == a && A[j][t].b == b && A[j][t].c == c) return mu[j][t];
    return std::nullopt;
  }
  [[nodiscard]] bool has_triple(int a, int b, int c, int j) const { return mu_at(a, b, c, j).has_value(); }
};

/// mu_{abcj} = int_P xi_a conj(xi_b) xi_c conj(xi_j) dx for every (a,b,c) in A_j.
inline std::vector<std::vector<cplx>> compute_mu(const std::vector<BlochMode>& modes,
                                                 const std::vector<std::vector<Triple>>& A) {
  require(!modes.empty() && modes.size() == A.size(), "compute_mu: one mode per index set required");
  std::vector<ComplexField> xi;
  for (const auto& m : modes) {
    require_same_grid(m.p.grid, modes[0].p.grid, "compute_mu");
    xi.push_back(m.xi());
  }
  const double w = modes[0].p.grid.weight();
  std::vector<std::vector<cplx>> mu(A.size());
  for (std::size_t j = 0; j < A.size(); ++j)
    for (const auto& t : A[j]) {
      cplx s{};
      for (std::size_t i = 0; i < xi[j].size(); ++i)
        s += xi[t.a][i] * std::conj(xi[t.b][i]) * xi[t.c][i] * std::conj(xi[j][i]);
      mu[j].push_back(s * w);
    }
  return mu;
}

inline AcmeSystem build_system(const ModeSelection& sel, const std::vector<BlochMode>& modes, double sigma,
                               double Omega) {
  require(static_cast<int>(modes.size()) == sel.N(), "build_system: need one mode per star");
  AcmeSystem s;
  s.N = sel.N();
  s.A = sel.A;
  s.mu = compute_mu(modes, sel.A);
  s.sigma = sigma;
  s.Omega = Omega;
  s.pairing = sel.pairing;
  return s;
}

inline CVec acme_residual(const CVec& A, const AcmeSystem& s) {
  require(static_cast<int>(A.size()) == s.N, "acme_residual: wrong amplitude count");
  CVec F(s.N);
  for (int j = 0; j < s.N; ++j) {
    cplx sum{};
    for (std::size_t t = 0; t < s.A[j].size(); ++t) {
      const auto& tr = s.A[j][t];
      sum += s.mu[j][t] * A[tr.a] * std::conj(A[tr.b]) * A[tr.c];
    }
    F[j] = s.Omega * A[j] - s.sigma * sum;
  }
  return F;
}

/// (Re z_1..N, Im z_1..N)
inline Eigen::VectorXd to_real(const CVec& z) {
  const auto n = static_cast<Eigen::Index>(z.size());
  Eigen::VectorXd v(2 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    v[i] = z[i].real();
    v[n + i] = z[i].imag();
  }
  return v;
}

inline CVec from_real(const Eigen::VectorXd& v) {
  const auto n = v.size() / 2;
  CVec z(n);
  for (Eigen::Index i = 0; i < n; ++i) z[i] = {v[i], v[n + i]};
  return z;
}

inline double norm(const CVec& z) {
  double s = 0.0;
  for (const auto& c : z) s += std::norm(c);
  return std::sqrt(s);
}

/// Jacobian of (Re F, Im F) with respect to (Re A, Im A).
inline Eigen::MatrixXd acme_jacobian_real(const CVec& A, const AcmeSystem& s) {
  const int N = s.N;
  require(static_cast<int>(A.size()) == N, "acme_jacobian_real: wrong amplitude count");
  Eigen::MatrixXcd dA = Eigen::MatrixXcd::Zero(N, N), dAbar = Eigen::MatrixXcd::Zero(N, N);
  for (int j = 0; j < N; ++j) {
    dA(j, j) += s.Omega;
    for (std::size_t t = 0; t < s.A[j].size(); ++t) {
      const auto& tr = s.A[j][t];
      const cplx m = -s.sigma * s.mu[j][t];
      dA(j, tr.a) += m * std::conj(A[tr.b]) * A[tr.c];
      dA(j, tr.c) += m * A[tr.a] * std::conj(A[tr.b]);
      dAbar(j, tr.b) += m * A[tr.a] * A[tr.c];
    }
  }
  const Eigen::MatrixXcd dx = dA + dAbar;
  const Eigen::MatrixXcd dy = cplx{0, 1} * (dA - dAbar);
  Eigen::MatrixXd J(2 * N, 2 * N);
  J << dx.real(), dy.real(), dx.imag(), dy.imag();
  return J;
}

/// Central finite-difference Jacobian, the oracle for acme_jacobian_real.
inline Eigen::MatrixXd acme_jacobian_fd(const CVec& A, const AcmeSystem& s, double h = 1e-6) {
  const Eigen::VectorXd a = to_real(A);
  Eigen::MatrixXd J(a.size(), a.size());
  for (Eigen::Index c = 0; c < a.size(); ++c) {
    Eigen::VectorXd p = a, m = a;
    p[c] += h;
    m[c] -= h;
    J.col(c) = (to_real(acme_residual(from_real(p), s)) - to_real(acme_residual(from_real(m), s))) / (2 * h);
  }
  return J;
}

struct KernelDirection {
  Eigen::VectorXd v;
  bool degenerate = false;  // A = 0
};

/// The phase direction (0 -I; I 0) A_hat, annihilated by the Jacobian at a solution.
inline KernelDirection kernel_direction(const CVec& A, const AcmeSystem& s, double tol = 1e-8) {
  const double nA = norm(A);
  if (nA == 0.0) return {Eigen::VectorXd::Zero(2 * s.N), true};
  require(norm(acme_residual(A, s)) <= tol * (1.0 + nA * nA * nA), "kernel_direction: A does not solve the ACMEs");
  CVec iA(A.size());
  for (std::size_t i = 0; i < A.size(); ++i) iA[i] = cplx{0, 1} * A[i];
  return {to_real(iA), false};
}

inline bool reversibility_check(const CVec& A, const std::vector<int>& pairing, double tol = 1e-12) {
  for (std::size_t i = 0; i < A.size(); ++i)
    if (std::abs(A[i] - std::conj(A[pairing[i]])) > tol) return false;
  return true;
}

/// Average of A_hat with its image under S: A_i -> conj(A_{i'}).
inline CVec project_reversible(const CVec& A, const std::vector<int>& pairing) {
  CVec out(A.size());
  for (std::size_t i = 0; i < A.size(); ++i) out[i] = 0.5 * (A[i] + std::conj(A[pairing[i]]));
  return out;
}

/// The symmetry matrix S acting on (Re A, Im A).
inline Eigen::MatrixXd symmetry_matrix(const std::vector<int>& pairing) {
  const auto N = static_cast<Eigen::Index>(pairing.size());
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(2 * N, 2 * N);
  for (Eigen::Index i = 0; i < N; ++i) {
    S(i, pairing[i]) = 1.0;
    S(N + i, N + pairing[i]) = -1.0;
  }
  return S;
}

struct AcmeSolution {
  CVec A;
  std::vector<double> jacobian_eigenvalues;  // real parts, ascending
  double max_eigen_imag = 0.0;
  double residual = 0.0;
  bool nondegenerate = false;
  bool reversible = false;
  std::string label;
};

/// Fills residual, Jacobian spectrum, non-degeneracy and reversibility.
inline AcmeSolution certify(CVec A, const AcmeSystem& s, std::string label = {}) {
  AcmeSolution out;
  out.A = std::move(A);
  out.label = std::move(label);
  out.residual = norm(acme_residual(out.A, s));
  Eigen::EigenSolver<Eigen::MatrixXd> es(acme_jacobian_real(out.A, s), false);
  std::vector<cplx> ev(es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size());
  std::sort(ev.begin(), ev.end(), [](cplx a, cplx b) { return a.real() < b.real(); });
  for (const auto& e : ev) {
    out.jacobian_eigenvalues.push_back(e.real());
    out.max_eigen_imag = std::max(out.max_eigen_imag, std::abs(e.imag()));
  }
  std::vector<double> mod;
  for (const auto& e : ev) mod.push_back(std::abs(e));
  std::sort(mod.begin(), mod.end());
  const double big = mod.back();
  out.nondegenerate = big > 0.0 && mod[0] <= 1e-8 * big && (mod.size() < 2 || mod[1] >= 1e-4 * big);
  out.reversible = s.pairing.empty() ? false : reversibility_check(out.A, s.pairing);
  return out;
}

inline AcmeSystem scalar_system(double mu, double sigma, double Omega) {
  AcmeSystem s;
  s.N = 1;
  s.A = {{Triple{0, 0, 0, {}}}};
  s.mu = {{cplx{mu, 0.0}}};
  s.sigma = sigma;
  s.Omega = Omega;
  s.pairing = {0};
  return s;
}

/// Omega A - sigma mu |A|^2 A = 0: |A| = sqrt(Omega / (sigma mu)), arg A = phase.
/// Returns nullopt when the signs admit no nonzero solution.
inline std::optional<AcmeSolution> solve_scalar(double mu, double sigma, double Omega, double phase = 0.0) {
  require(mu > 0.0, "solve_scalar: mu must be positive");
  const double r2 = Omega / (sigma * mu);
  if (!(r2 > 0.0)) return std::nullopt;
  return certify({std::polar(std::sqrt(r2), phase)}, scalar_system(mu, sigma, Omega), "scalar");
}

/// Builds the N = 2 system from its four independent coefficients. Case (a)
/// (consistent) includes the mu_2121 coupling; case (b) does not.
inline AcmeSystem two_mode_system(double mu1111, double mu2222, double mu1221, cplx mu2121, bool consistent,
                                  std::vector<int> pairing, double sigma, double Omega) {
  AcmeSystem s;
  s.N = 2;
  s.sigma = sigma;
  s.Omega = Omega;
  s.pairing = std::move(pairing);
  s.A.resize(2);
  s.mu.resize(2);
  auto add = [&](int j, int a, int b, int c, cplx m) {
    s.A[j].push_back(Triple{a, b, c, {}});
    s.mu[j].push_back(m);
  };
  add(0, 0, 0, 0, mu1111);
  add(0, 0, 1, 1, mu1221);
  add(0, 1, 1, 0, mu1221);
  add(1, 1, 1, 1, mu2222);
  add(1, 1, 0, 0, mu1221);
  add(1, 0, 0, 1, mu1221);
  if (consistent) {
    add(0, 1, 0, 1, mu2121);
    add(1, 0, 1, 0, std::conj(mu2121));
  }
  return s;
}

/// Closed-form N = 2 solutions with A_1 A_2 != 0, in reversible form when the
/// pairing admits one, one representative per branch modulo A -> -A.
inline std::vector<AcmeSolution> solve_two_mode(const AcmeSystem& s, double rel_tol = 1e-12) {
  require(s.N == 2, "solve_two_mode: N must be 2");
  require(s.pairing.size() == 2, "solve_two_mode: pairing required");
  const double m11 = s.mu_at(0, 0, 0, 0).value_or(0.0).real();
  const double m22 = s.mu_at(1, 1, 1, 1).value_or(0.0).real();
  const double m1221 = s.mu_at(0, 1, 1, 0).value_or(0.0).real();
  const auto m2121_opt = s.mu_at(1, 0, 1, 0);
  const bool consistent = m2121_opt.has_value();
  const cplx m2121 = m2121_opt.value_or(0.0);
  const bool swap = s.pairing[0] == 1;
  const double ratio = s.Omega / s.sigma;
  const double scale = std::max({std::abs(m11), std::abs(m22), std::abs(m1221), std::abs(m2121)});
  std::vector<AcmeSolution> out;

  auto moduli = [&](double gamma) -> std::optional<std::pair<double, double>> {
    const double det = gamma * gamma - m11 * m22;
    if (std::abs(det) <= rel_tol * scale * scale) return std::nullopt;
    const double x1 = ratio * (gamma - m22) / det, x2 = ratio * (gamma - m11) / det;
    if (!(x1 > 0.0 && x2 > 0.0)) return std::nullopt;
    return std::make_pair(std::sqrt(x1), std::sqrt(x2));
  };

  if (!consistent) {
    const auto r = moduli(2.0 * m1221);
    if (!r) return out;
    auto sol = certify({r->first, r->second}, s, "case b");
    out.push_back(sol);
    return out;
  }

  const double arg = std::arg(m2121);
  for (int q = 0; q < 4; ++q) {
    const double gamma = 2.0 * m1221 + (q % 2 == 0 ? 1.0 : -1.0) * std::abs(m2121);
    const auto r = moduli(gamma);
    if (!r) continue;
    CVec A(2);
    if (swap) {
      // A_2 = conj(A_1) with arg(A_1) = (arg mu_2121 - q pi) / 4.
      const double th = (arg - q * std::numbers::pi) / 4.0;
      A = {std::polar(r->first, th), std::polar(r->second, -th)};
    } else {
      // A real: arg(A_2) - arg(A_1) = q pi / 2 - arg(mu_2121) / 2 must be 0 or pi.
      const double rel = q * std::numbers::pi / 2.0 - arg / 2.0;
      const cplx rot = std::polar(1.0, rel);
      if (std::abs(rot.imag()) > 1e-9) {
        if (q >= 2) continue;  // q and q + 2 give the same non-real branch
        A = {r->first, r->second * rot};
      } else {
        A = {r->first, r->second * std::copysign(1.0, rot.real())};
      }
    }
    out.push_back(certify(A, s, "q=" + std::to_string(q)));
  }
  return out;
}

struct NewtonOptions {
  int max_iter = 50;
  double tol = 1e-12;
  int phase_angles = 16;
  std::vector<double> magnitude_factors{1.0, 0.5, 2.0, 0.25, 4.0};
  std::size_t max_seeds = 2048;
  unsigned seed = 1234;
};

namespace detail {

/// Real parametrization of V_rev: self-paired j carries A_j = v_j; a pair
/// j < j' carries A_j = v_j + i v_{j'}, A_{j'} = v_j - i v_{j'}.
inline CVec rev_to_complex(const Eigen::VectorXd& v, const std::vector<int>& pairing) {
  CVec A(v.size());
  for (std::size_t j = 0; j < A.size(); ++j) {
    const auto jp = static_cast<std::size_t>(pairing[j]);
    if (jp == j) A[j] = v[j];
    else if (j < jp) {
      A[j] = {v[j], v[jp]};
      A[jp] = {v[j], -v[jp]};
    }
  }
  return A;
}

inline Eigen::VectorXd complex_to_rev(const CVec& A, const std::vector<int>& pairing) {
  Eigen::VectorXd v(A.size());
  for (std::size_t j = 0; j < A.size(); ++j) {
    const auto jp = static_cast<std::size_t>(pairing[j]);
    if (jp == j) v[j] = A[j].real();
    else if (j < jp) {
      v[j] = A[j].real();
      v[jp] = A[j].imag();
    }
  }
  return v;
}

/// Independent real equations of F on V_rev (F is S-equivariant there).
inline Eigen::VectorXd rev_residual(const CVec& F, const std::vector<int>& pairing) {
  return complex_to_rev(F, pairing);
}

/// d(rev_to_complex) as a 2N x N real matrix in (Re, Im) coordinates.
inline Eigen::MatrixXd rev_embedding(const std::vector<int>& pairing) {
  const auto N = static_cast<Eigen::Index>(pairing.size());
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(2 * N, N);
  for (Eigen::Index j = 0; j < N; ++j) {
    const Eigen::Index jp = pairing[j];
    if (jp == j) {
      P(j, j) = 1.0;
    } else if (j < jp) {
      P(j, j) = 1.0;
      P(N + j, jp) = 1.0;
      P(jp, j) = 1.0;
      P(N + jp, jp) = -1.0;
    }
  }
  return P;
}

inline Eigen::MatrixXd rev_selector(const std::vector<int>& pairing) {
  const auto N = static_cast<Eigen::Index>(pairing.size());
  Eigen::MatrixXd R = Eigen::MatrixXd::Zero(N, 2 * N);
  for (Eigen::Index j = 0; j < N; ++j) {
    const Eigen::Index jp = pairing[j];
    if (jp == j) {
      R(j, j) = 1.0;
    } else if (j < jp) {
      R(j, j) = 1.0;
      R(jp, N + j) = 1.0;
    }
  }
  return R;
}

}  // namespace detail

/// Size of the terms of F at A, the reference for residual tolerances.
inline double residual_scale(const CVec& A, const AcmeSystem& s) {
  double mu_max = 0.0;
  for (const auto& row : s.mu)
    for (const auto& m : row) mu_max = std::max(mu_max, std::abs(m));
  const double a = norm(A);
  return 1.0 + std::abs(s.Omega) * a + std::abs(s.sigma) * mu_max * a * a * a;
}

/// Damped Newton from one seed on V_rev. Returns the converged amplitudes.
inline std::optional<CVec> newton_reversible(const AcmeSystem& s, CVec seed, const NewtonOptions& opt = {}) {
  const auto P = detail::rev_embedding(s.pairing);
  const auto R = detail::rev_selector(s.pairing);
  Eigen::VectorXd v = detail::complex_to_rev(project_reversible(seed, s.pairing), s.pairing);
  auto G = [&](const Eigen::VectorXd& x) {
    return detail::rev_residual(acme_residual(detail::rev_to_complex(x, s.pairing), s), s.pairing);
  };
  Eigen::VectorXd g = G(v);
  for (int it = 0; it <= opt.max_iter; ++it) {
    const CVec A = detail::rev_to_complex(v, s.pairing);
    if (norm(acme_residual(A, s)) <= opt.tol * residual_scale(A, s)) return A;
    if (it == opt.max_iter) break;
    const Eigen::MatrixXd J = R * acme_jacobian_real(A, s) * P;
    const Eigen::VectorXd step = J.fullPivLu().solve(-g);
    if (!step.allFinite()) return std::nullopt;
    const double f0 = g.squaredNorm();
    double t = 1.0;
    bool accepted = false;
    while (t >= 1e-10) {
      const Eigen::VectorXd trial = v + t * step;
      const Eigen::VectorXd gt = G(trial);
      if (gt.squaredNorm() <= (1.0 - 2e-4 * t) * f0) {
        v = trial;
        g = gt;
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) return std::nullopt;
  }
  return std::nullopt;
}

/// Multi-start Newton on V_rev. Seeds: |A_j| = f sqrt(|Omega / (sigma mu_jjjj)|)
/// for each magnitude factor f, phases on a grid of `phase_angles` per free
/// phase. Solutions are deduplicated modulo A -> -A, the zero solution is
/// dropped, and each result is certified.
inline std::vector<AcmeSolution> solve_general_newton(const AcmeSystem& s, const NewtonOptions& opt = {}) {
  require(static_cast<int>(s.pairing.size()) == s.N, "solve_general_newton: pairing required");
  std::vector<double> base(s.N);
  for (int j = 0; j < s.N; ++j) {
    const double mjj = std::abs(s.mu_at(j, j, j, j).value_or(1.0));
    base[j] = std::sqrt(std::abs(s.Omega / (s.sigma * (mjj > 0 ? mjj : 1.0))));
  }
  // Free angles: one per self-paired component (acting through cos) and one per pair.
  std::vector<int> owners;
  for (int j = 0; j < s.N; ++j)
    if (s.pairing[j] >= j) owners.push_back(j);
  const int na = opt.phase_angles;
  std::size_t combos = opt.magnitude_factors.size();
  for (std::size_t i = 0; i < owners.size() && combos <= opt.max_seeds; ++i) combos *= static_cast<std::size_t>(na);

  std::vector<CVec> seeds;
  auto make_seed = [&](double f, const std::vector<int>& angle_idx) {
    CVec A(s.N);
    for (std::size_t i = 0; i < owners.size(); ++i) {
      const int j = owners[i];
      const double th = (angle_idx[i] + 0.5) * 2.0 * std::numbers::pi / na;
      if (s.pairing[j] == j) {
        A[j] = f * base[j] * std::cos(th);
      } else {
        A[j] = std::polar(f * base[j], th);
        A[s.pairing[j]] = std::conj(A[j]);
      }
    }
    return A;
  };
  if (combos <= opt.max_seeds) {
    for (double f : opt.magnitude_factors) {
      std::vector<int> idx(owners.size(), 0);
      while (true) {
        seeds.push_back(make_seed(f, idx));
        std::size_t i = 0;
        while (i < idx.size() && ++idx[i] == na) idx[i++] = 0;
        if (i == idx.size()) break;
      }
    }
  } else {
    std::mt19937 rng(opt.seed);
    std::uniform_int_distribution<int> pick(0, na - 1);
    std::uniform_int_distribution<std::size_t> fpick(0, opt.magnitude_factors.size() - 1);
    for (std::size_t n = 0; n < opt.max_seeds; ++n) {
      std::vector<int> idx(owners.size());
      for (auto& x : idx) x = pick(rng);
      seeds.push_back(make_seed(opt.magnitude_factors[fpick(rng)], idx));
    }
  }

  std::vector<AcmeSolution> out;
  for (const auto& seed : seeds) {
    auto A = newton_reversible(s, seed, opt);
    if (!A) continue;
    const double nA = norm(*A);
    if (nA <= 1e-8 * (1.0 + *std::max_element(base.begin(), base.end()))) continue;
    bool dup = false;
    for (const auto& sol : out) {
      double dp = 0.0, dm = 0.0;
      for (int j = 0; j < s.N; ++j) {
        dp += std::norm((*A)[j] - sol.A[j]);
        dm += std::norm((*A)[j] + sol.A[j]);
      }
      if (std::sqrt(std::min(dp, dm)) <= 1e-7 * nA) dup = true;
    }
    if (dup) continue;
    // Canonical sign: first nonzero real part (then imaginary part) positive.
    for (int j = 0; j < s.N; ++j) {
      const cplx z = (*A)[j];
      const double lead = std::abs(z.real()) > 1e-9 * nA ? z.real() : z.imag();
      if (std::abs(lead) > 1e-9 * nA) {
        if (lead < 0) for (auto& x : *A) x = -x;
        break;
      }
    }
    out.push_back(certify(*A, s, "newton"));
  }
  return out;
}

inline nlohmann::json complex_json(cplx z) { return nlohmann::json::array({z.real(), z.imag()}); }

inline nlohmann::json system_to_json(const AcmeSystem& s) {
  nlohmann::json j;
  j["N"] = s.N;
  j["sigma"] = s.sigma;
  j["Omega"] = s.Omega;
  j["pairing"] = s.pairing;
  j["mu"] = nlohmann::json::array();
  for (int e = 0; e < s.N; ++e)
    for (std::size_t t = 0; t < s.A[e].size(); ++t) {
      const auto& tr = s.A[e][t];
      j["mu"].push_back({{"index", {tr.a + 1, tr.b + 1, tr.c + 1, e + 1}}, {"value", complex_json(s.mu[e][t])}});
    }
  return j;
}

inline nlohmann::json solution_to_json(const AcmeSolution& sol) {
  nlohmann::json j;
  for (const auto& a : sol.A) j["A"].push_back(complex_json(a));
  j["jacobian_eigenvalues"] = sol.jacobian_eigenvalues;
  j["residual"] = sol.residual;
  j["nondegenerate"] = sol.nondegenerate;
  j["reversible"] = sol.reversible;
  j["label"] = sol.label;
  return j;
}

}  // namespace blochforge
