#pragma once

#include <Eigen/Dense>

#include <map>
#include <memory>
#include <ostream>

#include "blochforge/acme.hpp"
#include "blochforge/continuation.hpp"
#include "blochforge/krylov.hpp"

namespace blochforge {

/// The stationary GP equation -Delta phi + (V - omega) phi + sigma |phi|^2 phi = 0
/// for phi = sum_j e^{i k_j.x} eta_j, split into one periodic equation per
/// distinct quasimomentum k_j:
///   -(grad + i k_j)^2 eta_j + (V - omega) eta_j
///     + sigma sum_{(a,b,c)} e^{i m.x} eta_a conj(eta_b) eta_c = 0.
/// Unknowns are the real and imaginary parts of all eta_j, stored
/// component after component as interleaved complex samples.
class NlbProblem {
 public:
  NlbProblem(PotentialSpec potential, TorusGrid grid, double sigma, std::vector<KPoint> kpoints)
      : potential_(std::move(potential)), grid_(grid), sigma_(sigma), kpoints_(std::move(kpoints)) {
    require(!kpoints_.empty(), "NlbProblem: no components");
    for (std::size_t i = 0; i < kpoints_.size(); ++i) {
      require(kpoints_[i].dim() == grid_.dim, "NlbProblem: k-point dimension does not match grid");
      for (std::size_t j = 0; j < i; ++j) require(!(kpoints_[i] == kpoints_[j]), "NlbProblem: repeated k-point");
    }
    V_ = sample_potential(potential_, grid_);
    const double vmax = *std::max_element(V_.begin(), V_.end());
    triples_ = index_sets(kpoints_);
    for (const auto& k : kpoints_) {
      auto kd = k.to_double();
      symbols_.push_back(shifted_laplacian_symbol(grid_, kd));
      RealVec pre(grid_.size());
      for (std::size_t i = 0; i < pre.size(); ++i) pre[i] = 1.0 / (2.0 + vmax + symbols_.back()[i]);
      precond_.push_back(std::move(pre));
    }
    for (const auto& ts : triples_)
      for (const auto& t : ts) carrier(t.m);
    for (std::size_t j = 0; j < kpoints_.size(); ++j) {
      const KPoint target = kpoints_[j].negated();
      int partner = -1;
      for (std::size_t i = 0; i < kpoints_.size(); ++i)
        if (kpoints_[i] == target) partner = static_cast<int>(i);
      partner_.push_back(partner);
      std::vector<int> m(grid_.dim, 0);
      if (partner >= 0)
        for (int d = 0; d < grid_.dim; ++d)
          m[d] = static_cast<int>((kpoints_[j][d] + kpoints_[partner][d]).num());
      std::vector<int> neg(m.size());
      for (std::size_t d = 0; d < m.size(); ++d) neg[d] = -m[d];
      partner_phase_.push_back(carrier(neg));
    }
  }

  static NlbProblem from_selection(const ModeSelection& sel, const PotentialSpec& potential, const TorusGrid& grid,
                                   double sigma) {
    std::vector<KPoint> ks;
    for (const auto& k : sel.closure)
      if (std::find(ks.begin(), ks.end(), k) == ks.end()) ks.push_back(k);
    return {potential, grid, sigma, ks};
  }

  [[nodiscard]] const TorusGrid& grid() const { return grid_; }
  [[nodiscard]] const PotentialSpec& potential() const { return potential_; }
  [[nodiscard]] double sigma() const { return sigma_; }
  [[nodiscard]] const std::vector<KPoint>& kpoints() const { return kpoints_; }
  [[nodiscard]] int components() const { return static_cast<int>(kpoints_.size()); }
  [[nodiscard]] std::size_t unknowns() const { return 2 * grid_.size() * kpoints_.size(); }
  [[nodiscard]] const std::vector<int>& partners() const { return partner_; }
  [[nodiscard]] bool reversible() const {
    return std::all_of(partner_.begin(), partner_.end(), [](int p) { return p >= 0; });
  }
  [[nodiscard]] int component_of(const KPoint& k) const {
    for (std::size_t i = 0; i < kpoints_.size(); ++i)
      if (kpoints_[i] == k) return static_cast<int>(i);
    return -1;
  }

  /// Residual of the component equations; `u` and `out` hold M * G samples.
  void residual(std::span<const cplx> u, double omega, std::span<cplx> out) const {
    const std::size_t G = grid_.size();
    CplxVec scratch;
    for (int j = 0; j < components(); ++j) {
      auto uj = u.subspan(j * G, G);
      auto oj = out.subspan(j * G, G);
      std::copy(uj.begin(), uj.end(), oj.begin());
      apply_diagonal(grid_, oj, symbols_[j], scratch);
      for (std::size_t i = 0; i < G; ++i) oj[i] += (V_[i] - omega) * uj[i];
      if (sigma_ == 0.0) continue;
      for (const auto& t : triples_[j]) {
        const auto& e = carriers_.at(t.m);
        auto ua = u.subspan(t.a * G, G), ub = u.subspan(t.b * G, G), uc = u.subspan(t.c * G, G);
        for (std::size_t i = 0; i < G; ++i) oj[i] += sigma_ * e[i] * ua[i] * std::conj(ub[i]) * uc[i];
      }
    }
  }

  /// Jacobian (a real-linear map) at `u` applied to `v`.
  void apply_jacobian(std::span<const cplx> u, double omega, std::span<const cplx> v, std::span<cplx> out) const {
    const std::size_t G = grid_.size();
    CplxVec scratch;
    for (int j = 0; j < components(); ++j) {
      auto vj = v.subspan(j * G, G);
      auto oj = out.subspan(j * G, G);
      std::copy(vj.begin(), vj.end(), oj.begin());
      apply_diagonal(grid_, oj, symbols_[j], scratch);
      for (std::size_t i = 0; i < G; ++i) oj[i] += (V_[i] - omega) * vj[i];
      if (sigma_ == 0.0) continue;
      for (const auto& t : triples_[j]) {
        const auto& e = carriers_.at(t.m);
        auto ua = u.subspan(t.a * G, G), ub = u.subspan(t.b * G, G), uc = u.subspan(t.c * G, G);
        auto va = v.subspan(t.a * G, G), vb = v.subspan(t.b * G, G), vc = v.subspan(t.c * G, G);
        for (std::size_t i = 0; i < G; ++i)
          oj[i] += sigma_ * e[i] *
                   (va[i] * std::conj(ub[i]) * uc[i] + ua[i] * std::conj(vb[i]) * uc[i] +
                    ua[i] * std::conj(ub[i]) * vc[i]);
      }
    }
  }

  void precondition(std::span<cplx> v) const {
    const std::size_t G = grid_.size();
    CplxVec scratch;
    for (int j = 0; j < components(); ++j) apply_diagonal(grid_, v.subspan(j * G, G), precond_[j], scratch);
  }

  /// eta_j <- (eta_j + e^{-i m_j.x} conj(eta_{j'})) / 2 with m_j = k_j + k_{j'},
  /// the projection onto solutions with phi_{j'} = conj(phi_j).
  void project_reversible(std::span<cplx> u) const {
    require(reversible(), "project_reversible: a component has no reflected partner");
    const std::size_t G = grid_.size();
    CplxVec out(u.size());
    for (int j = 0; j < components(); ++j)
      for (std::size_t i = 0; i < G; ++i)
        out[j * G + i] = 0.5 * (u[j * G + i] + partner_phase_[j][i] * std::conj(u[partner_[j] * G + i]));
    std::copy(out.begin(), out.end(), u.begin());
  }

  /// max_j ||eta_{j'} - e^{-i m_j.x} conj(eta_j)||_{L^2(P)}
  [[nodiscard]] double reversibility_defect(std::span<const cplx> u) const {
    if (!reversible()) return std::numeric_limits<double>::infinity();
    const std::size_t G = grid_.size();
    double worst = 0.0;
    for (int j = 0; j < components(); ++j) {
      double s = 0.0;
      const int p = partner_[j];
      for (std::size_t i = 0; i < G; ++i)
        s += std::norm(u[p * G + i] - partner_phase_[p][i] * std::conj(u[j * G + i]));
      worst = std::max(worst, std::sqrt(s * grid_.weight()));
    }
    return worst;
  }

 private:
  const CplxVec& carrier(const std::vector<int>& m) {
    if (auto it = carriers_.find(m); it != carriers_.end()) return it->second;
    CplxVec e(grid_.size());
    for (std::size_t i = 0; i < e.size(); ++i) {
      auto x = grid_.point(i);
      double s = 0.0;
      for (int d = 0; d < grid_.dim; ++d) s += m[d] * x[d];
      e[i] = std::polar(1.0, s);
    }
    return carriers_.emplace(m, std::move(e)).first->second;
  }

  PotentialSpec potential_;
  TorusGrid grid_;
  double sigma_;
  std::vector<KPoint> kpoints_;
  RealVec V_;
  std::vector<std::vector<Triple>> triples_;
  std::vector<RealVec> symbols_, precond_;
  std::map<std::vector<int>, CplxVec> carriers_;
  std::vector<int> partner_;
  std::vector<CplxVec> partner_phase_;
};

namespace detail {

inline std::span<cplx> as_complex(Eigen::VectorXd& v) {
  return {reinterpret_cast<cplx*>(v.data()), static_cast<std::size_t>(v.size() / 2)};
}
inline std::span<const cplx> as_complex(const Eigen::VectorXd& v) {
  return {reinterpret_cast<const cplx*>(v.data()), static_cast<std::size_t>(v.size() / 2)};
}

}  // namespace detail

struct NlbSolverOptions {
  std::size_t dense_limit = 600;  // bordered systems up to this size use LU
  GmresOptions gmres{};
};

/// PathProblem adapter: the gauge is fixed by <u, i u_ref> = 0 with a
/// Lagrange multiplier bordering the Jacobian.
class NlbPath : public PathProblem {
 public:
  NlbPath(std::shared_ptr<const NlbProblem> problem, NlbSolverOptions opt = {})
      : p_(std::move(problem)), opt_(opt) {}

  [[nodiscard]] Eigen::Index size() const override { return static_cast<Eigen::Index>(p_->unknowns()); }
  [[nodiscard]] const NlbProblem& problem() const { return *p_; }

  [[nodiscard]] Eigen::VectorXd residual(const Eigen::VectorXd& u, double omega) const override {
    Eigen::VectorXd F(u.size());
    p_->residual(detail::as_complex(u), omega, detail::as_complex(F));
    return F;
  }
  [[nodiscard]] Eigen::VectorXd residual_omega(const Eigen::VectorXd& u, double) const override { return -u; }

  void linearize(const Eigen::VectorXd& u, double omega, const Eigen::VectorXd& reference) override {
    u_ = u;
    omega_ = omega;
    g_ = Eigen::VectorXd(u.size());
    auto gc = detail::as_complex(g_);
    auto rc = detail::as_complex(reference);
    for (std::size_t i = 0; i < gc.size(); ++i) gc[i] = cplx{0.0, 1.0} * rc[i];
    const double gn = g_.norm();
    has_gauge_ = gn > 0.0;
    if (has_gauge_) g_ /= gn;
    lu_.reset();
    if (static_cast<std::size_t>(size()) + 1 <= opt_.dense_limit) {
      Eigen::MatrixXd J = dense_matrix([this](const Eigen::VectorXd& x) { return bordered(x); }, size() + 1);
      lu_.emplace(J);
    }
  }

  [[nodiscard]] Eigen::VectorXd solve(const Eigen::VectorXd& rhs) override {
    Eigen::VectorXd b(size() + 1);
    b.head(size()) = rhs;
    b(size()) = 0.0;
    if (lu_) return lu_->solve(b).head(size());
    auto res = gmres([this](const Eigen::VectorXd& x) { return bordered(x); },
                     [this](const Eigen::VectorXd& x) {
                       Eigen::VectorXd y = x;
                       p_->precondition(detail::as_complex(y).subspan(0, p_->unknowns() / 2));
                       return y;
                     },
                     b, opt_.gmres);
    if (!res.converged)
      throw ConvergenceError("NLB linear solve: GMRES stalled at relative residual " +
                             std::to_string(res.relative_residual));
    last_gmres_iterations_ = res.iterations;
    return res.x.head(size());
  }

  [[nodiscard]] double dot(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const override {
    return a.dot(b) * p_->grid().weight();
  }
  void project(Eigen::VectorXd& u) const override { p_->project_reversible(detail::as_complex(u)); }
  [[nodiscard]] int last_gmres_iterations() const { return last_gmres_iterations_; }

 private:
  // [J g; g^T 0] applied to (x, lambda). The trailing double is padding so
  // the complex view stays aligned with the field part.
  [[nodiscard]] Eigen::VectorXd bordered(const Eigen::VectorXd& x) const {
    const Eigen::Index n = size();
    Eigen::VectorXd y(n + 1);
    Eigen::VectorXd xf = x.head(n), yf(n);
    p_->apply_jacobian(detail::as_complex(u_), omega_, detail::as_complex(xf), detail::as_complex(yf));
    if (has_gauge_) {
      y.head(n) = yf + x(n) * g_;
      y(n) = g_.dot(xf);
    } else {
      y.head(n) = yf;
      y(n) = x(n);
    }
    return y;
  }

  std::shared_ptr<const NlbProblem> p_;
  NlbSolverOptions opt_;
  Eigen::VectorXd u_, g_;
  double omega_ = 0.0;
  bool has_gauge_ = false;
  std::optional<Eigen::PartialPivLU<Eigen::MatrixXd>> lu_;
  int last_gmres_iterations_ = 0;
};

/// A quasi-periodic candidate phi = sum_j e^{i k_j.x} eta_j.
struct NlbState {
  std::shared_ptr<const NlbProblem> problem;
  Eigen::VectorXd u;  // interleaved real/imaginary samples of all eta_j
  double omega = 0.0;

  [[nodiscard]] double sigma() const { return problem->sigma(); }
  [[nodiscard]] int components() const { return problem->components(); }

  [[nodiscard]] ComplexField eta(int j) const {
    const std::size_t G = problem->grid().size();
    auto c = detail::as_complex(u).subspan(j * G, G);
    return {problem->grid(), CplxVec(c.begin(), c.end()), problem->kpoints()[j].to_double()};
  }

  /// Samples of phi on the cell.
  [[nodiscard]] ComplexField assemble() const {
    const auto& g = problem->grid();
    ComplexField out(g);
    for (int j = 0; j < components(); ++j) {
      auto k = problem->kpoints()[j].to_double();
      auto e = eta(j);
      for (std::size_t i = 0; i < g.size(); ++i) {
        auto x = g.point(i);
        double s = 0.0;
        for (int d = 0; d < g.dim; ++d) s += k[d] * x[d];
        out[i] += std::polar(1.0, s) * e[i];
      }
    }
    return out;
  }

  /// (sum_j ||eta_j||^2_{L^2(P)})^{1/2}, the L^2 norm of phi averaged over
  /// the common period of all components.
  [[nodiscard]] double norm() const { return u.norm() * std::sqrt(problem->grid().weight()); }

  [[nodiscard]] double residual_norm() const {
    Eigen::VectorXd F(u.size());
    problem->residual(detail::as_complex(u), omega, detail::as_complex(F));
    return F.norm() * std::sqrt(problem->grid().weight());
  }

  [[nodiscard]] double reversibility_defect() const { return problem->reversibility_defect(detail::as_complex(u)); }
};

inline NlbState zero_state(std::shared_ptr<const NlbProblem> problem, double omega) {
  const auto n = static_cast<Eigen::Index>(problem->unknowns());
  return {std::move(problem), Eigen::VectorXd::Zero(n), omega};
}

/// eta = eps sum_{stars at k_j} A_i p_i, omega = omega* + eps^2 Omega.
inline NlbState asymptotic_guess(std::shared_ptr<const NlbProblem> problem, const ModeSelection& sel,
                                 const std::vector<BlochMode>& modes, const CVec& A, double Omega, double eps) {
  require(static_cast<int>(modes.size()) == sel.N() && static_cast<int>(A.size()) == sel.N(),
          "asymptotic_guess: need one mode and one amplitude per star");
  require(eps >= 0.0, "asymptotic_guess: epsilon must be non-negative");
  NlbState s = zero_state(problem, sel.omega_star + eps * eps * Omega);
  auto uc = detail::as_complex(s.u);
  const std::size_t G = problem->grid().size();
  for (int i = 0; i < sel.N(); ++i) {
    require_same_grid(modes[i].p.grid, problem->grid(), "asymptotic_guess");
    const int j = problem->component_of(sel.stars[i].k);
    require(j >= 0, "asymptotic_guess: star " + sel.stars[i].k.str() + " is not a component");
    for (std::size_t x = 0; x < G; ++x) uc[j * G + x] += eps * A[i] * modes[i].p[x];
  }
  return s;
}

struct NlbNewtonOptions {
  PathNewtonOptions newton{};
  NlbSolverOptions solver{};
};

struct NlbNewtonResult {
  NlbState state;
  NewtonStatus status = NewtonStatus::not_converged;
  int iterations = 0;
  double residual = 0.0;
};

inline NlbNewtonResult newton_solve(const NlbState& guess, const NlbNewtonOptions& opt = {}) {
  NlbPath path(guess.problem, opt.solver);
  auto r = path_newton(path, guess.u, guess.omega, opt.newton);
  return {{guess.problem, r.u, guess.omega}, r.status, r.iterations, r.residual};
}

struct NlbBranchPoint {
  double omega = 0.0;
  NlbState state;
  double norm = 0.0;
  double arclength = 0.0;
  double domega_ds = 0.0;
};

struct NlbBranch {
  std::vector<NlbBranchPoint> points;
  std::vector<std::size_t> folds;
  int direction = 1;
  BranchStatus status = BranchStatus::active;
};

inline NlbBranch continue_branch(const NlbState& seed, int direction, const ContinuationOptions& opt = {},
                                 const NlbSolverOptions& solver = {}) {
  NlbPath path(seed.problem, solver);
  auto r = continue_path(path, seed.u, seed.omega, direction, opt);
  NlbBranch b;
  b.direction = r.direction;
  b.status = r.status;
  b.folds = r.folds;
  for (auto& p : r.points)
    b.points.push_back({p.omega, {seed.problem, std::move(p.u), p.omega}, p.norm, p.arclength, p.domega_ds});
  return b;
}

/// Solution at a prescribed omega, seeded by interpolating the branch points
/// that bracket it.
inline std::optional<NlbState> solve_on_branch(const NlbBranch& b, double omega, const NlbNewtonOptions& opt = {}) {
  for (std::size_t i = 1; i < b.points.size(); ++i) {
    const auto& p0 = b.points[i - 1];
    const auto& p1 = b.points[i];
    if ((omega - p0.omega) * (omega - p1.omega) > 0.0) continue;
    const double t = p1.omega == p0.omega ? 0.0 : (omega - p0.omega) / (p1.omega - p0.omega);
    NlbState guess{p0.state.problem, (1 - t) * p0.state.u + t * p1.state.u, omega};
    auto r = newton_solve(guess, opt);
    if (r.status == NewtonStatus::converged) return r.state;
  }
  return std::nullopt;
}

inline void write_branch_csv(std::ostream& os, const NlbBranch& b) {
  os << "omega,l2_norm,arclength,domega_ds,status\n";
  os.precision(12);
  for (const auto& p : b.points)
    os << p.omega << ',' << p.norm << ',' << p.arclength << ',' << p.domega_ds << ',' << to_string(b.status)
       << '\n';
}

/// Full state with grid metadata, suitable for restarting.
inline nlohmann::json state_to_json(const NlbState& s) {
  nlohmann::json j;
  const auto& g = s.problem->grid();
  j["grid"] = {{"dim", g.dim}, {"n", g.n}};
  j["omega"] = s.omega;
  j["sigma"] = s.sigma();
  j["components"] = nlohmann::json::array();
  for (int c = 0; c < s.components(); ++c) {
    nlohmann::json comp;
    comp["k"] = nlohmann::json::array();
    for (const auto& r : s.problem->kpoints()[c].coords()) comp["k"].push_back(r.str());
    auto e = s.eta(c);
    nlohmann::json re = nlohmann::json::array(), im = nlohmann::json::array();
    for (const auto& z : e.values) {
      re.push_back(z.real());
      im.push_back(z.imag());
    }
    comp["re"] = std::move(re);
    comp["im"] = std::move(im);
    j["components"].push_back(std::move(comp));
  }
  return j;
}

inline NlbState state_from_json(const nlohmann::json& j, std::shared_ptr<const NlbProblem> problem) {
  const auto& g = problem->grid();
  require(j.at("grid").at("dim").get<int>() == g.dim && j.at("grid").at("n").get<int>() == g.n,
          "state_from_json: grid mismatch");
  require(static_cast<int>(j.at("components").size()) == problem->components(),
          "state_from_json: component count mismatch");
  NlbState s = zero_state(problem, j.at("omega").get<double>());
  auto uc = detail::as_complex(s.u);
  for (int c = 0; c < problem->components(); ++c) {
    const auto& comp = j["components"][c];
    std::vector<std::string> k = comp.at("k").get<std::vector<std::string>>();
    require(KPoint::parse(k) == problem->kpoints()[c], "state_from_json: k-point mismatch");
    const auto& re = comp.at("re");
    const auto& im = comp.at("im");
    require(re.size() == g.size() && im.size() == g.size(), "state_from_json: sample count mismatch");
    for (std::size_t i = 0; i < g.size(); ++i) uc[c * g.size() + i] = {re[i].get<double>(), im[i].get<double>()};
  }
  return s;
}

}  // namespace blochforge
