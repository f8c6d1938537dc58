#pragma once

#include <cmath>
#include <numbers>
#include <ostream>

#include "blochforge/nlb.hpp"

namespace blochforge {

/// Vertex grid x_i = -L + i h, h = 2L / (n - 1), on the native line.
struct LineGrid {
  double L = 100.0;
  int n = 4096;

  [[nodiscard]] double h() const { return 2.0 * L / (n - 1); }
  [[nodiscard]] double x(int i) const { return -L + i * h(); }
};

inline RealVec sin2_line_potential(const LineGrid& g, double period = 10.0) {
  RealVec v(g.n);
  for (int i = 0; i < g.n; ++i) {
    const double s = std::sin(std::numbers::pi * g.x(i) / period);
    v[i] = s * s;
  }
  return v;
}

/// A real profile on the line.
struct LineProfile {
  LineGrid grid;
  RealVec values;
  double omega = 0.0;
  double sigma = 1.0;

  /// Trapezoid-rule L^2 norm.
  [[nodiscard]] double norm() const {
    double s = 0.0;
    for (int i = 0; i < grid.n; ++i) s += (i == 0 || i == grid.n - 1 ? 0.5 : 1.0) * values[i] * values[i];
    return std::sqrt(s * grid.h());
  }
  /// max_i |phi(x_i) - phi(-x_i)|
  [[nodiscard]] double evenness_defect() const {
    double d = 0.0;
    for (int i = 0; i < grid.n; ++i) d = std::max(d, std::abs(values[i] - values[grid.n - 1 - i]));
    return d;
  }
  /// Centered difference across each end, using the ghost values of the
  /// discrete Neumann closure; zero up to rounding by construction.
  [[nodiscard]] double neumann_residual() const {
    const double h = grid.h();
    // Ghost values phi_{-1} = phi_1 and phi_n = phi_{n-2}.
    const double left = (values[1] - values[1]) / (2 * h);
    const double right = (values[grid.n - 2] - values[grid.n - 2]) / (2 * h);
    return std::max(std::abs(left), std::abs(right));
  }
  /// sup |phi| over x0 <= |x| <= L - margin.
  [[nodiscard]] double tail_sup(double x0, double margin = 30.0) const {
    double m = 0.0;
    for (int i = 0; i < grid.n; ++i) {
      const double a = std::abs(grid.x(i));
      if (a >= x0 && a <= grid.L - margin) m = std::max(m, std::abs(values[i]));
    }
    return m;
  }
};

/// a sech(x^2 / w)
inline LineProfile sech_guess(double a = 0.5, double w = 50.0, LineGrid grid = {}) {
  require(w > 0.0, "sech_guess: w must be positive");
  LineProfile p{grid, RealVec(grid.n), 0.0, 1.0};
  for (int i = 0; i < grid.n; ++i) {
    const double x = grid.x(i);
    p.values[i] = a / std::cosh(x * x / w);
  }
  return p;
}

/// -phi'' + (V - omega) phi + sigma phi^3 = 0 with second-order finite
/// differences and a ghost-point Neumann closure. The Jacobian is
/// tridiagonal and is factored by the Thomas algorithm.
class LinePath : public PathProblem {
 public:
  LinePath(LineGrid grid, RealVec V, double sigma) : g_(grid), V_(std::move(V)), sigma_(sigma) {
    require(static_cast<int>(V_.size()) == g_.n, "LinePath: potential size does not match grid");
    require(g_.n >= 4, "LinePath: need at least four points");
  }

  [[nodiscard]] Eigen::Index size() const override { return g_.n; }
  [[nodiscard]] const LineGrid& grid() const { return g_; }
  [[nodiscard]] double sigma() const { return sigma_; }
  [[nodiscard]] const RealVec& potential() const { return V_; }

  [[nodiscard]] Eigen::VectorXd residual(const Eigen::VectorXd& u, double omega) const override {
    const int n = g_.n;
    const double ih2 = 1.0 / (g_.h() * g_.h());
    Eigen::VectorXd F(n);
    for (int i = 0; i < n; ++i) {
      const double left = i == 0 ? u(1) : u(i - 1);
      const double right = i == n - 1 ? u(n - 2) : u(i + 1);
      F(i) = (2 * u(i) - left - right) * ih2 + (V_[i] - omega) * u(i) + sigma_ * u(i) * u(i) * u(i);
    }
    return F;
  }
  [[nodiscard]] Eigen::VectorXd residual_omega(const Eigen::VectorXd& u, double) const override { return -u; }

  void linearize(const Eigen::VectorXd& u, double omega, const Eigen::VectorXd&) override {
    const int n = g_.n;
    const double ih2 = 1.0 / (g_.h() * g_.h());
    lower_.assign(n, -ih2);
    upper_.assign(n, -ih2);
    diag_.resize(n);
    for (int i = 0; i < n; ++i) diag_[i] = 2 * ih2 + V_[i] - omega + 3 * sigma_ * u(i) * u(i);
    upper_[0] = -2 * ih2;
    lower_[n - 1] = -2 * ih2;
    // Forward elimination, stored for repeated solves.
    c_.assign(n, 0.0);
    m_.assign(n, 0.0);
    m_[0] = diag_[0];
    for (int i = 1; i < n; ++i) {
      if (m_[i - 1] == 0.0) throw ConvergenceError("LinePath: zero pivot in tridiagonal solve");
      c_[i] = lower_[i] / m_[i - 1];
      m_[i] = diag_[i] - c_[i] * upper_[i - 1];
    }
    if (m_[n - 1] == 0.0) throw ConvergenceError("LinePath: singular Jacobian");
  }

  [[nodiscard]] Eigen::VectorXd solve(const Eigen::VectorXd& rhs) override {
    const int n = g_.n;
    Eigen::VectorXd y = rhs;
    for (int i = 1; i < n; ++i) y(i) -= c_[i] * y(i - 1);
    y(n - 1) /= m_[n - 1];
    for (int i = n - 2; i >= 0; --i) y(i) = (y(i) - upper_[i] * y(i + 1)) / m_[i];
    return y;
  }

  [[nodiscard]] double dot(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const override {
    double s = a.dot(b) - 0.5 * (a(0) * b(0) + a(g_.n - 1) * b(g_.n - 1));
    return s * g_.h();
  }

  [[nodiscard]] LineProfile profile(const Eigen::VectorXd& u, double omega) const {
    return {g_, RealVec(u.data(), u.data() + u.size()), omega, sigma_};
  }

 private:
  LineGrid g_;
  RealVec V_;
  double sigma_;
  std::vector<double> lower_, diag_, upper_, c_, m_;
};

inline Eigen::VectorXd to_eigen(const RealVec& v) { return Eigen::Map<const Eigen::VectorXd>(v.data(), v.size()); }

struct LineSolveResult {
  LineProfile profile;
  NewtonStatus status = NewtonStatus::not_converged;
  int iterations = 0;
  double residual = 0.0;
};

inline LineSolveResult solve_line(const RealVec& V, double omega, double sigma, const LineProfile& guess,
                                  const PathNewtonOptions& opt = {}) {
  LinePath path(guess.grid, V, sigma);
  auto r = path_newton(path, to_eigen(guess.values), omega, opt);
  return {path.profile(r.u, omega), r.status, r.iterations, r.residual};
}

/// Discrete PDE residual of a profile in the trapezoid norm.
inline double line_residual(const RealVec& V, const LineProfile& p) {
  LinePath path(p.grid, V, p.sigma);
  return path.norm(path.residual(to_eigen(p.values), p.omega));
}

/// A periodic real function on the native line, sampled on one period
/// [-P/2, P/2) and evaluated anywhere by trigonometric interpolation.
class PeriodicProfile {
 public:
  PeriodicProfile() = default;
  PeriodicProfile(double period, const RealVec& samples) : period_(period) {
    TorusGrid g(1, static_cast<int>(samples.size()));
    CplxVec v(samples.begin(), samples.end());
    coeffs_ = to_coefficients(g, v);
    for (std::size_t i = 0; i < coeffs_.size(); ++i) modes_.push_back(g.mode(static_cast<int>(i)));
    amplitude_ = 0.0;
    for (double s : samples) amplitude_ = std::max(amplitude_, std::abs(s));
  }

  /// Native-unit profile of a one-component NLB at k = 0 on the canonical
  /// cell, mapped to a period of 2 pi * scaling.length.
  static PeriodicProfile from_nlb(const NlbState& s, const NativeScaling& scaling) {
    require(s.problem->grid().dim == 1 && s.components() == 1, "PeriodicProfile: need a 1D one-component NLB");
    require(s.problem->kpoints()[0] == KPoint({Rational(0)}), "PeriodicProfile: NLB must be periodic (k = 0)");
    auto e = s.eta(0);
    RealVec v(e.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = scaling.amplitude_to_native(e[i].real());
    return {2.0 * std::numbers::pi * scaling.length, v};
  }

  [[nodiscard]] double period() const { return period_; }
  [[nodiscard]] double amplitude() const { return amplitude_; }

  [[nodiscard]] double operator()(double x) const {
    const double y = 2.0 * std::numbers::pi * x / period_;
    double s = 0.0;
    const int n = static_cast<int>(coeffs_.size());
    for (std::size_t i = 0; i < coeffs_.size(); ++i) {
      const int m = modes_[i];
      const double w = (m == -n / 2) ? 0.5 : 1.0;
      s += w * (coeffs_[i] * std::polar(1.0, m * y)).real();
      if (m == -n / 2) s += w * (coeffs_[i] * std::polar(1.0, -m * y)).real();
    }
    return s;
  }

 private:
  double period_ = 1.0;
  CplxVec coeffs_;
  std::vector<int> modes_;
  double amplitude_ = 0.0;
};

struct TailMatch {
  double distance = 0.0;  // sup-norm mismatch, worse of the two tails
  double relative = 0.0;  // distance / NLB amplitude
  double shift_left = 0.0, sign_left = 1.0;
  double shift_right = 0.0, sign_right = 1.0;
};

/// On each tail window x0 <= |x| <= L - margin separately, the sup of
/// |phi(x) - s N(x + t)| minimized over the translations t by multiples of
/// `lattice` within one NLB period and the sign s; the larger of the two.
inline TailMatch tail_match(const LineProfile& p, const PeriodicProfile& nlb, double x0, double lattice = 10.0,
                            double margin = 30.0) {
  require(nlb.period() > 0.0 && lattice > 0.0, "tail_match: bad period");
  require(x0 >= 0.0 && x0 < p.grid.L - margin, "tail_match: empty window");
  const int shifts = std::max(1, static_cast<int>(std::lround(nlb.period() / lattice)));
  auto side = [&](double dir, double& shift, double& sign) {
    std::vector<int> idx;
    for (int i = 0; i < p.grid.n; ++i) {
      const double x = dir * p.grid.x(i);
      if (x >= x0 && x <= p.grid.L - margin) idx.push_back(i);
    }
    double best = std::numeric_limits<double>::infinity();
    for (int s = 0; s < shifts; ++s)
      for (double sg : {1.0, -1.0}) {
        double d = 0.0;
        for (int i : idx) d = std::max(d, std::abs(p.values[i] - sg * nlb(p.grid.x(i) + s * lattice)));
        if (d < best) {
          best = d;
          shift = s * lattice;
          sign = sg;
        }
      }
    return best;
  };
  TailMatch m;
  m.distance = std::max(side(-1.0, m.shift_left, m.sign_left), side(1.0, m.shift_right, m.sign_right));
  m.relative = nlb.amplitude() > 0.0 ? m.distance / nlb.amplitude() : std::numeric_limits<double>::infinity();
  return m;
}

/// Periodic Bloch factor of the canonical cell, normalized to unit cell
/// mean of |xi|^2 and sampled on the native line.
inline RealVec edge_wave_on_line(const BlochMode& mode, const NativeScaling& scaling, const LineGrid& g) {
  RealVec cell(mode.p.size());
  for (std::size_t i = 0; i < cell.size(); ++i) cell[i] = mode.p[i].real() * std::sqrt(2.0 * std::numbers::pi);
  PeriodicProfile pp(2.0 * std::numbers::pi * scaling.length, cell);
  RealVec out(g.n);
  for (int i = 0; i < g.n; ++i) out[i] = pp(g.x(i));
  if (out[g.n / 2] < 0.0)
    for (auto& v : out) v = -v;
  return out;
}

/// Envelope approximation of the gap soliton bifurcating from a band edge:
///   phi = sqrt(2 Omega / (sigma mu)) sech(sqrt(Omega / D) x) xi(x),
/// omega = s + Omega, D = -omega''(k)/2 (native units), mu = <xi^4>.
inline LineProfile gap_soliton_guess(const RealVec& xi, double edge, double curvature, double omega, double sigma,
                                     const LineGrid& g) {
  const double Omega = omega - edge, D = -0.5 * curvature;
  require(Omega * sigma > 0.0 && Omega * D > 0.0,
          "gap_soliton_guess: no gap soliton bifurcates on this side of the edge for this sigma");
  double mu = 0.0, cnt = 0.0;
  for (int i = 0; i < g.n; ++i)
    if (std::abs(g.x(i)) <= 10.0) {
      mu += std::pow(xi[i], 4);
      cnt += 1.0;
    }
  mu /= cnt;
  const double a = std::sqrt(2.0 * Omega / (sigma * mu)), b = std::sqrt(Omega / D);
  LineProfile p{g, RealVec(g.n), omega, sigma};
  for (int i = 0; i < g.n; ++i) p.values[i] = a / std::cosh(b * g.x(i)) * xi[i];
  return p;
}

/// Spectral edges s_1 < s_2 < ... of -d^2/dx^2 + sin^2(pi x / 10) in native
/// units. On the canonical cell of two potential periods every edge sits
/// at k = 0, as the ascending eigenvalues there.
inline std::vector<double> sin2_band_edges(int count = 6, int n = 128) {
  const auto pot = PotentialSpec::sin2_1d();
  const auto sc = native_scaling(pot);
  const double k0[1] = {0.0};
  std::vector<double> edges;
  for (const auto& m : solve_bloch(pot, TorusGrid(1, n), k0, count)) edges.push_back(sc.omega_to_native(m.omega));
  return edges;
}

/// Newton solution of the on-site gap soliton near edge s_e (1-based) of the
/// sin^2 lattice, seeded from the envelope approximation.
inline LineSolveResult sin2_gap_soliton(int edge, double omega, double sigma, const LineGrid& g = {}, int n = 128) {
  const auto pot = PotentialSpec::sin2_1d();
  const auto sc = native_scaling(pot);
  const TorusGrid cg(1, n);
  const double k0[1] = {0.0}, dk = 1e-3, k1[1] = {dk};
  const auto mode = solve_bloch(pot, cg, k0, edge)[edge - 1];
  const double curvature = 2.0 * (solve_bloch(pot, cg, k1, edge)[edge - 1].omega - mode.omega) / (dk * dk);
  const auto xi = edge_wave_on_line(mode, sc, g);
  const auto guess = gap_soliton_guess(xi, sc.omega_to_native(mode.omega), curvature, omega, sigma, g);
  return solve_line(sin2_line_potential(g), omega, sigma, guess);
}

struct LineBranchPoint {
  double omega = 0.0;
  LineProfile profile;
  double norm = 0.0;
  double arclength = 0.0;
  double domega_ds = 0.0;
  bool in_band = false;
  double delocalization = 0.0;  // tail_sup over the tail window
};

struct LineBranch {
  std::vector<LineBranchPoint> points;
  std::vector<std::size_t> folds;
  std::vector<std::size_t> band_entries;  // first point inside a band after a gap point
  BranchStatus status = BranchStatus::active;
  int direction = 1;
};

/// Whether omega lies in the spectrum given edges s_1 < s_2 < ... (bands
/// [s_1, s_2], [s_3, s_4], ...; an odd count leaves the last band open).
inline bool in_spectrum(double omega, const std::vector<double>& edges) {
  for (std::size_t i = 0; i < edges.size(); i += 2) {
    const double hi = i + 1 < edges.size() ? edges[i + 1] : std::numeric_limits<double>::infinity();
    if (omega >= edges[i] && omega <= hi) return true;
  }
  return false;
}

inline LineBranch continue_line(const RealVec& V, const LineProfile& seed, int direction,
                                const ContinuationOptions& opt, const std::vector<double>& edges,
                                double tail_x0 = 50.0) {
  LinePath path(seed.grid, V, seed.sigma);
  auto r = continue_path(path, to_eigen(seed.values), seed.omega, direction, opt);
  LineBranch b;
  b.direction = r.direction;
  b.status = r.status;
  b.folds = r.folds;
  for (auto& p : r.points) {
    LineBranchPoint q;
    q.omega = p.omega;
    q.profile = path.profile(p.u, p.omega);
    q.norm = p.norm;
    q.arclength = p.arclength;
    q.domega_ds = p.domega_ds;
    q.in_band = in_spectrum(p.omega, edges);
    q.delocalization = q.profile.tail_sup(tail_x0);
    if (!b.points.empty() && q.in_band && !b.points.back().in_band) b.band_entries.push_back(b.points.size());
    b.points.push_back(std::move(q));
  }
  return b;
}

/// Newton at a prescribed omega seeded from the bracketing branch points.
inline std::optional<LineProfile> solve_on_line_branch(const RealVec& V, const LineBranch& b, double omega,
                                                       const PathNewtonOptions& opt = {}) {
  for (std::size_t i = 1; i < b.points.size(); ++i) {
    const auto& p0 = b.points[i - 1];
    const auto& p1 = b.points[i];
    if ((omega - p0.omega) * (omega - p1.omega) > 0.0) continue;
    const double t = p1.omega == p0.omega ? 0.0 : (omega - p0.omega) / (p1.omega - p0.omega);
    LineProfile guess = p0.profile;
    for (std::size_t k = 0; k < guess.values.size(); ++k)
      guess.values[k] = (1 - t) * p0.profile.values[k] + t * p1.profile.values[k];
    auto r = solve_line(V, omega, p0.profile.sigma, guess, opt);
    if (r.status == NewtonStatus::converged) return r.profile;
  }
  return std::nullopt;
}

/// Local maxima of |phi| above `fraction` of the global maximum.
inline int count_humps(const LineProfile& p, double fraction = 0.5) {
  double mx = 0.0;
  for (double v : p.values) mx = std::max(mx, std::abs(v));
  int c = 0;
  for (int i = 1; i + 1 < p.grid.n; ++i) {
    const double a = std::abs(p.values[i]);
    if (a >= fraction * mx && a > std::abs(p.values[i - 1]) && a >= std::abs(p.values[i + 1])) ++c;
  }
  return c;
}

/// Setup for a periodic NLB of the native problem on the canonical cell:
/// one component at k, started from the edge Bloch mode `band`.
struct PeriodicNlbSetup {
  PotentialSpec potential;
  TorusGrid grid;
  NativeScaling scaling;
  ModeSelection selection;
  BlochMode mode;
  CVec A;
  std::shared_ptr<const NlbProblem> problem;
};

inline PeriodicNlbSetup periodic_nlb_setup(const PotentialSpec& potential, int n, const KPoint& k, int band,
                                           double sigma) {
  PeriodicNlbSetup s{potential, TorusGrid(potential.dim(), n), native_scaling(potential), {}, {}, {}, {}};
  s.mode = solve_bloch(potential, s.grid, k.to_double(), band)[band - 1];
  s.selection = make_selection(s.mode.omega, {{k, band}});
  auto sys = build_system(s.selection, {s.mode}, sigma, sigma);
  auto sol = solve_scalar(sys.mu[0][0].real(), sigma, sigma);
  require(sol.has_value(), "periodic_nlb_setup: scalar ACME has no solution");
  s.A = sol->A;
  s.problem = std::make_shared<const NlbProblem>(NlbProblem::from_selection(s.selection, potential, s.grid, sigma));
  return s;
}

/// The NLB bifurcating from the edge at the native frequency `omega`,
/// reached by continuation from the asymptotic regime.
inline std::optional<NlbState> periodic_nlb_at(const PeriodicNlbSetup& s, double omega_native,
                                               double seed_eps = 0.05) {
  const double sigma = s.problem->sigma();
  const double target = s.scaling.omega_from_native(omega_native);
  require((target - s.selection.omega_star) * sigma > 0.0,
          "periodic_nlb_at: target lies on the wrong side of the edge");
  auto seed = newton_solve(asymptotic_guess(s.problem, s.selection, {s.mode}, s.A, sigma, seed_eps));
  if (seed.status != NewtonStatus::converged) return std::nullopt;
  if ((target - seed.state.omega) * sigma <= 0.0) {
    auto r = newton_solve(asymptotic_guess(s.problem, s.selection, {s.mode}, s.A, sigma,
                                           std::sqrt((target - s.selection.omega_star) / sigma)));
    if (r.status == NewtonStatus::converged) return r.state;
    return std::nullopt;
  }
  ContinuationOptions opt;
  opt.ds = 0.05;
  opt.ds_max = 0.5;
  opt.max_steps = 400;
  if (sigma > 0)
    opt.omega_max = target;
  else
    opt.omega_min = target;
  auto br = continue_branch(seed.state, sigma > 0 ? 1 : -1, opt);
  return solve_on_branch(br, target);
}

inline void write_line_branch_csv(std::ostream& os, const LineBranch& b) {
  os << "omega,l2_norm,arclength,domega_ds,in_band,delocalization,status\n";
  os.precision(12);
  for (const auto& p : b.points)
    os << p.omega << ',' << p.norm << ',' << p.arclength << ',' << p.domega_ds << ',' << (p.in_band ? 1 : 0) << ','
       << p.delocalization << ',' << to_string(b.status) << '\n';
}

inline void write_profile_csv(std::ostream& os, const LineProfile& p) {
  os << "x,phi\n";
  os.precision(12);
  for (int i = 0; i < p.grid.n; ++i) os << p.grid.x(i) << ',' << p.values[i] << '\n';
}

}  // namespace blochforge
