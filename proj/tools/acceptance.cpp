// One line per acceptance criterion; exit status 0 when all pass.

#include <chrono>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "blochforge/convergence.hpp"
#include "blochforge/dynamics.hpp"

using namespace blochforge;

namespace {

// Tolerances.
constexpr double kEdgeTol1d = 2e-3;
constexpr double kOmegaTol2d = 5e-3;
constexpr double kMuTol = 5e-3, kMuSmallTol = 2e-3;
constexpr double kAmplitudeRelTol = 0.02;
constexpr double kEigenTol = 2e-2, kZeroEigenTol = 1e-8;
constexpr double kRateLo = 2.7, kRateHi = 3.4;
constexpr double kOracleTol = 1e-9;
constexpr double kSymmetryTol = 1e-8;
constexpr double kTailRelTol = 0.1, kTailX0 = 30.0, kTailMargin = 30.0, kPastEdge = 0.01;
constexpr double kFoldWindow = 0.05;
constexpr double kMassDriftTol = 1e-6;
constexpr double kHorizon = 1000.0;

struct Outcome {
  bool passed = true;
  std::ostringstream detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      passed = false;
      detail << "FAILED " << what << "; ";
    }
  }
};

KPoint kp(std::initializer_list<const char*> parts) {
  return KPoint::parse(std::vector<std::string>(parts.begin(), parts.end()));
}

AcmeSystem example_system(const std::vector<Star>& stars, int n = 64) {
  TorusGrid g(2, n);
  auto spec = PotentialSpec::smoothed_square_2d();
  std::vector<BlochMode> modes;
  for (const auto& st : stars) modes.push_back(solve_bloch(spec, g, st.k.to_double(), st.n)[st.n - 1]);
  return build_system(make_selection(modes[0].omega, stars), modes, -1.0, -1.0);
}

const std::vector<Star> kStarsA{{kp({"1/2", "1/2"}), 1}};
const std::vector<Star> kStarsB{{kp({"1/2", "0"}), 2}, {kp({"0", "1/2"}), 2}};
const std::vector<Star> kStarsC{{kp({"1/4", "1/4"}), 1}, {kp({"-1/4", "-1/4"}), 1}};

double max_reversal_defect(const AcmeSystem& s) {
  double d = 0.0;
  for (int j = 0; j < s.N; ++j)
    for (std::size_t t = 0; t < s.A[j].size(); ++t) {
      const auto& tr = s.A[j][t];
      auto image = s.mu_at(s.pairing[tr.a], s.pairing[tr.b], s.pairing[tr.c], s.pairing[j]);
      d = std::max(d, image ? std::abs(*image - std::conj(s.mu[j][t])) : 1e300);
    }
  return d;
}

double rel_diff(const CVec& a, const CVec& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += std::norm(a[i] - b[i]);
  return std::sqrt(d) / std::max(1.0, norm(b));
}

AcmeSystem random_tensor(std::mt19937& rng, bool swap) {
  std::uniform_real_distribution<double> u(0.05, 1.0), ph(-std::numbers::pi, std::numbers::pi);
  std::bernoulli_distribution coin;
  const double s = coin(rng) ? 1.0 : -1.0, o = coin(rng) ? 1.0 : -1.0;
  const double m11 = u(rng), m22 = swap ? m11 : u(rng), m1221 = u(rng);
  const cplx m2121 = swap ? std::polar(u(rng), ph(rng)) : cplx{(coin(rng) ? 1.0 : -1.0) * u(rng), 0.0};
  return two_mode_system(m11, m22, m1221, m2121, true, swap ? std::vector<int>{1, 0} : std::vector<int>{0, 1}, s,
                         o * u(rng) * 2.0);
}

CVec random_amplitudes(std::mt19937& rng, int n) {
  std::normal_distribution<double> g;
  CVec A(n);
  for (auto& a : A) a = {g(rng), g(rng)};
  return A;
}

void band_structure_1d(Outcome& o) {
  auto spec = PotentialSpec::sin2_1d();
  auto edges = spectral_edges(band_structure(spec, TorusGrid(1, 1024), k_path({{0.0}, {0.5}}, 8), 6));
  const auto sc = native_scaling(spec);
  const double expect[] = {0.2832, 0.2905, 0.7468, 0.8434, 1.0568};
  o.check(edges.size() >= 5, "five edges");
  double worst = 0.0;
  for (int i = 0; i < 5 && i < static_cast<int>(edges.size()); ++i)
    worst = std::max(worst, std::abs(sc.omega_to_native(edges[i]) - expect[i]));
  o.detail << "max |edge - s_i| = " << worst;
  o.check(worst <= kEdgeTol1d, "edge tolerance");
}

void band_structure_2d(Outcome& o) {
  TorusGrid g(2, 64);
  auto spec = PotentialSpec::smoothed_square_2d();
  const std::vector<double> M{0.5, 0.5}, X{0.5, 0.0}, Q{0.25, 0.25};
  const double m = solve_bloch(spec, g, M, 1)[0].omega;
  const double x = solve_bloch(spec, g, X, 2)[1].omega;
  const double q = solve_bloch(spec, g, Q, 1)[0].omega;
  o.detail << "w1(M) = " << m << ", w2(X) = " << x << ", w1(1/4,1/4) = " << q;
  o.check(std::abs(m - 1.703) <= kOmegaTol2d, "w1(M)");
  o.check(std::abs(x - 2.035) <= kOmegaTol2d, "w2(X)");
  o.check(std::abs(q - 1.576) <= kOmegaTol2d, "w1(1/4,1/4)");
}

void mu_coefficients(Outcome& o) {
  auto a = example_system(kStarsA), b = example_system(kStarsB), c = example_system(kStarsC);
  const double muA = std::abs(a.mu[0][0]);
  const double b1111 = std::abs(*b.mu_at(0, 0, 0, 0)), b2121 = std::abs(*b.mu_at(1, 0, 1, 0));
  const double c1111 = std::abs(*c.mu_at(0, 0, 0, 0)), c2121 = std::abs(*c.mu_at(1, 0, 1, 0));
  o.detail << "A " << muA << "; B " << b1111 << ", " << b2121 << "; C " << c1111 << ", " << c2121;
  o.check(std::abs(muA - 0.0765) <= kMuTol, "A mu");
  o.check(std::abs(b1111 - 0.0901) <= kMuTol, "B mu_1111");
  o.check(std::abs(b2121 - 0.003) <= kMuSmallTol, "B mu_2121");
  o.check(std::abs(c1111 - 0.0526) <= kMuTol, "C mu_1111");
  o.check(std::abs(c2121 - 0.0412) <= kMuTol, "C mu_2121");
}

void acme_solutions(Outcome& o) {
  auto a = example_system(kStarsA), b = example_system(kStarsB), c = example_system(kStarsC);
  const double ampA = std::abs(solve_scalar(a.mu[0][0].real(), -1.0, -1.0)->A[0]);
  o.detail << "|A|: A " << ampA;
  o.check(std::abs(ampA - 3.6154) <= kAmplitudeRelTol * 3.6154, "A amplitude");
  auto pick = [](const AcmeSystem& s) -> std::optional<AcmeSolution> {
    for (const auto& sol : solve_two_mode(s))
      if (std::abs(sol.A[0] - sol.A[1]) <= 1e-9 && sol.A[0].real() > 0) return sol;
    return std::nullopt;
  };
  auto check_eigs = [&](const std::optional<AcmeSolution>& sol, const char* name, double amp,
                        const std::vector<double>& expected, int zero) {
    o.check(sol.has_value(), std::string(name) + " solution found");
    if (!sol) return;
    const double got = std::abs(sol->A[0]);
    double worst = 0.0;
    for (std::size_t i = 0; i < expected.size(); ++i)
      worst = std::max(worst, std::abs(sol->jacobian_eigenvalues[i] - expected[i]));
    o.detail << "; " << name << " " << got << ", max eig diff " << worst << ", |zero| "
             << std::abs(sol->jacobian_eigenvalues[zero]);
    o.check(std::abs(got - amp) <= kAmplitudeRelTol * amp, std::string(name) + " amplitude");
    o.check(worst <= kEigenTol, std::string(name) + " eigenvalues");
    o.check(std::abs(sol->jacobian_eigenvalues[zero]) <= kZeroEigenTol, std::string(name) + " zero eigenvalue");
  };
  check_eigs(pick(b), "B", 3.17567, {-0.1223, 0.0, 1.6332, 2.0}, 1);
  check_eigs(pick(c), "C", 2.242, {-0.9427, -0.828, 0.0, 2.0}, 2);
}

void convergence_law(Outcome& o) {
  const std::vector<double> eps{0.12, 0.09, 0.06, 0.045, 0.03};
  auto pot = PotentialSpec::smoothed_square_2d();
  for (const auto* stars : {&kStarsA, &kStarsB}) {
    TorusGrid g(2, 64);
    std::vector<BlochMode> modes;
    for (const auto& st : *stars) modes.push_back(solve_bloch(pot, g, st.k.to_double(), st.n)[st.n - 1]);
    auto sel = make_selection(modes[0].omega, *stars);
    auto sys = build_system(sel, modes, -1.0, -1.0);
    CVec A;
    if (sys.N == 1) {
      A = solve_scalar(sys.mu[0][0].real(), -1.0, -1.0)->A;
    } else {
      for (const auto& s : solve_general_newton(sys))
        if (s.reversible && s.nondegenerate && std::abs(s.A[0] - s.A[1]) < 1e-8 && s.A[0].real() > 0) A = s.A;
    }
    auto prob = std::make_shared<const NlbProblem>(NlbProblem::from_selection(sel, pot, g, -1.0));
    SweepOptions opt;
    opt.threads = 2;
    auto r = epsilon_sweep(prob, sel, modes, A, -1.0, eps, opt);
    const char* name = stars == &kStarsA ? "A" : "B";
    o.detail << name << " rate " << r.fitted_rate << "; ";
    o.check(r.fitted_rate >= kRateLo && r.fitted_rate <= kRateHi, std::string(name) + " rate");
  }
}

void acme_oracle(Outcome& o) {
  std::mt19937 rng(2024);
  int branches = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    auto s = random_tensor(rng, trial % 2 == 0);
    auto closed = solve_two_mode(s);
    auto newton = solve_general_newton(s);
    for (const auto& c : closed) {
      if (!c.reversible) continue;
      double best = 1e300;
      CVec m = c.A;
      for (auto& x : m) x = -x;
      for (const auto& n : newton) best = std::min({best, rel_diff(n.A, c.A), rel_diff(n.A, m)});
      worst = std::max(worst, best);
      ++branches;
    }
  }
  o.detail << branches << " branches, worst mismatch " << worst;
  o.check(branches > 0 && worst <= kOracleTol, "closed form vs Newton");

  double rev = 0.0, equi = 0.0;
  for (const auto* stars : {&kStarsA, &kStarsB, &kStarsC}) {
    auto s = example_system(*stars, 32);
    rev = std::max(rev, max_reversal_defect(s));
    const auto S = symmetry_matrix(s.pairing);
    for (int t = 0; t < 20; ++t) {
      auto A = random_amplitudes(rng, s.N);
      const Eigen::VectorXd lhs = to_real(acme_residual(from_real(S * to_real(A)), s));
      const Eigen::VectorXd rhs = S * to_real(acme_residual(A, s));
      equi = std::max(equi, (lhs - rhs).norm() / (1 + rhs.norm()));
    }
  }
  o.detail << "; reversal defect " << rev << ", equivariance defect " << equi;
  o.check(rev <= kSymmetryTol, "mu reversal symmetry");
  o.check(equi <= 1e-12, "equivariance");
}

struct LocalizedVerdict {
  double band_entry = NAN, tail_rel = NAN, fold = NAN;
};

LocalizedVerdict localized_run() {
  const LineGrid g{};
  const auto V = sin2_line_potential(g);
  const auto edges = sin2_band_edges();
  ContinuationOptions c;
  c.ds = 0.02;
  c.ds_max = 0.05;
  c.max_steps = 2000;
  LocalizedVerdict v;

  auto seed = sin2_gap_soliton(2, 0.3, 1.0, g);
  c.omega_min = 0.28;
  c.omega_max = 0.8;
  auto gs = continue_line(V, seed.profile, 1, c, edges);
  if (!gs.band_entries.empty()) v.band_entry = gs.points[gs.band_entries[0]].omega;
  const double omega = edges[2] + kPastEdge;
  auto setup = periodic_nlb_setup(PotentialSpec::sin2_1d(), 128, KPoint({Rational(0)}), 3, 1.0);
  auto nlb = periodic_nlb_at(setup, omega);
  auto ogs = solve_on_line_branch(V, gs, omega);
  if (nlb && ogs)
    v.tail_rel =
        tail_match(*ogs, PeriodicProfile::from_nlb(*nlb, native_scaling(PotentialSpec::sin2_1d())), kTailX0, 10.0,
                   kTailMargin)
            .relative;

  auto t = solve_line(V, 0.5, 1.0, sech_guess(0.5, 100.0, g));
  c.omega_min = 0.2;
  c.omega_max = 1.0;
  auto tb = continue_line(V, t.profile, -1, c, edges);
  if (!tb.folds.empty()) v.fold = tb.points[tb.folds[0]].omega;
  return v;
}

void localized_1d(Outcome& o) {
  const auto edges = sin2_band_edges();
  const auto a = localized_run(), b = localized_run();
  o.detail << "GS enters band at " << a.band_entry << ", tail mismatch " << a.tail_rel << " at s3+" << kPastEdge
           << "; tNLB fold at " << a.fold << " (s2 = " << edges[1] << ")";
  o.check(std::abs(a.band_entry - edges[2]) <= 0.01, "GS reaches s3");
  o.check(a.tail_rel <= kTailRelTol, "tail match");
  o.check(a.fold > edges[1] && a.fold - edges[1] <= kFoldWindow, "fold near s2");
  o.check(a.band_entry == b.band_entry && a.tail_rel == b.tail_rel && a.fold == b.fold, "deterministic");
}

void dynamics(Outcome& o) {
  const auto pot = PotentialSpec::sin2_1d();
  auto setup = periodic_nlb_setup(pot, 128, KPoint({Rational(0)}), 3, 1.0);
  for (auto [omega, expected] : {std::pair{0.76, StabilityVerdict::no_growth}, {0.9, StabilityVerdict::unstable}}) {
    auto nlb = periodic_nlb_at(setup, omega);
    o.check(nlb.has_value(), "NLB at " + std::to_string(omega));
    if (!nlb) continue;
    auto [phi, box] = nlb_on_box(*nlb, native_scaling(pot));
    StabilityOptions so;
    so.evolution.T = kHorizon;
    auto r = stability_experiment(phi, sin2_box_potential(box), box, 1.0, omega, so);
    o.detail << "w = " << omega << ": " << to_string(r.verdict) << ", drift " << r.run.mass_drift() << "; ";
    o.check(r.verdict == expected, "verdict at " + std::to_string(omega));
    o.check(r.run.mass_drift() <= kMassDriftTol, "mass drift");
    o.check(r.run.completed && r.run.last_valid_time == kHorizon, "reached T");
  }
}

void properties(Outcome& o) {
  std::mt19937 rng(11);
  std::normal_distribution<double> gauss;
  // Bloch symmetry in k.
  TorusGrid g(2, 32);
  auto spec = PotentialSpec::smoothed_square_2d();
  const std::vector<double> k{0.2, 0.35}, mk{-0.2, -0.35};
  auto plus = solve_bloch(spec, g, k, 3), minus = solve_bloch(spec, g, mk, 3);
  double bloch = 0.0;
  for (int n = 0; n < 3; ++n) {
    bloch = std::max(bloch, std::abs(plus[n].omega - minus[n].omega));
    auto a = plus[n].xi(), b = minus[n].xi();
    double d = 0;
    for (std::size_t i = 0; i < a.size(); ++i) d += std::norm(a[i] - std::conj(b[i]));
    bloch = std::max(bloch, std::sqrt(d * g.weight()));
  }
  o.check(bloch <= 1e-8, "Bloch symmetry");
  // Parseval.
  ComplexField f(g);
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = {gauss(rng), gauss(rng)};
  const double parseval = std::abs(l2_norm(f) - l2_norm_spectral(f)) / l2_norm(f);
  o.check(parseval <= 1e-12, "Parseval");
  // Jacobians against finite differences.
  double jac = 0.0;
  for (int t = 0; t < 10; ++t) {
    auto s = random_tensor(rng, t % 2 == 0);
    auto A = random_amplitudes(rng, 2);
    const Eigen::MatrixXd J = acme_jacobian_real(A, s);
    jac = std::max(jac, (J - acme_jacobian_fd(A, s)).norm() / J.norm());
  }
  LineGrid lg{20.0, 64};
  LinePath path(lg, sin2_line_potential(lg), 1.0);
  auto u = to_eigen(sech_guess(0.7, 30.0, lg).values);
  Eigen::VectorXd v = Eigen::VectorXd::LinSpaced(lg.n, -1.0, 2.0).array().sin();
  path.linearize(u, 0.4, u);
  Eigen::VectorXd fd = (path.residual(u + 1e-6 * v, 0.4) - path.residual(u - 1e-6 * v, 0.4)) / 2e-6;
  jac = std::max(jac, (path.solve(fd) - v).norm() / v.norm());
  o.check(jac <= 1e-6, "Jacobian vs finite differences");
  // Closure idempotence.
  std::uniform_int_distribution<int> num(-6, 6), den(1, 6);
  bool closure = true;
  for (int t = 0; t < 20; ++t) {
    std::vector<KPoint> stars;
    for (int i = 0; i < 3; ++i) stars.push_back(KPoint({Rational(num(rng), den(rng)), Rational(num(rng), den(rng))}));
    auto cl = closure_S3(stars), again = closure_S3(cl);
    closure = closure && std::set<KPoint>(cl.begin(), cl.end()) == std::set<KPoint>(again.begin(), again.end());
  }
  o.check(closure, "closure idempotence");
  // Phase invariance of the ACME residual.
  double phase = 0.0;
  for (int t = 0; t < 20; ++t) {
    auto s = random_tensor(rng, t % 2 == 0);
    auto A = random_amplitudes(rng, 2);
    const double r0 = norm(acme_residual(A, s));
    for (auto& a : A) a *= std::polar(1.0, 0.3 * t + 0.1);
    phase = std::max(phase, std::abs(norm(acme_residual(A, s)) - r0) / (1 + r0));
  }
  o.check(phase <= 1e-12, "phase invariance");
  // Nonlinear substep keeps the modulus.
  PeriodicBox box{128, 20.0};
  CplxVec phi(box.n);
  for (auto& z : phi) z = {gauss(rng), gauss(rng)};
  auto before = phi;
  nonlinear_substep(phi, sin2_box_potential(box), 1.0, 0.8, 0.37);
  double mod = 0.0;
  for (std::size_t i = 0; i < phi.size(); ++i) mod = std::max(mod, std::abs(std::abs(phi[i]) - std::abs(before[i])));
  o.check(mod <= 1e-14, "substep modulus");
  o.detail << "bloch " << bloch << ", parseval " << parseval << ", jacobian " << jac << ", phase " << phase
           << ", modulus " << mod;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria{
      {"band structure 1D", band_structure_1d}, {"band structure 2D", band_structure_2d},
      {"mu coefficients", mu_coefficients},     {"ACME solutions", acme_solutions},
      {"convergence law", convergence_law},     {"ACME oracle equivalence", acme_oracle},
      {"1D localized phenomenology", localized_1d}, {"dynamics", dynamics},
      {"property suites", properties}};
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      criteria[i].second(o);
    } catch (const std::exception& e) {
      o.passed = false;
      o.detail << "exception: " << e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !o.passed;
    std::cout << (o.passed ? "PASS" : "FAIL") << "  " << i + 1 << ". " << criteria[i].first << ": " << o.detail.str()
              << " [" << std::fixed << std::setprecision(1) << secs << " s]" << std::defaultfloat
              << std::setprecision(6) << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
