#pragma once

#include <openssl/evp.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

#include "blochforge/config.hpp"
#include "blochforge/convergence.hpp"
#include "blochforge/dynamics.hpp"
#include "blochforge/line1d.hpp"

namespace blochforge {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int { exit_ok = 0, exit_failed_check = 1, exit_config = 2, exit_numerical = 3 };

inline std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr);
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("I/O: cannot open '" + p.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Collects the files of one run and writes them with a manifest.
class RunWriter {
 public:
  explicit RunWriter(std::filesystem::path dir) : dir_(std::move(dir)) { std::filesystem::create_directories(dir_); }

  [[nodiscard]] const std::filesystem::path& dir() const { return dir_; }

  template <class F>
  void write(const std::string& name, F&& fill) {
    std::ostringstream os;
    fill(os);
    put(name, os.str());
  }
  void json(const std::string& name, const nlohmann::json& j) { put(name, j.dump(2) + "\n"); }

  [[nodiscard]] const std::vector<std::string>& files() const { return names_; }

  void manifest(const RunConfig& c, const std::string& status, double wall_time) {
    nlohmann::json m;
    const auto text = serialize_config(c);
    m["kind"] = c.kind;
    m["version"] = kVersion;
    m["modules"] = {{"blochforge", kVersion}};
    m["status"] = status;
    m["config"] = text;
    m["config_hash"] = sha256_hex(text);
    m["seed"] = c.seed;
    m["threads"] = c.threads;
    m["wall_time_s"] = wall_time;
    m["files"] = nlohmann::json::array();
    for (std::size_t i = 0; i < names_.size(); ++i)
      m["files"].push_back({{"name", names_[i]}, {"sha256", sha256_hex(contents_[i])}, {"bytes", contents_[i].size()}});
    std::ofstream(dir_ / "manifest.json") << m.dump(2) << "\n";
  }

 private:
  void put(const std::string& name, const std::string& data) {
    std::ofstream out(dir_ / name, std::ios::binary);
    if (!out) throw std::runtime_error("I/O: cannot write '" + (dir_ / name).string() + "'");
    out << data;
    names_.push_back(name);
    contents_.push_back(data);
  }

  std::filesystem::path dir_;
  std::vector<std::string> names_;
  std::vector<std::string> contents_;
};

namespace detail {

struct Prepared {
  PotentialSpec potential;
  TorusGrid grid;
  ModeSelection selection;
  std::vector<BlochMode> modes;
  AcmeSystem system;
  CVec A;
  std::vector<AcmeSolution> solutions;
};

/// Picks the reversible non-degenerate solution with the most even
/// moduli, then the largest Re A_1.
inline std::optional<AcmeSolution> preferred_solution(const std::vector<AcmeSolution>& sols) {
  std::optional<AcmeSolution> best;
  double best_spread = 0.0;
  for (const auto& s : sols) {
    if (!s.reversible || !s.nondegenerate) continue;
    double lo = 1e300, hi = 0.0;
    for (auto a : s.A) {
      lo = std::min(lo, std::abs(a));
      hi = std::max(hi, std::abs(a));
    }
    const double spread = hi - lo;
    if (!best || spread < best_spread - 1e-9 ||
        (std::abs(spread - best_spread) <= 1e-9 && s.A[0].real() > best->A[0].real())) {
      best = s;
      best_spread = spread;
    }
  }
  return best;
}

inline Prepared prepare(const RunConfig& c, bool need_amplitudes) {
  Prepared p{make_potential(c), TorusGrid(make_potential(c).dim(), grid_points(c)), {}, {}, {}, {}, {}};
  std::vector<Star> stars;
  for (const auto& s : c.stars) stars.push_back(parse_star(s));
  for (const auto& s : stars) p.modes.push_back(solve_bloch(p.potential, p.grid, s.k.to_double(), s.n)[s.n - 1]);
  const double omega_star = c.omega_star.value_or(p.modes[0].omega);
  p.selection = make_selection(omega_star, stars);
  if (!need_amplitudes) return p;
  if (!p.selection.consistent())
    throw ConfigError("config: the selected stars are not consistent; the closure adds " +
                      std::to_string(p.selection.M() - p.selection.N()) + " k-points");
  p.system = build_system(p.selection, p.modes, c.sigma, c.Omega_or_sigma());
  if (p.system.N == 1) {
    if (auto s = solve_scalar(p.system.mu[0][0].real(), c.sigma, c.Omega_or_sigma())) p.solutions.push_back(*s);
  } else {
    p.solutions = solve_general_newton(p.system);
  }
  if (auto s = preferred_solution(p.solutions)) p.A = s->A;
  return p;
}

inline nlohmann::json acme_summary(const Prepared& p) {
  nlohmann::json j;
  j["omega_star"] = p.selection.omega_star;
  j["system"] = system_to_json(p.system);
  for (const auto& s : p.solutions) j["solutions"].push_back(solution_to_json(s));
  for (auto a : p.A) j["A"].push_back(complex_json(a));
  for (auto a : p.A) j["A_abs"].push_back(std::abs(a));
  return j;
}

inline ContinuationOptions controls(const RunConfig& c) {
  ContinuationOptions o;
  o.ds = c.ds;
  o.ds_max = c.ds_max;
  o.max_steps = c.max_steps;
  o.tol = c.tol;
  if (c.omega_min) o.omega_min = *c.omega_min;
  if (c.omega_max) o.omega_max = *c.omega_max;
  return o;
}

inline BandStructure bands_for(const RunConfig& c) {
  const auto pot = make_potential(c);
  const TorusGrid g(pot.dim(), grid_points(c));
  std::vector<std::vector<double>> ks;
  std::vector<int> shape;
  if (c.k_set == "path") {
    ks = pot.dim() == 1 ? k_path({{-0.5}, {0.5}}, c.k_per_axis) : gamma_x_m_path(c.k_per_axis);
  } else {
    ks = brillouin_grid(pot.dim(), c.k_per_axis);
    shape.assign(pot.dim(), c.k_per_axis);
  }
  return band_structure(pot, g, ks, c.n_bands, c.threads, {}, shape);
}

inline void run_bands(const RunConfig& c, RunWriter& w) {
  const auto bs = bands_for(c);
  const auto sc = native_scaling(bs.potential);
  const auto edges = spectral_edges(bs);
  w.write("bands.csv", [&](std::ostream& os) { write_bands_csv(os, bs); });
  w.write("edges.csv", [&](std::ostream& os) {
    os << "index,edge,edge_canonical\n";
    os.precision(12);
    for (std::size_t i = 0; i < edges.size(); ++i)
      os << i + 1 << ',' << sc.omega_to_native(edges[i]) << ',' << edges[i] << '\n';
  });
  nlohmann::json j;
  j["dim"] = bs.grid.dim;
  j["n"] = bs.grid.n;
  j["n_bands"] = bs.n_bands;
  j["k_samples"] = bs.k_samples.size();
  j["native_length"] = sc.length;
  for (double e : edges) j["edges"].push_back(sc.omega_to_native(e));
  w.json("summary.json", j);
}

inline void run_levelset(const RunConfig& c, RunWriter& w) {
  const auto bs = bands_for(c);
  const auto pts = level_set(bs, *c.omega_star, c.level_tol);
  w.write("level_set.csv", [&](std::ostream& os) { write_level_set_csv(os, bs.grid.dim, pts); });
  w.json("summary.json", {{"omega_star", *c.omega_star}, {"points", pts.size()}});
}

inline void run_modeset(const RunConfig& c, RunWriter& w) {
  auto p = prepare(c, false);
  auto bs = bands_for(c);
  std::vector<Star> stars = p.selection.stars;
  const auto rep = check_assumptions(bs, stars, p.selection.omega_star, std::max(c.level_tol, 1e-6));
  auto j = selection_to_json(p.selection);
  for (const auto& h : rep.checks) j["assumptions"].push_back({{"name", h.name}, {"passed", h.passed}, {"detail", h.detail}});
  j["all_passed"] = rep.all_passed();
  w.json("selection.json", j);
}

inline void run_acme(const RunConfig& c, RunWriter& w) {
  auto p = prepare(c, true);
  w.json("acme.json", acme_summary(p));
}

inline int branch_direction(const RunConfig& c) {
  if (c.direction != 0) return c.direction;
  return c.Omega_or_sigma() >= 0.0 ? 1 : -1;
}

inline void run_nlb_continue(const RunConfig& c, RunWriter& w) {
  auto p = prepare(c, true);
  if (p.A.empty()) throw ConvergenceError("no reversible non-degenerate ACME solution to seed the branch");
  auto problem = std::make_shared<const NlbProblem>(NlbProblem::from_selection(p.selection, p.potential, p.grid, c.sigma));
  NlbNewtonOptions nopt;
  nopt.newton.tol = c.tol;
  auto seed = newton_solve(asymptotic_guess(problem, p.selection, p.modes, p.A, c.Omega_or_sigma(), c.seed_eps), nopt);
  if (seed.status != NewtonStatus::converged)
    throw ConvergenceError("seed Newton solve " + to_string(seed.status) + " at eps = " + std::to_string(c.seed_eps));
  auto branch = continue_branch(seed.state, branch_direction(c), controls(c));
  w.write("branch.csv", [&](std::ostream& os) { write_branch_csv(os, branch); });
  w.json("seed_state.json", state_to_json(seed.state));
  auto j = acme_summary(p);
  j["branch"] = {{"points", branch.points.size()}, {"status", to_string(branch.status)}, {"direction", branch.direction}};
  for (auto f : branch.folds) j["branch"]["folds"].push_back(branch.points[f].omega);
  if (!branch.points.empty()) {
    j["branch"]["omega_end"] = branch.points.back().omega;
    j["branch"]["norm_end"] = branch.points.back().norm;
  }
  w.json("summary.json", j);
}

inline void run_converge(const RunConfig& c, RunWriter& w) {
  auto p = prepare(c, true);
  if (p.A.empty()) throw ConvergenceError("no reversible non-degenerate ACME solution for the sweep");
  auto problem = std::make_shared<const NlbProblem>(NlbProblem::from_selection(p.selection, p.potential, p.grid, c.sigma));
  SweepOptions opt;
  opt.threads = c.threads;
  opt.newton.newton.tol = c.tol;
  auto r = epsilon_sweep(problem, p.selection, p.modes, p.A, c.Omega_or_sigma(), c.eps, opt);
  w.write("sweep.csv", [&](std::ostream& os) { write_sweep_csv(os, r); });
  auto j = acme_summary(p);
  j["sweep"] = sweep_to_json(r);
  w.json("summary.json", j);
}

inline void run_line_continue(const RunConfig& c, RunWriter& w) {
  const LineGrid g{c.line_L, c.line_n};
  const auto V = sin2_line_potential(g);
  const auto edges = sin2_band_edges();
  LineSolveResult seed;
  if (c.line_seed == "gap_soliton") {
    seed = sin2_gap_soliton(c.edge, *c.omega, c.sigma, g);
  } else {
    auto guess = sech_guess(c.sech_a, c.sech_w, g);
    guess.sigma = c.sigma;
    seed = solve_line(V, *c.omega, c.sigma, guess);
  }
  if (seed.status != NewtonStatus::converged)
    throw ConvergenceError("line seed Newton solve " + to_string(seed.status));
  auto b = continue_line(V, seed.profile, c.direction == 0 ? 1 : c.direction, controls(c), edges, c.tail_x0);
  w.write("line_branch.csv", [&](std::ostream& os) { write_line_branch_csv(os, b); });
  w.write("seed_profile.csv", [&](std::ostream& os) { write_profile_csv(os, seed.profile); });
  for (std::size_t i = 0; i < b.folds.size(); ++i)
    w.write("fold_" + std::to_string(i + 1) + "_profile.csv",
            [&](std::ostream& os) { write_profile_csv(os, b.points[b.folds[i]].profile); });
  if (!b.points.empty())
    w.write("end_profile.csv", [&](std::ostream& os) { write_profile_csv(os, b.points.back().profile); });
  nlohmann::json j;
  j["edges"] = edges;
  j["seed"] = {{"omega", seed.profile.omega}, {"norm", seed.profile.norm()}, {"humps", count_humps(seed.profile)},
               {"evenness_defect", seed.profile.evenness_defect()}};
  j["status"] = to_string(b.status);
  j["points"] = b.points.size();
  j["folds"] = nlohmann::json::array();
  for (auto f : b.folds) j["folds"].push_back(b.points[f].omega);
  j["band_entries"] = nlohmann::json::array();
  for (auto e : b.band_entries) j["band_entries"].push_back(b.points[e].omega);
  w.json("summary.json", j);
}

inline void run_evolve(const RunConfig& c, RunWriter& w) {
  const auto pot = make_potential(c);
  const auto star = parse_star(c.stars[0]);
  if (!(star.k == KPoint({Rational(0)}))) throw ConfigError("config: evolve needs a star at k = 0");
  auto setup = periodic_nlb_setup(pot, grid_points(c), star.k, star.n, c.sigma);
  auto nlb = periodic_nlb_at(setup, *c.omega);
  if (!nlb) throw ConvergenceError("no NLB found at omega = " + std::to_string(*c.omega));
  auto [phi, box] = nlb_on_box(*nlb, setup.scaling);
  StabilityOptions so;
  so.rel_amp = c.rel_amp;
  so.seed = c.seed;
  so.evolution.dt = c.dt;
  so.evolution.T = c.T;
  so.evolution.sample_stride = c.sample_stride;
  auto r = stability_experiment(phi, sin2_box_potential(box), box, c.sigma, *c.omega, so);
  if (!r.run.completed) throw OverflowError(r.run.failure);
  w.write("evolution.csv", [&](std::ostream& os) { write_evolution_csv(os, r.run); });
  w.json("run.json", stability_to_json(r, *c.omega, c.sigma, c.rel_amp));
}

/// Reads one CSV column into doubles.
inline std::vector<double> csv_column(const std::string& text, const std::string& column) {
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  std::vector<std::string> header;
  std::stringstream hs(line);
  for (std::string h; std::getline(hs, h, ',');) header.push_back(h);
  const auto it = std::find(header.begin(), header.end(), column);
  if (it == header.end()) throw std::runtime_error("no column '" + column + "'");
  const auto idx = static_cast<std::size_t>(it - header.begin());
  std::vector<double> out;
  while (std::getline(in, line)) {
    std::stringstream ls(line);
    std::string cell;
    for (std::size_t i = 0; i <= idx; ++i) std::getline(ls, cell, ',');
    out.push_back(std::stod(cell));
  }
  return out;
}

}  // namespace detail

struct CheckResult {
  std::string label;
  bool passed = false;
  std::string detail;
};

struct VerifyReport {
  std::vector<CheckResult> checks;
  [[nodiscard]] bool passed() const {
    return !checks.empty() && std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
  }
  [[nodiscard]] nlohmann::json to_json() const {
    nlohmann::json j;
    j["passed"] = passed();
    for (const auto& c : checks) j["checks"].push_back({{"label", c.label}, {"passed", c.passed}, {"detail", c.detail}});
    return j;
  }
};

/// Compares a run directory against a reference file of the form
///   {"checks": [{"file": "summary.json", "pointer": "/A_abs/0", "value": 3.6, "tol": 0.07},
///               {"file": "edges.csv", "column": "edge", "row": 0, "value": 0.2832, "tol": 2e-3}]}
/// A value that is a [re, im] pair is compared by modulus when "modulus" is true.
inline VerifyReport verify_run(const std::filesystem::path& run_dir, const std::filesystem::path& reference) {
  VerifyReport rep;
  nlohmann::json ref;
  try {
    ref = nlohmann::json::parse(read_file(reference));
  } catch (const std::exception& e) {
    rep.checks.push_back({"reference", false, e.what()});
    return rep;
  }
  for (const auto& chk : ref.value("checks", nlohmann::json::array())) {
    const std::string file = chk.at("file").get<std::string>();
    CheckResult r;
    r.label = file;
    if (chk.contains("column"))
      r.label += ":" + chk["column"].get<std::string>() + "[" + std::to_string(chk.value("row", 0)) + "]";
    else if (chk.contains("pointer"))
      r.label += ":" + chk["pointer"].get<std::string>();
    try {
      double got = 0.0;
      const auto text = read_file(run_dir / file);
      if (chk.contains("column")) {
        const auto col = chk.at("column").get<std::string>();
        const auto row = chk.value("row", 0);
        const auto v = detail::csv_column(text, col);
        if (row < 0 || static_cast<std::size_t>(row) >= v.size()) throw std::runtime_error("row out of range");
        got = v[static_cast<std::size_t>(row)];
      } else {
        const auto ptr = chk.at("pointer").get<std::string>();
        const auto node = nlohmann::json::parse(text).at(nlohmann::json::json_pointer(ptr));
        if (node.is_array() && node.size() == 2 && chk.value("modulus", false))
          got = std::hypot(node[0].get<double>(), node[1].get<double>());
        else if (node.is_boolean() || node.is_string()) {
          const bool eq = node == chk.at("value");
          r.passed = eq;
          r.detail = "got " + node.dump() + ", expected " + chk.at("value").dump();
          rep.checks.push_back(r);
          continue;
        } else
          got = node.get<double>();
        if (chk.value("modulus", false)) got = std::abs(got);
      }
      const double want = chk.at("value").get<double>(), tol = chk.at("tol").get<double>();
      r.passed = std::abs(got - want) <= tol;
      std::ostringstream os;
      os.precision(10);
      os << "got " << got << ", expected " << want << " +- " << tol << ", diff " << std::abs(got - want);
      r.detail = os.str();
    } catch (const std::exception& e) {
      r.passed = false;
      r.detail = e.what();
    }
    rep.checks.push_back(r);
  }
  if (rep.checks.empty()) rep.checks.push_back({"reference", false, "reference lists no checks"});
  return rep;
}

struct RunOutcome {
  int exit_code = exit_ok;
  std::string message;
  std::filesystem::path out_dir;
  std::vector<std::string> files;
};

/// Executes one configured experiment into `out`; never throws.
inline RunOutcome run(const RunConfig& c, const std::filesystem::path& out) {
  RunOutcome o;
  o.out_dir = out;
  const auto t0 = std::chrono::steady_clock::now();
  std::optional<RunWriter> w;
  auto fail = [&](int code, const std::string& kind, const std::string& msg) {
    o.exit_code = code;
    o.message = msg;
    try {
      if (!w) w.emplace(out);
      w->json("error.json", {{"error", kind}, {"message", msg}, {"exit_code", code}});
      w->manifest(c, "failed", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
      o.files = w->files();
    } catch (...) {
    }
  };
  try {
    validate(c);
    w.emplace(out);
    if (c.kind == "bands") detail::run_bands(c, *w);
    else if (c.kind == "levelset") detail::run_levelset(c, *w);
    else if (c.kind == "modeset") detail::run_modeset(c, *w);
    else if (c.kind == "acme") detail::run_acme(c, *w);
    else if (c.kind == "nlb-continue") detail::run_nlb_continue(c, *w);
    else if (c.kind == "converge") detail::run_converge(c, *w);
    else if (c.kind == "line-continue") detail::run_line_continue(c, *w);
    else if (c.kind == "evolve") detail::run_evolve(c, *w);
    else if (c.kind == "verify") {
      const auto rep = verify_run(c.run_dir.empty() ? out : std::filesystem::path(c.run_dir), c.reference);
      w->json("verify.json", rep.to_json());
      if (!rep.passed()) {
        const auto bad = std::count_if(rep.checks.begin(), rep.checks.end(), [](const auto& ch) { return !ch.passed; });
        std::string msg = "verification failed: " + std::to_string(bad) + " of " + std::to_string(rep.checks.size()) +
                          " checks";
        o.exit_code = exit_failed_check;
        o.message = msg;
      }
    }
    w->manifest(c, o.exit_code == exit_ok ? "ok" : "failed",
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    o.files = w->files();
  } catch (const ConfigError& e) {
    fail(exit_config, "config", e.what());
  } catch (const InvalidArgument& e) {
    fail(exit_config, "invalid-argument", e.what());
  } catch (const Error& e) {
    fail(exit_numerical, "numerical", e.what());
  } catch (const std::exception& e) {
    fail(exit_numerical, "runtime", e.what());
  }
  return o;
}

}  // namespace blochforge
