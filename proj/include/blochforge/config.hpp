#pragma once

#include <yaml-cpp/yaml.h>

#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "blochforge/modeset.hpp"
#include "blochforge/potential.hpp"

namespace blochforge {

/// Raised for malformed or inconsistent run configurations.
class ConfigError : public Error {
 public:
  using Error::Error;
};

inline const std::vector<std::string>& experiment_kinds() {
  static const std::vector<std::string> k{"bands",    "levelset", "modeset",       "acme",  "nlb-continue",
                                          "converge", "verify",   "line-continue", "evolve"};
  return k;
}

/// One experiment run. Stored as a flat YAML mapping; rational k-points are
/// kept as "p/q" strings so they survive serialization exactly.
struct RunConfig {
  std::string kind;
  std::string potential = "smoothed_square_2d";
  std::map<std::string, double> potential_params;
  int n = 0;  // points per axis; 0 picks 128 in 1D and 64 in 2D
  int n_bands = 4;
  std::string k_set = "grid";  // grid | path
  int k_per_axis = 16;
  std::vector<std::string> stars;  // "k1,k2:band"
  std::optional<double> omega_star;
  double level_tol = 1e-3;
  double sigma = -1.0;
  std::optional<double> Omega;  // defaults to sigma
  std::vector<double> eps;
  double tol = 1e-10;
  double seed_eps = 0.05;
  double ds = 0.05;
  double ds_max = 0.5;
  int max_steps = 100;
  std::optional<double> omega_min, omega_max;
  int direction = 0;  // 0 follows the sign of Omega

  std::string line_seed = "gap_soliton";  // gap_soliton | sech
  int edge = 2;
  std::optional<double> omega;
  double sech_a = 0.5, sech_w = 50.0;
  double line_L = 100.0;
  int line_n = 4096;
  double tail_x0 = 50.0;

  double dt = 1e-3;
  double T = 1000.0;
  double rel_amp = 0.1;
  int sample_stride = 1000;

  std::string reference;
  std::string run_dir;

  std::string out;
  std::uint64_t seed = 1;
  int threads = 1;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;

  [[nodiscard]] double Omega_or_sigma() const { return Omega.value_or(sigma); }
};

namespace detail {

template <class T>
T scalar(const YAML::Node& n, const std::string& key) {
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError("config: key '" + key + "' has the wrong type");
  }
}

template <class T>
std::vector<T> sequence(const YAML::Node& n, const std::string& key) {
  if (!n.IsSequence()) throw ConfigError("config: key '" + key + "' must be a list");
  std::vector<T> out;
  for (const auto& e : n) out.push_back(scalar<T>(e, key));
  return out;
}

}  // namespace detail

/// Parses "k1,...,kd:band" into a star.
inline Star parse_star(const std::string& s) {
  const auto colon = s.find(':');
  if (colon == std::string::npos) throw ConfigError("config: star '" + s + "' must look like 'k1,k2:band'");
  std::vector<std::string> parts;
  std::stringstream ks(s.substr(0, colon));
  for (std::string p; std::getline(ks, p, ',');) parts.push_back(p);
  try {
    return {KPoint::parse(parts), std::stoi(s.substr(colon + 1))};
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("config: bad star '" + s + "': " + e.what());
  }
}

inline std::string star_to_string(const Star& s) {
  std::string out;
  for (int d = 0; d < s.k.dim(); ++d) out += (d ? "," : "") + s.k[d].str();
  return out + ":" + std::to_string(s.n);
}

inline PotentialSpec make_potential(const RunConfig& c) {
  const auto param = [&](const std::string& k, double fallback) {
    auto it = c.potential_params.find(k);
    return it == c.potential_params.end() ? fallback : it->second;
  };
  if (c.potential == "sin2_1d") return PotentialSpec::sin2_1d();
  if (c.potential == "smoothed_square_2d") {
    auto d = PotentialSpec::smoothed_square_2d();
    auto& p = std::get<NamedPotential>(d.variant).params;
    return PotentialSpec::smoothed_square_2d(param("height", p["height"]), param("steepness", p["steepness"]),
                                             param("half_width", p["half_width"]));
  }
  if (c.potential == "cosine") return PotentialSpec::cosine(static_cast<int>(param("dim", 1)), param("amplitude", 1.0));
  if (c.potential == "zero") return PotentialSpec::zero(static_cast<int>(param("dim", 1)));
  throw ConfigError("config: unknown potential '" + c.potential + "'");
}

inline int grid_points(const RunConfig& c) {
  if (c.n > 0) return c.n;
  return make_potential(c).dim() == 1 ? 128 : 64;
}

/// Checks kind-specific requirements.
inline void validate(const RunConfig& c) {
  const auto& kinds = experiment_kinds();
  if (c.kind.empty()) throw ConfigError("config: missing required key 'kind'");
  if (std::find(kinds.begin(), kinds.end(), c.kind) == kinds.end())
    throw ConfigError("config: unknown kind '" + c.kind + "'");
  if (c.kind == "verify") {
    if (c.reference.empty()) throw ConfigError("config: verify needs 'reference'");
    return;
  }
  const auto pot = make_potential(c);
  if (c.n < 0 || c.n % 2) throw ConfigError("config: 'n' must be a positive even number");
  if (c.n_bands < 1) throw ConfigError("config: 'n_bands' must be positive");
  if (c.k_set != "grid" && c.k_set != "path") throw ConfigError("config: 'k_set' must be grid or path");
  if (c.k_per_axis < 2) throw ConfigError("config: 'k_per_axis' must be at least 2");
  if (c.threads < 1) throw ConfigError("config: 'threads' must be positive");
  for (const auto& s : c.stars) {
    auto st = parse_star(s);
    if (st.k.dim() != pot.dim()) throw ConfigError("config: star '" + s + "' has the wrong dimension");
    if (st.n < 1) throw ConfigError("config: star '" + s + "' needs a positive band index");
  }
  const bool needs_stars = c.kind == "modeset" || c.kind == "acme" || c.kind == "nlb-continue" ||
                           c.kind == "converge" || c.kind == "evolve";
  if (needs_stars && c.stars.empty()) throw ConfigError("config: " + c.kind + " needs at least one entry in 'stars'");
  if (c.kind == "levelset" && !c.omega_star) throw ConfigError("config: levelset needs 'omega_star'");
  if (c.kind == "converge") {
    if (c.eps.size() < 4) throw ConfigError("config: converge needs at least four values in 'eps'");
    for (std::size_t i = 0; i < c.eps.size(); ++i)
      if (c.eps[i] <= 0.0 || (i && c.eps[i] >= c.eps[i - 1]))
        throw ConfigError("config: 'eps' must be positive and strictly decreasing");
  }
  if (c.kind == "line-continue") {
    if (c.potential != "sin2_1d") throw ConfigError("config: line-continue supports the sin2_1d potential only");
    if (c.line_seed != "gap_soliton" && c.line_seed != "sech")
      throw ConfigError("config: 'line_seed' must be gap_soliton or sech");
    if (!c.omega) throw ConfigError("config: line-continue needs 'omega'");
    if (c.line_n < 4 || c.line_L <= 0.0) throw ConfigError("config: bad line grid");
  }
  if (c.kind == "evolve") {
    if (pot.dim() != 1 || c.stars.size() != 1) throw ConfigError("config: evolve needs a 1D potential and one star");
    if (!c.omega) throw ConfigError("config: evolve needs 'omega'");
    if (c.dt == 0.0 || c.T < 0.0 || c.sample_stride < 1) throw ConfigError("config: bad time stepping");
  }
  if (c.direction < -1 || c.direction > 1) throw ConfigError("config: 'direction' must be -1, 0 or 1");
}

inline RunConfig parse_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config: YAML syntax error: ") + e.what());
  }
  if (root.IsNull()) throw ConfigError("config: empty configuration");
  if (!root.IsMap()) throw ConfigError("config: top level must be a mapping");
  RunConfig c;
  std::set<std::string> seen;
  for (const auto& kv : root) {
    const auto key = kv.first.as<std::string>();
    const auto& v = kv.second;
    if (!seen.insert(key).second) throw ConfigError("config: duplicate key '" + key + "'");
    using detail::scalar;
    using detail::sequence;
    if (key == "kind") c.kind = scalar<std::string>(v, key);
    else if (key == "potential") c.potential = scalar<std::string>(v, key);
    else if (key == "potential_params") {
      if (!v.IsMap()) throw ConfigError("config: 'potential_params' must be a mapping");
      for (const auto& p : v) c.potential_params[p.first.as<std::string>()] = scalar<double>(p.second, key);
    }
    else if (key == "n") c.n = scalar<int>(v, key);
    else if (key == "n_bands") c.n_bands = scalar<int>(v, key);
    else if (key == "k_set") c.k_set = scalar<std::string>(v, key);
    else if (key == "k_per_axis") c.k_per_axis = scalar<int>(v, key);
    else if (key == "stars") c.stars = sequence<std::string>(v, key);
    else if (key == "omega_star") c.omega_star = scalar<double>(v, key);
    else if (key == "level_tol") c.level_tol = scalar<double>(v, key);
    else if (key == "sigma") c.sigma = scalar<double>(v, key);
    else if (key == "Omega") c.Omega = scalar<double>(v, key);
    else if (key == "eps") c.eps = sequence<double>(v, key);
    else if (key == "tol") c.tol = scalar<double>(v, key);
    else if (key == "seed_eps") c.seed_eps = scalar<double>(v, key);
    else if (key == "ds") c.ds = scalar<double>(v, key);
    else if (key == "ds_max") c.ds_max = scalar<double>(v, key);
    else if (key == "max_steps") c.max_steps = scalar<int>(v, key);
    else if (key == "omega_min") c.omega_min = scalar<double>(v, key);
    else if (key == "omega_max") c.omega_max = scalar<double>(v, key);
    else if (key == "direction") c.direction = scalar<int>(v, key);
    else if (key == "line_seed") c.line_seed = scalar<std::string>(v, key);
    else if (key == "edge") c.edge = scalar<int>(v, key);
    else if (key == "omega") c.omega = scalar<double>(v, key);
    else if (key == "sech_a") c.sech_a = scalar<double>(v, key);
    else if (key == "sech_w") c.sech_w = scalar<double>(v, key);
    else if (key == "line_L") c.line_L = scalar<double>(v, key);
    else if (key == "line_n") c.line_n = scalar<int>(v, key);
    else if (key == "tail_x0") c.tail_x0 = scalar<double>(v, key);
    else if (key == "dt") c.dt = scalar<double>(v, key);
    else if (key == "T") c.T = scalar<double>(v, key);
    else if (key == "rel_amp") c.rel_amp = scalar<double>(v, key);
    else if (key == "sample_stride") c.sample_stride = scalar<int>(v, key);
    else if (key == "reference") c.reference = scalar<std::string>(v, key);
    else if (key == "run_dir") c.run_dir = scalar<std::string>(v, key);
    else if (key == "out") c.out = scalar<std::string>(v, key);
    else if (key == "seed") c.seed = scalar<std::uint64_t>(v, key);
    else if (key == "threads") c.threads = scalar<int>(v, key);
    else throw ConfigError("config: unknown key '" + key + "'");
  }
  validate(c);
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

/// Canonical YAML text; parse_config(serialize_config(c)) == c.
inline std::string serialize_config(const RunConfig& c) {
  YAML::Emitter e;
  e.SetDoublePrecision(17);
  e << YAML::BeginMap;
  e << YAML::Key << "kind" << YAML::Value << c.kind;
  e << YAML::Key << "potential" << YAML::Value << c.potential;
  if (!c.potential_params.empty()) {
    e << YAML::Key << "potential_params" << YAML::Value << YAML::BeginMap;
    for (const auto& [k, v] : c.potential_params) e << YAML::Key << k << YAML::Value << v;
    e << YAML::EndMap;
  }
  e << YAML::Key << "n" << YAML::Value << c.n;
  e << YAML::Key << "n_bands" << YAML::Value << c.n_bands;
  e << YAML::Key << "k_set" << YAML::Value << c.k_set;
  e << YAML::Key << "k_per_axis" << YAML::Value << c.k_per_axis;
  if (!c.stars.empty()) {
    e << YAML::Key << "stars" << YAML::Value << YAML::Flow << YAML::BeginSeq;
    for (const auto& s : c.stars) e << YAML::DoubleQuoted << s;
    e << YAML::EndSeq;
  }
  if (c.omega_star) e << YAML::Key << "omega_star" << YAML::Value << *c.omega_star;
  e << YAML::Key << "level_tol" << YAML::Value << c.level_tol;
  e << YAML::Key << "sigma" << YAML::Value << c.sigma;
  if (c.Omega) e << YAML::Key << "Omega" << YAML::Value << *c.Omega;
  if (!c.eps.empty()) e << YAML::Key << "eps" << YAML::Value << YAML::Flow << c.eps;
  e << YAML::Key << "tol" << YAML::Value << c.tol;
  e << YAML::Key << "seed_eps" << YAML::Value << c.seed_eps;
  e << YAML::Key << "ds" << YAML::Value << c.ds;
  e << YAML::Key << "ds_max" << YAML::Value << c.ds_max;
  e << YAML::Key << "max_steps" << YAML::Value << c.max_steps;
  if (c.omega_min) e << YAML::Key << "omega_min" << YAML::Value << *c.omega_min;
  if (c.omega_max) e << YAML::Key << "omega_max" << YAML::Value << *c.omega_max;
  e << YAML::Key << "direction" << YAML::Value << c.direction;
  e << YAML::Key << "line_seed" << YAML::Value << c.line_seed;
  e << YAML::Key << "edge" << YAML::Value << c.edge;
  if (c.omega) e << YAML::Key << "omega" << YAML::Value << *c.omega;
  e << YAML::Key << "sech_a" << YAML::Value << c.sech_a;
  e << YAML::Key << "sech_w" << YAML::Value << c.sech_w;
  e << YAML::Key << "line_L" << YAML::Value << c.line_L;
  e << YAML::Key << "line_n" << YAML::Value << c.line_n;
  e << YAML::Key << "tail_x0" << YAML::Value << c.tail_x0;
  e << YAML::Key << "dt" << YAML::Value << c.dt;
  e << YAML::Key << "T" << YAML::Value << c.T;
  e << YAML::Key << "rel_amp" << YAML::Value << c.rel_amp;
  e << YAML::Key << "sample_stride" << YAML::Value << c.sample_stride;
  if (!c.reference.empty()) e << YAML::Key << "reference" << YAML::Value << c.reference;
  if (!c.run_dir.empty()) e << YAML::Key << "run_dir" << YAML::Value << c.run_dir;
  if (!c.out.empty()) e << YAML::Key << "out" << YAML::Value << c.out;
  e << YAML::Key << "seed" << YAML::Value << c.seed;
  e << YAML::Key << "threads" << YAML::Value << c.threads;
  e << YAML::EndMap;
  return std::string(e.c_str()) + "\n";
}

}  // namespace blochforge
