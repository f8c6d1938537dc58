#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "blochforge/bloch.hpp"
#include "blochforge/error.hpp"
#include "json.hpp"

namespace blochforge {

/// Exact rational with 64-bit parts, always reduced, denominator > 0.
class Rational {
 public:
  Rational() = default;
  Rational(std::int64_t num, std::int64_t den = 1) : num_(num), den_(den) {  // NOLINT implicit
    require(den != 0, "Rational: zero denominator");
    normalize();
  }

  [[nodiscard]] std::int64_t num() const { return num_; }
  [[nodiscard]] std::int64_t den() const { return den_; }
  [[nodiscard]] double to_double() const { return static_cast<double>(num_) / static_cast<double>(den_); }
  [[nodiscard]] bool is_integer() const { return den_ == 1; }

  /// Largest integer <= this.
  [[nodiscard]] std::int64_t floor() const {
    std::int64_t q = num_ / den_;
    if (num_ % den_ != 0 && num_ < 0) --q;
    return q;
  }

  friend Rational operator+(const Rational& a, const Rational& b) {
    const std::int64_t g = std::gcd(a.den_, b.den_);
    const std::int64_t l = mul(a.den_ / g, b.den_);
    return {add(mul(a.num_, l / a.den_), mul(b.num_, l / b.den_)), l};
  }
  friend Rational operator-(const Rational& a) { return {mul(a.num_, -1), a.den_}; }
  friend Rational operator-(const Rational& a, const Rational& b) { return a + (-b); }
  friend Rational operator*(const Rational& a, const Rational& b) {
    const std::int64_t g1 = std::gcd(a.num_, b.den_), g2 = std::gcd(b.num_, a.den_);
    return {mul(a.num_ / g1, b.num_ / g2), mul(a.den_ / g2, b.den_ / g1)};
  }
  friend bool operator==(const Rational&, const Rational&) = default;
  friend auto operator<=>(const Rational& a, const Rational& b) {
    return mul(a.num_, b.den_) <=> mul(b.num_, a.den_);
  }

  [[nodiscard]] std::string str() const {
    return den_ == 1 ? std::to_string(num_) : std::to_string(num_) + "/" + std::to_string(den_);
  }

  /// Parses "p/q" or "p".
  static Rational parse(const std::string& text) {
    const auto slash = text.find('/');
    try {
      std::size_t used = 0;
      if (slash == std::string::npos) {
        const auto v = std::stoll(text, &used);
        require(used == text.size(), "");
        return {v, 1};
      }
      const std::string a = text.substr(0, slash), b = text.substr(slash + 1);
      const auto p = std::stoll(a, &used);
      require(used == a.size(), "");
      const auto q = std::stoll(b, &used);
      require(used == b.size(), "");
      return {p, q};
    } catch (const std::exception&) {
      throw InvalidArgument("not a rational: '" + text + "'");
    }
  }

 private:
  static std::int64_t mul(std::int64_t a, std::int64_t b) {
    std::int64_t r;
    if (__builtin_mul_overflow(a, b, &r)) throw OverflowError("rational arithmetic overflow");
    return r;
  }
  static std::int64_t add(std::int64_t a, std::int64_t b) {
    std::int64_t r;
    if (__builtin_add_overflow(a, b, &r)) throw OverflowError("rational arithmetic overflow");
    return r;
  }
  void normalize() {
    if (den_ < 0) {
      num_ = mul(num_, -1);
      den_ = mul(den_, -1);
    }
    const std::int64_t g = std::gcd(num_, den_);
    if (g > 1) {
      num_ /= g;
      den_ /= g;
    }
  }

  std::int64_t num_ = 0;
  std::int64_t den_ = 1;
};

/// A quasimomentum with rational coordinates, reduced to (-1/2, 1/2]^d.
class KPoint {
 public:
  KPoint() = default;
  explicit KPoint(std::vector<Rational> coords) : c_(std::move(coords)) {
    require(!c_.empty(), "KPoint: empty coordinate list");
    for (auto& r : c_) r = reduce(r);
  }
  static KPoint parse(const std::vector<std::string>& parts) {
    std::vector<Rational> c;
    for (const auto& s : parts) c.push_back(Rational::parse(s));
    return KPoint(std::move(c));
  }

  [[nodiscard]] int dim() const { return static_cast<int>(c_.size()); }
  [[nodiscard]] const Rational& operator[](int d) const { return c_[d]; }
  [[nodiscard]] const std::vector<Rational>& coords() const { return c_; }
  [[nodiscard]] std::vector<double> to_double() const {
    std::vector<double> out;
    for (const auto& r : c_) out.push_back(r.to_double());
    return out;
  }
  [[nodiscard]] bool is_high_symmetry() const {
    return std::all_of(c_.begin(), c_.end(), [](const Rational& r) { return r.den() <= 2; });
  }
  [[nodiscard]] std::string str() const {
    std::string s = "(";
    for (std::size_t d = 0; d < c_.size(); ++d) s += (d ? "," : "") + c_[d].str();
    return s + ")";
  }
  [[nodiscard]] KPoint negated() const {
    std::vector<Rational> c;
    for (const auto& r : c_) c.push_back(-r);
    return KPoint(std::move(c));
  }

  friend bool operator==(const KPoint&, const KPoint&) = default;
  friend auto operator<=>(const KPoint& a, const KPoint& b) { return a.c_ <=> b.c_; }

  /// r - ceil(r - 1/2), the representative of r + Z in (-1/2, 1/2].
  static Rational reduce(const Rational& r) {
    const Rational shifted = r - Rational(1, 2);
    const std::int64_t ceil = shifted.is_integer() ? shifted.num() : shifted.floor() + 1;
    return r - Rational(ceil);
  }

 private:
  std::vector<Rational> c_;
};

/// k_a - k_b + k_c - k_j without reduction.
inline std::vector<Rational> combination(const KPoint& a, const KPoint& b, const KPoint& c, const KPoint& j) {
  require(a.dim() == b.dim() && b.dim() == c.dim() && c.dim() == j.dim(), "k-points of mixed dimension");
  std::vector<Rational> out;
  for (int d = 0; d < a.dim(); ++d) out.push_back(a[d] - b[d] + c[d] - j[d]);
  return out;
}

/// S3 closure: the smallest set containing the stars and closed under
/// k_a - k_b + k_c mod Z^d. This equals k_1 plus the subgroup of (Q/Z)^d
/// generated by k_i - k_1, which is enumerated breadth first. Distinct input
/// points come first, in input order.
inline std::vector<KPoint> closure_S3(const std::vector<KPoint>& stars) {
  require(!stars.empty(), "closure_S3: empty star list");
  std::vector<KPoint> pts;
  std::set<KPoint> seen;
  for (const auto& s : stars) {
    require(s.dim() == stars[0].dim(), "closure_S3: mixed dimensions");
    if (seen.insert(s).second) pts.push_back(s);
  }
  std::vector<std::vector<Rational>> gens;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    std::vector<Rational> g, mg;
    for (int d = 0; d < pts[0].dim(); ++d) {
      g.push_back(pts[i][d] - pts[0][d]);
      mg.push_back(pts[0][d] - pts[i][d]);
    }
    gens.push_back(std::move(g));
    gens.push_back(std::move(mg));
  }
  for (std::size_t head = 0; head < pts.size(); ++head) {
    for (const auto& g : gens) {
      std::vector<Rational> c;
      for (int d = 0; d < pts[head].dim(); ++d) c.push_back(pts[head][d] + g[d]);
      KPoint k(std::move(c));
      if (seen.insert(k).second) pts.push_back(std::move(k));
    }
  }
  return pts;
}

/// True iff S3(stars) lies in stars + Z^d.
inline bool is_consistent(const std::vector<KPoint>& stars) {
  std::vector<KPoint> distinct;
  for (const auto& s : stars)
    if (std::find(distinct.begin(), distinct.end(), s) == distinct.end()) distinct.push_back(s);
  return closure_S3(stars).size() == distinct.size();
}

inline std::int64_t denominator_lcm(const std::vector<KPoint>& pts) {
  std::int64_t l = 1;
  for (const auto& p : pts)
    for (const auto& r : p.coords()) l = std::lcm(l, r.den());
  return l;
}

/// One admissible index triple (a, b, c) of the sum for equation j, with the
/// integer vector m = k_a - k_b + k_c - k_j. Indices are 0-based.
struct Triple {
  int a = 0, b = 0, c = 0;
  std::vector<int> m;
  friend bool operator==(const Triple&, const Triple&) = default;
};

/// Index sets {(a,b,c) : k_a - k_b + k_c - k_j in Z^d} for every j.
inline std::vector<std::vector<Triple>> index_sets(const std::vector<KPoint>& ks) {
  const int n = static_cast<int>(ks.size());
  std::vector<std::vector<Triple>> out(n);
  for (int j = 0; j < n; ++j)
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        for (int c = 0; c < n; ++c) {
          auto v = combination(ks[a], ks[b], ks[c], ks[j]);
          if (!std::all_of(v.begin(), v.end(), [](const Rational& r) { return r.is_integer(); })) continue;
          Triple t{a, b, c, {}};
          for (const auto& r : v) t.m.push_back(static_cast<int>(r.num()));
          out[j].push_back(std::move(t));
        }
  return out;
}

struct Star {
  KPoint k;
  int n = 1;  // band index
  friend bool operator==(const Star&, const Star&) = default;
};

/// j -> j' with k_{j'} = -k_j (mod Z^d) and the same band. Prefers j' = j.
inline std::vector<int> reversal_pairing(const std::vector<Star>& stars) {
  std::vector<int> pairing(stars.size(), -1);
  for (std::size_t j = 0; j < stars.size(); ++j) {
    const KPoint target = stars[j].k.negated();
    if (target == stars[j].k) {
      pairing[j] = static_cast<int>(j);
      continue;
    }
    for (std::size_t i = 0; i < stars.size(); ++i)
      if (stars[i].k == target && stars[i].n == stars[j].n) {
        pairing[j] = static_cast<int>(i);
        break;
      }
    if (pairing[j] < 0)
      throw InvalidArgument("reversal pairing: reflection " + target.str() + " of star " + stars[j].k.str() +
                            " (band " + std::to_string(stars[j].n) + ") is missing");
  }
  return pairing;
}

/// Stars with their S3 closure, index sets and reversal pairing.
struct ModeSelection {
  double omega_star = 0.0;
  std::vector<Star> stars;            // N entries
  std::vector<KPoint> closure;        // M entries, first N are the star k-points
  std::vector<int> pairing;           // on 0..N-1
  std::vector<std::vector<Triple>> A;        // over stars
  std::vector<std::vector<Triple>> A_tilde;  // over closure

  [[nodiscard]] int N() const { return static_cast<int>(stars.size()); }
  [[nodiscard]] int M() const { return static_cast<int>(closure.size()); }
  [[nodiscard]] int dim() const { return stars.empty() ? 0 : stars[0].k.dim(); }
  [[nodiscard]] bool consistent() const { return M() == N(); }
};

/// Builds a selection. Repeated k-points (degenerate bands) stay repeated in
/// the closure prefix so that closure[j] is the k-point of star j.
inline ModeSelection make_selection(double omega_star, std::vector<Star> stars) {
  require(!stars.empty(), "make_selection: no stars");
  ModeSelection s;
  s.omega_star = omega_star;
  s.stars = std::move(stars);
  std::vector<KPoint> ks;
  for (const auto& st : s.stars) {
    require(st.k.dim() == s.stars[0].k.dim(), "make_selection: mixed dimensions");
    require(st.n >= 1, "make_selection: band index must be >= 1");
    ks.push_back(st.k);
  }
  for (std::size_t i = 0; i < s.stars.size(); ++i)
    for (std::size_t j = i + 1; j < s.stars.size(); ++j)
      require(!(s.stars[i] == s.stars[j]), "make_selection: duplicate star " + s.stars[i].k.str());
  s.closure = ks;
  for (const auto& k : closure_S3(ks))
    if (std::find(ks.begin(), ks.end(), k) == ks.end()) s.closure.push_back(k);
  s.pairing = reversal_pairing(s.stars);
  s.A = index_sets(ks);
  s.A_tilde = index_sets(s.closure);
  return s;
}

struct HypothesisCheck {
  std::string name;
  bool passed = true;
  std::string detail;
};

struct AssumptionReport {
  std::vector<HypothesisCheck> checks;
  [[nodiscard]] bool all_passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
  }
  [[nodiscard]] const HypothesisCheck& operator[](const std::string& name) const {
    for (const auto& c : checks)
      if (c.name == name) return c;
    throw InvalidArgument("no hypothesis named " + name);
  }
};

namespace detail {

inline std::vector<double> bands_at(const BandStructure& bs, const KPoint& k) {
  const auto kd = k.to_double();
  for (std::size_t i = 0; i < bs.k_samples.size(); ++i) {
    bool same = true;
    for (std::size_t d = 0; d < kd.size(); ++d) {
      const double diff = bs.k_samples[i][d] - kd[d];
      same &= std::abs(diff - std::round(diff)) < 1e-12;
    }
    if (same) return bs.bands[i];
  }
  std::vector<double> out;
  for (const auto& m : solve_bloch(bs.potential, bs.grid, kd, bs.n_bands)) out.push_back(m.omega);
  return out;
}

}  // namespace detail

/// Pass/fail per hypothesis (H2)-(H6) against a band structure. Closure
/// points that are not sampled in `bs` are solved on its grid.
inline AssumptionReport check_assumptions(const BandStructure& bs, const std::vector<Star>& stars,
                                          double omega_star, double tol = 1e-6) {
  AssumptionReport rep;
  std::vector<KPoint> ks;
  for (const auto& s : stars) ks.push_back(s.k);
  std::vector<KPoint> distinct;
  for (const auto& k : ks)
    if (std::find(distinct.begin(), distinct.end(), k) == distinct.end()) distinct.push_back(k);

  HypothesisCheck h2{"H2", true, ""};
  for (const auto& s : stars) {
    require(s.n <= bs.n_bands, "check_assumptions: band index above computed bands");
    const double w = detail::bands_at(bs, s.k)[s.n - 1];
    if (std::abs(w - omega_star) > tol) {
      h2.passed = false;
      h2.detail += s.k.str() + " band " + std::to_string(s.n) + " has omega " + std::to_string(w) + "; ";
    }
  }
  rep.checks.push_back(h2);

  HypothesisCheck h3{"H3", true, ""};
  for (const auto& k : distinct) {
    const auto w = detail::bands_at(bs, k);
    int on_level = 0, listed = 0;
    for (double x : w) on_level += std::abs(x - omega_star) <= tol;
    for (const auto& s : stars) listed += s.k == k && std::abs(w[s.n - 1] - omega_star) <= tol;
    if (on_level != listed) {
      h3.passed = false;
      h3.detail += k.str() + " has " + std::to_string(on_level) + " bands at omega* but " +
                   std::to_string(listed) + " stars; ";
    }
  }
  rep.checks.push_back(h3);

  rep.checks.push_back({"H4", true, "rational by construction"});

  HypothesisCheck h5{"H5", true, ""};
  for (const auto& k : closure_S3(ks)) {
    if (std::find(distinct.begin(), distinct.end(), k) != distinct.end()) continue;
    const auto w = detail::bands_at(bs, k);
    for (std::size_t n = 0; n < w.size(); ++n)
      if (std::abs(w[n] - omega_star) <= tol) {
        h5.passed = false;
        h5.detail += k.str() + " band " + std::to_string(n + 1) + " lies on the level set; ";
      }
  }
  rep.checks.push_back(h5);

  HypothesisCheck h6{"H6", true, ""};
  try {
    reversal_pairing(stars);
  } catch (const InvalidArgument& e) {
    h6.passed = false;
    h6.detail = e.what();
  }
  rep.checks.push_back(h6);
  return rep;
}

/// All rational points of B with denominators <= max_den.
inline std::vector<KPoint> rational_points(int dim, int max_den) {
  std::vector<Rational> axis;
  for (int q = 1; q <= max_den; ++q)
    for (int p = -q; p <= q; ++p) {
      const Rational r = KPoint::reduce(Rational(p, q));
      if (std::find(axis.begin(), axis.end(), r) == axis.end()) axis.push_back(r);
    }
  std::sort(axis.begin(), axis.end());
  std::vector<KPoint> out;
  std::vector<std::size_t> idx(dim, 0);
  while (true) {
    std::vector<Rational> c;
    for (int d = 0; d < dim; ++d) c.push_back(axis[idx[d]]);
    out.emplace_back(std::move(c));
    int d = dim - 1;
    while (d >= 0 && ++idx[d] == axis.size()) idx[d--] = 0;
    if (d < 0) break;
  }
  return out;
}

/// Unordered pairs {k1, k2} of distinct points with denominators <= max_den
/// that are consistent and closed under reflection.
inline std::vector<std::vector<KPoint>> enumerate_consistent_pairs(int dim, int max_den = 4) {
  const auto pts = rational_points(dim, max_den);
  std::vector<std::vector<KPoint>> out;
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j) {
      std::vector<KPoint> pair{pts[i], pts[j]};
      if (!is_consistent(pair)) continue;
      try {
        reversal_pairing({{pts[i], 1}, {pts[j], 1}});
      } catch (const InvalidArgument&) {
        continue;
      }
      out.push_back(std::move(pair));
    }
  return out;
}

inline std::vector<std::vector<KPoint>> enumerate_consistent_pairs_2d() { return enumerate_consistent_pairs(2); }

inline nlohmann::json kpoint_to_json(const KPoint& k) {
  auto j = nlohmann::json::array();
  for (const auto& r : k.coords()) j.push_back(r.str());
  return j;
}

inline KPoint kpoint_from_json(const nlohmann::json& j) {
  require(j.is_array(), "k-point must be an array of \"p/q\" strings");
  return KPoint::parse(j.get<std::vector<std::string>>());
}

inline nlohmann::json selection_to_json(const ModeSelection& s) {
  nlohmann::json j;
  j["omega_star"] = s.omega_star;
  for (const auto& st : s.stars) j["stars"].push_back({{"k", kpoint_to_json(st.k)}, {"n", st.n}});
  for (const auto& k : s.closure) j["closure"].push_back(kpoint_to_json(k));
  j["pairing"] = s.pairing;
  j["N"] = s.N();
  j["M"] = s.M();
  j["denominator_lcm"] = denominator_lcm(s.closure);
  j["consistent"] = s.consistent();
  return j;
}

/// Rebuilds a selection from its stars; derived fields are recomputed.
inline ModeSelection selection_from_json(const nlohmann::json& j) {
  std::vector<Star> stars;
  for (const auto& st : j.at("stars")) stars.push_back({kpoint_from_json(st.at("k")), st.at("n").get<int>()});
  return make_selection(j.at("omega_star").get<double>(), std::move(stars));
}

}  // namespace blochforge
