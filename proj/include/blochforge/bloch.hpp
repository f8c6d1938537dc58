#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <mutex>
#include <ostream>
#include <thread>

#include "blochforge/eigensolver.hpp"
#include "blochforge/fourier.hpp"
#include "blochforge/potential.hpp"

namespace blochforge {

/// One Bloch eigenpair xi_n(x, k) = p(x) e^{i k.x}, normalized in L^2(P).
struct BlochMode {
  std::vector<double> k;
  int n = 1;  // band index, 1-based
  double omega = 0.0;
  ComplexField p;
  double normalization = 1.0;  // ||xi||_{L^2(P)}
  int multiplicity = 1;        // size of the eigenvalue cluster containing omega

  /// Grid samples of xi = p e^{i k.x}.
  [[nodiscard]] ComplexField xi() const {
    ComplexField out(p.grid);
    for (std::size_t i = 0; i < out.size(); ++i) {
      const auto x = p.grid.point(i);
      double phase = 0.0;
      for (int d = 0; d < p.grid.dim; ++d) phase += k[d] * x[d];
      out[i] = p[i] * std::polar(1.0, phase);
    }
    return out;
  }
};

struct BlochOptions {
  double tol = 1e-10;                   // LOBPCG residual tolerance (relative)
  std::size_t dense_threshold = 512;    // dense solve up to this many unknowns
  double cluster_tol = 1e-7;            // multiplicity: |w_i - w_j| <= cluster_tol (1 + |w|)
  int guard_bands = 2;                  // extra bands computed to see degeneracies at the top
};

inline bool is_high_symmetry(std::span<const double> k) {
  for (double c : k) {
    const double a = std::abs(c);
    if (a > 1e-12 && std::abs(a - 0.5) > 1e-12) return false;
  }
  return true;
}

/// The Bloch operator -(grad + i k)^2 + V acting on periodic factors.
class BlochOperator {
 public:
  BlochOperator(TorusGrid grid, RealVec potential, std::vector<double> k)
      : grid_(grid), v_(std::move(potential)), k_(std::move(k)) {
    require(v_.size() == grid_.size(), "BlochOperator: potential does not match grid");
    require(static_cast<int>(k_.size()) == grid_.dim, "BlochOperator: k has wrong dimension");
    symbol_ = shifted_laplacian_symbol(grid_, k_);
    vmax_ = *std::max_element(v_.begin(), v_.end());
    vmin_ = *std::min_element(v_.begin(), v_.end());
  }

  [[nodiscard]] const TorusGrid& grid() const { return grid_; }
  [[nodiscard]] const RealVec& potential() const { return v_; }
  [[nodiscard]] const RealVec& symbol() const { return symbol_; }
  [[nodiscard]] const std::vector<double>& k() const { return k_; }

  void apply(std::span<const cplx> in, std::span<cplx> out, CplxVec& scratch) const {
    std::copy(in.begin(), in.end(), out.begin());
    apply_diagonal(grid_, out, symbol_, scratch);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += v_[i] * in[i];
  }

  [[nodiscard]] MatrixXc apply_block(const MatrixXc& X) const {
    MatrixXc Y(X.rows(), X.cols());
    CplxVec scratch;
    for (Eigen::Index c = 0; c < X.cols(); ++c)
      apply(std::span<const cplx>(X.col(c).data(), X.rows()), std::span<cplx>(Y.col(c).data(), Y.rows()),
            scratch);
    return Y;
  }

  /// (|m + k|^2 + shift)^{-1}, shift chosen so the preconditioner is positive.
  [[nodiscard]] MatrixXc precondition_block(const MatrixXc& R) const {
    RealVec inv(symbol_.size());
    const double shift = std::max(1.0, 1.0 + std::abs(vmin_));
    for (std::size_t i = 0; i < inv.size(); ++i) inv[i] = 1.0 / (symbol_[i] + shift);
    MatrixXc W = R;
    CplxVec scratch;
    for (Eigen::Index c = 0; c < W.cols(); ++c)
      apply_diagonal(grid_, std::span<cplx>(W.col(c).data(), W.rows()), inv, scratch);
    return W;
  }

  [[nodiscard]] MatrixXc dense() const {
    const auto N = static_cast<Eigen::Index>(grid_.size());
    return apply_block(MatrixXc::Identity(N, N));
  }

 private:
  TorusGrid grid_;
  RealVec v_;
  std::vector<double> k_;
  RealVec symbol_;
  double vmax_ = 0.0, vmin_ = 0.0;
};

/// Fixes the free phase of a normalized mode.
///
/// High-symmetry k: rotate so xi is real, then make its cell mean positive
/// (falling back to the largest Fourier coefficient). Otherwise rotate so
/// xi(0) is real positive, or the largest Fourier coefficient of p when
/// xi(0) vanishes.
inline BlochMode fix_phase(BlochMode mode) {
  auto xi = mode.xi();
  const double scale = std::sqrt(std::accumulate(xi.values.begin(), xi.values.end(), 0.0,
                                                 [](double a, cplx z) { return a + std::norm(z); }) /
                                 static_cast<double>(xi.size()));
  cplx rotation{1.0, 0.0};
  auto largest_coefficient = [&](const ComplexField& f) {
    auto c = to_coefficients(f.grid, f.values);
    double best = 0.0;
    for (const auto& z : c) best = std::max(best, std::abs(z));
    for (const auto& z : c)
      if (std::abs(z) >= best * (1.0 - 1e-8)) return z;
    return cplx{};
  };
  if (is_high_symmetry(mode.k)) {
    cplx sq{};
    for (const auto& z : xi.values) sq += z * z;
    rotation = std::polar(1.0, -0.5 * std::arg(sq));
    cplx mean{};
    for (const auto& z : xi.values) mean += z * rotation;
    mean /= static_cast<double>(xi.size());
    double sign_ref = mean.real();
    if (std::abs(sign_ref) <= 1e-6 * scale) {
      ComplexField rotated = mode.p;
      for (auto& z : rotated.values) z *= rotation;
      const cplx c = largest_coefficient(rotated);
      sign_ref = std::abs(c.real()) > 1e-12 * std::abs(c) ? c.real() : c.imag();
    }
    if (sign_ref < 0.0) rotation = -rotation;
  } else {
    const cplx at_origin = xi[xi.grid.origin_index()];
    if (std::abs(at_origin) > 1e-6 * scale) {
      rotation = std::polar(1.0, -std::arg(at_origin));
    } else {
      rotation = std::polar(1.0, -std::arg(largest_coefficient(mode.p)));
    }
  }
  for (auto& z : mode.p.values) z *= rotation;
  return mode;
}

namespace detail {

/// Replaces a degenerate cluster at a high-symmetry k by a real-valued basis
/// of the same eigenspace (xi real). Columns are unit vectors of p samples.
inline void realify_cluster(const TorusGrid& g, std::span<const double> k, MatrixXc& V, int first,
                            int count) {
  const auto N = V.rows();
  VectorXc phase(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    const auto x = g.point(static_cast<std::size_t>(i));
    double s = 0.0;
    for (int d = 0; d < g.dim; ++d) s += k[d] * x[d];
    phase[i] = std::polar(1.0, s);
  }
  MatrixXc cand(N, 2 * count);
  for (int c = 0; c < count; ++c) {
    VectorXc xi = V.col(first + c).cwiseProduct(phase);
    cand.col(2 * c) = xi.real().cast<cplx>();
    cand.col(2 * c + 1) = xi.imag().cast<cplx>();
  }
  MatrixXc Q = orthonormalize(cand, 0);
  require(Q.cols() >= count, "realify_cluster: lost eigenspace dimension");
  for (int c = 0; c < count; ++c) V.col(first + c) = Q.col(c).cwiseProduct(phase.conjugate());
}

}  // namespace detail

/// The n_bands lowest Bloch eigenpairs at quasimomentum k, ascending,
/// normalized and phase-fixed.
inline std::vector<BlochMode> solve_bloch(const PotentialSpec& potential, const TorusGrid& grid,
                                          std::span<const double> k, int n_bands,
                                          const BlochOptions& opt = {}) {
  require(static_cast<int>(k.size()) == grid.dim, "solve_bloch: k has wrong dimension");
  require(n_bands >= 1, "solve_bloch: n_bands must be at least 1");
  require(static_cast<std::size_t>(n_bands + opt.guard_bands) * 4 <= grid.size(),
          "solve_bloch: n_bands too large for the plane-wave cutoff");
  BlochOperator op(grid, sample_potential(potential, grid), std::vector<double>(k.begin(), k.end()));
  const int want = n_bands + opt.guard_bands;
  EigenResult er;
  if (grid.size() <= opt.dense_threshold) {
    er = dense_lowest(op.dense(), want);
  } else {
    er = lobpcg(
        static_cast<Eigen::Index>(grid.size()), want,
        [&](const MatrixXc& X) { return op.apply_block(X); },
        [&](const MatrixXc& R) { return op.precondition_block(R); }, opt.tol);
  }

  // Multiplicities and real bases for degenerate high-symmetry clusters.
  std::vector<int> mult(want, 1);
  for (int i = 0; i < want;) {
    int j = i + 1;
    while (j < want &&
           std::abs(er.values[j] - er.values[i]) <= opt.cluster_tol * (1.0 + std::abs(er.values[i])))
      ++j;
    for (int t = i; t < j; ++t) mult[t] = j - i;
    if (j - i > 1 && is_high_symmetry(k)) detail::realify_cluster(grid, k, er.vectors, i, j - i);
    i = j;
  }

  const double inv_sqrt_w = 1.0 / std::sqrt(grid.weight());
  std::vector<BlochMode> modes;
  CplxVec scratch, hp(grid.size());
  for (int b = 0; b < n_bands; ++b) {
    BlochMode m;
    m.k.assign(k.begin(), k.end());
    m.n = b + 1;
    m.omega = er.values[b];
    m.multiplicity = mult[b];
    CplxVec vals(grid.size());
    for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = er.vectors(static_cast<Eigen::Index>(i), b) * inv_sqrt_w;
    m.p = ComplexField(grid, std::move(vals), m.k);
    m.normalization = l2_norm(m.p);
    op.apply(m.p.values, hp, scratch);
    double res = 0.0;
    for (std::size_t i = 0; i < hp.size(); ++i) res += std::norm(hp[i] - m.omega * m.p[i]);
    res = std::sqrt(res * grid.weight());
    if (res > 1e-8 * (1.0 + std::abs(m.omega)))
      throw ConvergenceError("solve_bloch: residual " + std::to_string(res) + " above tolerance");
    modes.push_back(fix_phase(std::move(m)));
  }
  return modes;
}

/// omega_n(k) for a list of k samples. Optional `shape` records the
/// lattice layout of full Brillouin-zone grids (points per axis, row-major)
/// so neighbours along coordinate lines can be recovered; for paths it is
/// empty and consecutive samples are neighbours.
struct BandStructure {
  PotentialSpec potential;
  TorusGrid grid;
  std::vector<std::vector<double>> k_samples;
  std::vector<std::vector<double>> bands;  // bands[i][n-1] = omega_n(k_i)
  int n_bands = 0;
  std::vector<int> shape;
};

/// Uniform sampling of B with `per_axis` points per direction, including
/// the boundary value 1/2 (and excluding the equivalent -1/2).
inline std::vector<std::vector<double>> brillouin_grid(int dim, int per_axis) {
  require(per_axis >= 2, "brillouin_grid: need at least two points per axis");
  std::vector<double> axis(per_axis);
  for (int i = 0; i < per_axis; ++i) axis[i] = -0.5 + (i + 1) * (1.0 / per_axis);
  std::vector<std::vector<double>> out;
  std::vector<int> idx(dim, 0);
  while (true) {
    std::vector<double> k(dim);
    for (int d = 0; d < dim; ++d) k[d] = axis[idx[d]];
    out.push_back(k);
    int d = dim - 1;
    while (d >= 0 && ++idx[d] == per_axis) idx[d--] = 0;
    if (d < 0) break;
  }
  return out;
}

/// Polygonal path through the given vertices with `per_segment` steps per
/// leg (vertex included once).
inline std::vector<std::vector<double>> k_path(const std::vector<std::vector<double>>& vertices,
                                               int per_segment) {
  require(vertices.size() >= 2 && per_segment >= 1, "k_path: need two vertices");
  std::vector<std::vector<double>> out;
  for (std::size_t s = 0; s + 1 < vertices.size(); ++s) {
    for (int i = 0; i < per_segment; ++i) {
      const double t = static_cast<double>(i) / per_segment;
      std::vector<double> k(vertices[s].size());
      for (std::size_t d = 0; d < k.size(); ++d) k[d] = (1 - t) * vertices[s][d] + t * vertices[s + 1][d];
      out.push_back(k);
    }
  }
  out.push_back(vertices.back());
  return out;
}

/// Gamma-X-M-Gamma in 2D.
inline std::vector<std::vector<double>> gamma_x_m_path(int per_segment) {
  return k_path({{0.0, 0.0}, {0.5, 0.0}, {0.5, 0.5}, {0.0, 0.0}}, per_segment);
}

inline BandStructure band_structure(const PotentialSpec& potential, const TorusGrid& grid,
                                    std::vector<std::vector<double>> k_samples, int n_bands,
                                    int threads = 1, const BlochOptions& opt = {},
                                    std::vector<int> shape = {}) {
  require(!k_samples.empty(), "band_structure: empty k sample set");
  BandStructure bs{potential, grid, std::move(k_samples), {}, n_bands, std::move(shape)};
  bs.bands.assign(bs.k_samples.size(), {});
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < bs.k_samples.size(); i += stride) {
      try {
        auto modes = solve_bloch(potential, grid, bs.k_samples[i], n_bands, opt);
        for (const auto& m : modes) bs.bands[i].push_back(m.omega);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1) {
    worker(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(worker, t, workers);
  }
  if (failure) std::rethrow_exception(failure);
  return bs;
}

/// Spectral band intervals [s_1, s_2], [s_3, s_4], ... obtained by merging
/// the per-band ranges over the sampled k (touching ranges are merged).
inline std::vector<double> spectral_edges(const BandStructure& bs, double merge_tol = 1e-7) {
  std::vector<std::pair<double, double>> ranges;
  for (int n = 0; n < bs.n_bands; ++n) {
    double lo = 1e300, hi = -1e300;
    for (const auto& row : bs.bands) {
      lo = std::min(lo, row[n]);
      hi = std::max(hi, row[n]);
    }
    ranges.emplace_back(lo, hi);
  }
  std::sort(ranges.begin(), ranges.end());
  std::vector<std::pair<double, double>> merged;
  for (const auto& r : ranges) {
    if (!merged.empty() && r.first <= merged.back().second + merge_tol * (1.0 + std::abs(r.first)))
      merged.back().second = std::max(merged.back().second, r.second);
    else
      merged.push_back(r);
  }
  std::vector<double> edges;
  for (const auto& [a, b] : merged) {
    edges.push_back(a);
    edges.push_back(b);
  }
  return edges;
}

struct LevelPoint {
  std::vector<double> k;
  int n = 1;
  double omega = 0.0;
  bool refined = false;  // found by bisection between samples
};

namespace detail {

inline std::vector<std::pair<std::size_t, std::size_t>> neighbour_pairs(const BandStructure& bs) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  if (bs.shape.empty()) {
    for (std::size_t i = 0; i + 1 < bs.k_samples.size(); ++i) pairs.emplace_back(i, i + 1);
    return pairs;
  }
  const int dim = static_cast<int>(bs.shape.size());
  std::vector<std::size_t> stride(dim, 1);
  for (int d = dim - 2; d >= 0; --d) stride[d] = stride[d + 1] * static_cast<std::size_t>(bs.shape[d + 1]);
  for (std::size_t i = 0; i < bs.k_samples.size(); ++i) {
    for (int d = 0; d < dim; ++d) {
      const auto coord = (i / stride[d]) % static_cast<std::size_t>(bs.shape[d]);
      if (coord + 1 < static_cast<std::size_t>(bs.shape[d])) pairs.emplace_back(i, i + stride[d]);
    }
  }
  return pairs;
}

}  // namespace detail

/// Sampled points (k, n) with |omega_n(k) - omega_star| <= tol, plus level
/// crossings located by bisection between neighbouring samples.
inline std::vector<LevelPoint> level_set(const BandStructure& bs, double omega_star, double tol,
                                         const BlochOptions& opt = {}, int max_bisections = 60) {
  std::vector<LevelPoint> out;
  for (std::size_t i = 0; i < bs.k_samples.size(); ++i)
    for (int n = 0; n < bs.n_bands; ++n)
      if (std::abs(bs.bands[i][n] - omega_star) <= tol)
        out.push_back({bs.k_samples[i], n + 1, bs.bands[i][n], false});

  for (const auto& [a, b] : detail::neighbour_pairs(bs)) {
    for (int n = 0; n < bs.n_bands; ++n) {
      const double fa = bs.bands[a][n] - omega_star, fb = bs.bands[b][n] - omega_star;
      if (std::abs(fa) <= tol || std::abs(fb) <= tol || fa * fb > 0.0) continue;
      std::vector<double> ka = bs.k_samples[a], kb = bs.k_samples[b], km(ka.size());
      double flo = fa, wm = 0.0;
      for (int it = 0; it < max_bisections; ++it) {
        for (std::size_t d = 0; d < km.size(); ++d) km[d] = 0.5 * (ka[d] + kb[d]);
        wm = solve_bloch(bs.potential, bs.grid, km, n + 1, opt)[n].omega;
        const double fm = wm - omega_star;
        if (std::abs(fm) <= tol) break;
        if (fm * flo < 0.0) {
          kb = km;
        } else {
          ka = km;
          flo = fm;
        }
      }
      out.push_back({km, n + 1, wm, true});
    }
  }
  return out;
}

inline void write_bands_csv(std::ostream& os, const BandStructure& bs) {
  const int dim = bs.grid.dim;
  for (int d = 0; d < dim; ++d) os << "k" << (d + 1) << ",";
  os << "n,omega\n";
  os.precision(12);
  for (std::size_t i = 0; i < bs.k_samples.size(); ++i)
    for (int n = 0; n < bs.n_bands; ++n) {
      for (int d = 0; d < dim; ++d) os << bs.k_samples[i][d] << ",";
      os << (n + 1) << "," << bs.bands[i][n] << "\n";
    }
}

inline void write_level_set_csv(std::ostream& os, int dim, const std::vector<LevelPoint>& pts) {
  for (int d = 0; d < dim; ++d) os << "k" << (d + 1) << ",";
  os << "n,omega\n";
  os.precision(12);
  for (const auto& p : pts) {
    for (int d = 0; d < dim; ++d) os << p.k[d] << ",";
    os << p.n << "," << p.omega << "\n";
  }
}

}  // namespace blochforge
