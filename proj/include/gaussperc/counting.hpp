#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "gaussperc/connectivity.hpp"
#include "gaussperc/error.hpp"
#include "gaussperc/grid.hpp"
#include "gaussperc/kernels.hpp"
#include "gaussperc/rng.hpp"
#include "gaussperc/synthesis.hpp"

namespace gaussperc {

/// Boundary of the box [-L, L]^d on a grid: vertices of the centered index box
/// that lie on one of its faces. Two shell vertices are adjacent when they are
/// grid face-neighbors.
struct BoundaryShell {
  GridSpec grid;
  double L = 0.0;
  Box box;
  std::vector<std::size_t> vertices;  ///< grid flat indices, row-major order

  static BoundaryShell make(const GridSpec& g, double L) {
    BoundaryShell s;
    s.grid = g;
    s.L = L;
    const Index k = half_width_for(g, L);
    for (std::size_t a = 0; a < g.dim; ++a)
      if (k[a] < 1) throw InvalidArgument("shell half-width must be at least one grid spacing");
    s.box = Box::centered(g, k);
    if (!s.box.inside(g)) throw InvalidArgument("shell at scale L exceeds the grid");
    for_each_index(s.box, [&](const Index& i) {
      if (s.on_shell(i)) s.vertices.push_back(g.flat(i));
    });
    return s;
  }

  bool on_shell(const Index& i) const {
    if (!box.contains(i)) return false;
    for (std::size_t a = 0; a < grid.dim; ++a)
      if (i[a] == box.lo[a] || i[a] == box.hi[a]) return true;
    return false;
  }

  /// Calls fn(neighbor flat index) for each shell neighbor of shell vertex i.
  template <typename Fn>
  void for_each_neighbor(const Index& i, Fn&& fn) const {
    for (std::size_t a = 0; a < grid.dim; ++a)
      for (std::ptrdiff_t step : {-1, 1}) {
        Index j = i;
        j[a] += step;
        if (on_shell(j)) fn(grid.flat(j));
      }
  }
};

/// Components of mask ∩ shell under the shell's intrinsic adjacency.
inline std::size_t count_boundary_components(const ExcursionMask& m, const BoundaryShell& shell) {
  if (!(m.grid == shell.grid)) throw InvalidArgument("mask and shell grids differ");
  std::vector<std::uint32_t> local(shell.box.size(), UINT32_MAX);
  std::vector<std::size_t> members;
  for (std::size_t f : shell.vertices)
    if (m.bits[f]) {
      local[shell.box.local_flat(m.grid.unflat(f))] = static_cast<std::uint32_t>(members.size());
      members.push_back(f);
    }
  DisjointSets sets(members.size());
  std::size_t components = members.size();
  for (std::size_t u = 0; u < members.size(); ++u) {
    const Index i = m.grid.unflat(members[u]);
    shell.for_each_neighbor(i, [&](std::size_t nf) {
      const auto v = local[shell.box.local_flat(m.grid.unflat(nf))];
      if (v == UINT32_MAX) return;
      if (sets.find(static_cast<std::uint32_t>(u)) != sets.find(v)) {
        sets.unite(static_cast<std::uint32_t>(u), v);
        --components;
      }
    });
  }
  return components;
}

inline std::size_t count_boundary_components(const ExcursionMask& m, double L) {
  return count_boundary_components(m, BoundaryShell::make(m.grid, L));
}

/// Strict local maxima of f on the shell (ties broken by smaller flat index).
/// Every component of {f >= l} ∩ shell contains one, for every l.
inline std::size_t shell_local_maxima(const FieldSample& s, const BoundaryShell& shell) {
  std::size_t count = 0;
  for (std::size_t f : shell.vertices) {
    const double v = s.values[f];
    bool is_max = true;
    shell.for_each_neighbor(s.grid.unflat(f), [&](std::size_t nf) {
      const double w = s.values[nf];
      if (w > v || (w == v && nf < f)) is_max = false;
    });
    if (is_max) ++count;
  }
  return count;
}

namespace detail {

/// Solves the d x d system A mu = b (columns of A given) by Gaussian elimination
/// with partial pivoting; returns false when singular.
inline bool solve_small(std::array<std::array<double, 4>, 3> aug, std::size_t d, std::array<double, 3>& mu) {
  for (std::size_t c = 0; c < d; ++c) {
    std::size_t p = c;
    for (std::size_t r = c + 1; r < d; ++r)
      if (std::abs(aug[r][c]) > std::abs(aug[p][c])) p = r;
    if (aug[p][c] == 0.0) return false;
    std::swap(aug[p], aug[c]);
    for (std::size_t r = c + 1; r < d; ++r) {
      const double f = aug[r][c] / aug[c][c];
      for (std::size_t k = c; k <= d; ++k) aug[r][k] -= f * aug[c][k];
    }
  }
  for (std::size_t c = d; c-- > 0;) {
    double s = aug[c][d];
    for (std::size_t k = c + 1; k < d; ++k) s -= aug[c][k] * mu[k];
    mu[c] = s / aug[c][c];
  }
  return true;
}

}  // namespace detail

/// Counts grid cells of `region` containing a zero of the piecewise-linear
/// interpolant (Kuhn triangulation) of the central-difference gradient, after a
/// tiny generic offset so zeros never sit on simplex faces. A cell qualifies
/// only if every gradient component changes sign (or vanishes) over its corners.
/// Each cell counts once. The region must leave one vertex of margin to the grid.
inline std::size_t count_discrete_critical_points(const FieldSample& s, const Box& region) {
  const GridSpec& g = s.grid;
  const std::size_t d = g.dim;
  for (std::size_t a = 0; a < d; ++a)
    if (region.lo[a] < 1 || region.hi[a] > static_cast<std::ptrdiff_t>(g.cells[a]) - 2 || region.hi[a] <= region.lo[a])
      throw InvalidArgument("critical-point region must lie inside the grid with a one-vertex margin");

  const auto strides = g.strides();
  std::vector<std::array<double, 3>> grad(region.size());
  double scale = 0.0;
  for_each_index(region, [&](const Index& i) {
    auto& gr = grad[region.local_flat(i)];
    const std::size_t f = g.flat(i);
    for (std::size_t a = 0; a < d; ++a) {
      gr[a] = (s.values[f + strides[a]] - s.values[f - strides[a]]) / (2.0 * g.spacing[a]);
      scale = std::max(scale, std::abs(gr[a]));
    }
  });
  if (scale == 0.0) scale = 1.0;
  const std::array<double, 3> offset{1e-9 * scale, 0.7071067811865476e-9 * scale, 0.5773502691896258e-9 * scale};
  for (auto& gr : grad)
    for (std::size_t a = 0; a < d; ++a) gr[a] -= offset[a];

  std::array<std::size_t, 3> perm{0, 1, 2};
  std::vector<std::array<std::size_t, 3>> perms;
  do perms.push_back(perm);
  while (std::next_permutation(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(d)));

  Box cells = region;
  for (std::size_t a = 0; a < d; ++a) cells.hi[a] -= 1;
  std::size_t count = 0;
  for_each_index(cells, [&](const Index& lo) {
    std::array<double, 3> mn{1e300, 1e300, 1e300}, mx{-1e300, -1e300, -1e300};
    for (unsigned corner = 0; corner < (1u << d); ++corner) {
      Index c = lo;
      for (std::size_t a = 0; a < d; ++a) c[a] += (corner >> a) & 1u;
      const auto& gr = grad[region.local_flat(c)];
      for (std::size_t a = 0; a < d; ++a) {
        mn[a] = std::min(mn[a], gr[a]);
        mx[a] = std::max(mx[a], gr[a]);
      }
    }
    for (std::size_t a = 0; a < d; ++a)
      if (mn[a] > 0.0 || mx[a] < 0.0) return;

    for (const auto& p : perms) {
      Index v = lo;
      const auto g0 = grad[region.local_flat(v)];
      std::array<std::array<double, 4>, 3> aug{};
      for (std::size_t k = 0; k < d; ++k) {
        v[p[k]] += 1;
        const auto& gk = grad[region.local_flat(v)];
        for (std::size_t r = 0; r < d; ++r) aug[r][k] = gk[r] - g0[r];
      }
      for (std::size_t r = 0; r < d; ++r) aug[r][d] = -g0[r];
      std::array<double, 3> mu{};
      if (!detail::solve_small(aug, d, mu)) continue;
      double sum = 0.0;
      bool inside = true;
      for (std::size_t k = 0; k < d; ++k) {
        inside &= mu[k] >= 0.0;
        sum += mu[k];
      }
      if (inside && sum <= 1.0) {
        ++count;
        return;
      }
    }
  });
  return count;
}

/// Interior region of a grid with the one-vertex margin required above.
inline Box interior_region(const GridSpec& g) {
  Box b = Box::whole(g);
  for (std::size_t a = 0; a < g.dim; ++a) {
    b.lo[a] += 1;
    b.hi[a] -= 1;
  }
  return b;
}

struct KacRiceEstimate {
  double density = 0.0;  ///< expected critical points per unit volume
  double standard_error = 0.0;
  std::size_t n_mc = 0;
  std::size_t dim = 0;
  double gradient_density_at_zero = 0.0;  ///< p_{grad f}(0)
  double mean_abs_det = 0.0;              ///< E[|det Hess f| | grad f = 0]
  Eigen::MatrixXd gradient_covariance;
  Eigen::MatrixXd conditional_hessian_covariance;  ///< over the upper-triangular Hessian entries
};

/// Monte Carlo evaluation of E[|det Hess f(x)| | grad f(x) = 0] p_{grad f(x)}(0),
/// the Kac-Rice density of critical points of the stationary field in `dim`
/// dimensions (dim < kernel dimension gives the field restricted to a flat).
inline KacRiceEstimate kac_rice_density_mc(const KernelSpec& k, std::size_t n_mc, std::uint64_t seed,
                                           std::size_t dim = 0) {
  if (dim == 0) dim = k.dim();
  if (dim > k.dim()) throw InvalidArgument("restriction dimension exceeds kernel dimension");
  if (n_mc < 2) throw InvalidArgument("need at least two Monte Carlo draws");
  const auto taylor = k.origin_taylor();

  std::vector<std::array<std::size_t, 2>> pairs;
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t j = i; j < dim; ++j) pairs.push_back({i, j});
  const auto p = static_cast<Eigen::Index>(dim);
  const auto q = static_cast<Eigen::Index>(pairs.size());

  // Cov(d_i f, d_j f) = -kappa_ij(0); Cov(d_i f, d_jk f) = -kappa_ijk(0) = 0 (even kernel);
  // Cov(d_ij f, d_kl f) = kappa_ijkl(0).
  Eigen::MatrixXd sgg = Eigen::MatrixXd::Identity(p, p) * (-2.0 * taylor[0]);
  Eigen::MatrixXd sgh = Eigen::MatrixXd::Zero(p, q);
  Eigen::MatrixXd shh(q, q);
  for (Eigen::Index a = 0; a < q; ++a)
    for (Eigen::Index b = 0; b < q; ++b)
      shh(a, b) = k.fourth_derivative_at_origin(pairs[static_cast<std::size_t>(a)][0], pairs[static_cast<std::size_t>(a)][1],
                                                pairs[static_cast<std::size_t>(b)][0], pairs[static_cast<std::size_t>(b)][1]);

  Eigen::LLT<Eigen::MatrixXd> gchol(sgg);
  if (gchol.info() != Eigen::Success) throw Error("gradient covariance is degenerate");
  const Eigen::MatrixXd cond = shh - sgh.transpose() * gchol.solve(sgh);
  Eigen::LLT<Eigen::MatrixXd> hchol(cond);
  if (hchol.info() != Eigen::Success) throw Error("conditional Hessian covariance is degenerate");
  const Eigen::MatrixXd L = hchol.matrixL();

  const double det_g = sgg.determinant();
  const double density0 = std::pow(2.0 * std::numbers::pi, -0.5 * static_cast<double>(dim)) / std::sqrt(det_g);

  const NormalStream noise(seed, streams::kKacRice);
  double sum = 0.0, sum2 = 0.0;
  Eigen::VectorXd z(q);
  Eigen::MatrixXd H(p, p);
  for (std::size_t draw = 0; draw < n_mc; ++draw) {
    for (Eigen::Index a = 0; a < q; ++a) z(a) = noise[draw * static_cast<std::uint64_t>(q) + static_cast<std::uint64_t>(a)];
    const Eigen::VectorXd h = L * z;
    for (Eigen::Index a = 0; a < q; ++a) {
      const auto [i, j] = pairs[static_cast<std::size_t>(a)];
      H(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = h(a);
      H(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = h(a);
    }
    const double v = std::abs(H.determinant());
    sum += v;
    sum2 += v * v;
  }
  const double n = static_cast<double>(n_mc);
  const double mean = sum / n;
  const double var = std::max(0.0, (sum2 - n * mean * mean) / (n - 1.0));

  KacRiceEstimate e;
  e.n_mc = n_mc;
  e.dim = dim;
  e.mean_abs_det = mean;
  e.gradient_density_at_zero = density0;
  e.density = mean * density0;
  e.standard_error = std::sqrt(var / n) * density0;
  e.gradient_covariance = sgg;
  e.conditional_hessian_covariance = cond;
  return e;
}

}  // namespace gaussperc
