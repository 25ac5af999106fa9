#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "gaussperc/connectivity.hpp"
#include "gaussperc/counting.hpp"
#include "gaussperc/error.hpp"
#include "gaussperc/grid.hpp"
#include "gaussperc/parallel.hpp"
#include "gaussperc/stats.hpp"
#include "gaussperc/synthesis.hpp"

namespace gaussperc {

struct TrifurcationVerdict {
  bool trifurcation = false;
  Index vertex{0, 0, 0};
  std::vector<std::uint32_t> branches;  ///< labels of the boundary-touching branches (in the cut labeling)
};

namespace detail {

inline Index nearest_vertex(const GridSpec& g, const Point& x) {
  Index i{0, 0, 0};
  for (std::size_t a = 0; a < g.dim; ++a)
    i[a] = static_cast<std::ptrdiff_t>(std::llround(x[a] / g.spacing[a])) + g.origin(a);
  return i;
}

}  // namespace detail

/// R-coarse trifurcation at x for the mask restricted to `window` (box boundary =
/// infinity). True iff the component C of x touches the window boundary and
/// C minus the discrete ball B_R(x) has at least three components touching it.
/// `full` may pass a precomputed labeling of the same window.
inline TrifurcationVerdict detect_trifurcation(const ExcursionMask& m, const Point& x, double R,
                                               std::optional<Box> window = std::nullopt,
                                               const Labeling* full = nullptr) {
  const GridSpec& g = m.grid;
  const Box w = window.value_or(Box::whole(g));
  if (!w.inside(g)) throw InvalidArgument("trifurcation window exceeds grid");
  TrifurcationVerdict out;
  out.vertex = detail::nearest_vertex(g, x);
  const Point center = g.position(out.vertex);
  for (std::size_t a = 0; a < g.dim; ++a) {
    const double lo = static_cast<double>(w.lo[a] - g.origin(a)) * g.spacing[a];
    const double hi = static_cast<double>(w.hi[a] - g.origin(a)) * g.spacing[a];
    if (center[a] - 2.0 * R < lo - 1e-9 || center[a] + 2.0 * R > hi + 1e-9)
      throw PreconditionViolation("ball B_R(x) needs a margin of R to the box boundary");
  }
  if (!m.at(out.vertex)) return out;

  std::optional<Labeling> own;
  if (!full) own = label_components(m, w);
  const Labeling& lab = full ? *full : *own;
  if (!(lab.box == w)) throw InvalidArgument("precomputed labeling uses another window");
  const std::uint32_t comp = lab.label_at(out.vertex);
  if (!lab.component(comp).touches_any(g.dim)) return out;

  // Local bound: every branch contains a vertex adjacent to the ball, and such
  // vertices joined inside the annulus R <= |y - x| < outer share a branch.
  double outer = 2.0 * R;
  for (std::size_t a = 0; a < g.dim; ++a) outer = std::max(outer, R + 1.01 * g.spacing[a]);
  const Box annulus_box = ball_bounds(g, center, outer);
  GridSpec sub = g;
  for (std::size_t a = 0; a < g.dim; ++a) sub.cells[a] = static_cast<std::size_t>(annulus_box.extent(a));
  std::vector<std::uint8_t> ring_bits(sub.size(), 0);
  std::vector<std::size_t> ring;
  auto to_sub = [&](const Index& i) {
    return Index{i[0] - annulus_box.lo[0], i[1] - annulus_box.lo[1], i[2] - annulus_box.lo[2]};
  };
  for_each_index(annulus_box, [&](const Index& i) {
    const double r = distance(g.position(i), center);
    if (r < R || r >= outer || !w.contains(i) || lab.label_at(i) != comp) return;
    const std::size_t s = sub.flat(to_sub(i));
    ring_bits[s] = 1;
    for (std::size_t a = 0; a < g.dim; ++a)
      for (std::ptrdiff_t step : {-1, 1}) {
        Index j = i;
        j[a] += step;
        if (w.contains(j) && distance(g.position(j), center) < R) {
          ring.push_back(s);
          return;
        }
      }
  });
  {
    const Labeling local = label_bits(sub, ring_bits, Box::whole(sub));
    std::vector<std::uint8_t> seen(local.count() + 1, 0);
    std::size_t pieces = 0;
    for (std::size_t s : ring) {
      const auto id = local.labels[s];
      if (!seen[id]) {
        seen[id] = 1;
        ++pieces;
      }
    }
    if (pieces < 3) return out;
  }

  std::vector<std::uint8_t> cut(g.size(), 0);
  for_each_index(w, [&](const Index& i) {
    if (lab.label_at(i) == comp && !(distance(g.position(i), center) < R)) cut[g.flat(i)] = 1;
  });
  const Labeling branches = label_bits(g, cut, w);
  for (std::uint32_t id = 1; id <= branches.count(); ++id)
    if (branches.component(id).touches_any(g.dim)) out.branches.push_back(id);
  out.trifurcation = out.branches.size() >= 3;
  return out;
}

struct TrifurcationReport {
  double L = 0.0;
  double R = 0.0;
  double level = 0.0;
  std::vector<Point> lattice;  ///< points of 4R Z^d with sup-norm <= L - 2R
  std::vector<TrifurcationVerdict> verdicts;
  std::size_t T_L = 0;
  std::size_t N_boundary = 0;
  bool inequality_ok = true;  ///< T_L <= max(0, N_boundary - 2)
};

/// Points of the 4R-lattice in the box of half-width L - 2R.
inline std::vector<Point> trifurcation_lattice(std::size_t dim, double R, double L) {
  std::vector<Point> out;
  const double reach = L - 2.0 * R;
  if (reach < 0.0) return out;
  const double step = 4.0 * R;
  const auto k = static_cast<std::ptrdiff_t>(std::floor(reach / step + 1e-9));
  const std::ptrdiff_t k1 = dim >= 2 ? k : 0, k2 = dim >= 3 ? k : 0;
  for (std::ptrdiff_t a = -k; a <= k; ++a)
    for (std::ptrdiff_t b = -k1; b <= k1; ++b)
      for (std::ptrdiff_t c = -k2; c <= k2; ++c)
        out.push_back({static_cast<double>(a) * step, static_cast<double>(b) * step, static_cast<double>(c) * step});
  return out;
}

inline TrifurcationReport count_trifurcations(const ExcursionMask& m, double R, double L) {
  if (!(R > 0.0)) throw InvalidArgument("trifurcation radius must be positive");
  const GridSpec& g = m.grid;
  const BoundaryShell shell = BoundaryShell::make(g, L);
  TrifurcationReport rep;
  rep.L = L;
  rep.R = R;
  rep.level = m.level;
  rep.lattice = trifurcation_lattice(g.dim, R, L);

  // Balls around distinct lattice vertices must be pairwise disjoint.
  std::vector<Point> centers;
  for (const Point& x : rep.lattice) centers.push_back(g.position(detail::nearest_vertex(g, x)));
  for (std::size_t i = 0; i < centers.size(); ++i)
    for (std::size_t j = i + 1; j < centers.size(); ++j)
      if (distance(centers[i], centers[j]) < 2.0 * R) throw Error("trifurcation balls overlap");

  const Labeling full = label_components(m, shell.box);
  for (const Point& x : rep.lattice) {
    auto v = detect_trifurcation(m, x, R, shell.box, &full);
    if (v.trifurcation) ++rep.T_L;
    rep.verdicts.push_back(std::move(v));
  }
  rep.N_boundary = count_boundary_components(m, shell);
  rep.inequality_ok = rep.T_L <= (rep.N_boundary >= 2 ? rep.N_boundary - 2 : 0);
  return rep;
}

struct TrifurcationDensityRow {
  double L = 0.0;
  std::size_t n = 0;
  std::size_t lattice_points = 0;
  double trifurcation_density = 0.0;  ///< mean T_L / L^d
  double trifurcation_density_se = 0.0;
  double trifurcation_density_upper = 0.0;  ///< one-sided 95% bound
  double boundary_density = 0.0;  ///< mean N_boundary / L^(d-1)
  double boundary_density_se = 0.0;
  std::size_t violations = 0;
};

/// Samples on the box of the largest L; smaller L use nested centered windows.
inline std::vector<TrifurcationDensityRow> trifurcation_density_sweep(
    const KernelSpec& k, double level, double R, std::vector<double> Ls, std::size_t n, std::uint64_t seed,
    double spacing, const EmbeddingOptions& opt = {}, std::size_t threads = default_threads()) {
  if (Ls.empty() || n == 0) throw InvalidArgument("sweep needs scales and samples");
  std::sort(Ls.begin(), Ls.end());
  const std::size_t d = k.dim();
  const auto K = static_cast<std::size_t>(std::llround(Ls.back() / spacing));
  const GridSpec g = GridSpec::box(d, K, spacing);
  const auto sampler = GaussianFieldSampler::circulant(k, g, opt);
  const auto per_sample = parallel_map(
      n, threads, [&] { return sampler.make_workspace(); },
      [&](auto& ws, std::size_t i) {
        const auto s = sampler.sample(seed + i, *ws);
        const auto m = excursion_mask(s, level);
        std::vector<TrifurcationReport> reps;
        for (double L : Ls) reps.push_back(count_trifurcations(m, R, L));
        return reps;
      });
  std::vector<TrifurcationDensityRow> rows;
  for (std::size_t j = 0; j < Ls.size(); ++j) {
    std::vector<double> t, nb;
    TrifurcationDensityRow row;
    row.L = Ls[j];
    row.n = n;
    for (const auto& reps : per_sample) {
      t.push_back(static_cast<double>(reps[j].T_L));
      nb.push_back(static_cast<double>(reps[j].N_boundary));
      if (!reps[j].inequality_ok) ++row.violations;
      row.lattice_points = reps[j].lattice.size();
    }
    const auto mt = mean_and_se(t), mn = mean_and_se(nb);
    const double vol = std::pow(row.L, static_cast<double>(d));
    const double area = std::pow(row.L, static_cast<double>(d) - 1.0);
    row.trifurcation_density = mt.mean / vol;
    row.trifurcation_density_se = mt.standard_error / vol;
    const double upper_mean = mt.mean > 0.0 ? mt.mean + 1.6448536269514722 * mt.standard_error
                                            : -std::log(0.05) / static_cast<double>(n);
    row.trifurcation_density_upper = upper_mean / vol;
    row.boundary_density = mn.mean / area;
    row.boundary_density_se = mn.standard_error / area;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace gaussperc
