#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "gaussperc/error.hpp"
#include "gaussperc/grid.hpp"
#include "gaussperc/synthesis.hpp"

namespace gaussperc {

enum class Adjacency { Faces, FacesAndDiagonals };

/// Boolean vertex mask. For excursion masks bit(x) = f(x) >= level; for nodal
/// masks bit(x) marks the grid cell whose lower corner is x.
struct ExcursionMask {
  GridSpec grid;
  std::vector<std::uint8_t> bits;
  double level = 0.0;
  std::string source;
  bool nodal = false;

  bool at(const Index& i) const { return bits[grid.flat(i)] != 0; }
  std::size_t count() const { return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), 1)); }

  static ExcursionMask filled(const GridSpec& g, bool value) {
    ExcursionMask m;
    m.grid = g;
    m.bits.assign(g.size(), value ? 1 : 0);
    return m;
  }
};

inline std::string sample_id(const FieldSample& s) { return s.kernel_id + "#" + std::to_string(s.seed); }

/// Ties f(x) == level belong to the set.
inline ExcursionMask excursion_mask(const FieldSample& s, double level) {
  ExcursionMask m;
  m.grid = s.grid;
  m.level = level;
  m.source = sample_id(s);
  m.bits.resize(s.values.size());
  for (std::size_t i = 0; i < s.values.size(); ++i) m.bits[i] = s.values[i] >= level ? 1 : 0;
  return m;
}

/// Marks cells (indexed by their lower corner) on which f - level attains both
/// signs or zero among the 2^d corners. Vertices on the last layer of any axis mark nothing.
inline ExcursionMask nodal_mask(const FieldSample& s, double level) {
  const GridSpec& g = s.grid;
  ExcursionMask m = ExcursionMask::filled(g, false);
  m.level = level;
  m.source = sample_id(s);
  m.nodal = true;
  Box cells = Box::whole(g);
  for (std::size_t a = 0; a < g.dim; ++a) cells.hi[a] -= 1;
  for_each_index(cells, [&](const Index& i) {
    bool pos = false, neg = false, zero = false;
    for (unsigned corner = 0; corner < (1u << g.dim); ++corner) {
      Index c = i;
      for (std::size_t a = 0; a < g.dim; ++a) c[a] += (corner >> a) & 1u;
      const double v = s.values[g.flat(c)] - level;
      pos |= v > 0.0;
      neg |= v < 0.0;
      zero |= v == 0.0;
    }
    if (zero || (pos && neg)) m.bits[g.flat(i)] = 1;
  });
  return m;
}

/// Disjoint sets with path halving and union by size.
class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n = 0) { reset(n); }

  void reset(std::size_t n) {
    parent_.resize(n);
    std::iota(parent_.begin(), parent_.end(), std::uint32_t{0});
    size_.assign(n, 1);
  }

  std::uint32_t find(std::uint32_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  std::uint32_t unite(std::uint32_t a, std::uint32_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return a;
    if (size_[a] < size_[b]) std::swap(a, b);
    parent_[b] = a;
    size_[a] += size_[b];
    return a;
  }

 private:
  std::vector<std::uint32_t> parent_;
  std::vector<std::uint32_t> size_;
};

struct ComponentInfo {
  std::size_t size = 0;
  Box bbox;
  std::array<bool, 2 * kMaxDim> touches{};  ///< face 2a: low side of axis a, 2a+1: high side

  bool touches_any(std::size_t dim) const {
    for (std::size_t f = 0; f < 2 * dim; ++f)
      if (touches[f]) return true;
    return false;
  }
  bool touches_all(std::size_t dim) const {
    for (std::size_t f = 0; f < 2 * dim; ++f)
      if (!touches[f]) return false;
    return true;
  }
  bool crosses(std::size_t axis) const { return touches[2 * axis] && touches[2 * axis + 1]; }
};

/// Connected-component decomposition of a mask restricted to a window. Labels
/// are 1-based in order of each component's smallest vertex index; 0 = background.
struct Labeling {
  GridSpec grid;
  Box box;
  std::vector<std::uint32_t> labels;  ///< indexed by box-local flat index
  std::vector<ComponentInfo> components;

  std::size_t count() const { return components.size(); }
  std::uint32_t label_at(const Index& i) const { return labels[box.local_flat(i)]; }
  const ComponentInfo& component(std::uint32_t id) const { return components.at(id - 1); }
};

namespace detail {

/// Neighbor offsets in the active dimensions. `backward_only` keeps offsets whose
/// first nonzero coordinate is negative (each undirected edge once).
inline std::vector<Index> neighbor_offsets(std::size_t dim, Adjacency adj, bool backward_only) {
  std::vector<Index> out;
  const std::ptrdiff_t r0 = 1, r1 = dim >= 2 ? 1 : 0, r2 = dim >= 3 ? 1 : 0;
  for (std::ptrdiff_t a = -r0; a <= r0; ++a)
    for (std::ptrdiff_t b = -r1; b <= r1; ++b)
      for (std::ptrdiff_t c = -r2; c <= r2; ++c) {
        const Index d{a, b, c};
        const int nonzero = (a != 0) + (b != 0) + (c != 0);
        if (nonzero == 0) continue;
        if (adj == Adjacency::Faces && nonzero != 1) continue;
        if (backward_only) {
          const std::ptrdiff_t first = a != 0 ? a : (b != 0 ? b : c);
          if (first > 0) continue;
        }
        out.push_back(d);
      }
  return out;
}

inline void finish_components(Labeling& lab, std::span<const std::uint32_t> provisional_root,
                              std::size_t dim) {
  // provisional_root[local] = representative id below the window size, or UINT32_MAX for background
  std::vector<std::uint32_t> rename(provisional_root.size(), 0);
  lab.labels.assign(provisional_root.size(), 0);
  for (std::size_t f = 0; f < provisional_root.size(); ++f) {
    const std::uint32_t r = provisional_root[f];
    if (r == UINT32_MAX) continue;
    const bool inserted = rename[r] == 0;
    if (inserted) rename[r] = static_cast<std::uint32_t>(lab.components.size() + 1);
    const std::uint32_t id = rename[r];
    lab.labels[f] = id;
    if (inserted) {
      ComponentInfo info;
      info.bbox.lo = info.bbox.hi = lab.box.local_unflat(f);
      lab.components.push_back(info);
    }
    ComponentInfo& c = lab.components[id - 1];
    const Index i = lab.box.local_unflat(f);
    ++c.size;
    for (std::size_t a = 0; a < kMaxDim; ++a) {
      c.bbox.lo[a] = std::min(c.bbox.lo[a], i[a]);
      c.bbox.hi[a] = std::max(c.bbox.hi[a], i[a]);
    }
    for (std::size_t a = 0; a < dim; ++a) {
      if (i[a] == lab.box.lo[a]) c.touches[2 * a] = true;
      if (i[a] == lab.box.hi[a]) c.touches[2 * a + 1] = true;
    }
  }
}

}  // namespace detail

/// Union-find labeling of `bits` (indexed by grid flat index) inside `box`.
inline Labeling label_bits(const GridSpec& g, std::span<const std::uint8_t> bits, const Box& box,
                           Adjacency adj = Adjacency::Faces) {
  if (!box.inside(g)) throw InvalidArgument("labeling window exceeds grid");
  Labeling lab;
  lab.grid = g;
  lab.box = box;
  const std::size_t n = box.size();
  if (n >= UINT32_MAX) throw InvalidArgument("labeling window too large");
  DisjointSets sets(n);
  const auto offsets = detail::neighbor_offsets(g.dim, adj, true);
  std::vector<std::ptrdiff_t> local_delta;
  for (const Index& d : offsets)
    local_delta.push_back((d[0] * box.extent(1) + d[1]) * box.extent(2) + d[2]);

  std::size_t local = 0;
  for_each_index(box, [&](const Index& i) {
    if (bits[g.flat(i)]) {
      for (std::size_t k = 0; k < offsets.size(); ++k) {
        const Index j{i[0] + offsets[k][0], i[1] + offsets[k][1], i[2] + offsets[k][2]};
        if (!box.contains(j) || !bits[g.flat(j)]) continue;
        sets.unite(static_cast<std::uint32_t>(local),
                   static_cast<std::uint32_t>(static_cast<std::ptrdiff_t>(local) + local_delta[k]));
      }
    }
    ++local;
  });

  std::vector<std::uint32_t> roots(n, UINT32_MAX);
  local = 0;
  for_each_index(box, [&](const Index& i) {
    if (bits[g.flat(i)]) roots[local] = sets.find(static_cast<std::uint32_t>(local));
    ++local;
  });
  detail::finish_components(lab, roots, g.dim);
  return lab;
}

inline Labeling label_components(const ExcursionMask& m, Adjacency adj = Adjacency::Faces) {
  return label_bits(m.grid, m.bits, Box::whole(m.grid), adj);
}

inline Labeling label_components(const ExcursionMask& m, const Box& box, Adjacency adj = Adjacency::Faces) {
  return label_bits(m.grid, m.bits, box, adj);
}

/// Breadth-first labeling; independent of the union-find path.
inline Labeling flood_fill_oracle(const ExcursionMask& m, Adjacency adj = Adjacency::Faces,
                                  std::optional<Box> window = std::nullopt) {
  const GridSpec& g = m.grid;
  const Box box = window.value_or(Box::whole(g));
  if (!box.inside(g)) throw InvalidArgument("labeling window exceeds grid");
  Labeling lab;
  lab.grid = g;
  lab.box = box;
  const auto offsets = detail::neighbor_offsets(g.dim, adj, false);
  std::vector<std::uint32_t> roots(box.size(), UINT32_MAX);
  std::uint32_t next = 0;
  std::deque<Index> queue;
  for_each_index(box, [&](const Index& start) {
    const std::size_t s = box.local_flat(start);
    if (!m.at(start) || roots[s] != UINT32_MAX) return;
    roots[s] = next;
    queue.push_back(start);
    while (!queue.empty()) {
      const Index v = queue.front();
      queue.pop_front();
      for (const Index& d : offsets) {
        const Index w{v[0] + d[0], v[1] + d[1], v[2] + d[2]};
        if (!box.contains(w) || !m.at(w)) continue;
        auto& r = roots[box.local_flat(w)];
        if (r != UINT32_MAX) continue;
        r = next;
        queue.push_back(w);
      }
    }
    ++next;
  });
  detail::finish_components(lab, roots, g.dim);
  return lab;
}

/// True iff both labelings induce the same partition (labels equal up to renaming).
inline bool same_partition(const Labeling& a, const Labeling& b) {
  if (!(a.box == b.box) || a.labels.size() != b.labels.size() || a.count() != b.count()) return false;
  std::vector<std::uint32_t> fwd(a.count() + 1, UINT32_MAX), back(b.count() + 1, UINT32_MAX);
  for (std::size_t i = 0; i < a.labels.size(); ++i) {
    const auto x = a.labels[i], y = b.labels[i];
    if ((x == 0) != (y == 0)) return false;
    if (x == 0) continue;
    if (fwd[x] == UINT32_MAX) fwd[x] = y;
    if (back[y] == UINT32_MAX) back[y] = x;
    if (fwd[x] != y || back[y] != x) return false;
  }
  return true;
}

struct GiantCriterion {
  enum class Kind { TouchesAllFaces, CrossesAxis } kind = Kind::CrossesAxis;
  std::size_t axis = 0;

  static GiantCriterion touches_all_faces() { return {Kind::TouchesAllFaces, 0}; }
  static GiantCriterion crosses_axis(std::size_t k) { return {Kind::CrossesAxis, k}; }

  bool accepts(const ComponentInfo& c, std::size_t dim) const {
    return kind == Kind::TouchesAllFaces ? c.touches_all(dim) : c.crosses(axis);
  }
  /// Face bitmask a component must cover.
  unsigned required_faces(std::size_t dim) const {
    if (kind == Kind::CrossesAxis) return 3u << (2 * axis);
    return (1u << (2 * dim)) - 1u;
  }
  std::string name() const {
    return kind == Kind::TouchesAllFaces ? "touches_all_faces" : "crosses_axis_" + std::to_string(axis);
  }
};

inline std::vector<std::uint32_t> giant_components(const Labeling& l, const GiantCriterion& crit) {
  if (crit.kind == GiantCriterion::Kind::CrossesAxis && crit.axis >= l.grid.dim)
    throw InvalidArgument("crossing axis exceeds grid dimension");
  std::vector<std::uint32_t> out;
  for (std::size_t c = 0; c < l.count(); ++c)
    if (crit.accepts(l.components[c], l.grid.dim)) out.push_back(static_cast<std::uint32_t>(c + 1));
  return out;
}

/// Largest level at which {f >= level} restricted to `box` has a component meeting
/// the criterion: {f >= l} has one iff l <= critical level. Processes vertices in
/// decreasing order of f with incremental union-find.
inline double critical_level(const FieldSample& s, const GiantCriterion& crit, std::optional<Box> window = std::nullopt,
                             Adjacency adj = Adjacency::Faces) {
  const GridSpec& g = s.grid;
  const Box box = window.value_or(Box::whole(g));
  if (!box.inside(g)) throw InvalidArgument("window exceeds grid");
  const std::size_t n = box.size();
  std::vector<double> vals(n);
  std::vector<std::uint8_t> faces(n, 0);
  std::size_t local = 0;
  for_each_index(box, [&](const Index& i) {
    vals[local] = s.values[g.flat(i)];
    std::uint8_t f = 0;
    for (std::size_t a = 0; a < g.dim; ++a) {
      if (i[a] == box.lo[a]) f |= static_cast<std::uint8_t>(1u << (2 * a));
      if (i[a] == box.hi[a]) f |= static_cast<std::uint8_t>(1u << (2 * a + 1));
    }
    faces[local++] = f;
  });
  std::vector<std::pair<double, std::uint32_t>> order(n);
  for (std::uint32_t v = 0; v < n; ++v) order[v] = {vals[v], v};
  const auto higher = [](const auto& a, const auto& b) {
    return a.first > b.first || (a.first == b.first && a.second < b.second);
  };

  const unsigned need = crit.required_faces(g.dim);
  const auto offsets = detail::neighbor_offsets(g.dim, adj, false);
  DisjointSets sets(n);
  std::vector<std::uint8_t> active(n, 0);
  // Vertices are sorted in growing chunks; the sweep usually stops early.
  for (std::size_t done = 0, chunk = std::max<std::size_t>(n / 16, 1); done < n; chunk *= 2) {
    const std::size_t end = std::min(n, done + chunk);
    const auto first = order.begin() + static_cast<std::ptrdiff_t>(done);
    const auto last = order.begin() + static_cast<std::ptrdiff_t>(end);
    if (end < n) std::nth_element(first, last, order.end(), higher);
    std::sort(first, last, higher);
    for (; done < end; ++done) {
      const std::uint32_t v = order[done].second;
      active[v] = 1;
      const Index i = box.local_unflat(v);
      for (const Index& d : offsets) {
        const Index j{i[0] + d[0], i[1] + d[1], i[2] + d[2]};
        if (!box.contains(j)) continue;
        const auto w = static_cast<std::uint32_t>(box.local_flat(j));
        if (!active[w]) continue;
        const std::uint32_t rw = sets.find(w), rv = sets.find(v);
        if (rw == rv) continue;
        const std::uint8_t merged = faces[rw] | faces[rv];
        faces[sets.unite(rw, rv)] = merged;
      }
      if ((faces[sets.find(v)] & need) == need) return order[done].first;
    }
  }
  return -std::numeric_limits<double>::infinity();
}

enum class EquivalenceOutcome { Equivalent, Merging, Emergence, Explosion };

inline const char* to_string(EquivalenceOutcome o) {
  switch (o) {
    case EquivalenceOutcome::Equivalent: return "equivalent";
    case EquivalenceOutcome::Merging: return "merging";
    case EquivalenceOutcome::Emergence: return "emergence";
    case EquivalenceOutcome::Explosion: return "explosion";
  }
  return "?";
}

struct EquivalenceVerdict {
  EquivalenceOutcome outcome = EquivalenceOutcome::Equivalent;
  bool merging = false;
  bool emergence = false;
  bool explosion = false;
  /// Witness for the reported outcome: the b-component involved and the a-components it contains.
  std::uint32_t witness_b = 0;
  std::vector<std::uint32_t> witness_a;
  std::optional<Index> witness_vertex;
};

/// Maps every component of `a` to the component of `b` containing it. Empty
/// result when some a-component meets more than one b-component or the background.
inline std::optional<std::vector<std::uint32_t>> inclusion_map(const Labeling& a, const Labeling& b) {
  if (!(a.box == b.box)) throw InvalidArgument("labelings use different windows");
  std::vector<std::uint32_t> map(a.count() + 1, 0);
  for (std::size_t i = 0; i < a.labels.size(); ++i) {
    const auto x = a.labels[i];
    if (x == 0) continue;
    const auto y = b.labels[i];
    if (y == 0) return std::nullopt;
    if (map[x] == 0) map[x] = y;
    if (map[x] != y) return std::nullopt;
  }
  return map;
}

/// Compares a and b outside the discrete ball B_R (vertices at distance < R from
/// the origin vertex). Requires a to be a subset of b. "Bounded" means "does not
/// touch the grid boundary".
inline EquivalenceVerdict percolation_equivalence(const ExcursionMask& a, const ExcursionMask& b, double R,
                                                  Adjacency adj = Adjacency::Faces) {
  if (!(a.grid == b.grid)) throw InvalidArgument("percolation equivalence needs a common grid");
  const GridSpec& g = a.grid;
  for (std::size_t i = 0; i < a.bits.size(); ++i)
    if (a.bits[i] && !b.bits[i]) {
      const Index w = g.unflat(i);
      throw PreconditionViolation("first mask is not contained in second; witness vertex (" + std::to_string(w[0]) +
                                  "," + std::to_string(w[1]) + "," + std::to_string(w[2]) + ")");
    }

  std::vector<std::uint8_t> outer_a(a.bits), outer_b(b.bits);
  const Point origin{0.0, 0.0, 0.0};
  for_each_index(ball_bounds(g, origin, R), [&](const Index& i) {
    if (in_ball(g, i, origin, R)) outer_a[g.flat(i)] = outer_b[g.flat(i)] = 0;
  });
  const Box whole = Box::whole(g);
  const Labeling la = label_bits(g, outer_a, whole, adj);
  const Labeling lb = label_bits(g, outer_b, whole, adj);
  const auto map = inclusion_map(la, lb);
  if (!map) throw Error("inclusion map ill-defined although a is a subset of b");

  std::vector<std::vector<std::uint32_t>> inside(lb.count() + 1);
  for (std::uint32_t x = 1; x <= la.count(); ++x) inside[(*map)[x]].push_back(x);

  EquivalenceVerdict v;
  std::optional<std::uint32_t> merge_b, emerge_b, explode_a;
  for (std::uint32_t y = 1; y <= lb.count(); ++y) {
    if (inside[y].size() >= 2 && !merge_b) merge_b = y;
    if (inside[y].empty() && !emerge_b) emerge_b = y;
  }
  for (std::uint32_t x = 1; x <= la.count() && !explode_a; ++x)
    if (!la.component(x).touches_any(g.dim) && lb.component((*map)[x]).touches_any(g.dim)) explode_a = x;
  v.merging = merge_b.has_value();
  v.emergence = emerge_b.has_value();
  v.explosion = explode_a.has_value();

  auto first_vertex = [&](const Labeling& l, std::uint32_t id) -> std::optional<Index> {
    for (std::size_t i = 0; i < l.labels.size(); ++i)
      if (l.labels[i] == id) return l.box.local_unflat(i);
    return std::nullopt;
  };
  if (merge_b) {
    v.outcome = EquivalenceOutcome::Merging;
    v.witness_b = *merge_b;
    v.witness_a = inside[*merge_b];
    v.witness_vertex = first_vertex(lb, *merge_b);
  } else if (emerge_b) {
    v.outcome = EquivalenceOutcome::Emergence;
    v.witness_b = *emerge_b;
    v.witness_vertex = first_vertex(lb, *emerge_b);
  } else if (explode_a) {
    v.outcome = EquivalenceOutcome::Explosion;
    v.witness_b = (*map)[*explode_a];
    v.witness_a = {*explode_a};
    v.witness_vertex = first_vertex(la, *explode_a);
  }
  return v;
}

}  // namespace gaussperc
