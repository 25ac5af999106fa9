#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <sstream>
#include <string>

#include "gaussperc/error.hpp"

namespace gaussperc {

inline constexpr std::size_t kMaxDim = 3;

using Index = std::array<std::ptrdiff_t, kMaxDim>;
using Point = std::array<double, kMaxDim>;

/// Regular vertex grid on [-extent/2, extent/2)^d. Vertex i along an axis sits at
/// (i - cells/2) * spacing, so the physical origin is always a vertex.
/// Axes beyond `dim` are inert (one vertex, spacing 1).
struct GridSpec {
  std::size_t dim = 2;
  std::array<std::size_t, kMaxDim> cells{1, 1, 1};
  std::array<double, kMaxDim> spacing{1.0, 1.0, 1.0};

  static GridSpec cubic(std::size_t d, std::size_t n, double extent) {
    GridSpec g;
    g.dim = d;
    for (std::size_t a = 0; a < d; ++a) {
      g.cells[a] = n;
      g.spacing[a] = extent / static_cast<double>(n);
    }
    g.validate();
    return g;
  }

  /// Grid of 2K+1 vertices per axis covering exactly the box [-K h, K h]^d.
  static GridSpec box(std::size_t d, std::size_t half_width, double h) {
    GridSpec g;
    g.dim = d;
    for (std::size_t a = 0; a < d; ++a) {
      g.cells[a] = 2 * half_width + 1;
      g.spacing[a] = h;
    }
    g.validate();
    return g;
  }

  void validate() const {
    if (dim < 1 || dim > kMaxDim) throw InvalidArgument("grid dimension must be 1, 2 or 3");
    for (std::size_t a = 0; a < kMaxDim; ++a) {
      if (a < dim) {
        if (cells[a] == 0) throw InvalidArgument("grid needs at least one vertex per axis");
        if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a]))
          throw InvalidArgument("grid spacing must be positive and finite");
      } else if (cells[a] != 1) {
        throw InvalidArgument("inactive grid axes must have a single vertex");
      }
    }
  }

  std::size_t size() const { return cells[0] * cells[1] * cells[2]; }
  double extent(std::size_t axis) const { return spacing[axis] * static_cast<double>(cells[axis]); }
  std::ptrdiff_t origin(std::size_t axis) const { return static_cast<std::ptrdiff_t>(cells[axis] / 2); }
  Index origin_index() const { return {origin(0), origin(1), origin(2)}; }

  bool uniform_spacing() const {
    for (std::size_t a = 1; a < dim; ++a)
      if (spacing[a] != spacing[0]) return false;
    return true;
  }

  bool contains(const Index& i) const {
    for (std::size_t a = 0; a < kMaxDim; ++a)
      if (i[a] < 0 || i[a] >= static_cast<std::ptrdiff_t>(cells[a])) return false;
    return true;
  }

  std::size_t flat(const Index& i) const {
    return (static_cast<std::size_t>(i[0]) * cells[1] + static_cast<std::size_t>(i[1])) * cells[2] +
           static_cast<std::size_t>(i[2]);
  }

  Index unflat(std::size_t f) const {
    Index i{};
    i[2] = static_cast<std::ptrdiff_t>(f % cells[2]);
    f /= cells[2];
    i[1] = static_cast<std::ptrdiff_t>(f % cells[1]);
    i[0] = static_cast<std::ptrdiff_t>(f / cells[1]);
    return i;
  }

  Point position(const Index& i) const {
    Point p{0.0, 0.0, 0.0};
    for (std::size_t a = 0; a < dim; ++a) p[a] = static_cast<double>(i[a] - origin(a)) * spacing[a];
    return p;
  }

  std::array<std::size_t, kMaxDim> strides() const { return {cells[1] * cells[2], cells[2], 1}; }

  bool operator==(const GridSpec&) const = default;

  std::string describe() const {
    std::ostringstream os;
    os << dim << "d grid ";
    for (std::size_t a = 0; a < dim; ++a) os << (a ? "x" : "") << cells[a];
    os << " spacing " << spacing[0];
    return os.str();
  }
};

/// Inclusive index box [lo, hi] used as a labeling window.
struct Box {
  Index lo{0, 0, 0};
  Index hi{0, 0, 0};

  static Box whole(const GridSpec& g) {
    Box b;
    for (std::size_t a = 0; a < kMaxDim; ++a) b.hi[a] = static_cast<std::ptrdiff_t>(g.cells[a]) - 1;
    return b;
  }

  /// Vertices within Chebyshev index distance `half_width[a]` of the origin vertex.
  static Box centered(const GridSpec& g, const Index& half_width) {
    Box b;
    for (std::size_t a = 0; a < kMaxDim; ++a) {
      const std::ptrdiff_t k = a < g.dim ? half_width[a] : 0;
      b.lo[a] = g.origin(a) - k;
      b.hi[a] = g.origin(a) + k;
    }
    return b;
  }

  std::ptrdiff_t extent(std::size_t a) const { return hi[a] - lo[a] + 1; }
  std::size_t size() const {
    return static_cast<std::size_t>(extent(0) * extent(1) * extent(2));
  }
  bool contains(const Index& i) const {
    for (std::size_t a = 0; a < kMaxDim; ++a)
      if (i[a] < lo[a] || i[a] > hi[a]) return false;
    return true;
  }
  bool inside(const GridSpec& g) const { return g.contains(lo) && g.contains(hi); }

  std::size_t local_flat(const Index& i) const {
    return (static_cast<std::size_t>(i[0] - lo[0]) * static_cast<std::size_t>(extent(1)) +
            static_cast<std::size_t>(i[1] - lo[1])) *
               static_cast<std::size_t>(extent(2)) +
           static_cast<std::size_t>(i[2] - lo[2]);
  }
  Index local_unflat(std::size_t f) const {
    Index i{};
    i[2] = lo[2] + static_cast<std::ptrdiff_t>(f % static_cast<std::size_t>(extent(2)));
    f /= static_cast<std::size_t>(extent(2));
    i[1] = lo[1] + static_cast<std::ptrdiff_t>(f % static_cast<std::size_t>(extent(1)));
    i[0] = lo[0] + static_cast<std::ptrdiff_t>(f / static_cast<std::size_t>(extent(1)));
    return i;
  }

  bool operator==(const Box&) const = default;
};

/// Calls fn(Index) for every vertex of the box in row-major order.
template <typename Fn>
void for_each_index(const Box& b, Fn&& fn) {
  Index i{};
  for (i[0] = b.lo[0]; i[0] <= b.hi[0]; ++i[0])
    for (i[1] = b.lo[1]; i[1] <= b.hi[1]; ++i[1])
      for (i[2] = b.lo[2]; i[2] <= b.hi[2]; ++i[2]) fn(static_cast<const Index&>(i));
}

inline double distance(const Point& p, const Point& q) {
  double s = 0.0;
  for (std::size_t a = 0; a < kMaxDim; ++a) s += (p[a] - q[a]) * (p[a] - q[a]);
  return std::sqrt(s);
}

inline double norm(const Point& p) { return distance(p, Point{0.0, 0.0, 0.0}); }

/// Discrete open ball: vertices at Euclidean distance < radius from `center`.
inline bool in_ball(const GridSpec& g, const Index& i, const Point& center, double radius) {
  return distance(g.position(i), center) < radius;
}

/// Smallest index box containing the discrete ball of `radius` around `center`, clipped to the grid.
inline Box ball_bounds(const GridSpec& g, const Point& center, double radius) {
  Box b = Box::whole(g);
  for (std::size_t a = 0; a < g.dim; ++a) {
    const double lo = (center[a] - radius) / g.spacing[a] + static_cast<double>(g.origin(a));
    const double hi = (center[a] + radius) / g.spacing[a] + static_cast<double>(g.origin(a));
    b.lo[a] = std::max<std::ptrdiff_t>(b.lo[a], static_cast<std::ptrdiff_t>(std::floor(lo)));
    b.hi[a] = std::min<std::ptrdiff_t>(b.hi[a], static_cast<std::ptrdiff_t>(std::ceil(hi)));
  }
  return b;
}

/// Index half-widths of the box [-L, L]^d on this grid.
inline Index half_width_for(const GridSpec& g, double L) {
  Index k{0, 0, 0};
  for (std::size_t a = 0; a < g.dim; ++a)
    k[a] = static_cast<std::ptrdiff_t>(std::llround(L / g.spacing[a]));
  return k;
}

}  // namespace gaussperc
