#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gaussperc/error.hpp"
#include "gaussperc/grid.hpp"
#include "gaussperc/kernels.hpp"
#include "gaussperc/parallel.hpp"
#include "gaussperc/synthesis.hpp"

namespace gaussperc {

/// h(x) = amplitude * sum_z kappa(x - z), z over the r0-lattice points in the
/// open ball of radius R + r0, with amplitude = (M + level) / c0.
struct ShiftSpec {
  KernelSpec kernel;
  double level = 0.0;
  double radius = 0.0;
  double floor_M = 0.0;
  double c0 = 0.0;
  double r0 = 0.0;
  double amplitude = 0.0;
  std::vector<Point> centers;

  std::string id() const {
    std::ostringstream os;
    os << "shift(" << kernel.id() << ",level=" << level << ",R=" << radius << ",M=" << floor_M << ")";
    return os.str();
  }
};

/// Raised when the built shift fails a pointwise bound on the verification grid.
struct ShiftVerificationError : Error {
  ShiftVerificationError(const std::string& what, Index worst, double value)
      : Error(what), worst_vertex(worst), worst_value(value) {}
  Index worst_vertex;
  double worst_value;
};

inline double evaluate_shift(const ShiftSpec& h, const Point& x) {
  double s = 0.0;
  for (const Point& z : h.centers) s += h.kernel.value(Point{x[0] - z[0], x[1] - z[1], x[2] - z[2]});
  return h.amplitude * s;
}

inline Point shift_gradient(const ShiftSpec& h, const Point& x) {
  Point g{0.0, 0.0, 0.0};
  for (const Point& z : h.centers) {
    const Point gk = h.kernel.gradient(Point{x[0] - z[0], x[1] - z[1], x[2] - z[2]});
    for (std::size_t a = 0; a < kMaxDim; ++a) g[a] += gk[a];
  }
  for (double& c : g) c *= h.amplitude;
  return g;
}

/// The r0-lattice points in the open ball of radius `radius` around the origin.
inline std::vector<Point> lattice_in_ball(std::size_t dim, double spacing, double radius) {
  std::vector<Point> out;
  const auto k = static_cast<std::ptrdiff_t>(std::ceil(radius / spacing));
  const std::ptrdiff_t k1 = dim >= 2 ? k : 0, k2 = dim >= 3 ? k : 0;
  for (std::ptrdiff_t a = -k; a <= k; ++a)
    for (std::ptrdiff_t b = -k1; b <= k1; ++b)
      for (std::ptrdiff_t c = -k2; c <= k2; ++c) {
        const Point z{static_cast<double>(a) * spacing, static_cast<double>(b) * spacing,
                      static_cast<double>(c) * spacing};
        if (norm(z) < radius) out.push_back(z);
      }
  return out;
}

/// h evaluated at every vertex of the grid.
inline std::vector<double> shift_field(const ShiftSpec& h, const GridSpec& g) {
  if (h.kernel.dim() != g.dim) throw InvalidArgument("shift and grid dimensions differ");
  std::vector<double> out(g.size());
  for_each_index(Box::whole(g), [&](const Index& i) { out[g.flat(i)] = evaluate_shift(h, g.position(i)); });
  return out;
}

/// Constructs the shift and verifies h >= 0 everywhere on `verify_grid` and
/// h >= M + level on its discrete ball B_R.
inline ShiftSpec build_shift(const KernelSpec& k, double level, double R, double M, const GridSpec& verify_grid) {
  if (!(R >= 0.0)) throw InvalidArgument("shift radius must be nonnegative");
  if (!(M >= 0.0)) throw InvalidArgument("floor M must be nonnegative");
  if (!(M + level >= 0.0))
    throw PreconditionViolation("shift needs M + level >= 0 (amplitude would be negative)");
  const auto er = excursion_radius(k);
  ShiftSpec h{k, level, R, M, er.c0, er.r0, (M + level) / er.c0, {}};
  h.centers = lattice_in_ball(k.dim(), er.r0, R + er.r0);

  const auto values = shift_field(h, verify_grid);
  const double target = M + level;
  const Point origin{0.0, 0.0, 0.0};
  for_each_index(Box::whole(verify_grid), [&](const Index& i) {
    const double v = values[verify_grid.flat(i)];
    if (!(v >= 0.0)) throw ShiftVerificationError("shift is negative at a grid vertex", i, v);
    if (in_ball(verify_grid, i, origin, R) && !(v >= target))
      throw ShiftVerificationError("shift falls below M + level inside B_R", i, v);
  });
  return h;
}

struct ShiftBoundsCheck {
  bool nonnegative = true;
  bool floor_on_ball = true;
  double min_value = 0.0;
  double min_on_ball = 0.0;
  double max_value = 0.0;
  double max_gradient = 0.0;
  double sup_bound = 0.0;  ///< amplitude * |centers| * max(kappa(0), sup |grad kappa|)
  bool bounded = true;
  std::size_t vertices = 0;
};

/// Exact re-check of the pointwise bounds on an arbitrary grid, plus the
/// sup-norm proxy for h in W^{2,infinity}.
inline ShiftBoundsCheck check_shift_bounds(const ShiftSpec& h, const GridSpec& g) {
  ShiftBoundsCheck c;
  const auto values = shift_field(h, g);
  const Point origin{0.0, 0.0, 0.0};
  c.min_value = std::numeric_limits<double>::infinity();
  c.min_on_ball = std::numeric_limits<double>::infinity();
  for_each_index(Box::whole(g), [&](const Index& i) {
    const double v = values[g.flat(i)];
    c.min_value = std::min(c.min_value, v);
    c.max_value = std::max(c.max_value, v);
    const Point p = g.position(i);
    c.max_gradient = std::max(c.max_gradient, norm(shift_gradient(h, p)));
    if (in_ball(g, i, origin, h.radius)) c.min_on_ball = std::min(c.min_on_ball, v);
    ++c.vertices;
  });
  c.nonnegative = c.min_value >= 0.0;
  c.floor_on_ball = !(c.min_on_ball < h.floor_M + h.level);
  double grad_sup = 0.0;
  const double reach = 10.0 * std::max(1.0, h.r0);
  for (int i = 0; i <= 20000; ++i)
    grad_sup = std::max(grad_sup, std::abs(h.kernel.radial_derivative(std::min(h.kernel.max_radius(), reach * i / 20000.0))));
  c.sup_bound = h.amplitude * static_cast<double>(h.centers.size()) * std::max(h.kernel.radial(0.0), grad_sup);
  c.bounded = c.max_value <= c.sup_bound && c.max_gradient <= c.sup_bound;
  return c;
}

/// values'(x) = values(x) + sign * h(x).
inline FieldSample shift_sample(const FieldSample& s, const ShiftSpec& h, double sign = 1.0) {
  FieldSample out = s;
  const auto hv = shift_field(h, s.grid);
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += sign * hv[i];
  out.shifts.push_back((sign < 0 ? "-" : "+") + h.id());
  return out;
}

/// Same as shift_sample with a precomputed h on the sample's grid.
inline FieldSample shift_sample(const FieldSample& s, const std::vector<double>& h_on_grid, const std::string& label) {
  if (h_on_grid.size() != s.values.size()) throw InvalidArgument("shift values do not match the sample grid");
  FieldSample out = s;
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += h_on_grid[i];
  out.shifts.push_back("+" + label);
  return out;
}

struct FloorChoice {
  double M = 0.0;          ///< quantile rounded up to the next 0.1 (and at least 0)
  double quantile = 0.0;   ///< raw empirical target_prob-quantile of -inf_{B_R} f
  double band_lo = 0.0;    ///< 95% order-statistic band for the quantile
  double band_hi = 0.0;
  double target_prob = 0.75;
  std::size_t n_samples = 0;
};

/// Empirical p-quantile (inverse empirical CDF) with a 95% order-statistic band.
inline std::array<double, 3> quantile_with_band(std::vector<double> x, double p) {
  std::sort(x.begin(), x.end());
  const auto n = static_cast<double>(x.size());
  auto at_rank = [&](double rank) {
    const auto r = static_cast<std::ptrdiff_t>(std::ceil(rank));
    return x[static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(r - 1, 0, static_cast<std::ptrdiff_t>(x.size()) - 1))];
  };
  const double half = 1.959963984540054 * std::sqrt(n * p * (1.0 - p));
  return {at_rank(p * n), at_rank(p * n - half), at_rank(p * n + half + 1.0)};
}

/// Picks M with P[inf_{B_R} f >= -M] >= target_prob over n synthesized samples
/// (seeds seed, seed+1, ...).
inline FloorChoice choose_floor_M(const KernelSpec& k, const GridSpec& g, double R, double target_prob,
                                  std::size_t n_samples, std::uint64_t seed, const EmbeddingOptions& opt = {},
                                  std::size_t threads = default_threads()) {
  if (!(target_prob > 0.0 && target_prob < 1.0)) throw InvalidArgument("target probability must lie in (0, 1)");
  if (n_samples < 50) throw InvalidArgument("choose_floor_M needs at least 50 samples");
  const auto sampler = GaussianFieldSampler::circulant(k, g, opt);
  const Point origin{0.0, 0.0, 0.0};
  std::vector<std::size_t> ball;
  for_each_index(ball_bounds(g, origin, R), [&](const Index& i) {
    if (in_ball(g, i, origin, R)) ball.push_back(g.flat(i));
  });
  if (ball.empty()) throw InvalidArgument("discrete ball B_R contains no vertex");

  const auto neg_inf = parallel_map(
      n_samples, threads, [&] { return sampler.make_workspace(); },
      [&](auto& ws, std::size_t i) {
        const auto s = sampler.sample(seed + i, *ws);
        double lo = std::numeric_limits<double>::infinity();
        for (std::size_t f : ball) lo = std::min(lo, s.values[f]);
        return -lo;
      });
  const auto q = quantile_with_band(neg_inf, target_prob);
  FloorChoice c;
  c.quantile = q[0];
  c.band_lo = q[1];
  c.band_hi = q[2];
  c.M = std::max(0.0, std::ceil(q[0] * 10.0 - 1e-9) / 10.0);
  c.target_prob = target_prob;
  c.n_samples = n_samples;
  return c;
}

struct ShiftIntegrability {
  double integral = 0.0;           ///< over the ball of quadrature_radius
  double gradient_integral = 0.0;  ///< integral of |grad h| over the same ball
  double integral_inner = 0.0;     ///< same, at 0.9 * quadrature_radius
  double gradient_integral_inner = 0.0;
  bool integrable = true;          ///< false when either estimate still grows > 1% over the last radius step
  double upper_bound = 0.0;        ///< amplitude * |centers| * integral of kappa over R^d
  bool bound_ok = true;
};

/// Cell-centre cubature of h and |grad h| over balls of radius 0.9 R_q and R_q.
inline ShiftIntegrability shift_integrability(const ShiftSpec& h, double quadrature_radius, double resolution) {
  if (!(quadrature_radius > 0.0 && resolution > 0.0)) throw InvalidArgument("quadrature radius/resolution must be positive");
  const std::size_t d = h.kernel.dim();
  const auto cells = static_cast<std::ptrdiff_t>(std::ceil(quadrature_radius / resolution));
  const double dv = std::pow(resolution, static_cast<double>(d));
  const double inner = 0.9 * quadrature_radius;
  ShiftIntegrability out;
  const std::ptrdiff_t c1 = d >= 2 ? cells : 1, c2 = d >= 3 ? cells : 1;
  for (std::ptrdiff_t a = -cells; a < cells; ++a)
    for (std::ptrdiff_t b = -c1; b < c1; ++b)
      for (std::ptrdiff_t c = -c2; c < c2; ++c) {
        Point x{(static_cast<double>(a) + 0.5) * resolution, (static_cast<double>(b) + 0.5) * resolution,
                (static_cast<double>(c) + 0.5) * resolution};
        if (d < 2) x[1] = 0.0;
        if (d < 3) x[2] = 0.0;
        if (d < 2 && b != 0) continue;
        if (d < 3 && c != 0) continue;
        const double r = norm(x);
        if (r >= quadrature_radius) continue;
        const double v = evaluate_shift(h, x) * dv;
        const double gv = norm(shift_gradient(h, x)) * dv;
        out.integral += v;
        out.gradient_integral += gv;
        if (r < inner) {
          out.integral_inner += v;
          out.gradient_integral_inner += gv;
        }
      }
  auto growing = [](double outer, double in) { return outer > 0.0 && (outer - in) > 0.01 * outer; };
  out.integrable = !growing(out.integral, out.integral_inner) &&
                   !growing(out.gradient_integral, out.gradient_integral_inner);
  if (h.kernel.analytic()) {
    out.upper_bound = h.amplitude * static_cast<double>(h.centers.size()) * spectral_density(h.kernel, 0.0);
    out.bound_ok = out.integral <= out.upper_bound * (1.0 + 1e-9);
  }
  return out;
}

inline nlohmann::json to_json(const ShiftSpec& h) {
  nlohmann::json centers = nlohmann::json::array();
  for (const Point& z : h.centers) {
    nlohmann::json c = nlohmann::json::array();
    for (std::size_t a = 0; a < h.kernel.dim(); ++a) c.push_back(z[a]);
    centers.push_back(c);
  }
  return {{"kernel_id", h.kernel.id()}, {"kernel", to_json(h.kernel)}, {"level", h.level}, {"R", h.radius},
          {"M", h.floor_M},           {"c0", h.c0},                    {"r0", h.r0},       {"amplitude", h.amplitude},
          {"centers", centers}};
}

inline ShiftSpec shift_from_json(const nlohmann::json& j) {
  ShiftSpec h{kernel_from_json(j.at("kernel")), j.at("level").get<double>(), j.at("R").get<double>(),
              j.at("M").get<double>(), j.at("c0").get<double>(), j.at("r0").get<double>(), 0.0, {}};
  h.amplitude = j.contains("amplitude") ? j.at("amplitude").get<double>() : (h.floor_M + h.level) / h.c0;
  for (const auto& c : j.at("centers")) {
    Point z{0.0, 0.0, 0.0};
    for (std::size_t a = 0; a < c.size() && a < kMaxDim; ++a) z[a] = c[a].get<double>();
    h.centers.push_back(z);
  }
  return h;
}

}  // namespace gaussperc
