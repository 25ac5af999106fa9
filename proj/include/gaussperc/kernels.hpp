#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <math.h>  // pchip.hpp calls isnan unqualified

#include <boost/math/interpolators/pchip.hpp>
#include <nlohmann/json.hpp>

#include "gaussperc/error.hpp"
#include "gaussperc/grid.hpp"

namespace gaussperc {

using Matrix3 = std::array<std::array<double, 3>, 3>;

enum class KernelFamily { BargmannFock, Cauchy, Tabulated };
enum class DerivativeOrder { Value, Gradient, Hessian };

/// Surface area of the unit sphere S^{d-1}.
inline double unit_sphere_area(std::size_t d) {
  switch (d) {
    case 1: return 2.0;
    case 2: return 2.0 * std::numbers::pi;
    case 3: return 4.0 * std::numbers::pi;
    default: throw InvalidArgument("dimension must be 1, 2 or 3");
  }
}

/// Stationary isotropic covariance kernel kappa(x) = variance * profile(|x|).
///
/// Bargmann-Fock: profile(r) = exp(-r^2 / (2 l^2)).
/// Cauchy:        profile(r) = (1 + r^2)^(-alpha/2), alpha > d.
/// Tabulated:     monotone cubic (PCHIP) interpolation of radial samples with
///                zero slope at r = 0; value and gradient only.
class KernelSpec {
 public:
  static KernelSpec bargmann_fock(std::size_t dim, double length_scale = 1.0, double variance = 1.0) {
    KernelSpec k(KernelFamily::BargmannFock, dim, variance);
    k.length_scale_ = length_scale;
    k.validate();
    return k;
  }

  static KernelSpec cauchy(std::size_t dim, double alpha, double variance = 1.0) {
    KernelSpec k(KernelFamily::Cauchy, dim, variance);
    k.alpha_ = alpha;
    k.validate();
    return k;
  }

  static KernelSpec tabulated(std::size_t dim, std::vector<double> radii, std::vector<double> values,
                              std::string name = "table", double variance = 1.0) {
    KernelSpec k(KernelFamily::Tabulated, dim, variance);
    k.radii_ = std::move(radii);
    k.values_ = std::move(values);
    k.name_ = std::move(name);
    k.validate();
    k.interp_ = std::make_shared<Interpolator>(std::vector<double>(k.radii_), std::vector<double>(k.values_),
                                               0.0);
    return k;
  }

  /// Same kernel with variance multiplied by `factor` (kappa -> factor * kappa).
  KernelSpec scaled(double factor) const {
    if (!(factor > 0.0)) throw InvalidArgument("kernel scale factor must be positive");
    KernelSpec k = *this;
    k.variance_ *= factor;
    return k;
  }

  KernelFamily family() const { return family_; }
  std::size_t dim() const { return dim_; }
  double variance() const { return variance_; }
  double length_scale() const { return length_scale_; }
  double alpha() const { return alpha_; }
  const std::vector<double>& radii() const { return radii_; }
  const std::vector<double>& table_values() const { return values_; }
  bool analytic() const { return family_ != KernelFamily::Tabulated; }

  /// Largest radius at which the kernel can be evaluated.
  double max_radius() const {
    return family_ == KernelFamily::Tabulated ? radii_.back() : std::numeric_limits<double>::infinity();
  }

  const std::string& name() const { return name_; }

  std::string id() const {
    std::ostringstream os;
    os.precision(6);
    switch (family_) {
      case KernelFamily::BargmannFock: os << "bf(l=" << length_scale_; break;
      case KernelFamily::Cauchy: os << "cauchy(alpha=" << alpha_; break;
      case KernelFamily::Tabulated: os << "tab(" << name_; break;
    }
    if (variance_ != 1.0) os << ",var=" << variance_;
    os << ",d=" << dim_ << ")";
    return os.str();
  }

  /// Radial profile kappa(r), r >= 0.
  double radial(double r) const {
    switch (family_) {
      case KernelFamily::BargmannFock: return variance_ * std::exp(-0.5 * r * r / (length_scale_ * length_scale_));
      case KernelFamily::Cauchy: return variance_ * std::pow(1.0 + r * r, -0.5 * alpha_);
      case KernelFamily::Tabulated:
        check_table_range(r);
        return variance_ * (*interp_)(r);
    }
    return 0.0;
  }

  /// d kappa / dr.
  double radial_derivative(double r) const {
    switch (family_) {
      case KernelFamily::BargmannFock: {
        const double s2 = length_scale_ * length_scale_;
        return -r / s2 * radial(r);
      }
      case KernelFamily::Cauchy:
        return -alpha_ * r * variance_ * std::pow(1.0 + r * r, -0.5 * alpha_ - 1.0);
      case KernelFamily::Tabulated:
        check_table_range(r);
        return variance_ * interp_->prime(r);
    }
    return 0.0;
  }

  double value(const Point& x) const { return radial(norm(x)); }

  Point gradient(const Point& x) const {
    Point g{0.0, 0.0, 0.0};
    switch (family_) {
      case KernelFamily::BargmannFock: {
        const double s2 = length_scale_ * length_scale_;
        const double v = value(x);
        for (std::size_t a = 0; a < dim_; ++a) g[a] = -x[a] / s2 * v;
        return g;
      }
      case KernelFamily::Cauchy: {
        const double q = 1.0 + squared_norm(x);
        const double c = -alpha_ * variance_ * std::pow(q, -0.5 * alpha_ - 1.0);
        for (std::size_t a = 0; a < dim_; ++a) g[a] = c * x[a];
        return g;
      }
      case KernelFamily::Tabulated: {
        const double r = norm(x);
        if (r == 0.0) return g;
        const double dr = radial_derivative(r);
        for (std::size_t a = 0; a < dim_; ++a) g[a] = dr * x[a] / r;
        return g;
      }
    }
    return g;
  }

  Matrix3 hessian(const Point& x) const {
    Matrix3 h{};
    switch (family_) {
      case KernelFamily::BargmannFock: {
        const double s2 = length_scale_ * length_scale_;
        const double v = value(x);
        for (std::size_t i = 0; i < dim_; ++i)
          for (std::size_t j = 0; j < dim_; ++j)
            h[i][j] = (x[i] * x[j] / (s2 * s2) - (i == j ? 1.0 / s2 : 0.0)) * v;
        return h;
      }
      case KernelFamily::Cauchy: {
        const double q = 1.0 + squared_norm(x);
        const double b = 0.5 * alpha_;
        const double c1 = -2.0 * b * variance_ * std::pow(q, -b - 1.0);
        const double c2 = 4.0 * b * (b + 1.0) * variance_ * std::pow(q, -b - 2.0);
        for (std::size_t i = 0; i < dim_; ++i)
          for (std::size_t j = 0; j < dim_; ++j) h[i][j] = c2 * x[i] * x[j] + (i == j ? c1 : 0.0);
        return h;
      }
      case KernelFamily::Tabulated:
        throw UnsupportedOrder("tabulated kernels support value and gradient only");
    }
    return h;
  }

  /// Writing kappa(x) = phi(|x|^2): returns {phi'(0), phi''(0)}. These fix all
  /// second and fourth derivatives of kappa at the origin.
  std::array<double, 2> origin_taylor() const {
    switch (family_) {
      case KernelFamily::BargmannFock: {
        const double s2 = length_scale_ * length_scale_;
        return {-variance_ / (2.0 * s2), variance_ / (4.0 * s2 * s2)};
      }
      case KernelFamily::Cauchy: {
        const double b = 0.5 * alpha_;
        return {-variance_ * b, variance_ * b * (b + 1.0)};
      }
      case KernelFamily::Tabulated:
        throw UnsupportedOrder("tabulated kernels have no closed-form derivatives at the origin");
    }
    return {0.0, 0.0};
  }

  /// Fourth mixed derivative kappa_{ijkl}(0).
  double fourth_derivative_at_origin(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
    const double p2 = origin_taylor()[1];
    const auto d = [](std::size_t a, std::size_t b) { return a == b ? 1.0 : 0.0; };
    return 4.0 * p2 * (d(i, j) * d(k, l) + d(i, k) * d(j, l) + d(i, l) * d(j, k));
  }

  bool operator==(const KernelSpec& o) const {
    return family_ == o.family_ && dim_ == o.dim_ && variance_ == o.variance_ && length_scale_ == o.length_scale_ &&
           alpha_ == o.alpha_ && radii_ == o.radii_ && values_ == o.values_;
  }

 private:
  using Interpolator = boost::math::interpolators::pchip<std::vector<double>>;

  KernelSpec(KernelFamily f, std::size_t dim, double variance) : family_(f), dim_(dim), variance_(variance) {}

  static double squared_norm(const Point& x) { return x[0] * x[0] + x[1] * x[1] + x[2] * x[2]; }

  void check_table_range(double r) const {
    if (!(r >= 0.0) || r > radii_.back())
      throw OutOfRange("radius " + std::to_string(r) + " outside tabulated range [0, " +
                       std::to_string(radii_.back()) + "]");
  }

  void validate() const {
    if (dim_ < 1 || dim_ > kMaxDim) throw InvalidArgument("kernel dimension must be 1, 2 or 3");
    if (!(variance_ > 0.0) || !std::isfinite(variance_)) throw InvalidArgument("kernel variance must be positive");
    switch (family_) {
      case KernelFamily::BargmannFock:
        if (!(length_scale_ > 0.0)) throw InvalidArgument("Bargmann-Fock length scale must be positive");
        break;
      case KernelFamily::Cauchy:
        if (!(alpha_ > static_cast<double>(dim_)))
          throw InvalidArgument("Cauchy kernel requires alpha > d for integrable correlations");
        break;
      case KernelFamily::Tabulated:
        if (radii_.size() != values_.size()) throw InvalidArgument("tabulated radii/values length mismatch");
        if (radii_.size() < 4) throw InvalidArgument("tabulated kernel needs at least 4 samples");
        if (radii_.front() != 0.0) throw InvalidArgument("tabulated kernel must start at radius 0");
        for (std::size_t i = 1; i < radii_.size(); ++i)
          if (!(radii_[i] > radii_[i - 1])) throw InvalidArgument("tabulated radii must be strictly increasing");
        if (!(values_.front() > 0.0)) throw InvalidArgument("kernel must satisfy kappa(0) > 0");
        break;
    }
  }

  KernelFamily family_;
  std::size_t dim_;
  double variance_ = 1.0;
  double length_scale_ = 1.0;
  double alpha_ = 0.0;
  std::vector<double> radii_;
  std::vector<double> values_;
  std::string name_;
  std::shared_ptr<const Interpolator> interp_;
};

using KernelValue = std::variant<double, Point, Matrix3>;

inline KernelValue evaluate_kernel(const KernelSpec& k, const Point& x, DerivativeOrder order) {
  for (double c : x)
    if (!std::isfinite(c)) throw InvalidArgument("kernel evaluated at a non-finite point");
  switch (order) {
    case DerivativeOrder::Value: return k.value(x);
    case DerivativeOrder::Gradient: return k.gradient(x);
    case DerivativeOrder::Hessian: return k.hessian(x);
  }
  return 0.0;
}

namespace detail {

/// Composite Simpson rule on [a, b] with an even number of panels.
template <typename Fn>
double simpson(Fn&& fn, double a, double b, std::size_t panels) {
  if (panels % 2) ++panels;
  if (panels == 0) panels = 2;
  const double h = (b - a) / static_cast<double>(panels);
  double s = fn(a) + fn(b);
  for (std::size_t i = 1; i < panels; ++i) s += (i % 2 ? 4.0 : 2.0) * fn(a + h * static_cast<double>(i));
  return s * h / 3.0;
}

/// Radial Fourier transform of an isotropic function in d dimensions.
template <typename Fn>
double radial_fourier(Fn&& profile, std::size_t d, double omega, double rmax, std::size_t panels) {
  switch (d) {
    case 1:
      return 2.0 * simpson([&](double r) { return profile(r) * std::cos(omega * r); }, 0.0, rmax, panels);
    case 2:
      return 2.0 * std::numbers::pi *
             simpson([&](double r) { return profile(r) * std::cyl_bessel_j(0.0, omega * r) * r; }, 0.0, rmax,
                     panels);
    case 3:
      return 4.0 * std::numbers::pi * simpson(
                                           [&](double r) {
                                             const double x = omega * r;
                                             const double sinc = x == 0.0 ? 1.0 : std::sin(x) / x;
                                             return profile(r) * sinc * r * r;
                                           },
                                           0.0, rmax, panels);
    default: throw InvalidArgument("dimension must be 1, 2 or 3");
  }
}

}  // namespace detail

/// Relative accuracy of the numerical transform used for tabulated kernels
/// (Simpson rule on the table range with this many panels).
inline constexpr std::size_t kTabulatedTransformPanels = 8192;
inline constexpr double kTabulatedSpectralTolerance = 1e-6;

/// rho(omega) = integral of kappa(x) exp(-i <x, omega>) dx; depends on |omega| only.
inline double spectral_density(const KernelSpec& k, double omega_norm) {
  const auto d = static_cast<double>(k.dim());
  const double w = std::abs(omega_norm);
  switch (k.family()) {
    case KernelFamily::BargmannFock: {
      const double s = k.length_scale();
      return k.variance() * std::pow(2.0 * std::numbers::pi * s * s, 0.5 * d) * std::exp(-0.5 * s * s * w * w);
    }
    case KernelFamily::Cauchy: {
      const double beta = 0.5 * k.alpha();
      const double nu = beta - 0.5 * d;
      if (w < 1e-10)
        return k.variance() * std::pow(std::numbers::pi, 0.5 * d) * std::tgamma(nu) / std::tgamma(beta);
      const double bessel = std::cyl_bessel_k(nu, w);
      return k.variance() * std::pow(2.0 * std::numbers::pi, 0.5 * d) * std::pow(2.0, 1.0 - beta) /
             std::tgamma(beta) * std::pow(w, nu) * bessel;
    }
    case KernelFamily::Tabulated:
      return detail::radial_fourier([&](double r) { return k.radial(r); }, k.dim(), w, k.max_radius(),
                                    kTabulatedTransformPanels);
  }
  return 0.0;
}

inline double spectral_density(const KernelSpec& k, const Point& omega) { return spectral_density(k, norm(omega)); }

struct AssumptionReport {
  bool positivity_ok = true;
  double worst_value = 0.0;   ///< min of kappa over the probes
  double worst_radius = 0.0;  ///< where the minimum is attained
  double integrability_estimate = 0.0;
  double probe_radius = 0.0;
  std::optional<int> smoothness_order;  ///< 8 means "8 or more"; empty = unknown
  bool nondegeneracy_ok = false;
  double min_covariance_eigenvalue = 0.0;
};

/// Truncated integral of |kappa| + |grad kappa| over the ball of `radius`,
/// Simpson rule with panels no wider than `resolution`.
inline double integrability_estimate(const KernelSpec& k, double radius, double resolution) {
  const double rmax = std::min(radius, k.max_radius());
  const auto panels = static_cast<std::size_t>(std::ceil(rmax / resolution));
  const double d = static_cast<double>(k.dim());
  return unit_sphere_area(k.dim()) * detail::simpson(
                                         [&](double r) {
                                           return (std::abs(k.radial(r)) + std::abs(k.radial_derivative(r))) *
                                                  std::pow(r, d - 1.0);
                                         },
                                         0.0, rmax, std::max<std::size_t>(panels, 2));
}

inline AssumptionReport audit_assumptions(const KernelSpec& k, double probe_radius, double quadrature_resolution) {
  if (!(probe_radius > 0.0)) throw InvalidArgument("probe radius must be positive");
  if (!(quadrature_resolution > 0.0)) throw InvalidArgument("quadrature resolution must be positive");
  AssumptionReport rep;
  rep.probe_radius = probe_radius;

  const double rmax = std::min(probe_radius, k.max_radius());
  const auto steps = static_cast<std::size_t>(std::ceil(rmax / quadrature_resolution));
  rep.worst_value = k.radial(0.0);
  auto probe = [&](double r) {
    const double v = k.radial(r);
    if (v < rep.worst_value) {
      rep.worst_value = v;
      rep.worst_radius = r;
    }
  };
  for (std::size_t i = 0; i <= steps; ++i) probe(std::min(rmax, quadrature_resolution * static_cast<double>(i)));
  for (double r : k.radii())
    if (r <= rmax) probe(r);
  rep.positivity_ok = rep.worst_value >= 0.0;

  rep.integrability_estimate = integrability_estimate(k, probe_radius, quadrature_resolution);
  if (k.analytic()) rep.smoothness_order = 8;

  // Cov(f(0), grad f(0)) = diag(kappa(0), -Hess kappa(0)); isotropy makes -Hess kappa(0) = -kappa''(0) I.
  double curvature = 0.0;
  if (k.analytic()) {
    curvature = -2.0 * k.origin_taylor()[0];
  } else {
    const double delta = std::min(1e-3, 0.25 * k.radii()[1]);
    curvature = 2.0 * (k.radial(0.0) - k.radial(delta)) / (delta * delta);
  }
  rep.min_covariance_eigenvalue = std::min(k.radial(0.0), curvature);
  rep.nondegeneracy_ok = rep.min_covariance_eigenvalue > 1e-12 * k.radial(0.0);
  return rep;
}

struct ExcursionRadius {
  double r0 = 0.0;
  double c0 = 0.0;
  bool radially_monotone = true;  ///< false: r0 comes from the conservative grid scan
};

/// c0 = kappa(0)/2 and the largest r0 with kappa(y) >= c0 for all |y| <= r0.
inline ExcursionRadius excursion_radius(const KernelSpec& k) {
  ExcursionRadius out;
  const double k0 = k.radial(0.0);
  if (!(k0 > 0.0)) throw PreconditionViolation("excursion radius requires kappa(0) > 0");
  out.c0 = 0.5 * k0;

  double hi = k.analytic() ? 1.0 : std::min(1.0, k.max_radius());
  while (k.radial(hi) >= out.c0) {
    if (hi >= k.max_radius()) throw PreconditionViolation("kernel never drops below kappa(0)/2 in its range");
    hi = std::min(2.0 * hi, k.max_radius());
    if (hi > 1e6) throw PreconditionViolation("kernel never drops below kappa(0)/2");
  }

  constexpr std::size_t kScan = 4096;
  const double step = hi / kScan;
  double prev = k0;
  double first_below = hi;
  for (std::size_t i = 1; i <= kScan; ++i) {
    const double r = step * static_cast<double>(i);
    const double v = k.radial(r);
    if (v > prev) out.radially_monotone = false;
    if (v < out.c0 && first_below == hi) first_below = r;
    prev = v;
  }
  if (!out.radially_monotone) {
    out.r0 = std::max(0.0, first_below - step);
    return out;
  }
  double lo = 0.0;
  for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, hi); ++it) {
    const double mid = 0.5 * (lo + hi);
    (k.radial(mid) >= out.c0 ? lo : hi) = mid;
  }
  out.r0 = lo;
  return out;
}

// ---- serialization -------------------------------------------------------

/// Two-column (radius, value) CSV; blank lines, '#' comments and a non-numeric header are skipped.
inline std::pair<std::vector<double>, std::vector<double>> read_radial_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open kernel table " + path);
  std::vector<double> radii, values;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    double r = 0.0, v = 0.0;
    if (!(ls >> r >> v)) {
      if (radii.empty() && lineno == 1) continue;
      throw FormatError(path + ":" + std::to_string(lineno) + ": expected two numbers");
    }
    radii.push_back(r);
    values.push_back(v);
  }
  return {std::move(radii), std::move(values)};
}

inline nlohmann::json to_json(const KernelSpec& k) {
  nlohmann::json j;
  j["dimension"] = k.dim();
  nlohmann::json params;
  switch (k.family()) {
    case KernelFamily::BargmannFock:
      j["family"] = "bargmann_fock";
      params["length_scale"] = k.length_scale();
      break;
    case KernelFamily::Cauchy:
      j["family"] = "cauchy";
      params["alpha"] = k.alpha();
      break;
    case KernelFamily::Tabulated:
      j["family"] = "tabulated";
      params["radii"] = k.radii();
      params["values"] = k.table_values();
      params["name"] = k.name();
      break;
  }
  if (k.variance() != 1.0) params["variance"] = k.variance();
  j["params"] = params;
  return j;
}

inline KernelSpec kernel_from_json(const nlohmann::json& j) {
  const auto family = j.at("family").get<std::string>();
  const auto dim = j.at("dimension").get<std::size_t>();
  const nlohmann::json params = j.value("params", nlohmann::json::object());
  const double variance = params.value("variance", 1.0);
  if (family == "bargmann_fock" || family == "bf")
    return KernelSpec::bargmann_fock(dim, params.value("length_scale", 1.0), variance);
  if (family == "cauchy") return KernelSpec::cauchy(dim, params.at("alpha").get<double>(), variance);
  if (family == "tabulated") {
    if (params.contains("csv")) {
      const auto path = params.at("csv").get<std::string>();
      auto [r, v] = read_radial_csv(path);
      return KernelSpec::tabulated(dim, std::move(r), std::move(v), path, variance);
    }
    return KernelSpec::tabulated(dim, params.at("radii").get<std::vector<double>>(),
                                 params.at("values").get<std::vector<double>>(), params.value("name", "table"),
                                 variance);
  }
  throw InvalidArgument("unknown kernel family '" + family + "'");
}

}  // namespace gaussperc
