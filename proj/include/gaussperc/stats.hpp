#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "gaussperc/error.hpp"

namespace gaussperc {

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
  bool contains(double x) const { return lo <= x && x <= hi; }
};

inline double normal_quantile(double p) {
  return boost::math::quantile(boost::math::normal_distribution<>(), p);
}

/// Wilson score interval for a binomial proportion.
inline Interval wilson_interval(std::size_t successes, std::size_t n, double confidence = 0.95) {
  if (n == 0) return {0.0, 1.0};
  const double z = normal_quantile(0.5 + 0.5 * confidence);
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(successes) / nn;
  const double denom = 1.0 + z * z / nn;
  const double centre = (p + z * z / (2.0 * nn)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / nn + z * z / (4.0 * nn * nn)) / denom;
  return {std::max(0.0, std::min(centre - half, p)), std::min(1.0, std::max(centre + half, p))};
}

struct Proportion {
  std::size_t successes = 0;
  std::size_t n = 0;
  double estimate() const { return n ? static_cast<double>(successes) / static_cast<double>(n) : 0.0; }
  double standard_error() const {
    if (!n) return 0.0;
    const double p = estimate();
    return std::sqrt(p * (1.0 - p) / static_cast<double>(n));
  }
  Interval wilson(double confidence = 0.95) const { return wilson_interval(successes, n, confidence); }
};

struct MeanEstimate {
  double mean = 0.0;
  double standard_error = 0.0;
  std::size_t n = 0;
};

inline MeanEstimate mean_and_se(const std::vector<double>& x) {
  MeanEstimate m;
  m.n = x.size();
  if (x.empty()) return m;
  double s = 0.0;
  for (double v : x) s += v;
  m.mean = s / static_cast<double>(x.size());
  if (x.size() > 1) {
    double ss = 0.0;
    for (double v : x) ss += (v - m.mean) * (v - m.mean);
    m.standard_error = std::sqrt(ss / static_cast<double>(x.size() - 1) / static_cast<double>(x.size()));
  }
  return m;
}

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
};

/// Weighted least squares y = a + b x with weights 1/sigma^2 (all ones if empty).
inline LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y,
                            const std::vector<double>& sigma = {}) {
  if (x.size() != y.size() || x.size() < 2) throw InvalidArgument("linear fit needs >= 2 matching points");
  double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double w = sigma.empty() || sigma[i] <= 0.0 ? 1.0 : 1.0 / (sigma[i] * sigma[i]);
    sw += w;
    sx += w * x[i];
    sy += w * y[i];
    sxx += w * x[i] * x[i];
    sxy += w * x[i] * y[i];
  }
  const double det = sw * sxx - sx * sx;
  if (det <= 0.0) throw InvalidArgument("degenerate abscissae in linear fit");
  LinearFit f;
  f.slope = (sw * sxy - sx * sy) / det;
  f.intercept = (sxx * sy - sx * sxy) / det;
  if (!sigma.empty()) {
    f.slope_se = std::sqrt(sw / det);
  } else if (x.size() > 2) {
    double rss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double r = y[i] - f.intercept - f.slope * x[i];
      rss += r * r;
    }
    f.slope_se = std::sqrt(rss / static_cast<double>(x.size() - 2) * sw / det);
  }
  return f;
}

/// Log-log fit of y ~ C x^slope; sigma are standard errors of y.
inline LinearFit loglog_fit(const std::vector<double>& x, const std::vector<double>& y,
                            const std::vector<double>& sigma = {}) {
  std::vector<double> lx, ly, ls;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw InvalidArgument("log-log fit needs positive data");
    lx.push_back(std::log(x[i]));
    ly.push_back(std::log(y[i]));
    if (!sigma.empty()) ls.push_back(sigma[i] / y[i]);
  }
  return linear_fit(lx, ly, ls);
}

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// Asymptotic Kolmogorov survival function Q(t) = 2 sum (-1)^{k-1} exp(-2 k^2 t^2).
inline double kolmogorov_survival(double t) {
  if (t < 0.2) return 1.0;
  double s = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * t * t);
    s += (k % 2 ? 2.0 : -2.0) * term;
    if (term < 1e-16) break;
  }
  return std::clamp(s, 0.0, 1.0);
}

inline KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw InvalidArgument("KS test needs nonempty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  const double ne = na * nb / (na + nb);
  const double t = (std::sqrt(ne) + 0.12 + 0.11 / std::sqrt(ne)) * d;
  return {d, kolmogorov_survival(t)};
}

/// Empirical p-quantile (linear interpolation between order statistics).
inline double quantile(std::vector<double> x, double p) {
  if (x.empty()) throw InvalidArgument("quantile of empty sample");
  std::sort(x.begin(), x.end());
  const double pos = p * static_cast<double>(x.size() - 1);
  const auto k = static_cast<std::size_t>(std::floor(pos));
  if (k + 1 >= x.size()) return x.back();
  return x[k] + (pos - static_cast<double>(k)) * (x[k + 1] - x[k]);
}

}  // namespace gaussperc
