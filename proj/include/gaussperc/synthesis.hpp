#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "gaussperc/error.hpp"
#include "gaussperc/fft.hpp"
#include "gaussperc/grid.hpp"
#include "gaussperc/kernels.hpp"
#include "gaussperc/rng.hpp"

namespace gaussperc {

enum class SynthesisMethod { Circulant, Spectral, Loaded };

inline const char* to_string(SynthesisMethod m) {
  switch (m) {
    case SynthesisMethod::Circulant: return "circulant";
    case SynthesisMethod::Spectral: return "spectral";
    case SynthesisMethod::Loaded: return "loaded";
  }
  return "?";
}

/// One realization of the field at the grid vertices (row-major, axis 0 slowest).
struct FieldSample {
  GridSpec grid;
  std::vector<double> values;
  std::string kernel_id;
  std::uint64_t seed = 0;
  SynthesisMethod method = SynthesisMethod::Circulant;
  std::vector<std::string> shifts;  ///< provenance of shifts applied after synthesis

  double at(const Index& i) const { return values[grid.flat(i)]; }
};

struct EmbeddingOptions {
  /// Torus side >= padding * grid side per axis (rounded up to an FFT-friendly size).
  double padding = 2.0;
  /// The kernel support is where kappa stays below `support_cutoff * kappa(0)`.
  /// The torus always holds grid side + support; `compact` shrinks it to exactly
  /// that, with covariance errors at most the cutoff.
  bool compact = false;
  double support_cutoff = 1e-17;
  /// Negative eigenvalue mass below this fraction of the trace is clipped to zero.
  double clip_tolerance = 1e-8;
};

/// Radius beyond which kappa stays below cutoff * kappa(0); infinity if not found before `limit`.
inline double support_radius(const KernelSpec& k, double cutoff, double limit) {
  const double target = cutoff * k.radial(0.0);
  double hi = 1.0;
  while (k.radial(hi) > target) {
    hi *= 2.0;
    if (hi > limit || hi > k.max_radius()) return std::numeric_limits<double>::infinity();
  }
  double lo = 0.0;
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    (k.radial(mid) > target ? lo : hi) = mid;
  }
  return hi;
}

/// Default spacing guidance: excursion topology at scale r0 is resolved when spacing <= r0/4.
inline std::optional<std::string> spacing_warning(const KernelSpec& k, const GridSpec& g) {
  const double r0 = excursion_radius(k).r0;
  for (std::size_t a = 0; a < g.dim; ++a)
    if (g.spacing[a] > 0.25 * r0)
      return "grid spacing " + std::to_string(g.spacing[a]) + " exceeds r0/4 = " + std::to_string(0.25 * r0) +
             "; excursion topology may be under-resolved";
  return std::nullopt;
}

/// Per-thread FFT workspace for a sampler.
class SamplerWorkspace {
 public:
  explicit SamplerWorkspace(const std::vector<int>& torus) : plan_(torus) {}
  FftPlan& plan() { return plan_; }

 private:
  FftPlan plan_;
};

/// Samples a stationary Gaussian field on a grid as the real part of
/// FFT(sqrt(lambda / N) * (xi + i eta)) restricted to the grid corner of a
/// periodic torus, where lambda are the torus covariance eigenvalues.
class GaussianFieldSampler {
 public:
  /// Exact sampler: lambda = DFT of kappa evaluated at minimum-image torus lags.
  static GaussianFieldSampler circulant(const KernelSpec& k, const GridSpec& g, const EmbeddingOptions& opt = {}) {
    check_dims(k, g);
    GaussianFieldSampler s(g, k.id(), SynthesisMethod::Circulant, torus_dims(k, g, opt));
    FftPlan fft(s.torus_);
    auto buf = fft.data();
    s.for_each_torus([&](std::size_t flat, const std::array<std::ptrdiff_t, 3>& j) {
      Point lag{0.0, 0.0, 0.0};
      for (std::size_t a = 0; a < g.dim; ++a) {
        const std::ptrdiff_t m = s.torus_[a];
        lag[a] = static_cast<double>(std::min(j[a], m - j[a])) * g.spacing[a];
      }
      buf[flat] = k.value(lag);
    });
    fft.execute();
    std::vector<double> lambda(fft.size());
    for (std::size_t i = 0; i < lambda.size(); ++i) lambda[i] = buf[i].real();
    s.set_eigenvalues(std::move(lambda), opt);
    return s;
  }

  /// Approximate sampler: lambda_k = rho(omega_k) / h^d at the torus frequencies
  /// (band-limited to the grid Nyquist frequency, periodized on the torus).
  static GaussianFieldSampler spectral(const KernelSpec& k, const GridSpec& g, const EmbeddingOptions& opt = {}) {
    check_dims(k, g);
    GaussianFieldSampler s(g, k.id(), SynthesisMethod::Spectral, torus_dims(k, g, opt));
    double cell = 1.0;
    for (std::size_t a = 0; a < g.dim; ++a) cell *= g.spacing[a];
    std::vector<double> lambda(s.torus_size());
    s.for_each_torus([&](std::size_t flat, const std::array<std::ptrdiff_t, 3>& j) {
      Point omega{0.0, 0.0, 0.0};
      for (std::size_t a = 0; a < g.dim; ++a) {
        const std::ptrdiff_t m = s.torus_[a];
        const std::ptrdiff_t kk = j[a] <= m / 2 ? j[a] : j[a] - m;
        omega[a] = 2.0 * std::numbers::pi * static_cast<double>(kk) / (static_cast<double>(m) * g.spacing[a]);
      }
      lambda[flat] = spectral_density(k, omega) / cell;
    });
    s.set_eigenvalues(std::move(lambda), opt);
    s.covariance_error_ = s.max_covariance_error(k);
    return s;
  }

  /// Sampler from explicit torus eigenvalues (white-noise and diagnostic use).
  static GaussianFieldSampler from_eigenvalues(const GridSpec& g, std::vector<int> torus, std::vector<double> lambda,
                                               std::string id) {
    g.validate();
    GaussianFieldSampler s(g, std::move(id), SynthesisMethod::Spectral, std::move(torus));
    if (lambda.size() != s.torus_size()) throw InvalidArgument("eigenvalue count does not match torus");
    s.set_eigenvalues(std::move(lambda), EmbeddingOptions{});
    return s;
  }

  std::unique_ptr<SamplerWorkspace> make_workspace() const { return std::make_unique<SamplerWorkspace>(torus_); }

  /// Deterministic in (seed): white noise comes from NormalStream(seed). With
  /// `antithetic` the noise is negated, which negates the sample exactly.
  FieldSample sample(std::uint64_t seed, SamplerWorkspace& ws, bool antithetic = false) const {
    auto buf = ws.plan().data();
    const NormalStream noise(seed, streams::kWhiteNoise);
    const double sign = antithetic ? -1.0 : 1.0;
    for (std::size_t k = 0; k < buf.size(); ++k) {
      const auto z = noise.pair(k);
      buf[k] = std::complex<double>(sign * sqrt_scaled_[k] * z[0], sign * sqrt_scaled_[k] * z[1]);
    }
    ws.plan().execute();
    FieldSample out;
    out.grid = grid_;
    out.kernel_id = kernel_id_;
    out.seed = seed;
    out.method = method_;
    out.values.resize(grid_.size());
    for_each_index(Box::whole(grid_), [&](const Index& i) {
      const std::size_t t =
          (static_cast<std::size_t>(i[0]) * static_cast<std::size_t>(torus_at(1)) + static_cast<std::size_t>(i[1])) *
              static_cast<std::size_t>(torus_at(2)) +
          static_cast<std::size_t>(i[2]);
      out.values[grid_.flat(i)] = buf[t].real();
    });
    return out;
  }

  FieldSample sample(std::uint64_t seed, bool antithetic = false) const {
    auto ws = make_workspace();
    return sample(seed, *ws, antithetic);
  }

  const GridSpec& grid() const { return grid_; }
  const std::vector<int>& torus() const { return torus_; }
  std::size_t torus_size() const {
    std::size_t n = 1;
    for (int m : torus_) n *= static_cast<std::size_t>(m);
    return n;
  }
  const std::vector<double>& eigenvalues() const { return lambda_; }
  double clipped_negative_mass() const { return clipped_mass_; }
  double most_negative_eigenvalue() const { return most_negative_; }
  /// Max |c(lag) - kappa(lag)| over grid lags (spectral samplers; 0 for circulant).
  double covariance_error() const { return covariance_error_; }
  SynthesisMethod method() const { return method_; }

 private:
  GaussianFieldSampler(GridSpec g, std::string id, SynthesisMethod m, std::vector<int> torus)
      : grid_(std::move(g)), kernel_id_(std::move(id)), method_(m), torus_(std::move(torus)) {}

  static void check_dims(const KernelSpec& k, const GridSpec& g) {
    g.validate();
    if (k.dim() != g.dim) throw InvalidArgument("kernel and grid dimensions differ");
  }

  static std::vector<int> torus_dims(const KernelSpec& k, const GridSpec& g, const EmbeddingOptions& opt) {
    if (!(opt.padding >= 1.0)) throw InvalidArgument("embedding padding factor must be >= 1");
    std::vector<int> dims;
    for (std::size_t a = 0; a < g.dim; ++a) {
      const auto n = g.cells[a];
      std::size_t m = static_cast<std::size_t>(std::ceil(opt.padding * static_cast<double>(n)));
      const double support = support_radius(k, opt.support_cutoff, 4.0 * static_cast<double>(m) * g.spacing[a]);
      if (std::isfinite(support)) {
        const auto c = static_cast<std::size_t>(std::ceil(support / g.spacing[a]));
        const std::size_t fits = std::max(n + c, 2 * c);
        m = opt.compact ? std::min(m, fits) : std::max(m, fits);
      }
      m = std::max(m, n);
      if (m > static_cast<std::size_t>(std::numeric_limits<int>::max())) throw InvalidArgument("torus too large");
      dims.push_back(static_cast<int>(next_fast_size(m)));
    }
    return dims;
  }

  std::ptrdiff_t torus_at(std::size_t a) const { return a < torus_.size() ? torus_[a] : 1; }

  template <typename Fn>
  void for_each_torus(Fn&& fn) const {
    std::array<std::ptrdiff_t, 3> j{};
    std::size_t flat = 0;
    for (j[0] = 0; j[0] < torus_at(0); ++j[0])
      for (j[1] = 0; j[1] < torus_at(1); ++j[1])
        for (j[2] = 0; j[2] < torus_at(2); ++j[2]) fn(flat++, j);
  }

  void set_eigenvalues(std::vector<double> lambda, const EmbeddingOptions& opt) {
    double trace = 0.0, negative = 0.0;
    most_negative_ = 0.0;
    for (double l : lambda) {
      trace += l;
      if (l < 0.0) {
        negative -= l;
        most_negative_ = std::min(most_negative_, l);
      }
    }
    if (negative > opt.clip_tolerance * trace)
      throw EmbeddingFailure("circulant embedding has negative eigenvalue mass " + std::to_string(negative) +
                                 " (most negative " + std::to_string(most_negative_) +
                                 "); increase the padding factor to at least " + std::to_string(2.0 * opt.padding),
                             most_negative_, 2.0 * opt.padding);
    clipped_mass_ = negative;
    const double n = static_cast<double>(lambda.size());
    sqrt_scaled_.resize(lambda.size());
    for (std::size_t i = 0; i < lambda.size(); ++i) {
      lambda[i] = std::max(lambda[i], 0.0);
      sqrt_scaled_[i] = std::sqrt(lambda[i] / n);
    }
    lambda_ = std::move(lambda);
  }

  double max_covariance_error(const KernelSpec& k) const {
    FftPlan fft(torus_);
    auto buf = fft.data();
    const double n = static_cast<double>(lambda_.size());
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = lambda_[i] / n;
    fft.execute();
    double worst = 0.0;
    for_each_torus([&](std::size_t flat, const std::array<std::ptrdiff_t, 3>& j) {
      Point lag{0.0, 0.0, 0.0};
      for (std::size_t a = 0; a < grid_.dim; ++a) {
        if (j[a] >= static_cast<std::ptrdiff_t>(grid_.cells[a])) return;
        lag[a] = static_cast<double>(j[a]) * grid_.spacing[a];
      }
      worst = std::max(worst, std::abs(buf[flat].real() - k.value(lag)));
    });
    return worst;
  }

  GridSpec grid_;
  std::string kernel_id_;
  SynthesisMethod method_;
  std::vector<int> torus_;
  std::vector<double> lambda_;
  std::vector<double> sqrt_scaled_;
  double clipped_mass_ = 0.0;
  double most_negative_ = 0.0;
  double covariance_error_ = 0.0;
};

inline FieldSample synthesize_circulant(const KernelSpec& k, const GridSpec& g, std::uint64_t seed,
                                        const EmbeddingOptions& opt = {}) {
  return GaussianFieldSampler::circulant(k, g, opt).sample(seed);
}

inline FieldSample synthesize_spectral(const KernelSpec& k, const GridSpec& g, std::uint64_t seed,
                                       const EmbeddingOptions& opt = {}) {
  return GaussianFieldSampler::spectral(k, g, opt).sample(seed);
}

struct CovarianceEstimate {
  Index lag{0, 0, 0};
  double estimate = 0.0;
  double standard_error = 0.0;
  bool degenerate = false;  ///< every sample contributed exactly zero
};

/// Cross-moment E[f(x) f(x + lag)], averaged over translations within each sample
/// and then across samples; the standard error is the across-sample spread / sqrt(n).
inline std::vector<CovarianceEstimate> empirical_covariance(const std::vector<FieldSample>& samples,
                                                            const std::vector<Index>& lags) {
  if (samples.size() < 2) throw InvalidArgument("empirical covariance needs at least two samples");
  const GridSpec& g = samples.front().grid;
  for (const auto& s : samples)
    if (!(s.grid == g) || s.values.size() != g.size()) throw InvalidArgument("samples live on different grids");

  std::vector<CovarianceEstimate> out;
  for (const Index& lag : lags) {
    Box window = Box::whole(g);
    for (std::size_t a = 0; a < kMaxDim; ++a) {
      const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(g.cells[a]);
      if (std::abs(lag[a]) >= n) throw InvalidArgument("lag exceeds grid size");
      window.lo[a] = std::max<std::ptrdiff_t>(0, -lag[a]);
      window.hi[a] = std::min<std::ptrdiff_t>(n - 1, n - 1 - lag[a]);
    }
    std::vector<double> per_sample;
    per_sample.reserve(samples.size());
    for (const auto& s : samples) {
      double acc = 0.0;
      for_each_index(window, [&](const Index& i) {
        const Index j{i[0] + lag[0], i[1] + lag[1], i[2] + lag[2]};
        acc += s.values[g.flat(i)] * s.values[g.flat(j)];
      });
      per_sample.push_back(acc / static_cast<double>(window.size()));
    }
    double mean = 0.0;
    for (double v : per_sample) mean += v;
    mean /= static_cast<double>(per_sample.size());
    double var = 0.0;
    for (double v : per_sample) var += (v - mean) * (v - mean);
    var /= static_cast<double>(per_sample.size() - 1);
    CovarianceEstimate e;
    e.lag = lag;
    e.estimate = mean;
    e.standard_error = std::sqrt(var / static_cast<double>(per_sample.size()));
    e.degenerate = std::all_of(per_sample.begin(), per_sample.end(), [](double v) { return v == 0.0; });
    out.push_back(e);
  }
  return out;
}

}  // namespace gaussperc
