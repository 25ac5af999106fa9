#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "gaussperc/burton_keane.hpp"
#include "gaussperc/connectivity.hpp"
#include "gaussperc/counting.hpp"
#include "gaussperc/error.hpp"
#include "gaussperc/kernels.hpp"
#include "gaussperc/parallel.hpp"
#include "gaussperc/shift.hpp"
#include "gaussperc/stats.hpp"
#include "gaussperc/synthesis.hpp"

namespace gaussperc {

inline constexpr const char* kVersion = "0.1.0";

/// Everything that determines an experiment's random draws and outputs.
struct ExperimentConfig {
  KernelSpec kernel = KernelSpec::bargmann_fock(2);
  double spacing = 0.25;
  std::vector<double> scales{16.0, 32.0, 64.0};  ///< box half-widths L
  std::vector<double> levels{0.0};
  std::size_t samples = 400;
  std::uint64_t seed = 0;
  std::size_t threads = 0;  ///< 0 = hardware concurrency; never affects results

  double padding = 2.0;
  bool compact = false;

  std::string criterion = "crossing";             ///< crossing | all_faces (threshold, crossing probability)
  std::string uniqueness_criterion = "all_faces";  ///< crossing | all_faces
  bool complement = false;                        ///< study {f <= level} instead of {f >= level}
  double bracket_lo = -1.0;
  double bracket_hi = 1.0;
  double bisection_width = 0.02;

  double trif_radius = 2.0;
  bool check_bk = true;

  double shift_radius = 5.0;
  std::optional<double> floor_M;
  double target_prob = 0.75;
  std::size_t floor_samples = 200;
  std::vector<double> ge_radii;  ///< empty = {R_h, 2 R_h, 4 R_h}

  std::string event = "giants_intersect_ball";  ///< giants_intersect_ball | exceeds_in_ball | covers_ball
  std::size_t event_k = 1;

  std::string what = "all";  ///< count experiment: boundary | critical | all
  std::size_t kac_rice_samples = 200000;

  std::size_t dim() const { return kernel.dim(); }
  std::size_t worker_threads() const { return threads ? threads : default_threads(); }
  EmbeddingOptions embedding() const {
    EmbeddingOptions o;
    o.padding = padding;
    o.compact = compact;
    return o;
  }
  std::vector<double> sorted_scales() const {
    auto s = scales;
    std::sort(s.begin(), s.end());
    return s;
  }
  std::vector<double> equivalence_radii() const {
    if (!ge_radii.empty()) return ge_radii;
    return {shift_radius, 2.0 * shift_radius, 4.0 * shift_radius};
  }

  void validate() const {
    if (!(spacing > 0.0)) throw InvalidArgument("config: spacing must be positive");
    if (scales.empty()) throw InvalidArgument("config: at least one scale L is required");
    for (double L : scales)
      if (!(L >= spacing)) throw InvalidArgument("config: every scale L must be at least one grid spacing");
    if (levels.empty()) throw InvalidArgument("config: at least one level is required");
    if (samples == 0) throw InvalidArgument("config: samples must be positive");
    if (!(padding >= 1.0)) throw InvalidArgument("config: padding must be >= 1");
    if (!(bracket_lo < bracket_hi)) throw InvalidArgument("config: bracket must satisfy lo < hi");
    if (!(bisection_width > 0.0)) throw InvalidArgument("config: bisection width must be positive");
    if (!(trif_radius > 0.0)) throw InvalidArgument("config: trifurcation radius must be positive");
    if (!(shift_radius >= 0.0)) throw InvalidArgument("config: shift radius must be nonnegative");
    if (!(target_prob > 0.0 && target_prob < 1.0)) throw InvalidArgument("config: target_prob must lie in (0, 1)");
    for (const auto* c : {&criterion, &uniqueness_criterion})
      if (*c != "crossing" && *c != "all_faces") throw InvalidArgument("config: unknown criterion '" + *c + "'");
    if (event != "giants_intersect_ball" && event != "exceeds_in_ball" && event != "covers_ball")
      throw InvalidArgument("config: unknown event '" + event + "'");
    if (what != "boundary" && what != "critical" && what != "all")
      throw InvalidArgument("config: unknown count target '" + what + "'");
  }

  nlohmann::json to_json() const {
    nlohmann::json j{{"kernel", gaussperc::to_json(kernel)},
                     {"spacing", spacing},
                     {"scales", scales},
                     {"levels", levels},
                     {"samples", samples},
                     {"seed", seed},
                     {"padding", padding},
                     {"compact", compact},
                     {"criterion", criterion},
                     {"uniqueness_criterion", uniqueness_criterion},
                     {"complement", complement},
                     {"bracket", {bracket_lo, bracket_hi}},
                     {"bisection_width", bisection_width},
                     {"trif_radius", trif_radius},
                     {"check_bk", check_bk},
                     {"shift_radius", shift_radius},
                     {"target_prob", target_prob},
                     {"floor_samples", floor_samples},
                     {"ge_radii", ge_radii},
                     {"event", event},
                     {"event_k", event_k},
                     {"what", what},
                     {"kac_rice_samples", kac_rice_samples}};
    j["floor_M"] = floor_M ? nlohmann::json(*floor_M) : nlohmann::json(nullptr);
    return j;
  }

  static ExperimentConfig from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    if (j.contains("kernel")) c.kernel = kernel_from_json(j.at("kernel"));
    c.spacing = j.value("spacing", c.spacing);
    c.scales = j.value("scales", c.scales);
    c.levels = j.value("levels", c.levels);
    c.samples = j.value("samples", c.samples);
    c.seed = j.value("seed", c.seed);
    c.threads = j.value("threads", c.threads);
    c.padding = j.value("padding", c.padding);
    c.compact = j.value("compact", c.compact);
    c.criterion = j.value("criterion", c.criterion);
    c.uniqueness_criterion = j.value("uniqueness_criterion", c.uniqueness_criterion);
    c.complement = j.value("complement", c.complement);
    if (j.contains("bracket")) {
      const auto b = j.at("bracket").get<std::vector<double>>();
      if (b.size() != 2) throw InvalidArgument("config: bracket needs two entries");
      c.bracket_lo = b[0];
      c.bracket_hi = b[1];
    }
    c.bisection_width = j.value("bisection_width", c.bisection_width);
    c.trif_radius = j.value("trif_radius", c.trif_radius);
    c.check_bk = j.value("check_bk", c.check_bk);
    c.shift_radius = j.value("shift_radius", c.shift_radius);
    if (j.contains("floor_M") && !j.at("floor_M").is_null()) c.floor_M = j.at("floor_M").get<double>();
    c.target_prob = j.value("target_prob", c.target_prob);
    c.floor_samples = j.value("floor_samples", c.floor_samples);
    c.ge_radii = j.value("ge_radii", c.ge_radii);
    c.event = j.value("event", c.event);
    c.event_k = j.value("event_k", c.event_k);
    c.what = j.value("what", c.what);
    c.kac_rice_samples = j.value("kac_rice_samples", c.kac_rice_samples);
    c.validate();
    return c;
  }

  /// FNV-1a 64 of the canonical JSON (keys sorted; threads excluded).
  std::string hash() const {
    const std::string s = to_json().dump();
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : s) {
      h ^= ch;
      h *= 1099511628211ull;
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
  }
};

/// Counts of deterministic checks run during an experiment.
struct InvariantTally {
  std::size_t bk_checks = 0;
  std::size_t bk_violations = 0;
  std::size_t inclusion_checks = 0;
  std::size_t inclusion_violations = 0;
  std::size_t shift_checks = 0;
  std::size_t shift_violations = 0;
  std::size_t shell_checks = 0;
  std::size_t shell_violations = 0;

  void merge(const InvariantTally& o) {
    bk_checks += o.bk_checks;
    bk_violations += o.bk_violations;
    inclusion_checks += o.inclusion_checks;
    inclusion_violations += o.inclusion_violations;
    shift_checks += o.shift_checks;
    shift_violations += o.shift_violations;
    shell_checks += o.shell_checks;
    shell_violations += o.shell_violations;
  }
  bool ok() const { return bk_violations + inclusion_violations + shift_violations + shell_violations == 0; }
  nlohmann::json to_json() const {
    return {{"bk_checks", bk_checks},           {"bk_violations", bk_violations},
            {"inclusion_checks", inclusion_checks}, {"inclusion_violations", inclusion_violations},
            {"shift_checks", shift_checks},     {"shift_violations", shift_violations},
            {"shell_checks", shell_checks},     {"shell_violations", shell_violations}};
  }
};

struct ExperimentReport {
  std::string experiment;
  nlohmann::json config;
  std::string config_hash;
  std::vector<nlohmann::json> rows;
  nlohmann::json summary = nlohmann::json::object();
  InvariantTally invariants;
  double wall_clock_seconds = 0.0;
  std::string version = kVersion;

  bool invariants_ok() const { return invariants.ok(); }

  /// One JSON object per line: data rows, then a summary row with the config echo.
  void write_jsonl(std::ostream& os) const {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      nlohmann::json r = rows[i];
      r["experiment"] = experiment;
      r["config_hash"] = config_hash;
      r["row"] = i;
      os << r.dump() << '\n';
    }
    nlohmann::json s{{"experiment", experiment},
                     {"config_hash", config_hash},
                     {"kind", "summary"},
                     {"summary", summary},
                     {"invariants", invariants.to_json()},
                     {"config", config},
                     {"wall_clock_seconds", wall_clock_seconds},
                     {"version", version}};
    os << s.dump() << '\n';
  }
};

namespace detail {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

inline ExperimentReport start_report(const std::string& name, const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentReport r;
  r.experiment = name;
  r.config = cfg.to_json();
  r.config_hash = cfg.hash();
  return r;
}

inline GiantCriterion criterion_from(const std::string& name) {
  return name == "all_faces" ? GiantCriterion::touches_all_faces() : GiantCriterion::crosses_axis(0);
}

inline GridSpec box_grid(const ExperimentConfig& cfg, double L, std::size_t margin = 0) {
  return GridSpec::box(cfg.dim(), static_cast<std::size_t>(std::llround(L / cfg.spacing)) + margin, cfg.spacing);
}

inline Box window_for(const GridSpec& g, double L) { return Box::centered(g, half_width_for(g, L)); }

inline FieldSample negated(FieldSample s) {
  for (double& v : s.values) v = -v;
  return s;
}

/// Burton-Keane check of one mask at one scale.
inline void bk_check(const ExcursionMask& m, double R, double L, InvariantTally& t) {
  const auto rep = count_trifurcations(m, R, L);
  ++t.bk_checks;
  if (!rep.inequality_ok) ++t.bk_violations;
}

inline nlohmann::json interval_json(const Interval& i) { return nlohmann::json::array({i.lo, i.hi}); }

inline std::vector<std::size_t> ball_vertices(const GridSpec& g, double R) {
  const Point origin{0.0, 0.0, 0.0};
  std::vector<std::size_t> out;
  for_each_index(ball_bounds(g, origin, R), [&](const Index& i) {
    if (in_ball(g, i, origin, R)) out.push_back(g.flat(i));
  });
  return out;
}

}  // namespace detail

/// Per-sample crossing levels for each scale (nested windows of one sample).
struct CrossingLevels {
  std::vector<double> scales;
  std::vector<std::vector<double>> per_scale;  ///< [scale][sample]
  InvariantTally invariants;
};

/// Critical crossing level of every sample at every scale; for `complement` the
/// field is negated so that {f <= l} crosses iff -l <= level.
inline CrossingLevels crossing_levels(const ExperimentConfig& cfg, const std::vector<double>& bk_levels) {
  CrossingLevels out;
  out.scales = cfg.sorted_scales();
  const GridSpec g = detail::box_grid(cfg, out.scales.back());
  const auto sampler = GaussianFieldSampler::circulant(cfg.kernel, g, cfg.embedding());
  const auto crit = detail::criterion_from(cfg.criterion);
  struct PerSample {
    std::vector<double> levels;
    InvariantTally tally;
  };
  const auto rows = parallel_map(
      cfg.samples, cfg.worker_threads(), [&] { return sampler.make_workspace(); },
      [&](auto& ws, std::size_t i) {
        auto s = sampler.sample(cfg.seed + i, *ws);
        if (cfg.complement) s = detail::negated(std::move(s));
        PerSample p;
        for (double L : out.scales) p.levels.push_back(critical_level(s, crit, detail::window_for(g, L)));
        if (cfg.check_bk)
          for (double lv : bk_levels) {
            const auto m = excursion_mask(s, lv);
            for (double L : out.scales) detail::bk_check(m, cfg.trif_radius, L, p.tally);
          }
        return p;
      });
  out.per_scale.assign(out.scales.size(), {});
  for (const auto& p : rows) {
    for (std::size_t j = 0; j < out.scales.size(); ++j) out.per_scale[j].push_back(p.levels[j]);
    out.invariants.merge(p.tally);
  }
  return out;
}

inline std::size_t count_at_least(const std::vector<double>& x, double level) {
  return static_cast<std::size_t>(std::count_if(x.begin(), x.end(), [&](double v) { return v >= level; }));
}

/// Fraction of samples with a giant (criterion) component at each level and scale.
inline ExperimentReport estimate_crossing_probability(const ExperimentConfig& cfg) {
  detail::Stopwatch clock;
  auto rep = detail::start_report("crossing_probability", cfg);
  std::vector<double> bk_levels;
  for (double l : cfg.levels) bk_levels.push_back(cfg.complement ? -l : l);
  const auto cl = crossing_levels(cfg, bk_levels);
  rep.invariants = cl.invariants;
  bool monotone = true;
  for (std::size_t j = 0; j < cl.scales.size(); ++j) {
    auto levels = cfg.levels;
    std::sort(levels.begin(), levels.end());
    std::optional<Proportion> prev;
    for (double l : levels) {
      // {f <= l} crosses iff -l <= critical level of -f.
      const std::size_t k = count_at_least(cl.per_scale[j], cfg.complement ? -l : l);
      const Proportion p{k, cfg.samples};
      if (prev) {
        const double tol = 2.0 * std::hypot(prev->standard_error(), p.standard_error());
        const bool ok = cfg.complement ? p.estimate() >= prev->estimate() - tol
                                       : p.estimate() <= prev->estimate() + tol;
        monotone = monotone && ok;
      }
      prev = p;
      rep.rows.push_back({{"L", cl.scales[j]},
                          {"level", l},
                          {"n", cfg.samples},
                          {"successes", k},
                          {"probability", p.estimate()},
                          {"wilson95", detail::interval_json(p.wilson())},
                          {"criterion", cfg.criterion},
                          {"set", cfg.complement ? "f<=level" : "f>=level"}});
    }
  }
  rep.summary["monotone_within_2se"] = monotone;
  rep.wall_clock_seconds = clock.seconds();
  return rep;
}

struct ThresholdEstimate {
  double estimate = 0.0;
  /// Levels in (band_lo, band_hi] have a 95% Wilson interval for the crossing probability containing 1/2.
  double band_lo = 0.0;
  double band_hi = 0.0;
  double median_critical_level = 0.0;
  std::string stop_reason;
  struct Probe {
    double level;
    std::size_t successes;
    Interval wilson;
  };
  std::vector<Probe> probes;
};

/// Bisection for the level where the crossing probability is 1/2, given the
/// per-sample critical levels (crossing at l iff l <= critical level).
inline ThresholdEstimate bisect_threshold(const std::vector<double>& critical, double lo, double hi, double width) {
  const std::size_t n = critical.size();
  if (n == 0) throw InvalidArgument("threshold bisection needs samples");
  auto prob = [&](double l) { return static_cast<double>(count_at_least(critical, l)) / static_cast<double>(n); };
  if (!(prob(lo) > 0.5 && prob(hi) < 0.5))
    throw InvalidArgument("threshold bracket does not enclose crossing probability 1/2");
  ThresholdEstimate t;
  double mid = 0.5 * (lo + hi);
  for (;;) {
    mid = 0.5 * (lo + hi);
    const std::size_t k = count_at_least(critical, mid);
    const Interval w = wilson_interval(k, n);
    t.probes.push_back({mid, k, w});
    if (w.contains(0.5)) {
      t.stop_reason = "wilson_contains_half";
      break;
    }
    if (static_cast<double>(k) / static_cast<double>(n) > 0.5)
      lo = mid;
    else
      hi = mid;
    if (hi - lo < width) {
      mid = 0.5 * (lo + hi);
      t.stop_reason = "bracket_width";
      break;
    }
  }
  t.estimate = mid;

  // Levels whose Wilson interval contains 1/2 form an interval: successes(l) = k
  // for l in (s_{k+1}, s_k] with s sorted descending.
  std::vector<double> s = critical;
  std::sort(s.begin(), s.end(), std::greater<>());
  std::optional<std::size_t> k_lo, k_hi;
  for (std::size_t k = 0; k <= n; ++k)
    if (wilson_interval(k, n).contains(0.5)) {
      if (!k_lo) k_lo = k;
      k_hi = k;
    }
  t.band_lo = t.band_hi = t.estimate;
  if (k_lo) {
    const double top = *k_lo >= 1 ? s[*k_lo - 1] : std::numeric_limits<double>::infinity();
    const double bottom = *k_hi < n ? s[*k_hi] : -std::numeric_limits<double>::infinity();
    t.band_lo = bottom;
    t.band_hi = top;
  }
  t.band_lo = std::min(t.band_lo, t.estimate);
  t.band_hi = std::max(t.band_hi, t.estimate);
  t.median_critical_level = quantile(critical, 0.5);
  return t;
}

/// Threshold estimate at the largest configured scale. Every probe reuses the
/// same ensemble, so the crossing curve is exactly monotone.
inline ExperimentReport estimate_level_threshold(const ExperimentConfig& cfg, ThresholdEstimate* out = nullptr) {
  detail::Stopwatch clock;
  auto rep = detail::start_report("threshold", cfg);
  ExperimentConfig one = cfg;
  one.scales = {cfg.sorted_scales().back()};
  // Bisect in the {g >= l} convention with g = f (or -f for the complement).
  double lo = cfg.bracket_lo, hi = cfg.bracket_hi;
  if (cfg.complement) {
    lo = -cfg.bracket_hi;
    hi = -cfg.bracket_lo;
  }
  const auto cl = crossing_levels(one, {0.5 * (lo + hi)});
  rep.invariants = cl.invariants;
  auto t = bisect_threshold(cl.per_scale[0], lo, hi, cfg.bisection_width);
  if (cfg.complement) {
    t.estimate = -t.estimate;
    t.median_critical_level = -t.median_critical_level;
    std::tie(t.band_lo, t.band_hi) = std::pair{-t.band_hi, -t.band_lo};
    for (auto& p : t.probes) {
      p.level = -p.level;
    }
  }
  nlohmann::json probes = nlohmann::json::array();
  for (const auto& p : t.probes)
    probes.push_back({{"level", p.level}, {"successes", p.successes}, {"wilson95", detail::interval_json(p.wilson)}});
  rep.rows.push_back({{"L", one.scales[0]},
                      {"n", cfg.samples},
                      {"estimate", t.estimate},
                      {"band", {t.band_lo, t.band_hi}},
                      {"median_critical_level", t.median_critical_level},
                      {"stop_reason", t.stop_reason},
                      {"criterion", cfg.criterion},
                      {"set", cfg.complement ? "f<=level" : "f>=level"},
                      {"probes", probes}});
  rep.summary = rep.rows.back();
  rep.wall_clock_seconds = clock.seconds();
  if (out) *out = t;
  return rep;
}

/// Distribution of the number of giant components per scale at levels[0].
inline ExperimentReport uniqueness_statistics(const ExperimentConfig& cfg) {
  detail::Stopwatch clock;
  auto rep = detail::start_report("uniqueness", cfg);
  const auto scales = cfg.sorted_scales();
  const double level = cfg.levels.front();
  const GridSpec g = detail::box_grid(cfg, scales.back());
  const auto sampler = GaussianFieldSampler::circulant(cfg.kernel, g, cfg.embedding());
  const auto crit = detail::criterion_from(cfg.uniqueness_criterion);
  struct PerSample {
    std::vector<std::size_t> giants;
    InvariantTally tally;
  };
  const auto rows = parallel_map(
      cfg.samples, cfg.worker_threads(), [&] { return sampler.make_workspace(); },
      [&](auto& ws, std::size_t i) {
        auto s = sampler.sample(cfg.seed + i, *ws);
        if (cfg.complement) s = detail::negated(std::move(s));
        const auto m = excursion_mask(s, cfg.complement ? -level : level);
        PerSample p;
        for (double L : scales) {
          p.giants.push_back(giant_components(label_components(m, detail::window_for(g, L)), crit).size());
          if (cfg.check_bk) detail::bk_check(m, cfg.trif_radius, L, p.tally);
        }
        return p;
      });
  bool nonincreasing = true;
  std::optional<double> prev;
  for (std::size_t j = 0; j < scales.size(); ++j) {
    std::size_t hist[3] = {0, 0, 0};
    for (const auto& p : rows) ++hist[std::min<std::size_t>(p.giants[j], 2)];
    const Proportion two{hist[2], cfg.samples};
    if (prev && two.estimate() > *prev) nonincreasing = false;
    prev = two.estimate();
    rep.rows.push_back({{"L", scales[j]},
                        {"level", level},
                        {"n", cfg.samples},
                        {"giants_0", hist[0]},
                        {"giants_1", hist[1]},
                        {"giants_2plus", hist[2]},
                        {"p_two_or_more", two.estimate()},
                        {"wilson95", detail::interval_json(two.wilson())},
                        {"criterion", cfg.uniqueness_criterion}});
  }
  for (const auto& p : rows) rep.invariants.merge(p.tally);
  rep.summary["p_two_or_more_nonincreasing"] = nonincreasing;
  rep.wall_clock_seconds = clock.seconds();
  return rep;
}

/// Floor M (given or estimated) and the verified shift for a config.
struct ShiftSetup {
  ShiftSpec shift;
  std::optional<FloorChoice> floor;
  ShiftBoundsCheck bounds;
};

inline ShiftSetup prepare_shift(const ExperimentConfig& cfg, const GridSpec& g) {
  const double level = cfg.levels.front();
  std::optional<FloorChoice> floor;
  double M = 0.0;
  if (cfg.floor_M) {
    M = *cfg.floor_M;
  } else {
    const auto K = static_cast<std::size_t>(std::ceil(cfg.shift_radius / cfg.spacing)) + 2;
    const GridSpec small = GridSpec::box(cfg.dim(), K, cfg.spacing);
    floor = choose_floor_M(cfg.kernel, small, cfg.shift_radius, cfg.target_prob, cfg.floor_samples,
                           cfg.seed + cfg.samples, cfg.embedding(), cfg.worker_threads());
    M = floor->M;
  }
  ShiftSpec shift = build_shift(cfg.kernel, level, cfg.shift_radius, M, g);
  const auto bounds = check_shift_bounds(shift, g);
  return {std::move(shift), floor, bounds};
}

inline nlohmann::json shift_row(const ShiftSetup& s) {
  nlohmann::json r{{"shift", to_json(s.shift)},
                   {"shift_id", s.shift.id()},
                   {"centers", s.shift.centers.size()},
                   {"min_value", s.bounds.min_value},
                   {"min_on_ball", s.bounds.min_on_ball},
                   {"nonnegative", s.bounds.nonnegative},
                   {"floor_on_ball", s.bounds.floor_on_ball}};
  if (s.floor)
    r["floor"] = {{"M", s.floor->M},
                  {"quantile", s.floor->quantile},
                  {"band", {s.floor->band_lo, s.floor->band_hi}},
                  {"target_prob", s.floor->target_prob},
                  {"n", s.floor->n_samples}};
  return r;
}

inline void tally_shift(const ShiftSetup& s, InvariantTally& t) {
  ++t.shift_checks;
  if (!s.bounds.nonnegative || !s.bounds.floor_on_ball) ++t.shift_violations;
}

/// Rate of percolation equivalence between {f >= l} and {f + h >= l} outside B_R.
inline ExperimentReport global_equivalence_rate(const ExperimentConfig& cfg) {
  detail::Stopwatch clock;
  auto rep = detail::start_report("ge_rate", cfg);
  const double level = cfg.levels.front();
  const double L = cfg.sorted_scales().back();
  const GridSpec g = detail::box_grid(cfg, L);
  std::optional<ShiftSetup> setup;
  try {
    setup = prepare_shift(cfg, g);
  } catch (const ShiftVerificationError& e) {
    ++rep.invariants.shift_checks;
    ++rep.invariants.shift_violations;
    rep.summary["shift_error"] = e.what();
    rep.wall_clock_seconds = clock.seconds();
    return rep;
  }
  tally_shift(*setup, rep.invariants);
  rep.rows.push_back(shift_row(*setup));
  const auto h = shift_field(setup->shift, g);
  const auto radii = cfg.equivalence_radii();
  const auto sampler = GaussianFieldSampler::circulant(cfg.kernel, g, cfg.embedding());
  struct PerSample {
    std::vector<EquivalenceOutcome> outcomes;
    InvariantTally tally;
  };
  const auto rows = parallel_map(
      cfg.samples, cfg.worker_threads(), [&] { return sampler.make_workspace(); },
      [&](auto& ws, std::size_t i) {
        const auto s = sampler.sample(cfg.seed + i, *ws);
        const auto a = excursion_mask(s, level);
        const auto b = excursion_mask(shift_sample(s, h, setup->shift.id()), level);
        PerSample p;
        ++p.tally.inclusion_checks;
        if (!inclusion_map(label_components(a), label_components(b))) ++p.tally.inclusion_violations;
        for (double R : radii) p.outcomes.push_back(percolation_equivalence(a, b, R).outcome);
        if (cfg.check_bk) {
          detail::bk_check(a, cfg.trif_radius, L, p.tally);
          detail::bk_check(b, cfg.trif_radius, L, p.tally);
        }
        return p;
      });
  bool nondecreasing = true;
  std::optional<Proportion> prev;
  for (std::size_t j = 0; j < radii.size(); ++j) {
    std::size_t tally[4] = {0, 0, 0, 0};
    for (const auto& p : rows) ++tally[static_cast<int>(p.outcomes[j])];
    const Proportion eq{tally[0], cfg.samples};
    if (prev && eq.estimate() < prev->estimate() - 2.0 * std::hypot(prev->standard_error(), eq.standard_error()))
      nondecreasing = false;
    prev = eq;
    rep.rows.push_back({{"R", radii[j]},
                        {"L", L},
                        {"level", level},
                        {"n", cfg.samples},
                        {"equivalent", tally[0]},
                        {"rate", eq.estimate()},
                        {"wilson95", detail::interval_json(eq.wilson())},
                        {"failures", cfg.samples - tally[0]},
                        {"merging", tally[1]},
                        {"emergence", tally[2]},
                        {"explosion", tally[3]}});
  }
  for (const auto& p : rows) rep.invariants.merge(p.tally);
  rep.summary["rate_nondecreasing_within_2se"] = nondecreasing;
  rep.wall_clock_seconds = clock.seconds();
  return rep;
}

/// Event on one sample: see ExperimentConfig::event.
inline bool shift_event(const FieldSample& s, const ExcursionMask& m, const std::vector<std::size_t>& ball,
                        const std::string& event, std::size_t k) {
  if (event == "exceeds_in_ball") {
    for (std::size_t f : ball)
      if (m.bits[f]) return true;
    return false;
  }
  if (event == "covers_ball") {
    for (std::size_t f : ball)
      if (!m.bits[f]) return false;
    return true;
  }
  if (k == 0) return true;
  const Labeling lab = label_components(m);
  std::vector<std::uint8_t> hit(lab.count() + 1, 0);
  std::size_t giants = 0;
  for (std::size_t f : ball) {
    const auto id = lab.label_at(s.grid.unflat(f));
    if (id && !hit[id] && lab.component(id).touches_any(s.grid.dim)) {
      hit[id] = 1;
      if (++giants >= k) return true;
    }
  }
  return false;
}

/// Paired event frequencies under f and f + h (same seeds).
inline ExperimentReport shift_event_frequency_compare(const ExperimentConfig& cfg) {
  detail::Stopwatch clock;
  auto rep = detail::start_report("cm_compare", cfg);
  const double level = cfg.levels.front();
  const double L = cfg.sorted_scales().back();
  const GridSpec g = detail::box_grid(cfg, L);
  std::optional<ShiftSetup> setup;
  try {
    setup = prepare_shift(cfg, g);
  } catch (const ShiftVerificationError& e) {
    ++rep.invariants.shift_checks;
    ++rep.invariants.shift_violations;
    rep.summary["shift_error"] = e.what();
    rep.wall_clock_seconds = clock.seconds();
    return rep;
  }
  tally_shift(*setup, rep.invariants);
  rep.rows.push_back(shift_row(*setup));
  const auto h = shift_field(setup->shift, g);
  const auto ball = detail::ball_vertices(g, cfg.shift_radius);
  const auto sampler = GaussianFieldSampler::circulant(cfg.kernel, g, cfg.embedding());
  struct PerSample {
    std::uint8_t plain = 0, shifted = 0;
    InvariantTally tally;
  };
  const auto rows = parallel_map(
      cfg.samples, cfg.worker_threads(), [&] { return sampler.make_workspace(); },
      [&](auto& ws, std::size_t i) {
        const auto s = sampler.sample(cfg.seed + i, *ws);
        const auto sh = shift_sample(s, h, setup->shift.id());
        const auto a = excursion_mask(s, level);
        const auto b = excursion_mask(sh, level);
        PerSample p;
        p.plain = shift_event(s, a, ball, cfg.event, cfg.event_k);
        p.shifted = shift_event(sh, b, ball, cfg.event, cfg.event_k);
        ++p.tally.inclusion_checks;
        if (!inclusion_map(label_components(a), label_components(b))) ++p.tally.inclusion_violations;
        if (cfg.check_bk) {
          detail::bk_check(a, cfg.trif_radius, L, p.tally);
          detail::bk_check(b, cfg.trif_radius, L, p.tally);
        }
        return p;
      });
  Proportion pf{0, cfg.samples}, ph{0, cfg.samples};
  for (const auto& p : rows) {
    pf.successes += p.plain;
    ph.successes += p.shifted;
    rep.invariants.merge(p.tally);
  }
  const bool consistent = (pf.successes == 0) == (ph.successes == 0);
  rep.rows.push_back({{"event", cfg.event},
                      {"k", cfg.event_k},
                      {"R", cfg.shift_radius},
                      {"L", L},
                      {"level", level},
                      {"n", cfg.samples},
                      {"frequency_f", pf.estimate()},
                      {"wilson95_f", detail::interval_json(pf.wilson())},
                      {"frequency_shifted", ph.estimate()},
                      {"wilson95_shifted", detail::interval_json(ph.wilson())},
                      {"consistent", consistent}});
  rep.summary["consistent"] = consistent;
  rep.wall_clock_seconds = clock.seconds();
  return rep;
}

struct CountRow {
  double L = 0.0;
  std::uint64_t sample = 0;
  double level = 0.0;
  long long n_boundary = -1;  ///< -1 when not requested
  long long n_critical = -1;
};

/// Boundary-component and critical-point counts per scale, level and sample.
inline ExperimentReport count_experiment(const ExperimentConfig& cfg, std::vector<CountRow>* table = nullptr) {
  detail::Stopwatch clock;
  auto rep = detail::start_report("count", cfg);
  const auto scales = cfg.sorted_scales();
  const bool want_boundary = cfg.what != "critical";
  const bool want_critical = cfg.what != "boundary";
  const GridSpec g = detail::box_grid(cfg, scales.back(), 1);
  const auto sampler = GaussianFieldSampler::circulant(cfg.kernel, g, cfg.embedding());
  std::vector<BoundaryShell> shells;
  for (double L : scales) shells.push_back(BoundaryShell::make(g, L));
  struct PerSample {
    std::vector<CountRow> rows;
    InvariantTally tally;
  };
  const auto per = parallel_map(
      cfg.samples, cfg.worker_threads(), [&] { return sampler.make_workspace(); },
      [&](auto& ws, std::size_t i) {
        const auto s = sampler.sample(cfg.seed + i, *ws);
        PerSample p;
        std::vector<std::size_t> crit(scales.size(), 0), maxima(scales.size(), 0);
        for (std::size_t j = 0; j < scales.size(); ++j) {
          if (want_critical) crit[j] = count_discrete_critical_points(s, shells[j].box);
          if (want_boundary) maxima[j] = shell_local_maxima(s, shells[j]);
        }
        for (double level : cfg.levels) {
          const auto m = excursion_mask(s, level);
          for (std::size_t j = 0; j < scales.size(); ++j) {
            CountRow r{scales[j], cfg.seed + i, level, -1, -1};
            if (want_boundary) {
              const auto nb = count_boundary_components(m, shells[j]);
              r.n_boundary = static_cast<long long>(nb);
              ++p.tally.shell_checks;
              if (nb > maxima[j]) ++p.tally.shell_violations;
            }
            if (want_critical) r.n_critical = static_cast<long long>(crit[j]);
            if (cfg.check_bk && g.dim >= 2) detail::bk_check(m, cfg.trif_radius, scales[j], p.tally);
            p.rows.push_back(r);
          }
        }
        return p;
      });
  std::vector<CountRow> all;
  for (const auto& p : per) {
    all.insert(all.end(), p.rows.begin(), p.rows.end());
    rep.invariants.merge(p.tally);
  }

  std::optional<KacRiceEstimate> kr;
  if (want_critical) kr = kac_rice_density_mc(cfg.kernel, cfg.kac_rice_samples, cfg.seed);
  const double d = static_cast<double>(cfg.dim());
  for (double level : cfg.levels) {
    std::vector<double> xs, means, ses;
    for (double L : scales) {
      std::vector<double> nb, nc;
      for (const auto& r : all)
        if (r.L == L && r.level == level) {
          if (r.n_boundary >= 0) nb.push_back(static_cast<double>(r.n_boundary));
          if (r.n_critical >= 0) nc.push_back(static_cast<double>(r.n_critical));
        }
      nlohmann::json row{{"L", L}, {"level", level}, {"n", cfg.samples}};
      if (want_boundary) {
        const auto m = mean_and_se(nb);
        row["mean_boundary"] = m.mean;
        row["se_boundary"] = m.standard_error;
        row["boundary_per_area"] = m.mean / std::pow(L, d - 1.0);
        xs.push_back(L);
        means.push_back(m.mean);
        ses.push_back(m.standard_error);
      }
      if (want_critical) {
        const auto m = mean_and_se(nc);
        const double vol = std::pow(2.0 * L, d);
        row["mean_critical"] = m.mean;
        row["se_critical"] = m.standard_error;
        row["critical_density"] = m.mean / vol;
        row["critical_density_se"] = m.standard_error / vol;
        row["kac_rice_density"] = kr->density;
        row["kac_rice_se"] = kr->standard_error;
      }
      rep.rows.push_back(row);
    }
    if (want_boundary && xs.size() >= 2 &&
        std::all_of(means.begin(), means.end(), [](double v) { return v > 0.0; })) {
      const auto fit = loglog_fit(xs, means, ses);
      rep.summary["boundary_fit"].push_back(
          {{"level", level}, {"slope", fit.slope}, {"slope_se", fit.slope_se}, {"log_constant", fit.intercept}});
    }
  }
  rep.wall_clock_seconds = clock.seconds();
  if (table) *table = std::move(all);
  return rep;
}

/// Trifurcation sweep at levels[0] with radius trif_radius.
inline ExperimentReport trifurcation_experiment(const ExperimentConfig& cfg,
                                                std::vector<TrifurcationDensityRow>* table = nullptr) {
  detail::Stopwatch clock;
  auto rep = detail::start_report("trifurcate", cfg);
  const auto rows = trifurcation_density_sweep(cfg.kernel, cfg.levels.front(), cfg.trif_radius, cfg.scales,
                                               cfg.samples, cfg.seed, cfg.spacing, cfg.embedding(),
                                               cfg.worker_threads());
  for (const auto& r : rows) {
    rep.invariants.bk_checks += r.n;
    rep.invariants.bk_violations += r.violations;
    rep.rows.push_back({{"L", r.L},
                        {"level", cfg.levels.front()},
                        {"R", cfg.trif_radius},
                        {"n", r.n},
                        {"lattice_points", r.lattice_points},
                        {"trifurcation_density", r.trifurcation_density},
                        {"trifurcation_density_se", r.trifurcation_density_se},
                        {"trifurcation_density_upper95", r.trifurcation_density_upper},
                        {"boundary_density", r.boundary_density},
                        {"boundary_density_se", r.boundary_density_se},
                        {"violations", r.violations}});
  }
  rep.wall_clock_seconds = clock.seconds();
  if (table) *table = rows;
  return rep;
}

}  // namespace gaussperc
