#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "gaussperc/gaussperc.hpp"

namespace fs = std::filesystem;
using namespace gaussperc;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::size_t threads = 0;
};

/// Kernel and grid options shared by the ensemble subcommands.
struct KernelOptions {
  std::string kernel;
  std::optional<std::size_t> dim;
  std::optional<double> alpha;
  std::optional<double> length_scale;
  std::optional<double> spacing;
  std::optional<double> padding;
  bool compact = false;

  void add(CLI::App* app) {
    app->add_option("--kernel", kernel, "bf | cauchy | path to a kernel JSON file");
    app->add_option("--dim", dim, "dimension (1-3)");
    app->add_option("--alpha", alpha, "Cauchy decay exponent (alpha > d)");
    app->add_option("--length-scale", length_scale, "Bargmann-Fock length scale");
    app->add_option("--spacing", spacing, "grid spacing");
    app->add_option("--padding", padding, "circulant torus padding factor");
    app->add_flag("--compact", compact, "shrink the torus to the kernel support");
  }

  void apply(ExperimentConfig& cfg) const {
    const std::size_t d = dim.value_or(cfg.kernel.dim());
    if (!kernel.empty()) {
      if (kernel == "bf" || kernel == "bargmann_fock") {
        cfg.kernel = KernelSpec::bargmann_fock(d, length_scale.value_or(1.0));
      } else if (kernel == "cauchy") {
        cfg.kernel = KernelSpec::cauchy(d, alpha.value_or(static_cast<double>(d) + 2.0));
      } else {
        std::ifstream is(kernel);
        if (!is) throw InvalidArgument("cannot open kernel file " + kernel);
        cfg.kernel = kernel_from_json(nlohmann::json::parse(is));
      }
    } else if (dim || length_scale || alpha) {
      nlohmann::json j = to_json(cfg.kernel);
      j["dimension"] = d;
      if (length_scale) j["params"]["length_scale"] = *length_scale;
      if (alpha) j["params"]["alpha"] = *alpha;
      cfg.kernel = kernel_from_json(j);
    }
    if (spacing) cfg.spacing = *spacing;
    if (padding) cfg.padding = *padding;
    if (compact) cfg.compact = true;
  }
};

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    const double v = std::stod(item, &used);
    if (used != item.size()) throw InvalidArgument("bad number '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw InvalidArgument("empty list '" + s + "'");
  return out;
}

/// "a..b" (half-open) or a single seed.
std::pair<std::uint64_t, std::uint64_t> parse_seed_range(const std::string& s) {
  const auto dots = s.find("..");
  if (dots == std::string::npos) {
    const auto v = std::stoull(s);
    return {v, v + 1};
  }
  const auto a = std::stoull(s.substr(0, dots)), b = std::stoull(s.substr(dots + 2));
  if (b <= a) throw InvalidArgument("empty seed range '" + s + "'");
  return {a, b};
}

ExperimentConfig base_config(const Globals& g) {
  ExperimentConfig cfg;
  if (!g.config_path.empty()) {
    std::ifstream is(g.config_path);
    if (!is) throw InvalidArgument("cannot open config " + g.config_path);
    cfg = ExperimentConfig::from_json(nlohmann::json::parse(is));
  }
  if (g.seed) cfg.seed = *g.seed;
  if (g.threads) cfg.threads = g.threads;
  return cfg;
}

/// Writes `text` to <out>/<name>, or to stdout when no --out was given.
void emit(const Globals& g, const std::string& name, const std::string& text, bool append = false) {
  if (g.out.empty()) {
    std::cout << text;
    return;
  }
  fs::create_directories(g.out);
  std::ofstream os(fs::path(g.out) / name, append ? std::ios::app : std::ios::trunc);
  if (!os) throw Error("cannot write " + (fs::path(g.out) / name).string());
  os << text;
}

/// Appends the report; tables already went to stdout when there is no --out, so
/// the report goes to stderr then.
int finish(const Globals& g, const ExperimentReport& rep, bool table_on_stdout = false) {
  std::ostringstream os;
  rep.write_jsonl(os);
  if (table_on_stdout && g.out.empty())
    std::cerr << os.str();
  else
    emit(g, "reports.jsonl", os.str(), true);
  if (!rep.invariants_ok()) {
    std::cerr << "invariant violation: " << rep.invariants.to_json().dump() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian field excursion-set percolation laboratory"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals globals;
  app.add_option("--config", globals.config_path, "experiment config (JSON)");
  app.add_option("--seed", globals.seed, "base seed");
  app.add_option("--out", globals.out, "output directory (default: stdout)");
  app.add_option("--threads", globals.threads, "worker threads (default: all cores)");

  // synth
  auto* synth = app.add_subcommand("synth", "synthesize fields and write GPF1 files");
  KernelOptions synth_k;
  synth_k.add(synth);
  std::size_t synth_cells = 256;
  double synth_extent = 64.0;
  std::string synth_seeds = "0..1";
  std::string synth_method = "circulant";
  synth->add_option("--cells", synth_cells, "vertices per axis");
  synth->add_option("--extent", synth_extent, "physical side length");
  synth->add_option("--seeds", synth_seeds, "seed range a..b (half-open) or one seed");
  synth->add_option("--method", synth_method, "circulant | spectral")->check(CLI::IsMember({"circulant", "spectral"}));

  // label
  auto* label = app.add_subcommand("label", "label the excursion set of a GPF1 field");
  std::string label_field;
  double label_level = 0.0;
  bool label_nodal = false, label_diag = false;
  label->add_option("--field", label_field, "GPF1 file")->required();
  label->add_option("--level", label_level, "excursion level");
  label->add_flag("--nodal", label_nodal, "label the nodal (level-set) cells instead");
  label->add_flag("--diagonal", label_diag, "use face+diagonal adjacency");

  // count
  auto* count = app.add_subcommand("count", "boundary-component and critical-point counts");
  KernelOptions count_k;
  count_k.add(count);
  std::string count_what = "all", count_levels, count_L;
  std::optional<std::size_t> count_n;
  count->add_option("--what", count_what, "boundary | critical | all")
      ->check(CLI::IsMember({"boundary", "critical", "all"}));
  count->add_option("--levels", count_levels, "comma-separated levels");
  count->add_option("--L", count_L, "comma-separated box half-widths");
  count->add_option("--n", count_n, "samples");

  // shift build
  auto* shift = app.add_subcommand("shift", "Cameron-Martin shift tools");
  auto* shift_build = shift->add_subcommand("build", "build and verify a shift");
  shift->require_subcommand(1);
  KernelOptions shift_k;
  shift_k.add(shift_build);
  double shift_level = 0.0, shift_radius = 5.0, shift_prob = 0.75;
  std::optional<double> shift_M;
  std::size_t shift_n = 200;
  shift_build->add_option("--level", shift_level, "level l");
  shift_build->add_option("--radius", shift_radius, "radius R");
  shift_build->add_option("--prob", shift_prob, "target probability for the floor M");
  shift_build->add_option("--M", shift_M, "floor M (skips estimation)");
  shift_build->add_option("--n", shift_n, "samples for estimating M");

  // trifurcate
  auto* trif = app.add_subcommand("trifurcate", "trifurcation density sweep");
  KernelOptions trif_k;
  trif_k.add(trif);
  std::optional<double> trif_level, trif_R;
  std::string trif_L;
  std::optional<std::size_t> trif_n;
  trif->add_option("--level", trif_level, "level");
  trif->add_option("--R", trif_R, "ball radius");
  trif->add_option("--L", trif_L, "comma-separated box half-widths");
  trif->add_option("--n", trif_n, "samples");

  // threshold
  auto* thr = app.add_subcommand("threshold", "bisection estimate of the percolation level");
  KernelOptions thr_k;
  thr_k.add(thr);
  std::optional<double> thr_L;
  std::optional<std::size_t> thr_n;
  std::string thr_bracket, thr_criterion;
  bool thr_complement = false;
  thr->add_option("--L", thr_L, "box half-width");
  thr->add_option("--n", thr_n, "samples");
  thr->add_option("--bracket", thr_bracket, "initial bracket lo,hi");
  thr->add_option("--criterion", thr_criterion, "crossing | all_faces")
      ->check(CLI::IsMember({"crossing", "all_faces"}));
  thr->add_flag("--complement", thr_complement, "threshold for {f <= level}");

  // uniqueness
  auto* uniq = app.add_subcommand("uniqueness", "number of giant components per scale");
  KernelOptions uniq_k;
  uniq_k.add(uniq);
  std::optional<double> uniq_level;
  std::string uniq_L;
  std::optional<std::size_t> uniq_n;
  uniq->add_option("--level", uniq_level, "level");
  uniq->add_option("--L", uniq_L, "comma-separated box half-widths");
  uniq->add_option("--n", uniq_n, "samples");

  // ge-rate and cm-compare share the shift options
  struct ShiftRunOptions {
    KernelOptions k;
    std::optional<double> level, radius, M, prob, L;
    std::optional<std::size_t> n;
    std::string radii;
    void add(CLI::App* a) {
      k.add(a);
      a->add_option("--level", level, "level");
      a->add_option("--radius", radius, "shift radius R_h");
      a->add_option("--M", M, "floor M (skips estimation)");
      a->add_option("--prob", prob, "target probability for the floor M");
      a->add_option("--L", L, "box half-width");
      a->add_option("--n", n, "samples");
    }
    void apply(ExperimentConfig& cfg) const {
      k.apply(cfg);
      if (level) cfg.levels = {*level};
      if (radius) cfg.shift_radius = *radius;
      if (M) cfg.floor_M = *M;
      if (prob) cfg.target_prob = *prob;
      if (L) cfg.scales = {*L};
      if (n) cfg.samples = *n;
      if (!radii.empty()) cfg.ge_radii = parse_list(radii);
    }
  };
  auto* ge = app.add_subcommand("ge-rate", "global-equivalence rate across radii");
  ShiftRunOptions ge_opt;
  ge_opt.add(ge);
  ge->add_option("--radii", ge_opt.radii, "comma-separated equivalence radii (default R_h,2R_h,4R_h)");

  auto* cm = app.add_subcommand("cm-compare", "event frequencies under f and f + h");
  ShiftRunOptions cm_opt;
  cm_opt.add(cm);
  std::string cm_event;
  std::optional<std::size_t> cm_k;
  cm->add_option("--event", cm_event, "giants_intersect_ball | exceeds_in_ball | covers_ball")
      ->check(CLI::IsMember({"giants_intersect_ball", "exceeds_in_ball", "covers_ball"}));
  cm->add_option("--k", cm_k, "giant count for giants_intersect_ball");

  CLI11_PARSE(app, argc, argv);

  try {
    ExperimentConfig cfg = base_config(globals);

    if (*synth) {
      synth_k.apply(cfg);
      const GridSpec g = GridSpec::cubic(cfg.dim(), synth_cells, synth_extent);
      if (auto w = spacing_warning(cfg.kernel, g)) std::cerr << "warning: " << *w << '\n';
      const auto [a, b] = parse_seed_range(synth_seeds);
      const auto sampler = synth_method == "spectral" ? GaussianFieldSampler::spectral(cfg.kernel, g, cfg.embedding())
                                                      : GaussianFieldSampler::circulant(cfg.kernel, g, cfg.embedding());
      const std::string dir = globals.out.empty() ? "." : globals.out;
      fs::create_directories(dir);
      auto ws = sampler.make_workspace();
      for (std::uint64_t seed = a; seed < b; ++seed) {
        const auto s = sampler.sample(seed, *ws);
        save_field((fs::path(dir) / ("field_" + std::to_string(seed) + ".gpf")).string(), s);
      }
      std::cerr << "wrote " << (b - a) << " fields to " << dir << '\n';
      return 0;
    }

    if (*label) {
      const auto s = load_field(label_field);
      const auto m = label_nodal ? nodal_mask(s, label_level) : excursion_mask(s, label_level);
      const auto lab = label_components(m, label_diag ? Adjacency::FacesAndDiagonals : Adjacency::Faces);
      std::ostringstream csv;
      write_labeling_csv(csv, lab);
      emit(globals, "labels.csv", csv.str());
      if (!globals.out.empty()) save_mask((fs::path(globals.out) / "mask.gpm").string(), m);
      return 0;
    }

    if (*count) {
      count_k.apply(cfg);
      cfg.what = count_what;
      if (!count_levels.empty()) cfg.levels = parse_list(count_levels);
      if (!count_L.empty()) cfg.scales = parse_list(count_L);
      if (count_n) cfg.samples = *count_n;
      std::vector<CountRow> table;
      const auto rep = count_experiment(cfg, &table);
      std::ostringstream csv;
      csv << "L,sample,level,N_boundary,N_critical\n";
      for (const auto& r : table) {
        csv << r.L << ',' << r.sample << ',' << r.level << ',';
        if (r.n_boundary >= 0) csv << r.n_boundary;
        csv << ',';
        if (r.n_critical >= 0) csv << r.n_critical;
        csv << '\n';
      }
      emit(globals, "counts.csv", csv.str());
      return finish(globals, rep, true);
    }

    if (*shift_build) {
      shift_k.apply(cfg);
      cfg.levels = {shift_level};
      cfg.shift_radius = shift_radius;
      cfg.target_prob = shift_prob;
      cfg.floor_samples = shift_n;
      if (shift_M) cfg.floor_M = *shift_M;
      cfg.validate();
      const auto K = static_cast<std::size_t>(std::ceil((shift_radius + 4.0 * excursion_radius(cfg.kernel).r0) / cfg.spacing));
      const GridSpec g = GridSpec::box(cfg.dim(), K, cfg.spacing);
      try {
        const auto setup = prepare_shift(cfg, g);
        nlohmann::json j = shift_row(setup);
        emit(globals, "shift.json", j.dump(2) + "\n");
        return setup.bounds.nonnegative && setup.bounds.floor_on_ball ? 0 : 1;
      } catch (const ShiftVerificationError& e) {
        std::cerr << "shift bound violated: " << e.what() << " (value " << e.worst_value << ")\n";
        return 1;
      }
    }

    if (*trif) {
      trif_k.apply(cfg);
      if (trif_level) cfg.levels = {*trif_level};
      if (trif_R) cfg.trif_radius = *trif_R;
      if (!trif_L.empty()) cfg.scales = parse_list(trif_L);
      if (trif_n) cfg.samples = *trif_n;
      std::vector<TrifurcationDensityRow> table;
      const auto rep = trifurcation_experiment(cfg, &table);
      std::ostringstream csv;
      csv << "L,n,lattice_points,trifurcation_density,trifurcation_density_se,trifurcation_density_upper95,"
             "boundary_density,boundary_density_se,violations\n";
      for (const auto& r : table)
        csv << r.L << ',' << r.n << ',' << r.lattice_points << ',' << r.trifurcation_density << ','
            << r.trifurcation_density_se << ',' << r.trifurcation_density_upper << ',' << r.boundary_density << ','
            << r.boundary_density_se << ',' << r.violations << '\n';
      emit(globals, "trifurcations.csv", csv.str());
      return finish(globals, rep, true);
    }

    if (*thr) {
      thr_k.apply(cfg);
      if (thr_L) cfg.scales = {*thr_L};
      if (thr_n) cfg.samples = *thr_n;
      if (!thr_bracket.empty()) {
        const auto b = parse_list(thr_bracket);
        if (b.size() != 2) throw InvalidArgument("--bracket needs lo,hi");
        cfg.bracket_lo = b[0];
        cfg.bracket_hi = b[1];
      }
      if (!thr_criterion.empty()) cfg.criterion = thr_criterion;
      if (thr_complement) cfg.complement = true;
      return finish(globals, estimate_level_threshold(cfg));
    }

    if (*uniq) {
      uniq_k.apply(cfg);
      if (uniq_level) cfg.levels = {*uniq_level};
      if (!uniq_L.empty()) cfg.scales = parse_list(uniq_L);
      if (uniq_n) cfg.samples = *uniq_n;
      return finish(globals, uniqueness_statistics(cfg));
    }

    if (*ge) {
      ge_opt.apply(cfg);
      return finish(globals, global_equivalence_rate(cfg));
    }

    if (*cm) {
      cm_opt.apply(cfg);
      if (!cm_event.empty()) cfg.event = cm_event;
      if (cm_k) cfg.event_k = *cm_k;
      return finish(globals, shift_event_frequency_compare(cfg));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
