#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "gaussperc/counting.hpp"
#include "gaussperc/rng.hpp"
#include "gaussperc/stats.hpp"

using namespace gaussperc;

namespace {

const double kRice1d = std::sqrt(3.0) / std::numbers::pi;

template <typename Fn>
FieldSample fabricated(const GridSpec& g, Fn&& f) {
  FieldSample s;
  s.grid = g;
  s.kernel_id = "test";
  s.values.resize(g.size());
  for_each_index(Box::whole(g), [&](const Index& i) { s.values[g.flat(i)] = f(g.position(i)); });
  return s;
}

}  // namespace

TEST(Shell, VertexCounts) {
  const auto g2 = GridSpec::box(2, 10, 0.5);
  EXPECT_EQ(BoundaryShell::make(g2, 4.0).vertices.size(), 8u * 8u);
  const auto g3 = GridSpec::box(3, 6, 1.0);
  EXPECT_EQ(BoundaryShell::make(g3, 3.0).vertices.size(), 7u * 7u * 7u - 5u * 5u * 5u);
  const auto g1 = GridSpec::box(1, 6, 1.0);
  EXPECT_EQ(BoundaryShell::make(g1, 2.0).vertices.size(), 2u);
}

TEST(Shell, RejectsScalesOutsideGrid) {
  const auto g = GridSpec::box(2, 8, 1.0);
  EXPECT_THROW(BoundaryShell::make(g, 9.0), InvalidArgument);
  EXPECT_THROW(BoundaryShell::make(g, 0.4), InvalidArgument);
}

TEST(BoundaryComponents, AllTrueAndEmpty) {
  for (std::size_t d : {2u, 3u}) {
    const auto g = GridSpec::box(d, 8, 0.5);
    EXPECT_EQ(count_boundary_components(ExcursionMask::filled(g, true), 3.0), 1u);
    EXPECT_EQ(count_boundary_components(ExcursionMask::filled(g, false), 3.0), 0u);
  }
  const auto g1 = GridSpec::box(1, 8, 0.5);
  EXPECT_EQ(count_boundary_components(ExcursionMask::filled(g1, true), 3.0), 2u);
}

TEST(BoundaryComponents, ArcsOnTheRing) {
  // 5x5 grid, shell of L = 2 is the outer ring of 16 vertices.
  const auto g = GridSpec::box(2, 2, 1.0);
  auto m = ExcursionMask::filled(g, false);
  auto set = [&](std::ptrdiff_t r, std::ptrdiff_t c) { m.bits[g.flat({r, c, 0})] = 1; };
  set(0, 3);
  set(0, 4);
  set(1, 4);  // arc around the corner
  set(4, 0);  // isolated corner
  set(2, 2);  // interior, ignored
  set(3, 0);
  set(2, 0);
  EXPECT_EQ(count_boundary_components(m, 2.0), 2u);
  set(1, 0);
  set(0, 0);
  set(0, 1);
  set(0, 2);
  EXPECT_EQ(count_boundary_components(m, 2.0), 1u);
}

TEST(BoundaryComponents, BoundedByShellMaxima) {
  const auto k = KernelSpec::bargmann_fock(2);
  const auto g = GridSpec::box(2, 64, 0.25);
  const auto sampler = GaussianFieldSampler::circulant(k, g);
  const auto shell = BoundaryShell::make(g, 12.0);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = sampler.sample(seed);
    const std::size_t maxima = shell_local_maxima(s, shell);
    for (double level : {-1.5, -0.5, 0.0, 0.3, 1.0, 2.0})
      ASSERT_LE(count_boundary_components(excursion_mask(s, level), shell), maxima);
  }
}

TEST(BoundaryComponents, BoundedByShellMaximaIn3d) {
  const auto k = KernelSpec::bargmann_fock(3);
  const auto g = GridSpec::box(3, 16, 0.5);
  const auto sampler = GaussianFieldSampler::circulant(k, g);
  const auto shell = BoundaryShell::make(g, 6.0);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto s = sampler.sample(seed);
    const std::size_t maxima = shell_local_maxima(s, shell);
    for (double level : {-1.0, 0.0, 1.0})
      ASSERT_LE(count_boundary_components(excursion_mask(s, level), shell), maxima);
  }
}

TEST(CriticalPoints, LinearRampHasNone) {
  const auto g = GridSpec::box(2, 10, 0.3);
  EXPECT_EQ(count_discrete_critical_points(fabricated(g, [](const Point& x) { return 2.0 * x[0] - 0.5 * x[1]; }),
                                           interior_region(g)),
            0u);
}

TEST(CriticalPoints, SinglePeakBowlAndSaddle) {
  const auto g = GridSpec::box(2, 10, 0.3);
  const auto region = interior_region(g);
  EXPECT_EQ(count_discrete_critical_points(
                fabricated(g, [](const Point& x) { return -(x[0] * x[0] + x[1] * x[1]); }), region),
            1u);
  EXPECT_EQ(count_discrete_critical_points(
                fabricated(g, [](const Point& x) { return (x[0] - 0.1) * (x[0] - 0.1) + x[1] * x[1]; }), region),
            1u);
  EXPECT_EQ(count_discrete_critical_points(
                fabricated(g, [](const Point& x) { return x[0] * x[0] - (x[1] + 0.05) * (x[1] + 0.05); }), region),
            1u);
  const auto g3 = GridSpec::box(3, 6, 0.4);
  EXPECT_EQ(count_discrete_critical_points(
                fabricated(g3, [](const Point& x) { return -(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]); }),
                interior_region(g3)),
            1u);
}

TEST(CriticalPoints, RegionNeedsMargin) {
  const auto g = GridSpec::box(2, 4, 1.0);
  const auto s = fabricated(g, [](const Point&) { return 0.0; });
  EXPECT_THROW(count_discrete_critical_points(s, Box::whole(g)), InvalidArgument);
}

TEST(CriticalPoints, RiceDensityIn1d) {
  const auto k = KernelSpec::bargmann_fock(1);
  GridSpec g;
  g.dim = 1;
  g.cells = {50000, 1, 1};
  g.spacing = {0.1, 1.0, 1.0};
  const auto sampler = GaussianFieldSampler::circulant(k, g);
  double count = 0.0, length = 0.0;
  for (std::uint64_t seed = 0; seed < 2; ++seed) {
    const auto region = interior_region(g);
    count += static_cast<double>(count_discrete_critical_points(sampler.sample(seed), region));
    length += static_cast<double>(region.extent(0) - 1) * 0.1;
  }
  EXPECT_NEAR(count / length / kRice1d, 1.0, 0.05);
}

TEST(CriticalPoints, ScalingTheFieldKeepsCount) {
  const auto g = GridSpec::box(2, 40, 0.2);
  auto s = synthesize_circulant(KernelSpec::bargmann_fock(2), g, 8);
  const std::size_t before = count_discrete_critical_points(s, interior_region(g));
  for (double& v : s.values) v *= 4.0;
  EXPECT_EQ(count_discrete_critical_points(s, interior_region(g)), before);
  EXPECT_GT(before, 0u);
}

TEST(KacRice, OneDimensionalRiceFormula) {
  const auto e = kac_rice_density_mc(KernelSpec::bargmann_fock(1), 200000, 1);
  EXPECT_NEAR(e.density, kRice1d, 3.0 * e.standard_error);
  EXPECT_GT(e.standard_error, 0.0);
  // Restricting the planar field to a line is the same one-dimensional process.
  const auto r = kac_rice_density_mc(KernelSpec::bargmann_fock(2), 200000, 2, 1);
  EXPECT_NEAR(r.density, kRice1d, 3.0 * r.standard_error);
}

TEST(KacRice, ScalingTheFieldKeepsDensity) {
  const auto a = kac_rice_density_mc(KernelSpec::bargmann_fock(2), 20000, 3);
  const auto b = kac_rice_density_mc(KernelSpec::bargmann_fock(2, 1.0, 9.0), 20000, 3);
  EXPECT_NEAR(b.density / a.density, 1.0, 1e-9);
}

TEST(KacRice, DeterministicAndShrinkingError) {
  const auto k = KernelSpec::cauchy(2, 4.0);
  const auto a = kac_rice_density_mc(k, 10000, 4), b = kac_rice_density_mc(k, 10000, 4);
  EXPECT_EQ(a.density, b.density);
  const auto c = kac_rice_density_mc(k, 40000, 4);
  EXPECT_NEAR(c.standard_error / a.standard_error, 0.5, 0.1);
  EXPECT_GE(a.density, 0.0);
  EXPECT_THROW(kac_rice_density_mc(k, 1, 0), InvalidArgument);
  EXPECT_THROW(kac_rice_density_mc(k, 100, 0, 3), InvalidArgument);
}

TEST(KacRice, PlanarDensityMatchesDenseGridCount) {
  const auto k = KernelSpec::bargmann_fock(2);
  const auto e = kac_rice_density_mc(k, 200000, 5);
  const auto g = GridSpec::box(2, 200, 0.05);
  const auto sampler = GaussianFieldSampler::circulant(k, g);
  std::vector<double> per_area;
  const auto region = interior_region(g);
  const double area = std::pow(static_cast<double>(region.extent(0) - 1) * 0.05, 2.0);
  for (std::uint64_t seed = 0; seed < 30; ++seed)
    per_area.push_back(static_cast<double>(count_discrete_critical_points(sampler.sample(seed), region)) / area);
  const auto m = mean_and_se(per_area);
  const double se = std::hypot(m.standard_error, e.standard_error);
  EXPECT_NEAR(m.mean, e.density, 3.0 * se) << "grid " << m.mean << " mc " << e.density;
}
