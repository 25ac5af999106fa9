#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "gaussperc/connectivity.hpp"
#include "gaussperc/rng.hpp"
#include "gaussperc/synthesis.hpp"

using namespace gaussperc;

namespace {

/// Rows of '#' / '.' mapped to axis 0 = row, axis 1 = column.
ExcursionMask mask_from(const std::vector<std::string>& rows) {
  GridSpec g;
  g.dim = 2;
  g.cells = {rows.size(), rows[0].size(), 1};
  g.spacing = {1.0, 1.0, 1.0};
  auto m = ExcursionMask::filled(g, false);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      m.bits[g.flat({static_cast<std::ptrdiff_t>(r), static_cast<std::ptrdiff_t>(c), 0})] = rows[r][c] == '#';
  return m;
}

ExcursionMask random_mask(const GridSpec& g, std::uint64_t seed, double density) {
  const NormalStream rng(seed, streams::kTesting);
  auto m = ExcursionMask::filled(g, false);
  for (std::size_t i = 0; i < m.bits.size(); ++i) m.bits[i] = rng.uniform(i) < density;
  return m;
}

FieldSample fabricated(const GridSpec& g, std::vector<double> values) {
  FieldSample s;
  s.grid = g;
  s.values = std::move(values);
  s.kernel_id = "test";
  return s;
}

/// Oracle for critical_level: scan distinct sample values with the flood-fill labeling.
double brute_critical(const FieldSample& s, const GiantCriterion& crit) {
  std::vector<double> v(s.values);
  std::sort(v.begin(), v.end(), std::greater<>());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  for (double level : v)
    if (!giant_components(flood_fill_oracle(excursion_mask(s, level)), crit).empty()) return level;
  return -std::numeric_limits<double>::infinity();
}

}  // namespace

TEST(Excursion, LevelExtremes) {
  const auto s = synthesize_circulant(KernelSpec::bargmann_fock(2), GridSpec::cubic(2, 32, 8.0), 1);
  const auto [lo, hi] = std::minmax_element(s.values.begin(), s.values.end());
  EXPECT_EQ(excursion_mask(s, *lo - 1.0).count(), s.values.size());
  EXPECT_EQ(excursion_mask(s, *hi + 1.0).count(), 0u);
  EXPECT_EQ(excursion_mask(s, *hi).count(), 1u);
}

TEST(Excursion, NestedLevelsAreMonotone) {
  const auto s = synthesize_circulant(KernelSpec::bargmann_fock(2), GridSpec::cubic(2, 32, 8.0), 2);
  const auto m0 = excursion_mask(s, 0.0), m1 = excursion_mask(s, 1.0);
  for (std::size_t i = 0; i < m0.bits.size(); ++i)
    if (m1.bits[i]) {
      ASSERT_TRUE(m0.bits[i]);
    }
}

TEST(Nodal, AllAboveGivesEmptyMask) {
  const auto g = GridSpec::cubic(2, 8, 8.0);
  EXPECT_EQ(nodal_mask(fabricated(g, std::vector<double>(g.size(), 2.0)), 0.0).count(), 0u);
}

TEST(Nodal, SingleSignChangeIn1d) {
  GridSpec g;
  g.dim = 1;
  g.cells = {2, 1, 1};
  const auto m = nodal_mask(fabricated(g, {-1.0, 1.0}), 0.0);
  EXPECT_TRUE(m.nodal);
  EXPECT_TRUE(m.bits[0]);
  EXPECT_FALSE(m.bits[1]);
}

TEST(Nodal, LengthDensityStableAcrossResolutions) {
  // Marked cells times spacing estimates nodal length per area up to a
  // resolution-free constant.
  const auto k = KernelSpec::bargmann_fock(2);
  auto density = [&](std::size_t n) {
    const auto g = GridSpec::cubic(2, n, 16.0);
    const auto sampler = GaussianFieldSampler::circulant(k, g);
    double total = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed)
      total += static_cast<double>(nodal_mask(sampler.sample(seed), 0.0).count()) * g.spacing[0] / (16.0 * 16.0);
    return total / 100.0;
  };
  const double coarse = density(64), fine = density(128);
  EXPECT_GT(coarse, 0.0);
  EXPECT_NEAR(fine / coarse, 1.0, 0.10);
}

TEST(Labeling, AllTrue3x3) {
  const auto lab = label_components(mask_from({"###", "###", "###"}));
  ASSERT_EQ(lab.count(), 1u);
  EXPECT_EQ(lab.component(1).size, 9u);
  EXPECT_TRUE(lab.component(1).touches_all(2));
}

TEST(Labeling, CheckerboardGivesFiveSingletons) {
  const auto m = mask_from({"#.#", ".#.", "#.#"});
  const auto lab = label_components(m);
  ASSERT_EQ(lab.count(), 5u);
  for (std::uint32_t id = 1; id <= 5; ++id) EXPECT_EQ(lab.component(id).size, 1u);
  EXPECT_TRUE(same_partition(lab, flood_fill_oracle(m)));
  EXPECT_EQ(label_components(m, Adjacency::FacesAndDiagonals).count(), 1u);
}

TEST(Labeling, EmptyMask) {
  const auto m = mask_from({"...", "..."});
  EXPECT_EQ(label_components(m).count(), 0u);
  EXPECT_EQ(flood_fill_oracle(m).count(), 0u);
}

TEST(Labeling, LabelsFollowSmallestVertex) {
  const auto lab = label_components(mask_from({"..#", "#.#", "#.."}));
  EXPECT_EQ(lab.label_at({0, 2, 0}), 1u);
  EXPECT_EQ(lab.label_at({1, 0, 0}), 2u);
  EXPECT_EQ(lab.label_at({1, 2, 0}), 1u);
  EXPECT_EQ(lab.label_at({1, 1, 0}), 0u);
}

TEST(Labeling, WindowFlagsAreRelativeToWindow) {
  const auto m = mask_from({".....", ".###.", ".....",});
  Box w;
  w.lo = {1, 1, 0};
  w.hi = {1, 3, 0};
  const auto lab = label_components(m, w);
  ASSERT_EQ(lab.count(), 1u);
  EXPECT_TRUE(lab.component(1).touches_all(2));
  EXPECT_FALSE(label_components(m).component(1).touches_any(2));
}

TEST(Labeling, MatchesFloodFillOnRandom2d) {
  GridSpec g;
  g.cells = {32, 32, 1};
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const auto m = random_mask(g, seed, 0.5);
    for (auto adj : {Adjacency::Faces, Adjacency::FacesAndDiagonals}) {
      const auto a = label_components(m, adj), b = flood_fill_oracle(m, adj);
      ASSERT_TRUE(same_partition(a, b)) << "seed " << seed;
      ASSERT_EQ(a.labels, b.labels) << "label order, seed " << seed;
      for (std::uint32_t id = 1; id <= a.count(); ++id) {
        ASSERT_EQ(a.component(id).size, b.component(id).size);
        ASSERT_EQ(a.component(id).touches, b.component(id).touches);
      }
    }
  }
}

TEST(Labeling, MatchesFloodFillIn1dAnd3d) {
  GridSpec line;
  line.dim = 1;
  line.cells = {500, 1, 1};
  GridSpec cube;
  cube.dim = 3;
  cube.cells = {16, 16, 16};
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto m1 = random_mask(line, seed, 0.6);
    ASSERT_TRUE(same_partition(label_components(m1), flood_fill_oracle(m1)));
    const auto m3 = random_mask(cube, seed, 0.3116);
    ASSERT_TRUE(same_partition(label_components(m3), flood_fill_oracle(m3))) << "seed " << seed;
  }
}

TEST(Labeling, PartitionLaw) {
  GridSpec g;
  g.cells = {20, 20, 1};
  const auto m = random_mask(g, 11, 0.55);
  const auto lab = label_components(m);
  std::size_t total = 0;
  for (std::size_t i = 0; i < m.bits.size(); ++i) EXPECT_EQ(m.bits[i] != 0, lab.labels[i] != 0);
  for (const auto& c : lab.components) total += c.size;
  EXPECT_EQ(total, m.count());
}

TEST(Labeling, SameLabelingDetectsDifferentPartitions) {
  const auto a = label_components(mask_from({"##.", "..."}));
  const auto b = label_components(mask_from({"#..", "..."}));
  const auto c = label_components(mask_from({"#.#", "..."}));
  EXPECT_FALSE(same_partition(a, b));
  EXPECT_FALSE(same_partition(a, c));
}

TEST(Giant, AllTrueHasOneGiantUnderBothCriteria) {
  const auto lab = label_components(mask_from({"####", "####", "####"}));
  EXPECT_EQ(giant_components(lab, GiantCriterion::touches_all_faces()).size(), 1u);
  EXPECT_EQ(giant_components(lab, GiantCriterion::crosses_axis(0)).size(), 1u);
  EXPECT_EQ(giant_components(lab, GiantCriterion::crosses_axis(1)).size(), 1u);
}

TEST(Giant, StraightRowCrossesOnlyItsAxis) {
  const auto lab = label_components(mask_from({".....", "#####", "....."}));
  EXPECT_EQ(giant_components(lab, GiantCriterion::crosses_axis(1)).size(), 1u);
  EXPECT_TRUE(giant_components(lab, GiantCriterion::crosses_axis(0)).empty());
  EXPECT_TRUE(giant_components(lab, GiantCriterion::touches_all_faces()).empty());
  EXPECT_THROW(giant_components(lab, GiantCriterion::crosses_axis(2)), InvalidArgument);
}

TEST(Giant, SupercriticalLevelRarelyCrosses) {
  const auto k = KernelSpec::bargmann_fock(2);
  const auto sampler = GaussianFieldSampler::circulant(k, GridSpec::cubic(2, 128, 32.0));
  int crossings = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed)
    crossings += !giant_components(label_components(excursion_mask(sampler.sample(seed), 0.5)),
                                   GiantCriterion::crosses_axis(0))
                      .empty();
  EXPECT_LT(crossings, 50);
}

TEST(CriticalLevel, MatchesBruteForceScan) {
  const auto k = KernelSpec::bargmann_fock(2);
  const auto sampler = GaussianFieldSampler::circulant(k, GridSpec::cubic(2, 16, 6.0));
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto s = sampler.sample(seed);
    for (const auto& crit : {GiantCriterion::crosses_axis(0), GiantCriterion::crosses_axis(1),
                             GiantCriterion::touches_all_faces()})
      ASSERT_EQ(critical_level(s, crit), brute_critical(s, crit)) << "seed " << seed << " " << crit.name();
  }
}

TEST(CriticalLevel, CrossingIffLevelAtMostCritical) {
  const auto sampler = GaussianFieldSampler::circulant(KernelSpec::bargmann_fock(2), GridSpec::cubic(2, 48, 12.0));
  const auto crit = GiantCriterion::crosses_axis(0);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = sampler.sample(seed);
    const double c = critical_level(s, crit);
    for (double level : {-1.0, -0.3, 0.0, 0.2, 0.7}) {
      const bool crosses = !giant_components(label_components(excursion_mask(s, level)), crit).empty();
      ASSERT_EQ(crosses, level <= c);
    }
  }
}

TEST(CriticalLevel, LevelMonotonicityOfComponentCount) {
  // The component count only changes when the level passes a sample value.
  const auto s = synthesize_circulant(KernelSpec::bargmann_fock(2), GridSpec::cubic(2, 24, 8.0), 4);
  std::vector<double> v(s.values);
  std::sort(v.begin(), v.end());
  for (std::size_t i = 0; i + 1 < v.size(); i += 7) {
    if (v[i] == v[i + 1]) continue;
    const double a = v[i] + 0.25 * (v[i + 1] - v[i]), b = v[i] + 0.75 * (v[i + 1] - v[i]);
    ASSERT_EQ(label_components(excursion_mask(s, a)).count(), label_components(excursion_mask(s, b)).count());
  }
}

TEST(InclusionMap, WellDefinedForPositiveShift) {
  const auto g = GridSpec::cubic(2, 48, 12.0);
  const auto sampler = GaussianFieldSampler::circulant(KernelSpec::bargmann_fock(2), g);
  const NormalStream rng(3, streams::kTesting);
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    auto s = sampler.sample(seed);
    const auto a = label_components(excursion_mask(s, 0.3));
    for (std::size_t i = 0; i < s.values.size(); ++i) s.values[i] += 0.5 * rng.uniform(seed * s.values.size() + i);
    const auto b = label_components(excursion_mask(s, 0.3));
    ASSERT_TRUE(inclusion_map(a, b).has_value());
  }
}

TEST(Equivalence, IdentityIsEquivalent) {
  GridSpec g;
  g.cells = {24, 24, 1};
  const auto m = random_mask(g, 5, 0.5);
  for (double R : {0.0, 2.0, 5.5}) EXPECT_EQ(percolation_equivalence(m, m, R).outcome, EquivalenceOutcome::Equivalent);
}

namespace {
// 13x13 grid with origin vertex at (6,6); rows 1 and 3 hold bars left of the ball.
const std::vector<std::string> kBars = {
    ".............",
    ".....###.....",
    ".............",
    ".....###.....",
    ".............",
    ".............",
    ".............",
    ".............",
    ".............",
    ".............",
    ".............",
    ".............",
    ".............",
};
}  // namespace

TEST(Equivalence, BridgeIsMerging) {
  auto bridged = kBars;
  bridged[2][6] = '#';
  const auto a = mask_from(kBars), b = mask_from(bridged);
  const auto v = percolation_equivalence(a, b, 2.0);
  EXPECT_EQ(v.outcome, EquivalenceOutcome::Merging);
  EXPECT_TRUE(v.merging);
  EXPECT_EQ(v.witness_a, (std::vector<std::uint32_t>{1, 2}));
  ASSERT_TRUE(v.witness_vertex.has_value());
  EXPECT_EQ(*v.witness_vertex, (Index{1, 5, 0}));
}

TEST(Equivalence, BridgeInsideBallIsIgnored) {
  // A ball of radius 5 around (6,6) swallows row 2 column 6 (distance 4).
  auto bridged = kBars;
  bridged[2][6] = '#';
  const auto v = percolation_equivalence(mask_from(kBars), mask_from(bridged), 4.5);
  EXPECT_NE(v.outcome, EquivalenceOutcome::Merging);
}

TEST(Equivalence, NewCellIsEmergence) {
  auto extra = kBars;
  extra[10][2] = '#';
  const auto v = percolation_equivalence(mask_from(kBars), mask_from(extra), 2.0);
  EXPECT_EQ(v.outcome, EquivalenceOutcome::Emergence);
  ASSERT_TRUE(v.witness_vertex.has_value());
  EXPECT_EQ(*v.witness_vertex, (Index{10, 2, 0}));
  EXPECT_TRUE(v.witness_a.empty());
}

TEST(Equivalence, ReachingBoundaryIsExplosion) {
  auto grown = kBars;
  grown[1] = "########.....";
  const auto v = percolation_equivalence(mask_from(kBars), mask_from(grown), 2.0);
  EXPECT_EQ(v.outcome, EquivalenceOutcome::Explosion);
  EXPECT_EQ(v.witness_a, (std::vector<std::uint32_t>{1}));
}

TEST(Equivalence, NotSubsetIsPreconditionViolation) {
  auto fewer = kBars;
  fewer[1][5] = '.';
  EXPECT_THROW(percolation_equivalence(mask_from(kBars), mask_from(fewer), 1.0), PreconditionViolation);
  GridSpec other;
  other.cells = {5, 5, 1};
  EXPECT_THROW(percolation_equivalence(mask_from(kBars), ExcursionMask::filled(other, true), 1.0), InvalidArgument);
}
