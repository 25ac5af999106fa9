#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <vector>

#include "gaussperc/rng.hpp"

using namespace gaussperc;

TEST(Philox, KnownAnswerZeroKeyZeroCounter) {
  const auto r = Philox4x32::generate({0, 0, 0, 0}, {0, 0});
  EXPECT_EQ(r[0], 0x6627e8d5u);
  EXPECT_EQ(r[1], 0xe169c58du);
  EXPECT_EQ(r[2], 0xbc57ac4cu);
  EXPECT_EQ(r[3], 0x9b00dbd8u);
}

TEST(Philox, KnownAnswerAllOnes) {
  const auto r = Philox4x32::generate({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu});
  EXPECT_EQ(r[0], 0x408f276du);
  EXPECT_EQ(r[1], 0x41c83b0eu);
  EXPECT_EQ(r[2], 0xa20bc7c6u);
  EXPECT_EQ(r[3], 0x6d5451fdu);
}

TEST(Philox, KnownAnswerPi) {
  const auto r = Philox4x32::generate({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u});
  EXPECT_EQ(r[0], 0xd16cfe09u);
  EXPECT_EQ(r[1], 0x94fdccebu);
  EXPECT_EQ(r[2], 0x5001e420u);
  EXPECT_EQ(r[3], 0x24126ea1u);
}

TEST(NormalStream, DeterministicAndPositionAddressed) {
  const NormalStream a(42), b(42);
  std::vector<double> seq;
  a.fill(11, std::back_inserter(seq));
  for (std::uint64_t p = 0; p < 11; ++p) {
    EXPECT_EQ(seq[p], b[p]);
  }
}

TEST(NormalStream, SeedsAndStreamsDiffer) {
  const NormalStream a(1), b(2), c(1, streams::kKacRice);
  EXPECT_NE(a[0], b[0]);
  EXPECT_NE(a[0], c[0]);
}

TEST(NormalStream, MomentsMatchStandardNormal) {
  const NormalStream s(2024, streams::kTesting);
  const std::size_t n = 200000;
  double m1 = 0, m2 = 0, m4 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = s[i];
    m1 += x;
    m2 += x * x;
    m4 += x * x * x * x;
  }
  m1 /= n;
  m2 /= n;
  m4 /= n;
  EXPECT_NEAR(m1, 0.0, 5.0 / std::sqrt(double(n)));
  EXPECT_NEAR(m2, 1.0, 5.0 * std::sqrt(2.0 / n));
  EXPECT_NEAR(m4, 3.0, 5.0 * std::sqrt(96.0 / n));
}

TEST(NormalStream, UniformInOpenUnitInterval) {
  const NormalStream s(7, streams::kTesting);
  double mean = 0;
  for (std::uint64_t i = 0; i < 100000; ++i) {
    const double u = s.uniform(i);
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
    mean += u;
  }
  EXPECT_NEAR(mean / 100000, 0.5, 0.005);
}
