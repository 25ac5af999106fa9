#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "gaussperc/connectivity.hpp"
#include "gaussperc/shift.hpp"

using namespace gaussperc;

namespace {

GridSpec verify_grid(const KernelSpec& k, double R, double h = 0.25) {
  const double r0 = excursion_radius(k).r0;
  return GridSpec::box(k.dim(), static_cast<std::size_t>(std::ceil((R + 4.0 * r0) / h)), h);
}

}  // namespace

TEST(Shift, CentersAreLatticePointsInEnlargedBall) {
  const auto k = KernelSpec::bargmann_fock(2);
  const auto h = build_shift(k, 0.0, 3.0, 1.0, verify_grid(k, 3.0));
  const double r0 = h.r0, reach = 3.0 + r0;
  // Independent enumeration over a generous square.
  std::size_t expected = 0;
  for (int a = -20; a <= 20; ++a)
    for (int b = -20; b <= 20; ++b)
      if (std::hypot(a * r0, b * r0) < reach) ++expected;
  EXPECT_EQ(h.centers.size(), expected);
  for (const auto& z : h.centers) {
    EXPECT_LT(norm(z), reach);
    EXPECT_NEAR(std::remainder(z[0], r0), 0.0, 1e-12);
    EXPECT_NEAR(std::remainder(z[1], r0), 0.0, 1e-12);
    EXPECT_EQ(z[2], 0.0);
  }
  EXPECT_DOUBLE_EQ(h.amplitude, 1.0 / h.c0);
  EXPECT_DOUBLE_EQ(h.c0, 0.5);
}

TEST(Shift, SingleCenterValueIsTwiceFloor) {
  const auto k = KernelSpec::bargmann_fock(2);
  const auto h = build_shift(k, 0.3, 0.0, 0.9, verify_grid(k, 0.0));
  ASSERT_EQ(h.centers.size(), 1u);
  EXPECT_DOUBLE_EQ(evaluate_shift(h, {0.0, 0.0, 0.0}), 2.0 * 1.2);
}

TEST(Shift, BargmannFockRadiusFiveMeetsFloor) {
  const auto k = KernelSpec::bargmann_fock(2);
  const auto g = verify_grid(k, 5.0);
  const auto h = build_shift(k, 0.0, 5.0, 1.0, g);
  const auto c = check_shift_bounds(h, g);
  EXPECT_TRUE(c.nonnegative);
  EXPECT_TRUE(c.floor_on_ball);
  EXPECT_GE(c.min_on_ball, 1.0);
  EXPECT_GE(c.min_value, 0.0);
  EXPECT_TRUE(c.bounded);
  EXPECT_EQ(c.vertices, g.size());
}

TEST(Shift, BoundsHoldAcrossKernelsAndDimensions) {
  for (const auto& k : {KernelSpec::bargmann_fock(1), KernelSpec::bargmann_fock(3, 0.8), KernelSpec::cauchy(2, 4.0),
                        KernelSpec::cauchy(3, 4.5)}) {
    const double R = k.dim() == 3 ? 2.0 : 4.0;
    const auto g = verify_grid(k, R, k.dim() == 3 ? 0.3 : 0.2);
    const auto h = build_shift(k, -0.4, R, 0.8, g);
    const auto c = check_shift_bounds(h, g);
    EXPECT_TRUE(c.nonnegative) << k.id();
    EXPECT_TRUE(c.floor_on_ball) << k.id();
    EXPECT_TRUE(c.bounded) << k.id();
    EXPECT_GE(c.min_on_ball, 0.4 - 1e-12) << k.id();
  }
}

TEST(Shift, NegativeAmplitudeRejected) {
  const auto k = KernelSpec::bargmann_fock(2);
  EXPECT_THROW(build_shift(k, -1.0, 2.0, 0.5, verify_grid(k, 2.0)), PreconditionViolation);
  EXPECT_THROW(build_shift(k, 0.0, 2.0, -0.5, verify_grid(k, 2.0)), InvalidArgument);
  EXPECT_THROW(build_shift(k, 0.0, -1.0, 0.5, verify_grid(k, 2.0)), InvalidArgument);
}

TEST(Shift, NegativeKernelLobesFailVerification) {
  std::vector<double> r, v;
  for (int i = 0; i <= 4000; ++i) {
    r.push_back(0.01 * i);
    v.push_back(std::cyl_bessel_j(0.0, 0.01 * i));
  }
  const auto k = KernelSpec::tabulated(2, r, v, "j0");
  EXPECT_THROW(build_shift(k, 0.0, 3.0, 1.0, GridSpec::box(2, 48, 0.25)), ShiftVerificationError);
}

TEST(Shift, EvaluationAtIsolatedCenter) {
  const auto k = KernelSpec::cauchy(2, 3.0);
  const auto h = build_shift(k, 1.0, 0.0, 0.0, verify_grid(k, 0.0));
  EXPECT_DOUBLE_EQ(evaluate_shift(h, {0.0, 0.0, 0.0}), h.amplitude * k.radial(0.0));
}

TEST(Shift, DecaysMonotonicallyBeyondLastCenter) {
  const auto k = KernelSpec::bargmann_fock(2);
  const auto h = build_shift(k, 0.0, 3.0, 1.0, verify_grid(k, 3.0));
  double far = 0.0;
  for (const auto& z : h.centers) far = std::max(far, z[0]);
  double prev = evaluate_shift(h, {far, 0.0, 0.0});
  for (double x = far + 0.1; x < far + 12.0; x += 0.1) {
    const double v = evaluate_shift(h, {x, 0.0, 0.0});
    ASSERT_LT(v, prev);
    ASSERT_GE(v, 0.0);
    prev = v;
  }
  EXPECT_LT(prev, 1e-20);
}

TEST(Shift, EvenFunction) {
  const auto k = KernelSpec::bargmann_fock(3);
  const auto h = build_shift(k, 0.0, 2.5, 1.0, verify_grid(k, 2.5, 0.5));
  const NormalStream rng(1, streams::kTesting);
  for (std::uint64_t i = 0; i < 200; ++i) {
    const Point x{2.0 * rng[3 * i], 2.0 * rng[3 * i + 1], 2.0 * rng[3 * i + 2]};
    const double a = evaluate_shift(h, x), b = evaluate_shift(h, {-x[0], -x[1], -x[2]});
    ASSERT_NEAR(a, b, 1e-12 * std::max(1.0, a));
  }
}

TEST(Shift, GradientMatchesFiniteDifferences) {
  for (const auto& k : {KernelSpec::bargmann_fock(2), KernelSpec::cauchy(2, 3.5)}) {
    const auto h = build_shift(k, 0.2, 2.0, 0.6, verify_grid(k, 2.0));
    const NormalStream rng(2, streams::kTesting);
    for (std::uint64_t i = 0; i < 100; ++i) {
      const Point x{2.0 * rng[2 * i], 2.0 * rng[2 * i + 1], 0.0};
      const Point g = shift_gradient(h, x);
      const double step = 1e-5, scale = std::max(norm(g), 1e-3);
      for (std::size_t a = 0; a < 2; ++a) {
        Point p = x, m = x;
        p[a] += step;
        m[a] -= step;
        const double fd = (evaluate_shift(h, p) - evaluate_shift(h, m)) / (2.0 * step);
        ASSERT_NEAR(g[a], fd, 1e-6 * scale) << k.id();
      }
    }
  }
}

TEST(Shift, ShiftSampleZeroAndInverse) {
  const auto k = KernelSpec::bargmann_fock(2);
  const auto g = GridSpec::cubic(2, 32, 8.0);
  const auto s = synthesize_circulant(k, g, 3);
  const auto zero = build_shift(k, 0.0, 1.0, 0.0, verify_grid(k, 1.0));
  EXPECT_EQ(shift_sample(s, zero).values, s.values);

  const auto h = build_shift(k, 0.0, 2.0, 1.0, verify_grid(k, 2.0));
  const auto up = shift_sample(s, h);
  ASSERT_EQ(up.shifts.size(), 1u);
  EXPECT_EQ(up.shifts[0], "+" + h.id());
  const auto back = shift_sample(up, h, -1.0);
  EXPECT_EQ(back.shifts.size(), 2u);
  const auto hv = shift_field(h, g);
  for (std::size_t i = 0; i < s.values.size(); ++i) {
    EXPECT_EQ(up.values[i], s.values[i] + hv[i]);
    ASSERT_LE(std::abs(back.values[i] - s.values[i]),
              2.0 * std::numeric_limits<double>::epsilon() * (std::abs(s.values[i]) + hv[i]));
  }
}

TEST(Shift, PositiveShiftGrowsEveryExcursionSet) {
  const auto k = KernelSpec::bargmann_fock(2);
  const auto g = GridSpec::cubic(2, 48, 12.0);
  const auto h = build_shift(k, 0.0, 3.0, 1.0, verify_grid(k, 3.0));
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto s = synthesize_circulant(k, g, seed);
    const auto t = shift_sample(s, h);
    for (double level : {-1.0, 0.0, 0.5, 2.0}) {
      const auto a = excursion_mask(s, level), b = excursion_mask(t, level);
      for (std::size_t i = 0; i < a.bits.size(); ++i)
        if (a.bits[i]) {
          ASSERT_TRUE(b.bits[i]);
        }
    }
  }
}

TEST(Shift, JsonRoundTrip) {
  const auto k = KernelSpec::cauchy(2, 4.0);
  const auto h = build_shift(k, 0.5, 2.0, 0.7, verify_grid(k, 2.0));
  const auto j = to_json(h);
  EXPECT_EQ(j.at("kernel_id"), k.id());
  for (const char* key : {"level", "R", "M", "c0", "r0", "centers"}) EXPECT_TRUE(j.contains(key)) << key;
  const auto back = shift_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(back.kernel.id(), k.id());
  EXPECT_EQ(back.centers.size(), h.centers.size());
  EXPECT_DOUBLE_EQ(back.amplitude, h.amplitude);
  for (const Point& x : {Point{0.1, 0.2, 0.0}, Point{3.0, -1.0, 0.0}})
    EXPECT_DOUBLE_EQ(evaluate_shift(back, x), evaluate_shift(h, x));
}

TEST(Integrability, SingleCenterGaussianIntegral) {
  const auto k = KernelSpec::bargmann_fock(2);
  const auto h = build_shift(k, 0.0, 0.0, 1.0, verify_grid(k, 0.0));
  const auto r = shift_integrability(h, 8.0, 0.02);
  EXPECT_NEAR(r.integral / (h.amplitude * 2.0 * std::numbers::pi), 1.0, 1e-3);
  EXPECT_TRUE(r.integrable);
  EXPECT_TRUE(r.bound_ok);
  // integral of r e^{-r^2/2} over the plane
  const double grad = 2.0 * std::numbers::pi * std::sqrt(std::numbers::pi / 2.0);
  EXPECT_NEAR(r.gradient_integral / (h.amplitude * grad), 1.0, 2e-3);
}

TEST(Integrability, IntegralIsAdditiveOverCenters) {
  const auto k = KernelSpec::bargmann_fock(2);
  const auto one = build_shift(k, 0.0, 0.0, 1.0, verify_grid(k, 0.0));
  const auto many = build_shift(k, 0.0, 2.0, 1.0, verify_grid(k, 2.0));
  const double single = shift_integrability(one, 9.0, 0.05).integral;
  const double total = shift_integrability(many, 14.0, 0.05).integral;
  EXPECT_NEAR(total / (static_cast<double>(many.centers.size()) * single), 1.0, 1e-3);
}

TEST(Integrability, CauchyAlphaAboveDimensionConverges) {
  const auto k = KernelSpec::cauchy(2, 3.0);
  const auto h = build_shift(k, 0.0, 0.0, 1.0, verify_grid(k, 0.0));
  const auto near = shift_integrability(h, 200.0, 0.25), far = shift_integrability(h, 400.0, 0.25);
  EXPECT_TRUE(far.integrable);
  EXPECT_GT(far.integral, near.integral);
  EXPECT_LT(far.integral - near.integral, 0.01 * far.integral);
}

TEST(FloorM, SingleVertexBallGivesNormalQuantile) {
  const auto k = KernelSpec::bargmann_fock(2);
  const auto g = GridSpec::box(2, 8, 0.25);
  const auto c = choose_floor_M(k, g, 0.1, 0.75, 2000, 100, {}, 1);
  // Standard error of a sample quantile: sqrt(p(1-p)/n) / phi(z_p).
  const double se = std::sqrt(0.75 * 0.25 / 2000.0) / (std::exp(-0.5 * 0.6745 * 0.6745) / std::sqrt(2.0 * std::numbers::pi));
  EXPECT_NEAR(c.quantile, 0.6745, 4.0 * se);
  EXPECT_LE(c.band_lo, c.quantile);
  EXPECT_GE(c.band_hi, c.quantile);
  EXPECT_DOUBLE_EQ(c.M, std::ceil(c.quantile * 10.0 - 1e-9) / 10.0);
}

TEST(FloorM, MonotoneInTargetProbability) {
  const auto k = KernelSpec::bargmann_fock(2);
  const auto g = GridSpec::box(2, 12, 0.25);
  double prev = -std::numeric_limits<double>::infinity();
  for (double p : {0.25, 0.5, 0.75, 0.9, 0.99}) {
    const auto c = choose_floor_M(k, g, 1.0, p, 200, 7, {}, 1);
    EXPECT_GE(c.quantile, prev);
    prev = c.quantile;
  }
}

TEST(FloorM, DoublingSamplesStaysInBand) {
  const auto k = KernelSpec::bargmann_fock(2);
  const auto g = GridSpec::box(2, 12, 0.25);
  const auto a = choose_floor_M(k, g, 1.5, 0.75, 200, 50, {}, 1);
  const auto b = choose_floor_M(k, g, 1.5, 0.75, 400, 50, {}, 1);
  EXPECT_GE(b.quantile, a.band_lo);
  EXPECT_LE(b.quantile, a.band_hi);
}

TEST(FloorM, RejectsBadArguments) {
  const auto k = KernelSpec::bargmann_fock(2);
  const auto g = GridSpec::box(2, 8, 0.25);
  EXPECT_THROW(choose_floor_M(k, g, 1.0, 0.75, 49, 0), InvalidArgument);
  EXPECT_THROW(choose_floor_M(k, g, 1.0, 1.0, 100, 0), InvalidArgument);
  EXPECT_THROW(choose_floor_M(k, g, 1.0, 0.0, 100, 0), InvalidArgument);
}
