#include "descaudit/stats.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "testutil.hpp"

using namespace descaudit;

TEST(NormalSf, MatchesHighPrecisionErfc) {
  // oracle: long-double libm erfc, independent of the rational
  // approximation inside normal_sf
  for (double z = -8.0; z <= 8.0; z += 0.00390625) {
    long double exact = 0.5L * erfcl(static_cast<long double>(z) /
                                     1.414213562373095048801688724209698L);
    EXPECT_NEAR(normal_sf(z), static_cast<double>(exact), 1e-12) << "z=" << z;
  }
}

TEST(NormalSf, AnchorValues) {
  EXPECT_DOUBLE_EQ(normal_sf(0.0), 0.5);
  EXPECT_NEAR(normal_sf(1.959964), 0.025, 1e-7);
  // z=4.632 two-sided is far below 1e-4
  double p = 2.0 * normal_sf(4.632);
  EXPECT_LT(p, 1e-4);
  EXPECT_NEAR(p, 3.6e-6, 0.1e-6);
}

TEST(NormalQuantile, InvertsCdf) {
  EXPECT_NEAR(normal_quantile(0.975), 1.959964, 1e-6);
  EXPECT_NEAR(normal_quantile(0.5), 0.0, 1e-12);
  for (double p : {1e-8, 1e-4, 0.01, 0.3, 0.5, 0.7, 0.99, 1.0 - 1e-6}) {
    EXPECT_NEAR(normal_cdf(normal_quantile(p)), p, 1e-12) << "p=" << p;
  }
  EXPECT_THROW(normal_quantile(0.0), Error);
  EXPECT_THROW(normal_quantile(1.5), Error);
}

TEST(ProportionCi, ReproducesPublishedIntervals) {
  // counts consistent with the published one-decimal rates
  struct Case {
    std::uint64_t x, n;
    double rate, low, high;  // percent, one decimal
  };
  const Case cases[] = {
      {313, 2183, 14.3, 12.9, 15.8},
      {266, 1874, 14.2, 12.6, 15.8},
      {283, 2649, 10.7, 9.5, 11.9},
      {211, 2250, 9.4, 8.2, 10.6},
  };
  auto round1 = [](double fraction) {
    return std::round(fraction * 1000.0) / 10.0;
  };
  for (const auto& c : cases) {
    ProportionEstimate est = proportion_ci(c.x, c.n);
    EXPECT_EQ(round1(est.p_hat), c.rate) << c.x << "/" << c.n;
    EXPECT_EQ(round1(est.ci_low), c.low) << c.x << "/" << c.n;
    EXPECT_EQ(round1(est.ci_high), c.high) << c.x << "/" << c.n;
  }
}

TEST(ProportionCi, DegenerateAndErrors) {
  ProportionEstimate zero = proportion_ci(0, 10);
  EXPECT_DOUBLE_EQ(zero.p_hat, 0.0);
  EXPECT_DOUBLE_EQ(zero.ci_low, 0.0);
  EXPECT_DOUBLE_EQ(zero.ci_high, 0.0);

  ProportionEstimate full = proportion_ci(10, 10);
  EXPECT_DOUBLE_EQ(full.ci_low, 1.0);
  EXPECT_DOUBLE_EQ(full.ci_high, 1.0);

  EXPECT_THROW(proportion_ci(1, 0), Error);
  EXPECT_THROW(proportion_ci(1, 10, 0.0), Error);
  EXPECT_THROW(proportion_ci(1, 10, 1.0), Error);
  EXPECT_THROW(proportion_ci(11, 10), Error);
}

TEST(ProportionCi, WidthShrinksWithN) {
  double previous = 1.0;
  for (std::uint64_t n : {50, 100, 500, 1000, 5000, 20000}) {
    ProportionEstimate est = proportion_ci(n / 5, n);  // fixed p_hat = 0.2
    double width = est.ci_high - est.ci_low;
    EXPECT_LT(width, previous) << "n=" << n;
    previous = width;
  }
}

TEST(ProportionCi, WilsonStaysInsideUnitIntervalNearEdges) {
  ProportionEstimate wilson =
      proportion_ci(1, 10, 0.95, IntervalMethod::Wilson);
  EXPECT_GT(wilson.ci_low, 0.0);
  EXPECT_LT(wilson.ci_high, 1.0);
  // Wilson is wider-centered than Wald at small n
  ProportionEstimate wald = proportion_ci(1, 10);
  EXPECT_GT(wilson.ci_low, wald.ci_low);
}

TEST(TwoProportionZ, HandComputedCase) {
  TwoProportionTest test = two_proportion_z(270, 1000, 215, 1000);
  EXPECT_NEAR(test.z, 2.8695, 5e-5);
  EXPECT_NEAR(test.p_value, 0.0041, 5e-4);
  EXPECT_DOUBLE_EQ(test.pooled_p, 485.0 / 2000.0);
}

TEST(TwoProportionZ, SymmetryAndAntisymmetry) {
  TwoProportionTest equal = two_proportion_z(120, 400, 120, 400);
  EXPECT_DOUBLE_EQ(equal.z, 0.0);
  EXPECT_DOUBLE_EQ(equal.p_value, 1.0);

  TwoProportionTest forward = two_proportion_z(270, 1000, 215, 900);
  TwoProportionTest backward = two_proportion_z(215, 900, 270, 1000);
  EXPECT_DOUBLE_EQ(forward.z, -backward.z);
  EXPECT_DOUBLE_EQ(forward.p_value, backward.p_value);
}

TEST(TwoProportionZ, PaperZToPMapping) {
  // the published z -> p mapping, two-sided
  EXPECT_NEAR(2.0 * normal_sf(2.250), 0.024, 5e-4);
  EXPECT_LT(2.0 * normal_sf(4.632), 1e-4);
}

TEST(TwoProportionZ, DegeneratePoolReported) {
  EXPECT_THROW(two_proportion_z(0, 10, 0, 20), Error);
  EXPECT_THROW(two_proportion_z(10, 10, 20, 20), Error);
  try {
    two_proportion_z(0, 10, 0, 20);
    FAIL() << "expected DegeneratePool";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegeneratePool);
  }
}

TEST(TwoProportionZ, AgreesWithReferenceRoute) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 1000; ++i) {
    std::uint64_t n1 = 2 + rng() % 5000;
    std::uint64_t n2 = 2 + rng() % 5000;
    std::uint64_t x1 = rng() % (n1 + 1);
    std::uint64_t x2 = rng() % (n2 + 1);
    if (x1 + x2 == 0 || x1 + x2 == n1 + n2) continue;
    double expected = testutil::reference_pooled_z(x1, n1, x2, n2);
    TwoProportionTest test = two_proportion_z(x1, n1, x2, n2);
    EXPECT_NEAR(test.z, expected, 1e-9)
        << x1 << "/" << n1 << " vs " << x2 << "/" << n2;
  }
}
