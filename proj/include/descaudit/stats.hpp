#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "descaudit/errors.hpp"

namespace descaudit {

namespace detail {

// Rational-approximation erfc (W. J. Cody, Math. Comp. 23, 1969; the
// SPECFUN "calerf" coefficient set). Self-contained so report numbers do
// not depend on the host libm.
inline double erfc_cody(double x) {
  static constexpr double kA[5] = {
      3.16112374387056560e00, 1.13864154151050156e02, 3.77485237685302021e02,
      3.20937758913846947e03, 1.85777706184603153e-1};
  static constexpr double kB[4] = {2.36012909523441209e01,
                                   2.44024637934444173e02,
                                   1.28261652607737228e03,
                                   2.84423683343917062e03};
  static constexpr double kC[9] = {
      5.64188496988670089e-1, 8.88314979438837594e00, 6.61191906371416295e01,
      2.98635138197400131e02, 8.81952221241769090e02, 1.71204761263407058e03,
      2.05107837782607147e03, 1.23033935479799725e03, 2.15311535474403846e-8};
  static constexpr double kD[8] = {
      1.57449261107098347e01, 1.17693950891312499e02, 5.37181101862009858e02,
      1.62138957456669019e03, 3.29079923573345963e03, 4.36261909014324716e03,
      3.43936767414372164e03, 1.23033935480374942e03};
  static constexpr double kP[6] = {3.05326634961232344e-1,
                                   3.60344899949804439e-1,
                                   1.25781726111229246e-1,
                                   1.60837851487422766e-2,
                                   6.58749161529837803e-4,
                                   1.63153871373020978e-2};
  static constexpr double kQ[5] = {
      2.56852019228982242e00, 1.87295284992346047e00, 5.27905102951428412e-1,
      6.05183413124413191e-2, 2.33520497626869185e-3};
  static constexpr double kInvSqrtPi = 5.6418958354775628695e-1;

  const double y = std::fabs(x);
  double result;
  if (y <= 0.46875) {
    const double ysq = y > 1.11e-16 ? y * y : 0.0;
    double xnum = kA[4] * ysq;
    double xden = ysq;
    for (int i = 0; i < 3; ++i) {
      xnum = (xnum + kA[i]) * ysq;
      xden = (xden + kB[i]) * ysq;
    }
    const double erf = x * (xnum + kA[3]) / (xden + kB[3]);
    return 1.0 - erf;
  }
  if (y <= 4.0) {
    double xnum = kC[8] * y;
    double xden = y;
    for (int i = 0; i < 7; ++i) {
      xnum = (xnum + kC[i]) * y;
      xden = (xden + kD[i]) * y;
    }
    result = (xnum + kC[7]) / (xden + kD[7]);
  } else {
    if (y >= 26.543) {
      result = 0.0;
    } else {
      const double ysq = 1.0 / (y * y);
      double xnum = kP[5] * ysq;
      double xden = ysq;
      for (int i = 0; i < 4; ++i) {
        xnum = (xnum + kP[i]) * ysq;
        xden = (xden + kQ[i]) * ysq;
      }
      result = ysq * (xnum + kP[4]) / (xden + kQ[4]);
      result = (kInvSqrtPi - result) / y;
    }
  }
  // exp(-y^2) split into an exactly-representable part and a remainder to
  // limit cancellation, as in the reference routine.
  const double ysq16 = std::floor(y * 16.0) / 16.0;
  const double del = (y - ysq16) * (y + ysq16);
  result = std::exp(-ysq16 * ysq16) * std::exp(-del) * result;
  if (x < 0.0) result = 2.0 - result;
  return result;
}

}  // namespace detail

// Upper tail of the standard normal: 1 - Phi(z).
inline double normal_sf(double z) {
  return 0.5 * detail::erfc_cody(z / 1.4142135623730950488);
}

inline double normal_cdf(double z) { return 1.0 - normal_sf(z); }

// Inverse of the standard normal CDF. Acklam's rational approximation
// polished with one Halley step against normal_cdf, giving close to full
// double precision.
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw Error(ErrorCode::InvalidLevel,
                "quantile argument must lie in (0, 1)");
  }
  static constexpr double kA[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                   -2.759285104469687e+02, 1.383577518672690e+02,
                                   -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double kB[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                   -1.556989798598866e+02, 6.680131188771972e+01,
                                   -1.328068155288572e+01};
  static constexpr double kC[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                   -2.400758277161838e+00, -2.549732539343734e+00,
                                   4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double kD[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                   2.445134137142996e+00, 3.754408661907416e+00};
  static constexpr double kPLow = 0.02425;

  double x;
  if (p < kPLow) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((kC[0] * q + kC[1]) * q + kC[2]) * q + kC[3]) * q + kC[4]) * q +
         kC[5]) /
        ((((kD[0] * q + kD[1]) * q + kD[2]) * q + kD[3]) * q + 1.0);
  } else if (p <= 1.0 - kPLow) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((kA[0] * r + kA[1]) * r + kA[2]) * r + kA[3]) * r + kA[4]) * r +
         kA[5]) *
        q /
        (((((kB[0] * r + kB[1]) * r + kB[2]) * r + kB[3]) * r + kB[4]) * r +
         1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((kC[0] * q + kC[1]) * q + kC[2]) * q + kC[3]) * q + kC[4]) * q +
          kC[5]) /
        ((((kD[0] * q + kD[1]) * q + kD[2]) * q + kD[3]) * q + 1.0);
  }
  // Halley refinement.
  const double e = normal_cdf(x) - p;
  const double u = e * 2.5066282746310002 * std::exp(0.5 * x * x);
  x = x - u / (1.0 + 0.5 * x * u);
  return x;
}

enum class IntervalMethod { Wald, Wilson };

struct ProportionEstimate {
  std::uint64_t successes = 0;
  std::uint64_t trials = 0;
  double p_hat = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double level = 0.95;
};

// Normal-approximation interval p_hat +- z* sqrt(p_hat (1 - p_hat) / n),
// clamped to [0, 1]. Wilson available for small-n users.
inline ProportionEstimate proportion_ci(std::uint64_t successes,
                                        std::uint64_t trials,
                                        double level = 0.95,
                                        IntervalMethod method =
                                            IntervalMethod::Wald) {
  if (trials == 0) {
    throw Error(ErrorCode::ZeroTrials, "proportion needs at least one trial");
  }
  if (!(level > 0.0 && level < 1.0)) {
    throw Error(ErrorCode::InvalidLevel,
                "confidence level must lie in (0, 1)");
  }
  if (successes > trials) {
    throw Error(ErrorCode::SchemaError, "successes exceed trials");
  }
  ProportionEstimate est;
  est.successes = successes;
  est.trials = trials;
  est.level = level;
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(successes) / n;
  est.p_hat = p;
  const double z = normal_quantile(0.5 * (1.0 + level));
  if (method == IntervalMethod::Wald) {
    const double half = z * std::sqrt(p * (1.0 - p) / n);
    est.ci_low = p - half;
    est.ci_high = p + half;
  } else {
    const double z2 = z * z;
    const double denom = 1.0 + z2 / n;
    const double center = (p + z2 / (2.0 * n)) / denom;
    const double half =
        z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
    est.ci_low = center - half;
    est.ci_high = center + half;
  }
  est.ci_low = std::clamp(est.ci_low, 0.0, 1.0);
  est.ci_high = std::clamp(est.ci_high, 0.0, 1.0);
  return est;
}

struct TwoProportionTest {
  std::uint64_t x1 = 0, n1 = 0, x2 = 0, n2 = 0;
  double p1 = 0.0;
  double p2 = 0.0;
  double pooled_p = 0.0;
  double z = 0.0;        // positive when p1 > p2
  double p_value = 1.0;  // two-sided
};

// Pooled two-proportion z-test:
//   z = (p1 - p2) / sqrt(pbar (1 - pbar) (1/n1 + 1/n2)).
inline TwoProportionTest two_proportion_z(std::uint64_t x1, std::uint64_t n1,
                                          std::uint64_t x2,
                                          std::uint64_t n2) {
  if (n1 == 0 || n2 == 0) {
    throw Error(ErrorCode::ZeroTrials, "both samples need at least one trial");
  }
  if (x1 > n1 || x2 > n2) {
    throw Error(ErrorCode::SchemaError, "successes exceed trials");
  }
  TwoProportionTest test;
  test.x1 = x1;
  test.n1 = n1;
  test.x2 = x2;
  test.n2 = n2;
  test.p1 = static_cast<double>(x1) / static_cast<double>(n1);
  test.p2 = static_cast<double>(x2) / static_cast<double>(n2);
  test.pooled_p =
      static_cast<double>(x1 + x2) / static_cast<double>(n1 + n2);
  if (test.pooled_p <= 0.0 || test.pooled_p >= 1.0) {
    throw Error(ErrorCode::DegeneratePool,
                "pooled proportion is 0 or 1; z statistic undefined");
  }
  const double se =
      std::sqrt(test.pooled_p * (1.0 - test.pooled_p) *
                (1.0 / static_cast<double>(n1) + 1.0 / static_cast<double>(n2)));
  test.z = (test.p1 - test.p2) / se;
  test.p_value = 2.0 * normal_sf(std::fabs(test.z));
  if (test.p_value > 1.0) test.p_value = 1.0;
  return test;
}

}  // namespace descaudit
