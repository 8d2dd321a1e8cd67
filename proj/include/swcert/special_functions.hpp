#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace swcert {

namespace detail {

inline void require_finite(double x, const char* who) {
    if (!std::isfinite(x)) throw std::domain_error(std::string(who) + ": non-finite argument");
}

// Maclaurin series, used for |x| < 2.5 where cancellation stays below ~1e-13.
inline double erf_series(double x) {
    const double x2 = x * x;
    double term = x;
    double sum = x;
    for (int n = 1; n < 200; ++n) {
        term *= -x2 / n;
        const double contrib = term / (2 * n + 1);
        sum += contrib;
        if (std::abs(contrib) < 1e-17 * std::abs(sum)) break;
    }
    return sum * (2.0 / std::sqrt(std::numbers::pi));
}

// Laplace continued fraction erfc(x) = e^{-x^2}/sqrt(pi) / (x + (1/2)/(x + 1/(x + (3/2)/(x + ...)))),
// evaluated bottom-up. Valid for x >= 2.5.
inline double erfc_continued_fraction(double x) {
    double tail = x;
    for (int k = 160; k >= 1; --k) tail = x + (0.5 * k) / tail;
    return std::exp(-x * x) / std::sqrt(std::numbers::pi) / tail;
}

constexpr double kSeriesCutoff = 2.5;

}  // namespace detail

/// Gauss error function; absolute error well under 1e-7 on the real line.
inline double erf_approx(double x) {
    detail::require_finite(x, "erf_approx");
    const double ax = std::abs(x);
    double r;
    if (ax < detail::kSeriesCutoff)
        r = detail::erf_series(ax);
    else if (ax > 27.0)
        r = 1.0;
    else
        r = 1.0 - detail::erfc_continued_fraction(ax);
    return x < 0 ? -r : r;
}

/// Complementary error function, accurate in relative terms in the upper tail.
inline double erfc_approx(double x) {
    detail::require_finite(x, "erfc_approx");
    if (x >= detail::kSeriesCutoff) return x > 27.0 ? 0.0 : detail::erfc_continued_fraction(x);
    return 1.0 - erf_approx(x);
}

inline double std_normal_cdf(double x) {
    detail::require_finite(x, "std_normal_cdf");
    // erfc keeps the lower tail accurate; (1 + erf(x / sqrt 2)) / 2 loses it.
    return 0.5 * erfc_approx(-x / std::numbers::sqrt2);
}

/// Inverse of std_normal_cdf. Acklam's rational starting point followed by
/// Halley refinement against std_normal_cdf. Rejects p outside (0, 1).
inline double std_normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0))
        throw std::domain_error("std_normal_quantile: p must lie strictly inside (0, 1)");

    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                   -2.759285104469687e+02, 1.383577518672690e+02,
                                   -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                   -1.556989798598866e+02, 6.680131188771972e+01,
                                   -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                   -2.400758277161838e+00, -2.549732539343734e+00,
                                   4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                   2.445134137142996e+00, 3.754408661907416e+00};
    constexpr double p_low = 0.02425;

    double x;
    if (p < p_low) {
        const double q = std::sqrt(-2 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
    } else if (p <= 1 - p_low) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
    } else {
        const double q = std::sqrt(-2 * std::log1p(-p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
    }

    for (int iter = 0; iter < 2; ++iter) {
        const double e = std_normal_cdf(x) - p;
        const double u = e * std::sqrt(2 * std::numbers::pi) * std::exp(0.5 * x * x);
        x -= u / (1 + 0.5 * x * u);
    }
    return x;
}

}  // namespace swcert
