// Scalar special functions used across the library: Gaussian tail
// probabilities and the exponential integral Ei on the negative axis.
#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>

namespace ehdd {

/// Gaussian tail probability Q(x) = P(N(0,1) > x).
inline double qfunc(double x) {
  return 0.5 * std::erfc(x / std::sqrt(2.0));
}

/// Inverse of qfunc on (0,1), solved by bisection to |Q(x) - p| < 1e-15.
/// The residual of the returned root satisfies |Q(x) - p| < 1e-12 * p.
inline double qfunc_inv(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::domain_error("qfunc_inv: argument must lie in (0,1)");
  }
  double lo = -40.0, hi = 40.0;
  // Q is strictly decreasing, so bisect until the bracket collapses.
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (qfunc(mid) > p) {
      lo = mid;
    } else {
      hi = mid;
    }
    if (hi - lo < 1e-15 * (1.0 + std::fabs(lo))) break;
  }
  return 0.5 * (lo + hi);
}

/// Standard normal density.
inline double normal_pdf(double y, double mean, double var) {
  const double d = y - mean;
  return std::exp(-0.5 * d * d / var) / std::sqrt(2.0 * M_PI * var);
}

namespace detail {

// Power series Ei(x) = euler_gamma + ln|x| + sum x^k/(k k!), good for small |x|.
inline double ei_series(double x) {
  constexpr double euler_gamma = 0.57721566490153286060651209;
  double sum = 0.0, term = 1.0;
  for (int k = 1; k < 200; ++k) {
    term *= x / k;
    const double add = term / k;
    sum += add;
    if (std::fabs(add) < std::fabs(sum) * 1e-17) break;
  }
  return euler_gamma + std::log(std::fabs(x)) + sum;
}

// Modified-Lentz continued fraction for e^z E1(z), z > 0; Ei(x) = -E1(-x).
inline double e1_continued_fraction_scaled(double z) {
  constexpr double tiny = 1e-300;
  double b = z + 1.0;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 400; ++i) {
    const double a = -static_cast<double>(i) * i;
    b += 2.0;
    d = a * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + a / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = c * d;
    h *= delta;
    if (std::fabs(delta - 1.0) < 1e-16) break;
  }
  return h;
}

}  // namespace detail

/// Exponential integral Ei(x) for x < 0, accurate to ~1e-13 relative.
/// Arguments >= 0 are rejected; only the negative axis arises here.
inline double exp_integral_ei(double x) {
  if (!(x < 0.0)) {
    throw std::domain_error("exp_integral_ei: argument must be negative");
  }
  if (x > -1.0) {
    return detail::ei_series(x);
  }
  return -std::exp(x) * detail::e1_continued_fraction_scaled(-x);
}

/// e^{-x} Ei(x) for x < 0. The scaled form stays O(1/|x|) however deep the
/// argument, which keeps products of the form e^{s} Ei(-y - s) computable
/// when s alone would overflow the exponential.
inline double exp_integral_ei_scaled(double x) {
  if (!(x < 0.0)) {
    throw std::domain_error("exp_integral_ei_scaled: argument must be negative");
  }
  if (x > -1.0) {
    return std::exp(-x) * detail::ei_series(x);
  }
  return -detail::e1_continued_fraction_scaled(-x);
}

}  // namespace ehdd
