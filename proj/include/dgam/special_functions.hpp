#pragma once

#include <cmath>
#include <stdexcept>

namespace dgam {

/* Polygamma values via upward recurrence into the asymptotic region plus the
 * Bernoulli-number tail.  Good to ~1e-13 relative for x > 0, which is all the
 * optimizer ever asks for (arguments are half-integers >= 1/2). */

inline double digamma(double x) {
  if (!(x > 0.0)) throw std::domain_error("digamma: x must be > 0");
  double r = 0.0;
  while (x < 10.0) {
    r -= 1.0 / x;
    x += 1.0;
  }
  const double u = 1.0 / (x * x);
  double tail = u * (1.0 / 12.0 - u * (1.0 / 120.0 - u * (1.0 / 252.0 - u * (1.0 / 240.0 - u * (1.0 / 132.0 - u * 691.0 / 32760.0)))));
  return r + std::log(x) - 0.5 / x - tail;
}

inline double trigamma(double x) {
  if (!(x > 0.0)) throw std::domain_error("trigamma: x must be > 0");
  double r = 0.0;
  while (x < 10.0) {
    r += 1.0 / (x * x);
    x += 1.0;
  }
  const double u = 1.0 / (x * x);
  double tail = u * (1.0 / 6.0 - u * (1.0 / 30.0 - u * (1.0 / 42.0 - u * (1.0 / 30.0 - u * 5.0 / 66.0))));
  return r + 1.0 / x + 0.5 * u + tail / x;
}

/* psi'' -- shows up in the curvature of the Wishart degrees-of-freedom term. */
inline double tetragamma(double x) {
  if (!(x > 0.0)) throw std::domain_error("tetragamma: x must be > 0");
  double r = 0.0;
  while (x < 10.0) {
    r -= 2.0 / (x * x * x);
    x += 1.0;
  }
  const double u = 1.0 / (x * x);
  double tail = u * (0.5 - u * (1.0 / 6.0 - u * (1.0 / 6.0 - u * (3.0 / 10.0 - u * 5.0 / 6.0))));
  return r - u - u / x - u * tail;
}

/* log of the multivariate gamma function Gamma_dim(x). */
inline double log_mv_gamma(int dim, double x) {
  if (dim < 1) throw std::domain_error("log_mv_gamma: dim must be >= 1");
  double s = 0.25 * dim * (dim - 1) * std::log(M_PI);
  for (int j = 1; j <= dim; ++j) s += std::lgamma(x + 0.5 * (1 - j));
  return s;
}

}  // namespace dgam
