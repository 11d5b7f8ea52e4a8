#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <vector>

#include "dgam/errors.hpp"

namespace dgam {

/* Natural cubic splines in the value-at-knot (cardinal interpolation)
 * parameterization: coefficient j is the function value at knot j.  Outside
 * the knot range the spline continues linearly. */

struct SmoothSpec {
  Eigen::VectorXd knots;  // strictly increasing, size >= 3

  int size() const { return static_cast<int>(knots.size()); }
};

namespace detail {

/* Green & Silverman band matrices for natural interpolation: g'' at the
 * interior knots solves W gamma = Delta g. */
struct NcsSystem {
  Eigen::VectorXd h;        // knot gaps, size J-1
  Eigen::MatrixXd gamma_of; // J x J, rows 0 and J-1 zero: gamma = gamma_of * g
  Eigen::MatrixXd delta;    // (J-2) x J
  Eigen::MatrixXd w;        // (J-2) x (J-2)
};

inline NcsSystem ncs_system(const Eigen::VectorXd& knots) {
  const int J = static_cast<int>(knots.size());
  if (J < 3) throw KnotCountTooSmall("natural cubic spline: need at least 3 knots, got " + std::to_string(J));
  for (int i = 0; i + 1 < J; ++i)
    if (!(knots[i] < knots[i + 1]))
      throw InvalidState("natural cubic spline: knots must be strictly increasing");

  NcsSystem s;
  s.h = knots.tail(J - 1) - knots.head(J - 1);
  s.delta = Eigen::MatrixXd::Zero(J - 2, J);
  s.w = Eigen::MatrixXd::Zero(J - 2, J - 2);
  for (int r = 0; r < J - 2; ++r) {
    s.delta(r, r) = 1.0 / s.h[r];
    s.delta(r, r + 1) = -1.0 / s.h[r] - 1.0 / s.h[r + 1];
    s.delta(r, r + 2) = 1.0 / s.h[r + 1];
    s.w(r, r) = (s.h[r] + s.h[r + 1]) / 3.0;
    if (r + 1 < J - 2) {
      s.w(r, r + 1) = s.h[r + 1] / 6.0;
      s.w(r + 1, r) = s.h[r + 1] / 6.0;
    }
  }
  s.gamma_of = Eigen::MatrixXd::Zero(J, J);
  s.gamma_of.block(1, 0, J - 2, J) = s.w.ldlt().solve(s.delta);
  return s;
}

}  // namespace detail

/* Cardinal basis (uncentered): row r evaluates the interpolating spline
 * functionals at x[r], so basis * g is the natural cubic spline through
 * (knot_j, g_j) with linear extrapolation beyond the boundary knots. */
inline Eigen::MatrixXd ncs_basis_raw(const Eigen::VectorXd& knots, const Eigen::VectorXd& x) {
  const detail::NcsSystem s = detail::ncs_system(knots);
  const int J = static_cast<int>(knots.size());
  const int n = static_cast<int>(x.size());
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(n, J);

  /* linear-extension slope functionals at the two boundary knots */
  Eigen::RowVectorXd slope_lo = -s.gamma_of.row(1) * (s.h[0] / 6.0);
  slope_lo[0] -= 1.0 / s.h[0];
  slope_lo[1] += 1.0 / s.h[0];
  Eigen::RowVectorXd slope_hi = s.gamma_of.row(J - 2) * (s.h[J - 2] / 6.0);
  slope_hi[J - 2] -= 1.0 / s.h[J - 2];
  slope_hi[J - 1] += 1.0 / s.h[J - 2];

  for (int r = 0; r < n; ++r) {
    const double t = x[r];
    if (t <= knots[0]) {
      b.row(r) = slope_lo * (t - knots[0]);
      b(r, 0) += 1.0;
      continue;
    }
    if (t >= knots[J - 1]) {
      b.row(r) = slope_hi * (t - knots[J - 1]);
      b(r, J - 1) += 1.0;
      continue;
    }
    /* locate the knot interval containing t */
    int i = static_cast<int>(std::upper_bound(knots.data(), knots.data() + J, t) - knots.data()) - 1;
    i = std::clamp(i, 0, J - 2);
    const double hi = s.h[i];
    const double u = t - knots[i];
    const double v = knots[i + 1] - t;
    b.row(r) = -(u * v / 6.0) * ((1.0 + v / hi) * s.gamma_of.row(i) + (1.0 + u / hi) * s.gamma_of.row(i + 1));
    b(r, i) += v / hi;
    b(r, i + 1) += u / hi;
  }
  return b;
}

/* Column means of the cardinal basis over the given evaluation points. */
inline Eigen::RowVectorXd basis_centering(const Eigen::MatrixXd& raw) {
  return raw.colwise().mean();
}

/* Centered basis: cardinal evaluations with column means (over x) removed,
 * so each column is orthogonal to the intercept on those rows. */
inline Eigen::MatrixXd natural_cubic_basis(const SmoothSpec& spec, const Eigen::VectorXd& x) {
  Eigen::MatrixXd b = ncs_basis_raw(spec.knots, x);
  b.rowwise() -= basis_centering(b);
  return b;
}

struct PenaltyPair {
  Eigen::MatrixXd s1;  // curvature: g' s1 g = integral of the squared second derivative
  Eigen::MatrixXd s2;  // projection onto the curvature null space (affine functions at the knots)
};

inline PenaltyPair penalty_pair(const SmoothSpec& spec) {
  const detail::NcsSystem s = detail::ncs_system(spec.knots);
  const int J = spec.size();
  PenaltyPair p;
  p.s1 = s.delta.transpose() * s.w.ldlt().solve(s.delta);
  p.s1 = 0.5 * (p.s1 + p.s1.transpose());

  Eigen::MatrixXd affine(J, 2);
  affine.col(0).setOnes();
  affine.col(1) = spec.knots;
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(affine);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(J, 2);
  p.s2 = q * q.transpose();
  p.s2 = 0.5 * (p.s2 + p.s2.transpose());
  return p;
}

/* Knot selection ------------------------------------------------------- */

inline Eigen::VectorXd uniform_knots(double lo, double hi, int count) {
  if (count < 3) throw KnotCountTooSmall("uniform_knots: need at least 3 knots");
  if (!(hi > lo)) throw DegenerateCovariate("uniform_knots: covariate range is empty");
  Eigen::VectorXd k(count);
  for (int i = 0; i < count; ++i) k[i] = lo + (hi - lo) * i / (count - 1);
  return k;
}

/* Quantile placement over the observed values; falls back to a uniform grid
 * when ties leave fewer than `count` distinct quantiles. */
inline Eigen::VectorXd quantile_knots(const Eigen::VectorXd& values, int count) {
  if (count < 3) throw KnotCountTooSmall("quantile_knots: need at least 3 knots");
  std::vector<double> v(values.data(), values.data() + values.size());
  std::sort(v.begin(), v.end());
  if (v.empty() || !(v.back() > v.front()))
    throw DegenerateCovariate("quantile_knots: covariate is constant");

  Eigen::VectorXd k(count);
  const size_t n = v.size();
  for (int i = 0; i < count; ++i) {
    const double pos = static_cast<double>(i) / (count - 1) * (n - 1);
    const size_t lo = static_cast<size_t>(pos);
    const double frac = pos - static_cast<double>(lo);
    k[i] = (lo + 1 < n) ? v[lo] * (1.0 - frac) + v[lo + 1] * frac : v[n - 1];
  }
  for (int i = 0; i + 1 < count; ++i)
    if (!(k[i] < k[i + 1])) return uniform_knots(v.front(), v.back(), count);
  return k;
}

}  // namespace dgam
