#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>

#include "dgam/errors.hpp"
#include "dgam/special_functions.hpp"

namespace dgam {

/* Latent prior machinery.  States z_t (length LK, region varying fastest)
 * follow a stationary first-order autoregression in the whitened coordinates
 * P(z_t - mu), with P the upper-triangular square root (P'P = Omega) of the
 * Kronecker precision Omega = Omega_causes (x) Omega_regions.
 *
 * Everything here works with the three distinct per-coordinate entries of the
 * whitened-trajectory precision R (block tridiagonal over time, all blocks
 * diagonal): corners 1/(1-phi^2), interior (1+phi^2)/(1-phi^2) and
 * off-diagonal -phi/(1-phi^2); and with the Bartlett-moment cumulative-sum
 * expectations that arise when Omega is integrated over its Wishart factors. */

struct ArExpectations {
  Eigen::VectorXd e1;  // corner blocks
  Eigen::VectorXd e2;  // off-diagonal blocks
  Eigen::VectorXd e3;  // interior blocks
};

inline void require_stationary(const Eigen::VectorXd& phi) {
  for (int i = 0; i < phi.size(); ++i)
    if (!(std::abs(phi[i]) < 1.0))
      throw InvalidState("autoregressive coefficient must satisfy |phi| < 1 (coordinate " + std::to_string(i) + ")");
}

inline ArExpectations expected_r_blocks(const Eigen::VectorXd& phi) {
  require_stationary(phi);
  ArExpectations e;
  const Eigen::ArrayXd p = phi.array();
  const Eigen::ArrayXd s = 1.0 - p * p;
  e.e1 = (1.0 / s).matrix();
  e.e2 = (-p / s).matrix();
  e.e3 = ((1.0 + p * p) / s).matrix();
  return e;
}

/* d/dphi and d2/dphi2 of the three block entries at a single coordinate. */
struct ArEntryDerivs {
  double d1, d2, d3;
};

inline ArEntryDerivs ar_entry_derivs(double phi, int order) {
  const double s = 1.0 - phi * phi;
  ArEntryDerivs d;
  if (order == 1) {
    d.d1 = 2.0 * phi / (s * s);
    d.d2 = -(1.0 + phi * phi) / (s * s);
    d.d3 = 4.0 * phi / (s * s);
  } else if (order == 2) {
    d.d1 = (2.0 + 6.0 * phi * phi) / (s * s * s);
    d.d2 = -(6.0 * phi + 2.0 * phi * phi * phi) / (s * s * s);
    d.d3 = (4.0 + 12.0 * phi * phi) / (s * s * s);
  } else {
    throw InvalidState("ar_entry_derivs: order must be 1 or 2");
  }
  return d;
}

/* Dense whitened-trajectory precision, T >= 2 time blocks of size LK. */
inline Eigen::MatrixXd ar_precision_dense(const Eigen::VectorXd& phi, int T) {
  if (T < 2) throw InvalidState("ar_precision_dense: need at least two time points");
  const ArExpectations e = expected_r_blocks(phi);
  const int lk = static_cast<int>(phi.size());
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(lk * T, lk * T);
  for (int t = 0; t < T; ++t) {
    const bool corner = (t == 0 || t == T - 1);
    for (int i = 0; i < lk; ++i) r(t * lk + i, t * lk + i) = corner ? e.e1[i] : e.e3[i];
    if (t + 1 < T)
      for (int i = 0; i < lk; ++i) {
        r(t * lk + i, (t + 1) * lk + i) = e.e2[i];
        r((t + 1) * lk + i, t * lk + i) = e.e2[i];
      }
  }
  return r;
}

/* Bartlett second moments of the triangular factor of a Wishart(delta, .)
 * draw: the squared diagonal entries are chi-square with delta - i + 1
 * degrees of freedom (1-based position i), off-diagonal entries standard
 * normal.  `weight(a, b)` is the factor multiplying entry b in the cumulative
 * sum that lands at position a (0-based). */
struct BartlettMoments {
  double delta;
  int dim;

  BartlettMoments(double delta_, int dim_) : delta(delta_), dim(dim_) {
    if (!(delta > dim - 1))
      throw InvalidState("Bartlett moments need delta > dim - 1");
  }
  double chi_sq_mean(int a) const { return delta - a; }  // E c_{a+1}^2, 0-based a
  double weight(int a, int b) const {
    if (b > a) return 0.0;
    return (b == a) ? delta - a : 1.0;
  }
};

namespace detail {

/* Weighted cumulative sum over the (cause, region) grid: out(k, l) =
 * sum_{bk <= k} sum_{bl <= l} wk(k, bk) * wl(l, bl) * e(bk, bl), computed by
 * two prefix passes.  Coordinate layout: index = k * L + l. */
inline Eigen::VectorXd kron_cumulative(const Eigen::VectorXd& e, int L, int K,
                                       const BartlettMoments& mk, const BartlettMoments& ml) {
  Eigen::MatrixXd g(K, L);  // g(k, l) = inner cumulative over regions for row k
  for (int k = 0; k < K; ++k) {
    double run = 0.0;
    for (int l = 0; l < L; ++l) {
      const double el = e[k * L + l];
      g(k, l) = run + (ml.delta - l) * el;
      run += el;
    }
  }
  Eigen::VectorXd out(K * L);
  for (int l = 0; l < L; ++l) {
    double run = 0.0;
    for (int k = 0; k < K; ++k) {
      out[k * L + l] = run + (mk.delta - k) * g(k, l);
      run += g(k, l);
    }
  }
  return out;
}

/* Partial derivative of kron_cumulative with respect to the region-side
 * delta: only the bl == l weight carries delta_l, with unit derivative. */
inline Eigen::VectorXd kron_cumulative_ddelta_l(const Eigen::VectorXd& e, int L, int K,
                                                const BartlettMoments& mk) {
  Eigen::VectorXd out(K * L);
  for (int l = 0; l < L; ++l) {
    double run = 0.0;
    for (int k = 0; k < K; ++k) {
      out[k * L + l] = run + (mk.delta - k) * e[k * L + l];
      run += e[k * L + l];
    }
  }
  return out;
}

/* Same with respect to the cause-side delta. */
inline Eigen::VectorXd kron_cumulative_ddelta_k(const Eigen::VectorXd& e, int L, int K,
                                                const BartlettMoments& ml) {
  Eigen::VectorXd out(K * L);
  for (int k = 0; k < K; ++k) {
    double run = 0.0;
    for (int l = 0; l < L; ++l) {
      const double el = e[k * L + l];
      out[k * L + l] = run + (ml.delta - l) * el;
      run += el;
    }
  }
  return out;
}

}  // namespace detail

/* Diagonal of E[(A_k (x) A_l)' diag(e) (A_k (x) A_l)] under the Bartlett
 * construction: the closed-form weighted cumulative sum. */
inline Eigen::VectorXd bartlett_quadratic_expectation(const Eigen::VectorXd& e, int L, int K,
                                                      double delta_qk, double delta_ql) {
  if (e.size() != static_cast<long>(L) * K)
    throw InvalidState("bartlett_quadratic_expectation: e must have length L*K");
  const BartlettMoments mk(delta_qk, K), ml(delta_ql, L);
  return detail::kron_cumulative(e, L, K, mk, ml);
}

/* The three cumulative diagonals of the expected whitened precision. */
struct ExpectedRCums {
  Eigen::VectorXd c1, c2, c3;  // corners, off-diagonal, interior
};

inline ExpectedRCums expected_r_cums(const Eigen::VectorXd& phi, int L, int K,
                                     double delta_qk, double delta_ql) {
  const ArExpectations e = expected_r_blocks(phi);
  ExpectedRCums c;
  c.c1 = bartlett_quadratic_expectation(e.e1, L, K, delta_qk, delta_ql);
  c.c2 = bartlett_quadratic_expectation(e.e2, L, K, delta_qk, delta_ql);
  c.c3 = bartlett_quadratic_expectation(e.e3, L, K, delta_qk, delta_ql);
  return c;
}

/* Derivative of the three cumulative diagonals with respect to one
 * autoregressive coefficient (order 1 or 2).  Only the cumulative cone of the
 * coordinate contributes: the scalar entry derivatives times the weight
 * pattern of that coordinate. */
inline ExpectedRCums phi_derivative_of_expectation(const Eigen::VectorXd& phi, int L, int K,
                                                   double delta_qk, double delta_ql,
                                                   int coord, int order) {
  require_stationary(phi);
  if (coord < 0 || coord >= L * K)
    throw InvalidState("phi_derivative_of_expectation: coordinate out of range");
  const BartlettMoments mk(delta_qk, K), ml(delta_ql, L);
  Eigen::VectorXd unit = Eigen::VectorXd::Zero(L * K);
  unit[coord] = 1.0;
  const Eigen::VectorXd pattern = detail::kron_cumulative(unit, L, K, mk, ml);
  const ArEntryDerivs d = ar_entry_derivs(phi[coord], order);
  ExpectedRCums out;
  out.c1 = d.d1 * pattern;
  out.c2 = d.d2 * pattern;
  out.c3 = d.d3 * pattern;
  return out;
}

/* Derivatives of the cumulative diagonals with respect to a Wishart
 * degrees-of-freedom parameter (the cumulants are bilinear in the two
 * deltas, so these are exact and delta-free). */
inline ExpectedRCums delta_derivative_of_expectation(const Eigen::VectorXd& phi, int L, int K,
                                                     double delta_qk, double delta_ql,
                                                     bool cause_side) {
  const ArExpectations e = expected_r_blocks(phi);
  ExpectedRCums out;
  if (cause_side) {
    const BartlettMoments ml(delta_ql, L);
    out.c1 = detail::kron_cumulative_ddelta_k(e.e1, L, K, ml);
    out.c2 = detail::kron_cumulative_ddelta_k(e.e2, L, K, ml);
    out.c3 = detail::kron_cumulative_ddelta_k(e.e3, L, K, ml);
  } else {
    const BartlettMoments mk(delta_qk, K);
    out.c1 = detail::kron_cumulative_ddelta_l(e.e1, L, K, mk);
    out.c2 = detail::kron_cumulative_ddelta_l(e.e2, L, K, mk);
    out.c3 = detail::kron_cumulative_ddelta_l(e.e3, L, K, mk);
  }
  return out;
}

/* Block-tridiagonal latent precision: T diagonal blocks (corner/interior) and
 * T-1 identical off-diagonal blocks, each LK x LK dense symmetric. */
struct LatentBlocks {
  Eigen::MatrixXd corner, interior, off;
  int T = 0;
  int lk = 0;

  bool empty() const { return T == 0 || lk == 0; }

  const Eigen::MatrixXd& diag_block(int t) const {
    return (t == 0 || t == T - 1) ? corner : interior;
  }

  /* Sum over time of the diagonals of the time-diagonal blocks. */
  Eigen::VectorXd diag_sums() const {
    return 2.0 * corner.diagonal() + std::max(0, T - 2) * interior.diagonal();
  }
};

/* Wrap three cumulative diagonals with the Cholesky factors of the Wishart
 * scale matrices: block = W' diag(cum) W with W = V_qk (x) V_ql. */
inline LatentBlocks latent_blocks_from_cums(const ExpectedRCums& c,
                                            const Eigen::MatrixXd& v_qk,
                                            const Eigen::MatrixXd& v_ql, int T) {
  LatentBlocks b;
  b.T = T;
  b.lk = static_cast<int>(c.c1.size());
  const Eigen::MatrixXd w = Eigen::kroneckerProduct(v_qk, v_ql).eval();
  auto wrap = [&](const Eigen::VectorXd& cum) {
    Eigen::MatrixXd m = w.transpose() * cum.asDiagonal() * w;
    return ((m + m.transpose()) * 0.5).eval();
  };
  b.corner = wrap(c.c1);
  b.off = wrap(c.c2);
  b.interior = wrap(c.c3);
  return b;
}

}  // namespace dgam
