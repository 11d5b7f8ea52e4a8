#pragma once

#include <Eigen/Dense>
#include <functional>
#include <random>

#include "dgam/design.hpp"
#include "dgam/priors.hpp"
#include "dgam/state.hpp"

/* Brute-force reference implementations used by the test-suite and the
 * `check` command.  These deliberately re-derive everything from first
 * principles -- direct summations, dense assembly, sampling -- and share no
 * computational shortcuts with the production code they cross-check. */

namespace dgam::oracle {

/* Stationary AR(1) trajectory covariance: per coordinate a Toeplitz matrix
 * with entries phi^|s-t|, interleaved into LK-sized diagonal blocks. */
inline Eigen::MatrixXd ar_covariance_dense(const Eigen::VectorXd& phi, int T) {
  const int lk = static_cast<int>(phi.size());
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(lk * T, lk * T);
  for (int s = 0; s < T; ++s)
    for (int t = 0; t < T; ++t)
      for (int i = 0; i < lk; ++i)
        c(s * lk + i, t * lk + i) = std::pow(phi[i], std::abs(s - t));
  return c;
}

namespace detail {

/* Direct quadruple-loop cumulative sum (no prefix reuse). */
inline double cum_entry(const Eigen::VectorXd& e, int L, int K, double dk, double dl, int k, int l) {
  double v = 0.0;
  for (int bk = 0; bk <= k; ++bk)
    for (int bl = 0; bl <= l; ++bl) {
      const double wk = (bk == k) ? dk - k : 1.0;
      const double wl = (bl == l) ? dl - l : 1.0;
      v += wk * wl * e[bk * L + bl];
    }
  return v;
}

inline Eigen::MatrixXd kron_explicit(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

}  // namespace detail

/* Dense expected prior precision over all p + Q coefficients, assembled
 * entry by entry. */
inline Eigen::MatrixXd dense_prior_precision(const ModelDesign& d, const PriorConfig& priors,
                                             const VariationalState& st) {
  const int n = d.total_cols();
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < d.n_param; ++i) g(i, i) = 1.0 / priors.sigma2_beta;
  for (size_t si = 0; si < d.smooths.size(); ++si) {
    const DesignSmooth& s = d.smooths[si];
    const Eigen::MatrixXd pm = st.lambda[2 * si] * s.s1m + st.lambda[2 * si + 1] * s.s2m;
    const int j = s.marginal_size();
    for (int b = 0; b < s.blocks(); ++b)
      g.block(s.col_offset + b * j, s.col_offset + b * j, j, j) = pm;
  }
  if (d.q() == 0) return g;

  const int L = d.dims.L, K = d.dims.K, T = d.dims.T, lk = L * K;
  Eigen::VectorXd e1(lk), e2(lk), e3(lk);
  for (int i = 0; i < lk; ++i) {
    const double p = st.phi[i], s2 = 1.0 - p * p;
    e1[i] = 1.0 / s2;
    e2[i] = -p / s2;
    e3[i] = (1.0 + p * p) / s2;
  }
  Eigen::VectorXd c1(lk), c2(lk), c3(lk);
  for (int k = 0; k < K; ++k)
    for (int l = 0; l < L; ++l) {
      c1[k * L + l] = detail::cum_entry(e1, L, K, st.delta_qk, st.delta_ql, k, l);
      c2[k * L + l] = detail::cum_entry(e2, L, K, st.delta_qk, st.delta_ql, k, l);
      c3[k * L + l] = detail::cum_entry(e3, L, K, st.delta_qk, st.delta_ql, k, l);
    }
  const Eigen::MatrixXd w = detail::kron_explicit(st.v_qk, st.v_ql);
  const Eigen::MatrixXd dc = w.transpose() * c1.asDiagonal() * w;
  const Eigen::MatrixXd di = w.transpose() * c3.asDiagonal() * w;
  const Eigen::MatrixXd doff = w.transpose() * c2.asDiagonal() * w;
  for (int t = 0; t < T; ++t) {
    g.block(d.p + t * lk, d.p + t * lk, lk, lk) = (t == 0 || t == T - 1) ? dc : di;
    if (t + 1 < T) {
      g.block(d.p + t * lk, d.p + (t + 1) * lk, lk, lk) = doff;
      g.block(d.p + (t + 1) * lk, d.p + t * lk, lk, lk) = doff.transpose();
    }
  }
  return g;
}

/* Monte-Carlo estimate of E[(A_k V_k (x) A_l V_l)' diag(e_i) (A_k V_k (x) A_l V_l)]
 * for the three whitened-precision entry vectors, with per-entry standard
 * errors of the mean. */
struct McBartlett {
  Eigen::MatrixXd mean1, mean2, mean3;
  Eigen::MatrixXd se1, se2, se3;
};

inline McBartlett mc_bartlett_expectation(const Eigen::VectorXd& phi, double delta_qk,
                                          double delta_ql, const Eigen::MatrixXd& v_qk,
                                          const Eigen::MatrixXd& v_ql, long n_samples,
                                          std::uint64_t seed) {
  const int K = static_cast<int>(v_qk.rows()), L = static_cast<int>(v_ql.rows());
  const int lk = L * K;
  Eigen::VectorXd e1(lk), e2(lk), e3(lk);
  for (int i = 0; i < lk; ++i) {
    const double p = phi[i], s2 = 1.0 - p * p;
    e1[i] = 1.0 / s2;
    e2[i] = -p / s2;
    e3[i] = (1.0 + p * p) / s2;
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  auto draw_bartlett = [&](int dim, double delta) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(dim, dim);
    for (int i = 0; i < dim; ++i) {
      std::chi_squared_distribution<double> chi(delta - i);
      a(i, i) = std::sqrt(chi(rng));
      for (int j = i + 1; j < dim; ++j) a(i, j) = nd(rng);
    }
    return a;
  };

  Eigen::MatrixXd s1 = Eigen::MatrixXd::Zero(lk, lk), s2m = s1, s3 = s1;
  Eigen::MatrixXd q1 = s1, q2 = s1, q3 = s1;  // sums of squares
  for (long it = 0; it < n_samples; ++it) {
    const Eigen::MatrixXd wk = draw_bartlett(K, delta_qk) * v_qk;
    const Eigen::MatrixXd wl = draw_bartlett(L, delta_ql) * v_ql;
    const Eigen::MatrixXd w = detail::kron_explicit(wk, wl);
    const Eigen::MatrixXd x1 = w.transpose() * e1.asDiagonal() * w;
    const Eigen::MatrixXd x2 = w.transpose() * e2.asDiagonal() * w;
    const Eigen::MatrixXd x3 = w.transpose() * e3.asDiagonal() * w;
    s1 += x1; q1 += x1.cwiseProduct(x1);
    s2m += x2; q2 += x2.cwiseProduct(x2);
    s3 += x3; q3 += x3.cwiseProduct(x3);
  }
  const double n = static_cast<double>(n_samples);
  McBartlett out;
  auto finish = [&](const Eigen::MatrixXd& s, const Eigen::MatrixXd& q,
                    Eigen::MatrixXd& mean, Eigen::MatrixXd& se) {
    mean = s / n;
    se = ((q / n - mean.cwiseProduct(mean)).cwiseMax(0.0) / (n - 1.0)).cwiseSqrt();
  };
  finish(s1, q1, out.mean1, out.se1);
  finish(s2m, q2, out.mean2, out.se2);
  finish(s3, q3, out.mean3, out.se3);
  return out;
}

/* Central finite differences with per-coordinate steps h (1 + |x_i|). */
inline Eigen::VectorXd finite_diff_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                            const Eigen::VectorXd& x, double step = 1e-5) {
  Eigen::VectorXd g(x.size());
  for (int i = 0; i < x.size(); ++i) {
    const double h = step * (1.0 + std::abs(x[i]));
    Eigen::VectorXd xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    g[i] = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

}  // namespace dgam::oracle
