#pragma once

#include <Eigen/Dense>

#include "dgam/ar_kron.hpp"
#include "dgam/design.hpp"
#include "dgam/priors.hpp"
#include "dgam/special_functions.hpp"
#include "dgam/state.hpp"

namespace dgam {

/* Expected prior precision of (beta*, z) under the current variational
 * factors: block diagonal over [parametric | smooth blocks | latent], with
 * the latent part block tridiagonal over time.  Stored factored; the dense
 * TLK x TLK latent matrix is never materialized by the solver paths. */
struct ExpectedPriorPrecision {
  Eigen::MatrixXd beta;  // p x p
  LatentBlocks lat;
  int p = 0;
  int q = 0;

  int size() const { return p + q; }

  Eigen::VectorXd matvec(const Eigen::VectorXd& x) const {
    Eigen::VectorXd y(size());
    y.head(p) = beta.selfadjointView<Eigen::Lower>() * x.head(p);
    const int lk = lat.lk;
    for (int t = 0; t < lat.T; ++t) {
      auto zt = x.segment(p + t * lk, lk);
      Eigen::VectorXd v = lat.diag_block(t) * zt;
      if (t > 0) v += lat.off * x.segment(p + (t - 1) * lk, lk);
      if (t + 1 < lat.T) v += lat.off * x.segment(p + (t + 1) * lk, lk);
      y.segment(p + t * lk, lk) = v;
    }
    return y;
  }

  double quad(const Eigen::VectorXd& x) const { return x.dot(matvec(x)); }

  /* tr(G S) for a dense symmetric S over all p + q coefficients. */
  double trace_dense(const Eigen::MatrixXd& s) const {
    double tr = beta.cwiseProduct(s.topLeftCorner(p, p)).sum();
    const int lk = lat.lk;
    for (int t = 0; t < lat.T; ++t) {
      tr += lat.diag_block(t).cwiseProduct(s.block(p + t * lk, p + t * lk, lk, lk)).sum();
      if (t + 1 < lat.T)
        tr += 2.0 * lat.off.cwiseProduct(s.block(p + t * lk, p + (t + 1) * lk, lk, lk)).sum();
    }
    return tr;
  }

  void add_to(Eigen::MatrixXd& h) const {
    h.topLeftCorner(p, p) += beta;
    const int lk = lat.lk;
    for (int t = 0; t < lat.T; ++t) {
      h.block(p + t * lk, p + t * lk, lk, lk) += lat.diag_block(t);
      if (t + 1 < lat.T) {
        h.block(p + t * lk, p + (t + 1) * lk, lk, lk) += lat.off;
        h.block(p + (t + 1) * lk, p + t * lk, lk, lk) += lat.off;
      }
    }
  }

  Eigen::MatrixXd dense() const {
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(size(), size());
    add_to(h);
    return h;
  }

  /* d_i = sum over time of the latent time-diagonal block diagonals;
   * the curvature each latent coordinate's prior puts on mu and sigma2. */
  Eigen::VectorXd latent_diag_sums() const { return lat.diag_sums(); }
};

inline Eigen::MatrixXd penalty_block(const DesignSmooth& s, double lambda1, double lambda2) {
  return lambda1 * s.s1m + lambda2 * s.s2m;
}

inline ExpectedPriorPrecision assemble_expected_prior_precision(const ModelDesign& d,
                                                                const PriorConfig& priors,
                                                                const VariationalState& st) {
  ExpectedPriorPrecision g;
  g.p = d.p;
  g.q = d.q();
  g.beta = Eigen::MatrixXd::Zero(d.p, d.p);
  g.beta.topLeftCorner(d.n_param, d.n_param) =
      Eigen::MatrixXd::Identity(d.n_param, d.n_param) / priors.sigma2_beta;
  for (size_t si = 0; si < d.smooths.size(); ++si) {
    const DesignSmooth& s = d.smooths[si];
    const Eigen::MatrixXd pm = penalty_block(s, st.lambda[2 * si], st.lambda[2 * si + 1]);
    const int j = s.marginal_size();
    for (int b = 0; b < s.blocks(); ++b)
      g.beta.block(s.col_offset + b * j, s.col_offset + b * j, j, j) = pm;
  }
  if (g.q > 0) {
    const ExpectedRCums c = expected_r_cums(st.phi, d.dims.L, d.dims.K, st.delta_qk, st.delta_ql);
    g.lat = latent_blocks_from_cums(c, st.v_qk, st.v_ql, d.dims.T);
  }
  return g;
}

/* E(m0): zero over the fixed effects, the latent mean tiled over time. */
inline Eigen::VectorXd expected_prior_mean(const ModelDesign& d, const VariationalState& st) {
  Eigen::VectorXd m0 = Eigen::VectorXd::Zero(d.total_cols());
  const int lk = d.lk();
  for (int t = 0; t < d.dims.T; ++t) m0.segment(d.p + t * lk, lk) = st.mu;
  return m0;
}

inline double penalty_log_det(const DesignSmooth& s, double lambda1, double lambda2) {
  const Eigen::MatrixXd pm = penalty_block(s, lambda1, lambda2);
  Eigen::LLT<Eigen::MatrixXd> llt(pm);
  if (llt.info() != Eigen::Success)
    throw SingularSystem("penalty_log_det: penalty block is not positive definite");
  return 2.0 * s.blocks() * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

/* E log|M0^{-1}| up to the additive constant that never moves: the penalty
 * log determinants, the stationarity correction, and the Wishart
 * log-determinant expectations without their 2^dim factors. */
inline double expected_log_det_prior_precision(const ModelDesign& d, const PriorConfig& priors,
                                               const VariationalState& st) {
  (void)priors;
  double v = 0.0;
  for (size_t si = 0; si < d.smooths.size(); ++si)
    v += penalty_log_det(d.smooths[si], st.lambda[2 * si], st.lambda[2 * si + 1]);
  if (d.q() > 0) {
    const int L = d.dims.L, K = d.dims.K, T = d.dims.T;
    v -= (T - 1.0) * (1.0 - st.phi.array().square()).log().sum();
    double wk = 2.0 * st.v_qk.diagonal().array().log().sum();
    for (int j = 1; j <= K; ++j) wk += digamma(0.5 * (st.delta_qk - j + 1));
    double wl = 2.0 * st.v_ql.diagonal().array().log().sum();
    for (int j = 1; j <= L; ++j) wl += digamma(0.5 * (st.delta_ql - j + 1));
    v += L * T * wk + K * T * wl;
  }
  return v;
}

}  // namespace dgam
