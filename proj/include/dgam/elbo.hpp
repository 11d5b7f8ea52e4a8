#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>

#include "dgam/precision.hpp"

namespace dgam {

/* Evidence lower bound, split by factor.  Additive constants that no
 * variational parameter can move (data factorials, 2*pi powers, prior
 * normalizers) are dropped throughout; every term is exact in the parameters
 * the optimizer touches. */

inline Eigen::VectorXd linear_predictor(const ModelDesign& d, const Eigen::VectorXd& m) {
  return d.x * m;
}

/* diag(X M X') computed row by row over the sparse pattern. */
inline Eigen::VectorXd quadratic_correction(const ModelDesign& d, const Eigen::MatrixXd& M) {
  const int n = d.n_rows();
  Eigen::VectorXd q(n);
  using It = Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator;
  for (int r = 0; r < n; ++r) {
    double acc = 0.0;
    for (It a(d.x, r); a; ++a) {
      double inner = 0.0;
      for (It b(d.x, r); b; ++b) inner += b.value() * M(a.index(), b.index());
      acc += a.value() * inner;
    }
    q[r] = acc;
  }
  return q;
}

/* eta_i = x_i'm + x_i'Mx_i/2 and the Poisson weights eps_i exp(eta_i). */
struct PoissonMoments {
  Eigen::VectorXd eta;
  Eigen::VectorXd w;
};

inline std::optional<PoissonMoments> try_poisson_moments(const ModelDesign& d, const PanelView& view,
                                                         const Eigen::VectorXd& m,
                                                         const Eigen::MatrixXd& M) {
  PoissonMoments pm;
  pm.eta = linear_predictor(d, m) + 0.5 * quadratic_correction(d, M);
  if ((pm.eta.array() > 700.0).any()) return std::nullopt;
  pm.w = view.offset.array() * pm.eta.array().exp();
  return pm;
}

inline PoissonMoments poisson_moments(const ModelDesign& d, const PanelView& view,
                                      const Eigen::VectorXd& m, const Eigen::MatrixXd& M) {
  auto pm = try_poisson_moments(d, view, m, M);
  if (!pm) throw NumericOverflow("poisson rate exponent exceeds 700");
  return *pm;
}

inline double log_det_spd(const Eigen::MatrixXd& a, const char* who) {
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) throw SingularSystem(std::string(who) + ": matrix is not positive definite");
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

/* E_q log p(y | beta*, z) + E_q log p(beta*, z | rest) - E_q log q(beta*, z):
 * seven summands -- Poisson linear part, minus expected rates, prior
 * quadratic form at the mean, prior trace against M, Gaussian entropy,
 * prior trace against COV(m0), and the expected prior log determinant. */
inline double elbo_joint_term(const ModelDesign& d, const PanelView& view, const PriorConfig& priors,
                              const VariationalState& st) {
  const PoissonMoments pm = poisson_moments(d, view, st.m, st.M);
  const ExpectedPriorPrecision g = assemble_expected_prior_precision(d, priors, st);
  const Eigen::VectorXd r = st.m - expected_prior_mean(d, st);
  double v = view.y.dot(linear_predictor(d, st.m)) - pm.w.sum();
  v -= 0.5 * g.quad(r);
  v -= 0.5 * g.trace_dense(st.M);
  v += 0.5 * log_det_spd(st.M, "elbo_joint_term");
  if (d.q() > 0) v -= 0.5 * st.sigma2.dot(g.latent_diag_sums());
  v += 0.5 * expected_log_det_prior_precision(d, priors, st);
  return v;
}

inline double elbo_lambda_term(const VariationalState& st, const PriorConfig& priors) {
  double v = 0.0;
  for (int i = 0; i < st.lambda.size(); ++i)
    v += (priors.alpha_lambda - 1.0) * std::log(st.lambda[i]) - priors.beta_lambda * st.lambda[i];
  return v;
}

inline double elbo_mu_term(const VariationalState& st, const PriorConfig& priors) {
  if (st.mu.size() == 0) return 0.0;
  return -0.5 / priors.sigma2_mu * (st.mu.squaredNorm() + st.sigma2.sum()) +
         0.5 * st.sigma2.array().log().sum();
}

inline double phi_log_prior(double phi, const PriorConfig& priors) {
  if (priors.phi_prior_squared)
    return (priors.alpha_phi - 1.0) * std::log1p(phi * phi) +
           (priors.beta_phi - 1.0) * std::log1p(-phi * phi);
  return (priors.alpha_phi - 1.0) * std::log1p(phi) + (priors.beta_phi - 1.0) * std::log1p(-phi);
}

inline double elbo_phi_term(const VariationalState& st, const PriorConfig& priors) {
  double v = 0.0;
  for (int i = 0; i < st.phi.size(); ++i) v += phi_log_prior(st.phi[i], priors);
  return v;
}

/* E_q log p(Omega) - E_q log q(Omega) for one Wishart factor with prior
 * Wishart(delta, theta I) and variational Wishart(delta_q, V'V). */
inline double elbo_wishart_term(int dim, double delta, double theta, double delta_q,
                                const Eigen::MatrixXd& v_q) {
  const double log_det_d = 2.0 * v_q.diagonal().array().log().sum();
  double sum_dg = 0.0;
  for (int j = 1; j <= dim; ++j) sum_dg += digamma(0.5 * (delta_q - j + 1));
  return 0.5 * delta * log_det_d + 0.5 * (delta - delta_q) * sum_dg -
         0.5 * delta_q / theta * v_q.squaredNorm() + 0.5 * delta_q * dim +
         log_mv_gamma(dim, 0.5 * delta_q);
}

struct ElboBreakdown {
  double joint = 0.0;
  double lambda_term = 0.0;
  double mu_term = 0.0;
  double phi_term = 0.0;
  double wishart_k = 0.0;
  double wishart_l = 0.0;

  double total() const { return joint + lambda_term + mu_term + phi_term + wishart_k + wishart_l; }
};

inline ElboBreakdown elbo_terms(const ModelDesign& d, const PanelView& view,
                                const PriorConfig& priors, const VariationalState& st) {
  ElboBreakdown b;
  b.joint = elbo_joint_term(d, view, priors, st);
  b.lambda_term = elbo_lambda_term(st, priors);
  if (d.q() > 0) {
    b.mu_term = elbo_mu_term(st, priors);
    b.phi_term = elbo_phi_term(st, priors);
    b.wishart_k = elbo_wishart_term(d.dims.K, priors.delta_k, priors.theta_k, st.delta_qk, st.v_qk);
    b.wishart_l = elbo_wishart_term(d.dims.L, priors.delta_l, priors.theta_l, st.delta_ql, st.v_ql);
  }
  return b;
}

inline double elbo_total(const ModelDesign& d, const PanelView& view, const PriorConfig& priors,
                         const VariationalState& st) {
  return elbo_terms(d, view, priors, st).total();
}

}  // namespace dgam
