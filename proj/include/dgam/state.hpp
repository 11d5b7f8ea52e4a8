#pragma once

#include <Eigen/Dense>
#include <random>
#include <string>
#include <vector>

#include "dgam/design.hpp"
#include "dgam/errors.hpp"
#include "dgam/priors.hpp"

namespace dgam {

/* Variational parameters.  q(beta*, z) is Gaussian with mean m and covariance
 * M over all p + Q coefficients; lambda and phi are point masses; q(mu) is a
 * diagonal Gaussian; the two Kronecker precision factors carry Wishart
 * factors parameterized by degrees of freedom and the upper-triangular
 * Cholesky factor V of the scale matrix D = V'V. */
struct VariationalState {
  Eigen::VectorXd m;
  Eigen::MatrixXd M;
  Eigen::VectorXd lambda;  // per smooth: [curvature, shrinkage]
  Eigen::VectorXd mu;      // LK
  Eigen::VectorXd sigma2;  // LK
  Eigen::VectorXd phi;     // LK
  double delta_qk = 0.0;
  Eigen::MatrixXd v_qk;
  double delta_ql = 0.0;
  Eigen::MatrixXd v_ql;

  Eigen::MatrixXd d_qk() const { return v_qk.transpose() * v_qk; }
  Eigen::MatrixXd d_ql() const { return v_ql.transpose() * v_ql; }
};

/* Structural and numerical invariants; throws InvalidState on violation. */
inline void check_state(const VariationalState& s, const ModelDesign& d) {
  const int n = d.total_cols();
  if (s.m.size() != n || s.M.rows() != n || s.M.cols() != n)
    throw InvalidState("check_state: coefficient block has wrong size");
  if (s.lambda.size() != d.n_lambda()) throw InvalidState("check_state: lambda has wrong size");
  for (int i = 0; i < s.lambda.size(); ++i)
    if (!(s.lambda[i] > 0)) throw InvalidState("check_state: lambda must be positive");
  const int lk = d.lk();
  if (d.q() > 0) {
    if (s.mu.size() != lk || s.sigma2.size() != lk || s.phi.size() != lk)
      throw InvalidState("check_state: latent parameter vectors have wrong size");
    for (int i = 0; i < lk; ++i) {
      if (!(s.sigma2[i] > 0)) throw InvalidState("check_state: sigma2 must be positive");
      if (!(std::abs(s.phi[i]) < 1)) throw InvalidState("check_state: |phi| must be < 1");
    }
    if (s.v_qk.rows() != d.dims.K || s.v_ql.rows() != d.dims.L)
      throw InvalidState("check_state: Wishart factors have wrong size");
    if (!(s.delta_qk > d.dims.K - 1) || !(s.delta_ql > d.dims.L - 1))
      throw InvalidState("check_state: Wishart degrees of freedom too small");
    for (int i = 0; i < s.v_qk.rows(); ++i)
      if (!(s.v_qk(i, i) > 0)) throw InvalidState("check_state: diag(V_qk) must be positive");
    for (int i = 0; i < s.v_ql.rows(); ++i)
      if (!(s.v_ql(i, i) > 0)) throw InvalidState("check_state: diag(V_ql) must be positive");
  }
  if (s.M.llt().info() != Eigen::Success)
    throw InvalidState("check_state: M is not positive definite");
}

/* Deterministic default initialization: zero coefficients except an intercept
 * at the log of the aggregate rate, modest isotropic covariance, unit
 * roughness weights, centered latent parameters. */
inline VariationalState init_state(const ModelDesign& d, const PanelView& view) {
  VariationalState s;
  const int n = d.total_cols();
  s.m = Eigen::VectorXd::Zero(n);
  const double rate = view.y.sum() / view.offset.sum();
  s.m[0] = std::log(std::max(rate, 1e-12));
  s.M = 0.1 * Eigen::MatrixXd::Identity(n, n);
  s.lambda = Eigen::VectorXd::Ones(d.n_lambda());
  const int lk = d.lk();
  s.mu = Eigen::VectorXd::Zero(lk);
  s.sigma2 = Eigen::VectorXd::Constant(lk, 0.1);
  s.phi = Eigen::VectorXd::Zero(lk);
  s.delta_qk = d.dims.K + 1.0;
  s.v_qk = Eigen::MatrixXd::Identity(d.dims.K, d.dims.K);
  s.delta_ql = d.dims.L + 1.0;
  s.v_ql = Eigen::MatrixXd::Identity(d.dims.L, d.dims.L);
  return s;
}

/* Seeded perturbation of the defaults; stays well inside the admissible
 * region so optimizer behavior from different draws remains comparable. */
inline VariationalState random_init(const ModelDesign& d, const PanelView& view, std::uint64_t seed) {
  VariationalState s = init_state(d, view);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  for (int i = 1; i < s.m.size(); ++i) s.m[i] = 0.02 * nd(rng);
  s.M *= 0.5 + ud(rng);
  for (int i = 0; i < s.lambda.size(); ++i) s.lambda[i] = std::exp(0.5 * nd(rng));
  for (int i = 0; i < s.mu.size(); ++i) s.mu[i] = 0.1 * nd(rng);
  for (int i = 0; i < s.sigma2.size(); ++i) s.sigma2[i] = 0.05 + 0.15 * ud(rng);
  for (int i = 0; i < s.phi.size(); ++i) s.phi[i] = 0.6 * (ud(rng) - 0.5);
  s.delta_qk += 2.0 * ud(rng);
  s.delta_ql += 2.0 * ud(rng);
  return s;
}

struct FitReport {
  std::vector<double> elbo_trace;  // entry 0 is the initial bound
  bool converged = false;
  int sweeps = 0;
  double wall_seconds = 0.0;
  std::vector<std::string> warnings;
  VariationalState state;
};

}  // namespace dgam
