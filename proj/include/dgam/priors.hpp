#pragma once

#include <algorithm>

#include "dgam/errors.hpp"
#include "dgam/panel.hpp"

namespace dgam {

/* Fixed hyperparameters.  Wishart degrees of freedom / scales default to the
 * dimension-driven values used throughout; resolve() fills those in once the
 * grid dimensions are known. */
struct PriorConfig {
  double alpha_lambda = 1.0;
  double beta_lambda = 1000.0;
  double alpha_phi = 10.0;
  double beta_phi = 10.0;
  double delta_k = 0.0;  // 0 = auto: K
  double theta_k = 0.0;  // 0 = auto: max(K - 2, 1)
  double delta_l = 0.0;  // 0 = auto: L
  double theta_l = 0.0;  // 0 = auto: max(L - 2, 1)
  double sigma2_beta = 10.0;
  double sigma2_mu = 1.0;

  /* false: density of phi via Beta((phi+1)/2) -- terms (a-1)log(1+phi) +
   * (b-1)log(1-phi).  true: the squared variant (a-1)log(1+phi^2) +
   * (b-1)log(1-phi^2). */
  bool phi_prior_squared = false;

  PriorConfig resolved(const Dims& d) const {
    PriorConfig p = *this;
    if (p.delta_k == 0.0) p.delta_k = d.K;
    if (p.theta_k == 0.0) p.theta_k = std::max(d.K - 2.0, 1.0);
    if (p.delta_l == 0.0) p.delta_l = d.L;
    if (p.theta_l == 0.0) p.theta_l = std::max(d.L - 2.0, 1.0);
    p.check(d);
    return p;
  }

  void check(const Dims& d) const {
    if (!(alpha_lambda > 0) || !(beta_lambda > 0)) throw InvalidState("PriorConfig: lambda hyperparameters must be positive");
    if (!(alpha_phi > 0) || !(beta_phi > 0)) throw InvalidState("PriorConfig: phi hyperparameters must be positive");
    if (!(sigma2_beta > 0) || !(sigma2_mu > 0)) throw InvalidState("PriorConfig: variances must be positive");
    if (!(theta_k > 0) || !(theta_l > 0)) throw InvalidState("PriorConfig: Wishart scales must be positive");
    if (!(delta_k > d.K - 1)) throw InvalidState("PriorConfig: delta_k must exceed K - 1");
    if (!(delta_l > d.L - 1)) throw InvalidState("PriorConfig: delta_l must exceed L - 1");
  }
};

}  // namespace dgam
