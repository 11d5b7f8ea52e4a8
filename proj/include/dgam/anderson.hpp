#pragma once

#include <Eigen/Dense>
#include <vector>

#include "dgam/errors.hpp"

namespace dgam {

/* Windowed Anderson acceleration for a fixed-point map g.  Keeps the last
 * `memory` iterate evaluations (g values and residuals g(x) - x) and proposes
 * the affine combination of g values whose combined residual has least
 * two-norm, subject to the weights summing to one.
 *
 * The constraint is eliminated by writing gamma = uniform + N u with N a
 * basis of successive coordinate differences; a ridge of 1e-10 (scaled
 * by the Gram diagonal) keeps the reduced system solvable, and with exactly
 * collinear residual histories it selects the minimum-norm gamma -- equal
 * weights. */
struct AndersonWorkspace {
  int memory = 5;
  std::vector<Eigen::VectorXd> g_hist;
  std::vector<Eigen::VectorXd> f_hist;
  Eigen::VectorXd last_gamma;

  explicit AndersonWorkspace(int memory_ = 5) : memory(memory_) {
    if (memory < 1) throw InvalidState("AndersonWorkspace: memory must be >= 1");
  }

  void clear() {
    g_hist.clear();
    f_hist.clear();
  }

  void push(const Eigen::VectorXd& g, const Eigen::VectorXd& f) {
    g_hist.push_back(g);
    f_hist.push_back(f);
    if (static_cast<int>(g_hist.size()) > memory) {
      g_hist.erase(g_hist.begin());
      f_hist.erase(f_hist.begin());
    }
    /* iterates recorded when the residual was orders of magnitude larger
     * carry linearization error far above the current scale; mixing them in
     * stalls the accelerated iterate at that stale accuracy, so age them out */
    const double newest = f_hist.back().norm();
    while (f_hist.size() > 1 && f_hist.front().norm() > 1e4 * newest) {
      g_hist.erase(g_hist.begin());
      f_hist.erase(f_hist.begin());
    }
  }

  /* Least-squares mixing weights over the current window. */
  Eigen::VectorXd solve_gamma() {
    const int n = static_cast<int>(f_hist.size());
    if (n == 0) throw InvalidState("AndersonWorkspace: no history");
    Eigen::VectorXd gamma = Eigen::VectorXd::Constant(n, 1.0 / n);
    if (n > 1) {
      const long dim = f_hist[0].size();
      Eigen::MatrixXd fn(dim, n);
      for (int i = 0; i < n; ++i) fn.col(i) = f_hist[i];
      Eigen::MatrixXd nbasis = Eigen::MatrixXd::Zero(n, n - 1);
      for (int j = 0; j < n - 1; ++j) {
        nbasis(j, j) = 1.0;
        nbasis(j + 1, j) = -1.0;
      }
      const Eigen::MatrixXd b = fn * nbasis;
      /* equilibrate the columns: successive residual differences shrink
       * geometrically, and the raw Gram matrix's conditioning would be
       * dominated by that scale spread rather than by actual collinearity */
      Eigen::VectorXd scale(n - 1);
      for (int j = 0; j < n - 1; ++j) scale[j] = std::max(b.col(j).norm(), 1e-300);
      const Eigen::MatrixXd bs = b * scale.cwiseInverse().asDiagonal();
      const Eigen::VectorXd rhs = -bs.transpose() * (fn * gamma);
      Eigen::MatrixXd gram = bs.transpose() * bs;
      const double ridge = 1e-10 * std::max(1.0, gram.diagonal().maxCoeff());
      gram.diagonal().array() += ridge;
      const Eigen::VectorXd u = scale.cwiseInverse().asDiagonal() * gram.ldlt().solve(rhs);
      gamma += nbasis * u;
    }
    last_gamma = gamma;
    return gamma;
  }
};

/* One acceleration step: record (g(x), g(x) - x), return the mixed iterate
 * sum_i gamma_i g(x_i) over the window. */
inline Eigen::VectorXd anderson_step(AndersonWorkspace& ws, const Eigen::VectorXd& x,
                                     const Eigen::VectorXd& gx) {
  ws.push(gx, gx - x);
  const Eigen::VectorXd gamma = ws.solve_gamma();
  Eigen::VectorXd next = Eigen::VectorXd::Zero(gx.size());
  for (size_t i = 0; i < ws.g_hist.size(); ++i) next += gamma[static_cast<int>(i)] * ws.g_hist[i];
  return next;
}

}  // namespace dgam
