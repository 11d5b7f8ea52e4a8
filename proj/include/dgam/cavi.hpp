#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "dgam/anderson.hpp"
#include "dgam/elbo.hpp"
#include "dgam/precision.hpp"

namespace dgam {

struct CaviConfig {
  int max_sweeps = 200;
  double elbo_rel_tol = 1e-8;        // stop when |delta elbo| <= tol * (1 + |elbo|)
  int anderson_memory = 5;           // S: number of retained residual differences
  bool use_anderson = true;
  int newton_max_inner = 50;
  double fixed_point_tol = 1e-8;     // ||g(M) - M||_F <= tol * (1 + ||M||_F)
  double backtrack_shrink = 0.5;
  double backtrack_armijo = 1e-4;
  double projection_floor_lambda = 1e-8;
  double phi_bound = 1.0 - 1e-6;
  std::uint64_t seed = 0;
  bool random_init = false;
};

namespace detail {

inline void warn(std::vector<std::string>* sink, const std::string& msg) {
  if (sink) sink->push_back(msg);
}

/* X' diag(w) X accumulated over the sparse row pattern. */
inline Eigen::MatrixXd xtwx(const ModelDesign& d, const Eigen::VectorXd& w) {
  const int n = d.total_cols();
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
  using It = Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator;
  for (int r = 0; r < d.n_rows(); ++r) {
    const double wr = w[r];
    for (It a(d.x, r); a; ++a)
      for (It b(d.x, r); b; ++b) {
        if (b.index() < a.index()) continue;
        h(a.index(), b.index()) += wr * a.value() * b.value();
      }
  }
  return h.selfadjointView<Eigen::Upper>();
}

/* Armijo backtracking along a projected ray.  `value` returns the objective
 * or nullopt when the candidate is inadmissible.  Returns the accepted
 * candidate, or nullopt when the search stalls (step below 1e-15). */
template <typename Vec, typename Value, typename Project>
std::optional<Vec> backtrack(const Vec& x, const Vec& dir, double slope, double f0,
                             const Value& value, const Project& project, const CaviConfig& cfg) {
  double t = 1.0;
  for (int it = 0; it < 60; ++it) {
    Vec cand = project(x + t * dir);
    const std::optional<double> f = value(cand);
    if (f) {
      const double need = slope > 0 ? f0 + cfg.backtrack_armijo * t * slope : f0;
      if (*f >= need - 1e-14 * (1.0 + std::abs(f0))) return cand;
    }
    t *= cfg.backtrack_shrink;
    if (t < 1e-15) break;
  }
  return std::nullopt;
}

}  // namespace detail

/* ---------------------------------------------------------------- m update */

/* m-relevant part of the bound: Poisson linear term minus expected rates
 * minus the prior quadratic form (corrections from M held fixed). */
inline std::optional<double> m_objective(const ModelDesign& d, const PanelView& view,
                                         const Eigen::VectorXd& qc, const ExpectedPriorPrecision& g,
                                         const Eigen::VectorXd& m0, const Eigen::VectorXd& m) {
  const Eigen::VectorXd lin = linear_predictor(d, m);
  const Eigen::VectorXd eta = lin + 0.5 * qc;
  if ((eta.array() > 700.0).any()) return std::nullopt;
  const double rates = (view.offset.array() * eta.array().exp()).sum();
  const Eigen::VectorXd r = m - m0;
  return view.y.dot(lin) - rates - 0.5 * g.quad(r);
}

inline Eigen::VectorXd grad_m(const ModelDesign& d, const PanelView& view, const PriorConfig& priors,
                              const VariationalState& st) {
  const ExpectedPriorPrecision g = assemble_expected_prior_precision(d, priors, st);
  const PoissonMoments pm = poisson_moments(d, view, st.m, st.M);
  return d.x.transpose() * (view.y - pm.w) - g.matvec(st.m - expected_prior_mean(d, st));
}

inline void update_m(VariationalState& st, const ModelDesign& d, const PanelView& view,
                     const PriorConfig& priors, const CaviConfig& cfg,
                     std::vector<std::string>* warnings = nullptr) {
  const ExpectedPriorPrecision g = assemble_expected_prior_precision(d, priors, st);
  const Eigen::VectorXd m0 = expected_prior_mean(d, st);
  const Eigen::VectorXd qc = quadratic_correction(d, st.M);

  auto value = [&](const Eigen::VectorXd& m) { return m_objective(d, view, qc, g, m0, m); };
  auto gradient = [&](const Eigen::VectorXd& m) -> std::optional<Eigen::VectorXd> {
    const Eigen::VectorXd eta = linear_predictor(d, m) + 0.5 * qc;
    if ((eta.array() > 700.0).any()) return std::nullopt;
    const Eigen::VectorXd w = view.offset.array() * eta.array().exp();
    return Eigen::VectorXd(d.x.transpose() * (view.y - w) - g.matvec(m - m0));
  };

  std::optional<double> f0 = value(st.m);
  const std::optional<Eigen::VectorXd> g_entry = gradient(st.m);
  if (!f0 || !g_entry) {
    detail::warn(warnings, "update_m: entry point overflows; skipped");
    return;
  }
  const Eigen::VectorXd m_entry = st.m;
  const double gnorm_entry = g_entry->norm();

  for (int it = 0; it < cfg.newton_max_inner; ++it) {
    const Eigen::VectorXd eta = linear_predictor(d, st.m) + 0.5 * qc;
    const Eigen::VectorXd w = view.offset.array() * eta.array().exp();
    const Eigen::VectorXd grad = d.x.transpose() * (view.y - w) - g.matvec(st.m - m0);
    if (grad.lpNorm<Eigen::Infinity>() <= 1e-11 * (1.0 + std::abs(view.y.sum()))) break;

    Eigen::MatrixXd h = detail::xtwx(d, w);
    g.add_to(h);
    Eigen::LLT<Eigen::MatrixXd> llt(h);
    if (llt.info() != Eigen::Success) {
      detail::warn(warnings, "update_m: curvature matrix not positive definite; skipped");
      st.m = m_entry;
      return;
    }
    const Eigen::VectorXd dir = llt.solve(grad);
    const double slope = grad.dot(dir);
    auto cand = detail::backtrack(st.m, dir, slope, *f0, value,
                                  [](Eigen::VectorXd v) { return v; }, cfg);
    if (!cand) break;
    const double fc = *value(*cand);
    const bool stalled = fc - *f0 <= 1e-12 * (1.0 + std::abs(*f0));
    st.m = *cand;
    f0 = fc;
    if (stalled) break;
  }

  /* the update must not leave the stationarity residual worse than it found it */
  const std::optional<Eigen::VectorXd> g_exit = gradient(st.m);
  if (!g_exit || g_exit->norm() > gnorm_entry * (1.0 + 1e-12)) {
    st.m = m_entry;
    detail::warn(warnings, "update_m: no gradient-norm progress; left unchanged");
  }
}

/* ---------------------------------------------------------------- M update */

/* dELBO/dM for symmetric variations: 0.5 (M^-1 - X' diag(w) X - E(M0^-1)). */
inline Eigen::MatrixXd grad_M(const ModelDesign& d, const PanelView& view, const PriorConfig& priors,
                              const VariationalState& st) {
  const ExpectedPriorPrecision g = assemble_expected_prior_precision(d, priors, st);
  const PoissonMoments pm = poisson_moments(d, view, st.m, st.M);
  Eigen::LLT<Eigen::MatrixXd> llt(st.M);
  if (llt.info() != Eigen::Success) throw SingularSystem("grad_M: M not positive definite");
  const int n = d.total_cols();
  const Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(n, n));
  Eigen::MatrixXd out = 0.5 * (inv - detail::xtwx(d, pm.w) - g.dense());
  return 0.5 * (out + out.transpose());
}

/* Fixed-point map: g(M) = (X' diag(w(M)) X + E(M0^-1))^{-1}, symmetrized. */
inline Eigen::MatrixXd fixed_point_map(const ModelDesign& d, const PanelView& view,
                                       const PriorConfig& priors, const VariationalState& st,
                                       const Eigen::MatrixXd& m_cov) {
  const ExpectedPriorPrecision g = assemble_expected_prior_precision(d, priors, st);
  const Eigen::VectorXd eta = linear_predictor(d, st.m) + 0.5 * quadratic_correction(d, m_cov);
  if ((eta.array() > 700.0).any()) throw NumericOverflow("fixed_point_map: rate exponent exceeds 700");
  const Eigen::VectorXd w = view.offset.array() * eta.array().exp();
  Eigen::MatrixXd h = detail::xtwx(d, w);
  g.add_to(h);
  Eigen::LLT<Eigen::MatrixXd> llt(h);
  if (llt.info() != Eigen::Success) throw SingularSystem("fixed_point_map: system not positive definite");
  const int n = d.total_cols();
  const Eigen::MatrixXd out = llt.solve(Eigen::MatrixXd::Identity(n, n));
  return 0.5 * (out + out.transpose());
}

/* M-relevant part of the bound (m fixed): expected rates, prior trace,
 * entropy.  Nullopt when the candidate is not positive definite or the
 * rates overflow. */
inline std::optional<double> M_objective(const ModelDesign& d, const PanelView& view,
                                         const PriorConfig& priors, const VariationalState& st,
                                         const Eigen::MatrixXd& m_cov) {
  Eigen::LLT<Eigen::MatrixXd> llt(m_cov);
  if (llt.info() != Eigen::Success) return std::nullopt;
  const ExpectedPriorPrecision g = assemble_expected_prior_precision(d, priors, st);
  const Eigen::VectorXd eta = linear_predictor(d, st.m) + 0.5 * quadratic_correction(d, m_cov);
  if ((eta.array() > 700.0).any()) return std::nullopt;
  const double rates = (view.offset.array() * eta.array().exp()).sum();
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return -rates - 0.5 * g.trace_dense(m_cov) + 0.5 * logdet;
}

struct FixedPointReport {
  int g_evals = 0;
  bool converged = false;
  double residual = std::numeric_limits<double>::infinity();
};

inline FixedPointReport update_M(VariationalState& st, const ModelDesign& d, const PanelView& view,
                                 const PriorConfig& priors, const CaviConfig& cfg,
                                 std::vector<std::string>* warnings = nullptr) {
  FixedPointReport rep;
  const int n = d.total_cols();
  const Eigen::MatrixXd entry = st.M;
  /* window of S residual differences = S + 1 retained iterates */
  AndersonWorkspace ws(cfg.anderson_memory + 1);
  auto vec = [n](const Eigen::MatrixXd& m) {
    return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(m.data(), n * n));
  };
  auto mat = [n](const Eigen::VectorXd& v) {
    return Eigen::MatrixXd(Eigen::Map<const Eigen::MatrixXd>(v.data(), n, n));
  };

  Eigen::MatrixXd m_cur = st.M;
  double res_prev = std::numeric_limits<double>::infinity();
  try {
    for (int it = 0; it < cfg.newton_max_inner; ++it) {
      const Eigen::MatrixXd gm = fixed_point_map(d, view, priors, st, m_cur);
      ++rep.g_evals;
      rep.residual = (gm - m_cur).norm();
      if (rep.residual <= cfg.fixed_point_tol * (1.0 + m_cur.norm())) {
        m_cur = gm;
        rep.converged = true;
        break;
      }
      if (rep.residual > 10.0 * res_prev) {
        detail::warn(warnings, "update_M: residual grew 10x, falling back to plain iteration");
        ws.clear();  // next anderson_step degenerates to the plain step
      }
      res_prev = rep.residual;
      if (cfg.use_anderson) {
        const Eigen::VectorXd next = anderson_step(ws, vec(m_cur), vec(gm));
        Eigen::MatrixXd cand = mat(next);
        cand = 0.5 * (cand + cand.transpose()).eval();
        /* mixed iterates can lose definiteness; fall back to the plain step */
        if (Eigen::LLT<Eigen::MatrixXd>(cand).info() == Eigen::Success) {
          m_cur = cand;
        } else {
          ws.clear();
          m_cur = gm;
        }
      } else {
        m_cur = gm;
      }
    }
  } catch (const Error& e) {
    detail::warn(warnings, std::string("update_M: ") + e.what() + "; keeping entry value");
    return rep;
  }

  /* never let the sub-update lower the part of the bound it optimizes */
  const std::optional<double> f_new = M_objective(d, view, priors, st, m_cur);
  const std::optional<double> f_old = M_objective(d, view, priors, st, entry);
  if (f_new && (!f_old || *f_new >= *f_old - 1e-12 * (1.0 + std::abs(*f_old)))) {
    st.M = m_cur;
  } else {
    detail::warn(warnings, "update_M: candidate did not improve the bound; keeping entry value");
    rep.converged = false;
  }
  return rep;
}

/* ----------------------------------------------------------- lambda update */

/* Gradient of the bound in the stacked (curvature, shrinkage) penalty
 * weights, two per smooth. */
inline Eigen::VectorXd grad_lambda(const ModelDesign& d, const PriorConfig& priors,
                                   const VariationalState& st) {
  Eigen::VectorXd g(d.n_lambda());
  for (size_t si = 0; si < d.smooths.size(); ++si) {
    const DesignSmooth& s = d.smooths[si];
    const int c0 = s.col_offset, nc = s.n_cols();
    const Eigen::MatrixXd outer = st.m.segment(c0, nc) * st.m.segment(c0, nc).transpose() +
                                  st.M.block(c0, c0, nc, nc);
    const double a1 = s.s1_full().cwiseProduct(outer).sum();
    const double a2 = s.s2_full().cwiseProduct(outer).sum();
    const Eigen::MatrixXd pm = penalty_block(s, st.lambda[2 * si], st.lambda[2 * si + 1]);
    const Eigen::MatrixXd pinv = pm.llt().solve(Eigen::MatrixXd::Identity(pm.rows(), pm.cols()));
    g[2 * si] = -0.5 * a1 + 0.5 * s.blocks() * pinv.cwiseProduct(s.s1m).sum() +
                (priors.alpha_lambda - 1.0) / st.lambda[2 * si] - priors.beta_lambda;
    g[2 * si + 1] = -0.5 * a2 + 0.5 * s.blocks() * pinv.cwiseProduct(s.s2m).sum() +
                    (priors.alpha_lambda - 1.0) / st.lambda[2 * si + 1] - priors.beta_lambda;
  }
  return g;
}

/* Newton over the penalty weights.  The objective separates per smooth (the
 * joint Hessian is block diagonal by 2x2 blocks), so each pair takes its own
 * projected, backtracked step. */
inline void update_lambda(VariationalState& st, const ModelDesign& d, const PriorConfig& priors,
                          const CaviConfig& cfg, std::vector<std::string>* warnings = nullptr) {
  for (size_t si = 0; si < d.smooths.size(); ++si) {
    const DesignSmooth& s = d.smooths[si];
    const int c0 = s.col_offset, nc = s.n_cols();
    const Eigen::MatrixXd outer = st.m.segment(c0, nc) * st.m.segment(c0, nc).transpose() +
                                  st.M.block(c0, c0, nc, nc);
    const double a1 = s.s1_full().cwiseProduct(outer).sum();
    const double a2 = s.s2_full().cwiseProduct(outer).sum();
    const double nb = s.blocks();

    auto value = [&](const Eigen::Vector2d& lam) -> std::optional<double> {
      if (!(lam[0] > 0) || !(lam[1] > 0)) return std::nullopt;
      Eigen::LLT<Eigen::MatrixXd> llt(penalty_block(s, lam[0], lam[1]));
      if (llt.info() != Eigen::Success) return std::nullopt;
      const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
      return -0.5 * (lam[0] * a1 + lam[1] * a2) + 0.5 * nb * logdet +
             (priors.alpha_lambda - 1.0) * (std::log(lam[0]) + std::log(lam[1])) -
             priors.beta_lambda * (lam[0] + lam[1]);
    };
    auto project = [&](Eigen::Vector2d v) {
      v[0] = std::max(v[0], cfg.projection_floor_lambda);
      v[1] = std::max(v[1], cfg.projection_floor_lambda);
      return v;
    };

    Eigen::Vector2d lam(st.lambda[2 * si], st.lambda[2 * si + 1]);
    std::optional<double> f0 = value(lam);
    if (!f0) {
      detail::warn(warnings, "update_lambda: smooth '" + s.name + "' entry inadmissible; skipped");
      continue;
    }
    for (int it = 0; it < cfg.newton_max_inner; ++it) {
      const Eigen::MatrixXd pm = penalty_block(s, lam[0], lam[1]);
      const Eigen::MatrixXd pinv = pm.llt().solve(Eigen::MatrixXd::Identity(pm.rows(), pm.cols()));
      const Eigen::MatrixXd q1 = pinv * s.s1m, q2 = pinv * s.s2m;
      Eigen::Vector2d g;
      g[0] = -0.5 * a1 + 0.5 * nb * q1.trace() + (priors.alpha_lambda - 1.0) / lam[0] - priors.beta_lambda;
      g[1] = -0.5 * a2 + 0.5 * nb * q2.trace() + (priors.alpha_lambda - 1.0) / lam[1] - priors.beta_lambda;
      Eigen::Matrix2d h;
      h(0, 0) = -0.5 * nb * (q1 * q1).trace() - (priors.alpha_lambda - 1.0) / (lam[0] * lam[0]);
      h(1, 1) = -0.5 * nb * (q2 * q2).trace() - (priors.alpha_lambda - 1.0) / (lam[1] * lam[1]);
      h(0, 1) = h(1, 0) = -0.5 * nb * (q1 * q2).trace();

      Eigen::Vector2d dir = -h.ldlt().solve(g);
      if (!dir.allFinite() || g.dot(dir) <= 0.0) dir = g / (1.0 + g.norm());  // ascent fallback
      auto cand = detail::backtrack(lam, dir, g.dot(dir), *f0, value, project, cfg);
      if (!cand) break;
      const double fc = *value(*cand);
      const bool stalled = fc - *f0 <= 1e-12 * (1.0 + std::abs(*f0)) &&
                           (*cand - lam).lpNorm<Eigen::Infinity>() <=
                               1e-12 * (1.0 + lam.lpNorm<Eigen::Infinity>());
      lam = *cand;
      f0 = fc;
      if (stalled) break;
    }
    st.lambda[2 * si] = lam[0];
    st.lambda[2 * si + 1] = lam[1];
  }
}

/* --------------------------------------------------------- mu/sigma update */

/* Curvature the latent prior places on a time-constant shift: the sum of
 * every time-block of the expected precision. */
inline Eigen::MatrixXd latent_total_curvature(const ExpectedPriorPrecision& g) {
  const int T = g.lat.T;
  return 2.0 * g.lat.corner + std::max(0, T - 2) * g.lat.interior + 2.0 * (T - 1.0) * g.lat.off;
}

inline Eigen::VectorXd grad_mu(const ModelDesign& d, const PriorConfig& priors,
                               const VariationalState& st) {
  const ExpectedPriorPrecision g = assemble_expected_prior_precision(d, priors, st);
  const Eigen::VectorXd gr = g.matvec(st.m - expected_prior_mean(d, st));
  const int lk = d.lk();
  Eigen::VectorXd s = Eigen::VectorXd::Zero(lk);
  for (int t = 0; t < d.dims.T; ++t) s += gr.segment(d.p + t * lk, lk);
  return s - st.mu / priors.sigma2_mu;
}

inline Eigen::VectorXd grad_sigma2(const ModelDesign& d, const PriorConfig& priors,
                                   const VariationalState& st) {
  const ExpectedPriorPrecision g = assemble_expected_prior_precision(d, priors, st);
  return (-0.5 * g.latent_diag_sums().array() - 0.5 / priors.sigma2_mu +
          0.5 / st.sigma2.array()).matrix();
}

/* Both factors have closed-form maxima: one SPD solve for the mean, an
 * explicit reciprocal for each variance. */
inline void update_mu_sigma(VariationalState& st, const ModelDesign& d, const PriorConfig& priors,
                            const CaviConfig& cfg, std::vector<std::string>* warnings = nullptr) {
  (void)cfg;
  const ExpectedPriorPrecision g = assemble_expected_prior_precision(d, priors, st);
  const int lk = d.lk();
  const Eigen::VectorXd gm = g.matvec(st.m);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(lk);
  for (int t = 0; t < d.dims.T; ++t) rhs += gm.segment(d.p + t * lk, lk);

  Eigen::MatrixXd b = latent_total_curvature(g);
  b.diagonal().array() += 1.0 / priors.sigma2_mu;
  Eigen::LLT<Eigen::MatrixXd> llt(b);
  if (llt.info() != Eigen::Success) {
    detail::warn(warnings, "update_mu_sigma: curvature not positive definite; skipped");
    return;
  }
  st.mu = llt.solve(rhs);
  st.sigma2 = (1.0 / (g.latent_diag_sums().array() + 1.0 / priors.sigma2_mu)).matrix();
}

/* -------------------------------------------------------------- phi update */

/* Sufficient statistics for every latent trace term: sums over corner,
 * interior and adjacent-pair blocks of rr' + M, plus the prior-mean
 * covariance diag(sigma2) on the time-diagonal blocks. */
struct LatentStats {
  Eigen::MatrixXd sc, si, so;
};

inline LatentStats latent_stats(const ModelDesign& d, const VariationalState& st) {
  const int lk = d.lk(), T = d.dims.T, p = d.p;
  LatentStats s;
  s.sc = Eigen::MatrixXd::Zero(lk, lk);
  s.si = Eigen::MatrixXd::Zero(lk, lk);
  s.so = Eigen::MatrixXd::Zero(lk, lk);
  const Eigen::VectorXd r = st.m - expected_prior_mean(d, st);
  for (int t = 0; t < T; ++t) {
    const Eigen::VectorXd rt = r.segment(p + t * lk, lk);
    Eigen::MatrixXd blk = rt * rt.transpose() + st.M.block(p + t * lk, p + t * lk, lk, lk);
    blk.diagonal() += st.sigma2;
    if (t == 0 || t == T - 1)
      s.sc += blk;
    else
      s.si += blk;
    if (t + 1 < T) {
      const Eigen::VectorXd rn = r.segment(p + (t + 1) * lk, lk);
      const Eigen::MatrixXd cross =
          rt * rn.transpose() + st.M.block(p + t * lk, p + (t + 1) * lk, lk, lk);
      s.so += cross + cross.transpose();
    }
  }
  s.sc = 0.5 * (s.sc + s.sc.transpose()).eval();
  s.si = 0.5 * (s.si + s.si.transpose()).eval();
  s.so = 0.5 * (s.so + s.so.transpose()).eval();
  return s;
}

/* tr over the block-tridiagonal structure: corner/interior/off cumulative
 * diagonals against B1 S B2' with S the matching sufficient statistic. */
inline double latent_trace(const ExpectedRCums& c, const Eigen::MatrixXd& b1,
                           const Eigen::MatrixXd& b2, const LatentStats& s) {
  const Eigen::VectorXd qc = ((b1 * s.sc).cwiseProduct(b2)).rowwise().sum();
  const Eigen::VectorXd qi = ((b1 * s.si).cwiseProduct(b2)).rowwise().sum();
  const Eigen::VectorXd qo = ((b1 * s.so).cwiseProduct(b2)).rowwise().sum();
  return c.c1.dot(qc) + c.c3.dot(qi) + c.c2.dot(qo);
}

/* The bound is linear in the three whitened-precision entries of each
 * autoregressive coordinate; collect their coefficients once. */
struct PhiCoeffs {
  Eigen::VectorXd c1, c2, c3;
};

inline PhiCoeffs phi_coefficients(const ModelDesign& d, const VariationalState& st) {
  const int L = d.dims.L, K = d.dims.K, lk = d.lk();
  const LatentStats s = latent_stats(d, st);
  const Eigen::MatrixXd w = Eigen::kroneckerProduct(st.v_qk, st.v_ql).eval();
  const Eigen::VectorXd qc = ((w * s.sc).cwiseProduct(w)).rowwise().sum();
  const Eigen::VectorXd qi = ((w * s.si).cwiseProduct(w)).rowwise().sum();
  const Eigen::VectorXd qo = ((w * s.so).cwiseProduct(w)).rowwise().sum();
  const BartlettMoments mk(st.delta_qk, K), ml(st.delta_ql, L);
  PhiCoeffs out;
  out.c1.resize(lk);
  out.c2.resize(lk);
  out.c3.resize(lk);
  for (int i = 0; i < lk; ++i) {
    Eigen::VectorXd unit = Eigen::VectorXd::Zero(lk);
    unit[i] = 1.0;
    const Eigen::VectorXd pat = detail::kron_cumulative(unit, L, K, mk, ml);
    out.c1[i] = -0.5 * pat.dot(qc);
    out.c2[i] = -0.5 * pat.dot(qo);
    out.c3[i] = -0.5 * pat.dot(qi);
  }
  return out;
}

namespace detail {

/* phi-relevant bound for one coordinate and its first two derivatives. */
struct PhiSection {
  double c1, c2, c3;
  int T;
  const PriorConfig* priors;

  std::optional<double> value(double phi) const {
    if (!(std::abs(phi) < 1.0)) return std::nullopt;
    const double s2 = 1.0 - phi * phi;
    return c1 / s2 - c2 * phi / s2 + c3 * (1.0 + phi * phi) / s2 -
           0.5 * (T - 1.0) * std::log(s2) + phi_log_prior(phi, *priors);
  }
  double derivative(double phi, int order) const {
    const ArEntryDerivs de = ar_entry_derivs(phi, order);
    double v = c1 * de.d1 + c2 * de.d2 + c3 * de.d3;
    const double s2 = 1.0 - phi * phi;
    const double a = priors->alpha_phi, b = priors->beta_phi;
    if (order == 1) {
      v += (T - 1.0) * phi / s2;
      if (priors->phi_prior_squared)
        v += (a - 1.0) * 2.0 * phi / (1.0 + phi * phi) - (b - 1.0) * 2.0 * phi / s2;
      else
        v += (a - 1.0) / (1.0 + phi) - (b - 1.0) / (1.0 - phi);
    } else {
      v += (T - 1.0) * (1.0 + phi * phi) / (s2 * s2);
      if (priors->phi_prior_squared)
        v += (a - 1.0) * 2.0 * (1.0 - phi * phi) / ((1.0 + phi * phi) * (1.0 + phi * phi)) -
             (b - 1.0) * (2.0 + 2.0 * phi * phi) / (s2 * s2);
      else
        v += -(a - 1.0) / ((1.0 + phi) * (1.0 + phi)) - (b - 1.0) / ((1.0 - phi) * (1.0 - phi));
    }
    return v;
  }
};

}  // namespace detail

inline Eigen::VectorXd grad_phi(const ModelDesign& d, const PriorConfig& priors,
                                const VariationalState& st) {
  const PhiCoeffs pc = phi_coefficients(d, st);
  Eigen::VectorXd g(st.phi.size());
  for (int i = 0; i < st.phi.size(); ++i) {
    const detail::PhiSection sec{pc.c1[i], pc.c2[i], pc.c3[i], d.dims.T, &priors};
    g[i] = sec.derivative(st.phi[i], 1);
  }
  return g;
}

/* Per-coordinate damped Newton; the coefficients decouple the coordinates
 * exactly, so each one runs to stationarity on its own section. */
inline void update_phi(VariationalState& st, const ModelDesign& d, const PriorConfig& priors,
                       const CaviConfig& cfg, std::vector<std::string>* warnings = nullptr) {
  const PhiCoeffs pc = phi_coefficients(d, st);
  for (int i = 0; i < st.phi.size(); ++i) {
    const detail::PhiSection sec{pc.c1[i], pc.c2[i], pc.c3[i], d.dims.T, &priors};
    double phi = st.phi[i];
    std::optional<double> f0 = sec.value(phi);
    if (!f0) {
      detail::warn(warnings, "update_phi: coordinate " + std::to_string(i) + " inadmissible; skipped");
      continue;
    }
    for (int it = 0; it < cfg.newton_max_inner; ++it) {
      const double g1 = sec.derivative(phi, 1);
      const double h = sec.derivative(phi, 2);
      const double dir = (h < 0.0) ? -g1 / h : g1 / (1.0 + std::abs(g1));
      if (!std::isfinite(dir)) break;
      double t = 1.0;
      double cand = phi;
      std::optional<double> accepted;
      for (int ls = 0; ls < 60; ++ls) {
        cand = std::clamp(phi + t * dir, -cfg.phi_bound, cfg.phi_bound);
        const std::optional<double> f = sec.value(cand);
        if (f && *f >= *f0 + cfg.backtrack_armijo * g1 * (cand - phi) - 1e-14 * (1.0 + std::abs(*f0))) {
          accepted = f;
          break;
        }
        t *= cfg.backtrack_shrink;
        if (t < 1e-15) break;
      }
      if (!accepted) break;
      const bool stalled = *accepted - *f0 <= 1e-13 * (1.0 + std::abs(*f0)) &&
                           std::abs(cand - phi) <= 1e-12 * (1.0 + std::abs(phi));
      phi = cand;
      f0 = accepted;
      if (stalled || std::abs(g1) <= 1e-12 * (1.0 + std::abs(*f0))) break;
    }
    st.phi[i] = phi;
  }
}

/* ---------------------------------------------------------- wishart update */

/* Upper-triangle (including diagonal) packing, column by column. */
inline int vech_upper_size(int n) { return n * (n + 1) / 2; }

inline Eigen::MatrixXd vech_upper_unpack(const Eigen::VectorXd& v, int n) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  int idx = 0;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i <= j; ++i) m(i, j) = v[idx++];
  return m;
}

inline Eigen::VectorXd vech_upper_pack(const Eigen::MatrixXd& m) {
  const int n = static_cast<int>(m.rows());
  Eigen::VectorXd v(vech_upper_size(n));
  int idx = 0;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i <= j; ++i) v[idx++] = m(i, j);
  return v;
}

/* All terms of the bound touched by one Wishart factor (cause side or region
 * side), as a function of that factor's degrees of freedom and Cholesky
 * scale.  `stats` must come from latent_stats on the current state. */
inline std::optional<double> wishart_objective(const ModelDesign& d, const PriorConfig& priors,
                                               const VariationalState& st, bool cause_side,
                                               const LatentStats& stats, double delta,
                                               const Eigen::MatrixXd& v) {
  const int L = d.dims.L, K = d.dims.K, T = d.dims.T;
  const int dim = cause_side ? K : L;
  if (!(delta > dim - 1)) return std::nullopt;
  for (int i = 0; i < dim; ++i)
    if (!(v(i, i) > 0)) return std::nullopt;

  const double dqk = cause_side ? delta : st.delta_qk;
  const double dql = cause_side ? st.delta_ql : delta;
  const Eigen::MatrixXd& vk = cause_side ? v : st.v_qk;
  const Eigen::MatrixXd& vl = cause_side ? st.v_ql : v;
  const ExpectedRCums c = expected_r_cums(st.phi, L, K, dqk, dql);
  const Eigen::MatrixXd w = Eigen::kroneckerProduct(vk, vl).eval();
  double f = -0.5 * latent_trace(c, w, w, stats);
  const double mult = cause_side ? L * T : K * T;  // companion dimension times T
  double sum_dg = 0.0;
  for (int j = 1; j <= dim; ++j) sum_dg += digamma(0.5 * (delta - j + 1));
  f += 0.5 * mult * (2.0 * v.diagonal().array().log().sum() + sum_dg);
  const double dp = cause_side ? priors.delta_k : priors.delta_l;
  const double th = cause_side ? priors.theta_k : priors.theta_l;
  f += elbo_wishart_term(dim, dp, th, delta, v);
  return f;
}

/* Exact gradient in (delta, vech-upper V) for one Wishart factor. */
inline Eigen::VectorXd wishart_grad(const ModelDesign& d, const PriorConfig& priors,
                                    const VariationalState& st, bool cause_side) {
  const int L = d.dims.L, K = d.dims.K, T = d.dims.T;
  const int dim = cause_side ? K : L;
  const LatentStats stats = latent_stats(d, st);
  const double delta = cause_side ? st.delta_qk : st.delta_ql;
  const Eigen::MatrixXd v = cause_side ? st.v_qk : st.v_ql;
  const Eigen::MatrixXd& vother = cause_side ? st.v_ql : st.v_qk;
  const double mult = cause_side ? L * T : K * T;
  const double dp = cause_side ? priors.delta_k : priors.delta_l;
  const double th = cause_side ? priors.theta_k : priors.theta_l;

  const ExpectedRCums c = expected_r_cums(st.phi, L, K, st.delta_qk, st.delta_ql);
  const ExpectedRCums dc =
      delta_derivative_of_expectation(st.phi, L, K, st.delta_qk, st.delta_ql, cause_side);
  const Eigen::MatrixXd w = Eigen::kroneckerProduct(st.v_qk, st.v_ql).eval();

  Eigen::VectorXd g(1 + vech_upper_size(dim));
  double sum_tri = 0.0;
  for (int j = 1; j <= dim; ++j) sum_tri += trigamma(0.5 * (delta - j + 1));
  g[0] = -0.5 * latent_trace(dc, w, w, stats) + 0.25 * mult * sum_tri +
         0.25 * (dp - delta) * sum_tri - 0.5 * v.squaredNorm() / th + 0.5 * dim;

  int idx = 1;
  for (int j = 0; j < dim; ++j)
    for (int i = 0; i <= j; ++i) {
      Eigen::MatrixXd e = Eigen::MatrixXd::Zero(dim, dim);
      e(i, j) = 1.0;
      const Eigen::MatrixXd dw = cause_side ? Eigen::kroneckerProduct(e, vother).eval()
                                            : Eigen::kroneckerProduct(vother, e).eval();
      double gv = -latent_trace(c, dw, w, stats);
      if (i == j) gv += (mult + dp) / v(i, i);
      gv -= delta / th * v(i, j);
      g[idx++] = gv;
    }
  return g;
}

/* Joint Newton-or-Cauchy ascent over (delta, vech-upper V) for one side:
 * both candidates are projected and backtracked, the better one is taken. */
inline void update_wishart(VariationalState& st, const ModelDesign& d, const PriorConfig& priors,
                           const CaviConfig& cfg, bool cause_side,
                           std::vector<std::string>* warnings = nullptr) {
  const int L = d.dims.L, K = d.dims.K, T = d.dims.T;
  const int dim = cause_side ? K : L;
  const int nv = vech_upper_size(dim);
  const LatentStats stats = latent_stats(d, st);
  const double mult = cause_side ? L * T : K * T;
  const double dp = cause_side ? priors.delta_k : priors.delta_l;
  const double th = cause_side ? priors.theta_k : priors.theta_l;

  auto objective = [&](const Eigen::VectorXd& x) -> std::optional<double> {
    return wishart_objective(d, priors, st, cause_side, stats, x[0],
                             vech_upper_unpack(x.tail(nv), dim));
  };
  auto project = [&](Eigen::VectorXd x) {
    x[0] = std::max(x[0], dim - 1.0 + 1e-6);
    int idx = 1;
    for (int j = 0; j < dim; ++j)
      for (int i = 0; i <= j; ++i) {
        if (i == j) x[idx] = std::max(x[idx], 1e-8);
        ++idx;
      }
    return x;
  };

  auto derivatives = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g, Eigen::MatrixXd& h) {
    const double delta = x[0];
    const Eigen::MatrixXd v = vech_upper_unpack(x.tail(nv), dim);
    const double dqk = cause_side ? delta : st.delta_qk;
    const double dql = cause_side ? st.delta_ql : delta;
    const Eigen::MatrixXd& vother = cause_side ? st.v_ql : st.v_qk;
    const Eigen::MatrixXd vk = cause_side ? v : st.v_qk;
    const Eigen::MatrixXd vl = cause_side ? st.v_ql : v;
    const ExpectedRCums c = expected_r_cums(st.phi, L, K, dqk, dql);
    const ExpectedRCums dc = delta_derivative_of_expectation(st.phi, L, K, dqk, dql, cause_side);
    const Eigen::MatrixXd w = Eigen::kroneckerProduct(vk, vl).eval();

    g.resize(1 + nv);
    h = Eigen::MatrixXd::Zero(1 + nv, 1 + nv);
    double sum_tri = 0.0, sum_tet = 0.0;
    for (int j = 1; j <= dim; ++j) {
      sum_tri += trigamma(0.5 * (delta - j + 1));
      sum_tet += tetragamma(0.5 * (delta - j + 1));
    }
    /* the cumulative diagonals are linear in delta, so the trace term has no
     * second delta derivative */
    g[0] = -0.5 * latent_trace(dc, w, w, stats) + 0.25 * mult * sum_tri +
           0.25 * (dp - delta) * sum_tri - 0.5 * v.squaredNorm() / th + 0.5 * dim;
    h(0, 0) = 0.125 * mult * sum_tet - 0.25 * sum_tri + 0.125 * (dp - delta) * sum_tet;

    std::vector<Eigen::MatrixXd> dws(nv);
    int idx = 0;
    for (int j = 0; j < dim; ++j)
      for (int i = 0; i <= j; ++i) {
        Eigen::MatrixXd e = Eigen::MatrixXd::Zero(dim, dim);
        e(i, j) = 1.0;
        dws[idx++] = cause_side ? Eigen::kroneckerProduct(e, vother).eval()
                                : Eigen::kroneckerProduct(vother, e).eval();
      }
    idx = 0;
    for (int j = 0; j < dim; ++j)
      for (int i = 0; i <= j; ++i) {
        double gv = -latent_trace(c, dws[idx], w, stats);
        if (i == j) gv += (mult + dp) / v(i, i);
        gv -= delta / th * v(i, j);
        g[1 + idx] = gv;
        h(0, 1 + idx) = h(1 + idx, 0) = -latent_trace(dc, dws[idx], w, stats) - v(i, j) / th;
        ++idx;
      }
    for (int a = 0; a < nv; ++a)
      for (int b = a; b < nv; ++b) {
        double hv = -latent_trace(c, dws[a], dws[b], stats);
        if (a == b) hv -= delta / th;
        h(1 + a, 1 + b) = h(1 + b, 1 + a) = hv;
      }
    idx = 0;
    for (int j = 0; j < dim; ++j)
      for (int i = 0; i <= j; ++i) {
        if (i == j) h(1 + idx, 1 + idx) -= (mult + dp) / (v(i, i) * v(i, i));
        ++idx;
      }
  };

  Eigen::VectorXd x(1 + nv);
  x[0] = cause_side ? st.delta_qk : st.delta_ql;
  x.tail(nv) = vech_upper_pack(cause_side ? st.v_qk : st.v_ql);
  std::optional<double> f0 = objective(x);
  if (!f0) {
    detail::warn(warnings, "update_wishart: entry point inadmissible; skipped");
    return;
  }

  for (int it = 0; it < cfg.newton_max_inner; ++it) {
    Eigen::VectorXd g;
    Eigen::MatrixXd h;
    derivatives(x, g, h);

    std::optional<Eigen::VectorXd> best;
    double best_f = *f0;
    double headroom = 0.0;  // best first-order improvement either candidate promised

    const Eigen::VectorXd dn = -h.ldlt().solve(g);
    if (dn.allFinite()) {
      headroom = std::max(headroom, g.dot(dn));
      auto cand = detail::backtrack(x, dn, g.dot(dn), *f0, objective, project, cfg);
      if (cand) {
        const double f = *objective(*cand);
        if (f > best_f) {
          best = cand;
          best_f = f;
        }
      }
    }
    /* steepest-ascent candidate with a curvature-matched first step */
    const double curv = -g.dot(h.selfadjointView<Eigen::Upper>() * g);
    const double t0 = (curv > 0) ? g.squaredNorm() / curv : 1.0 / (1.0 + g.norm());
    const Eigen::VectorXd dcauchy = t0 * g;
    headroom = std::max(headroom, g.dot(dcauchy));
    auto candc = detail::backtrack(x, dcauchy, g.dot(dcauchy), *f0, objective, project, cfg);
    if (candc) {
      const double f = *objective(*candc);
      if (f > best_f) {
        best = candc;
        best_f = f;
      }
    }

    if (!best) {
      /* failing to improve is only abnormal when the local model promised a
       * material gain; at a stationary point it is the expected exit */
      if (it == 0 && headroom > 1e-9 * (1.0 + std::abs(*f0)))
        detail::warn(warnings, "update_wishart: neither candidate improved the bound; unchanged");
      break;
    }
    const bool stalled = best_f - *f0 <= 1e-12 * (1.0 + std::abs(*f0));
    x = *best;
    f0 = best_f;
    if (stalled) break;
  }

  if (cause_side) {
    st.delta_qk = x[0];
    st.v_qk = vech_upper_unpack(x.tail(nv), dim);
  } else {
    st.delta_ql = x[0];
    st.v_ql = vech_upper_unpack(x.tail(nv), dim);
  }
}

/* ------------------------------------------------------------------ sweep */

inline FitReport run_cavi(const ModelDesign& d, const PanelView& view, const PriorConfig& priors_in,
                          const CaviConfig& cfg, std::optional<VariationalState> init = std::nullopt) {
  const auto t_start = std::chrono::steady_clock::now();
  const PriorConfig priors = priors_in.resolved(d.dims);
  FitReport rep;
  rep.state = init ? *init
                   : (cfg.random_init ? random_init(d, view, cfg.seed) : init_state(d, view));
  check_state(rep.state, d);

  /* numeric trouble inside one block is recoverable (skip and warn);
   * anything else is structural and stops the sweep with the partial trace */
  auto guarded = [&](const char* name, auto&& fn) {
    try {
      fn();
    } catch (const NumericOverflow& e) {
      detail::warn(&rep.warnings, std::string(name) + " skipped: " + e.what());
    } catch (const SingularSystem& e) {
      detail::warn(&rep.warnings, std::string(name) + " skipped: " + e.what());
    }
  };

  double elbo = elbo_total(d, view, priors, rep.state);
  rep.elbo_trace.push_back(elbo);
  try {
    for (int sweep = 1; sweep <= cfg.max_sweeps; ++sweep) {
      guarded("update_m", [&] { update_m(rep.state, d, view, priors, cfg, &rep.warnings); });
      guarded("update_M", [&] { update_M(rep.state, d, view, priors, cfg, &rep.warnings); });
      guarded("update_lambda", [&] { update_lambda(rep.state, d, priors, cfg, &rep.warnings); });
      if (d.q() > 0) {
        guarded("update_mu_sigma", [&] { update_mu_sigma(rep.state, d, priors, cfg, &rep.warnings); });
        guarded("update_phi", [&] { update_phi(rep.state, d, priors, cfg, &rep.warnings); });
        guarded("update_wishart(regions)",
                [&] { update_wishart(rep.state, d, priors, cfg, false, &rep.warnings); });
        guarded("update_wishart(causes)",
                [&] { update_wishart(rep.state, d, priors, cfg, true, &rep.warnings); });
      }
      const double next = elbo_total(d, view, priors, rep.state);
      rep.elbo_trace.push_back(next);
      rep.sweeps = sweep;
      if (std::abs(next - elbo) <= cfg.elbo_rel_tol * (1.0 + std::abs(next))) {
        rep.converged = true;
        elbo = next;
        break;
      }
      elbo = next;
    }
  } catch (const Error& e) {
    rep.warnings.push_back(std::string("aborted: ") + e.what());
    rep.converged = false;
  }
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return rep;
}

inline FitReport run_cavi(const PanelDataset& data, const PriorConfig& priors, const CaviConfig& cfg,
                          const SplineOptions& spline_opt = {}) {
  const ModelDesign d = build_design(data, spline_opt);
  const PanelView view = align_panel(data);
  return run_cavi(d, view, priors, cfg);
}

}  // namespace dgam
