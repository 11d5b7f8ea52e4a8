#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>

#include <cmath>
#include <cstdint>
#include <random>

#include "dgam/design.hpp"
#include "dgam/errors.hpp"
#include "dgam/panel.hpp"

namespace dgam {

/* Generative-side parameters.  beta_star covers every fixed-effect column of
 * a matching design; latent_path holds z_t (row t, coordinate k*L+l). */
struct GroundTruth {
  Eigen::VectorXd beta_star;
  Eigen::VectorXd mu;       // LK
  Eigen::VectorXd phi;      // LK, |phi| < 1
  Eigen::MatrixXd omega_k;  // K x K SPD
  Eigen::MatrixXd omega_l;  // L x L SPD
  Eigen::MatrixXd latent_path;  // T x LK
};

/* Upper-triangular factor with P'P = A. */
inline Eigen::MatrixXd chol_upper(const Eigen::MatrixXd& a, const char* who) {
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) throw SingularSystem(std::string(who) + ": matrix not positive definite");
  return llt.matrixU();  // A = LL' = (L')'L'
}

/* Stationary autoregressive path around mu: the first state is drawn from
 * the stationary law N(mu, (omega_k (x) omega_l)^-1) and each later state
 * follows P(z_t - mu) = Phi P(z_{t-1} - mu) + e_t with e_t ~ N(0, I - Phi^2)
 * coordinatewise. */
inline Eigen::MatrixXd sample_latent_path(const Eigen::VectorXd& mu, const Eigen::VectorXd& phi,
                                          const Eigen::MatrixXd& omega_k, const Eigen::MatrixXd& omega_l,
                                          int T, std::uint64_t seed) {
  const int lk = static_cast<int>(mu.size());
  if (phi.size() != lk) throw InvalidState("sample_latent_path: mu and phi sizes differ");
  if (omega_k.rows() * omega_l.rows() != lk)
    throw InvalidState("sample_latent_path: Kronecker dimensions do not match mu");
  if ((phi.array().abs() >= 1.0).any())
    throw InvalidState("sample_latent_path: need |phi| < 1");
  if (T < 1) throw InvalidState("sample_latent_path: T must be positive");

  const Eigen::MatrixXd omega = Eigen::kroneckerProduct(omega_k, omega_l).eval();
  const Eigen::MatrixXd p = chol_upper(omega, "sample_latent_path");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto draw = [&](int n) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = gauss(rng);
    return v;
  };

  Eigen::MatrixXd path(T, lk);
  const auto solver = p.triangularView<Eigen::Upper>();
  Eigen::VectorXd w = draw(lk);  // whitened state: w_t = P (z_t - mu)
  path.row(0) = (mu + solver.solve(w)).transpose();
  const Eigen::VectorXd noise_sd = (1.0 - phi.array().square()).sqrt();
  for (int t = 1; t < T; ++t) {
    w = phi.cwiseProduct(w) + noise_sd.cwiseProduct(draw(lk));
    path.row(t) = (mu + solver.solve(w)).transpose();
  }
  return path;
}

/* Poisson draws at the model rates.  Covariates and offsets come from the
 * records of `grid`; counts are replaced.  The design must have been built
 * from the same grid. */
inline PanelDataset sample_counts(const PanelDataset& grid, const ModelDesign& design,
                                  const GroundTruth& truth, std::uint64_t seed) {
  if (truth.beta_star.size() != design.p)
    throw InvalidState("sample_counts: beta_star does not match the design's fixed columns");
  if (truth.latent_path.rows() != design.dims.T ||
      truth.latent_path.cols() != design.lk())
    throw InvalidState("sample_counts: latent_path does not match the design dimensions");

  Eigen::VectorXd coef(design.total_cols());
  coef.head(design.p) = truth.beta_star;
  const int lk = design.lk();
  for (int t = 0; t < design.dims.T; ++t)
    coef.segment(design.p + t * lk, lk) = truth.latent_path.row(t).transpose();
  const Eigen::VectorXd eta = design.x * coef;

  PanelDataset out = grid;
  std::mt19937_64 rng(seed);
  for (PanelRecord& rec : out.records) {
    const long long r = canonical_row(out.dims, rec);
    const double rate = rec.offset * std::exp(eta[static_cast<int>(r)]);
    if (!(rate <= 1e12))
      throw NumericOverflow("sample_counts: rate exceeds 1e12 at cell " + cell_label(rec));
    std::poisson_distribution<long long> pois(rate);
    rec.count = pois(rng);
  }
  return out;
}

/* Full covariate grid for synthetic panels: offsets vary mildly per cell and
 * the policy covariate follows a smooth seeded trajectory per (region, month),
 * shared across the cells of that pair as the model requires. */
inline PanelDataset make_covariate_grid(const Dims& dims, std::uint64_t seed,
                                        double offset_scale = 1.0) {
  if (dims.L < 1 || dims.K < 1 || dims.A < 1 || dims.G < 1 || dims.T < 1)
    throw InvalidState("make_covariate_grid: all dimensions must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  Eigen::MatrixXd stringency(dims.L, dims.T);
  for (int l = 0; l < dims.L; ++l) {
    const double phase = 2.0 * M_PI * unif(rng);
    const double amp = 2.0 + 2.0 * unif(rng);
    const double slope = -1.0 + 2.0 * unif(rng);
    for (int t = 0; t < dims.T; ++t) {
      const double u = dims.T > 1 ? static_cast<double>(t) / (dims.T - 1) : 0.0;
      stringency(l, t) = 5.0 + amp * std::sin(2.0 * M_PI * u + phase) + slope * (u - 0.5);
    }
  }

  PanelDataset data;
  data.dims = dims;
  data.records.reserve(static_cast<size_t>(dims.rows()));
  for (int t = 0; t < dims.T; ++t)
    for (int k = 0; k < dims.K; ++k)
      for (int l = 0; l < dims.L; ++l)
        for (int a = 0; a < dims.A; ++a)
          for (int g = 0; g < dims.G; ++g) {
            PanelRecord rec;
            rec.region = l;
            rec.cause = k;
            rec.age_group = a;
            rec.gender = g;
            rec.month = t;
            rec.count = 0;
            rec.offset = offset_scale * (0.5 + unif(rng));
            rec.stringency = stringency(l, t);
            data.records.push_back(rec);
          }
  return data;
}

/* Moderate, seeded ground truth for a given design: smooth coefficients and
 * latent dependence scaled so typical rates stay well inside the overflow
 * guard. */
inline GroundTruth make_ground_truth(const ModelDesign& design, std::uint64_t seed,
                                     double phi_value = 0.6, double base_log_rate = 1.0) {
  const int L = design.dims.L, K = design.dims.K, lk = design.lk();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  GroundTruth truth;
  truth.beta_star = Eigen::VectorXd::Zero(design.p);
  truth.beta_star[0] = base_log_rate;
  for (int j = 1; j < design.n_param; ++j) truth.beta_star[j] = 0.2 * gauss(rng);
  for (const DesignSmooth& s : design.smooths) {
    /* a smooth low-order shape per block: linear-plus-sine in the knot index */
    const int j = s.marginal_size();
    for (int b = 0; b < s.blocks(); ++b) {
      const double amp = 0.1 + 0.1 * unif(rng);
      const double slope = 0.2 * gauss(rng) / std::max(1, j - 1);
      const double phase = 2.0 * M_PI * unif(rng);
      for (int c = 0; c < j; ++c)
        truth.beta_star[s.col_offset + b * j + c] =
            slope * c + amp * std::sin(2.0 * M_PI * c / std::max(1, j - 1) + phase);
    }
  }

  truth.mu = Eigen::VectorXd::Zero(lk);
  for (int i = 0; i < lk; ++i) truth.mu[i] = 0.3 * gauss(rng);
  truth.phi = Eigen::VectorXd::Constant(lk, phi_value);

  auto random_spd = [&](int n) {
    Eigen::MatrixXd a(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) a(i, j) = gauss(rng);
    Eigen::MatrixXd m = a * a.transpose() / n + 0.5 * Eigen::MatrixXd::Identity(n, n);
    /* unit diagonal keeps latent scales comparable across coordinates */
    const Eigen::VectorXd s = m.diagonal().array().rsqrt();
    return Eigen::MatrixXd(s.asDiagonal() * m * s.asDiagonal());
  };
  truth.omega_k = random_spd(K);
  truth.omega_l = random_spd(L);
  truth.latent_path =
      sample_latent_path(truth.mu, truth.phi, truth.omega_k, truth.omega_l, design.dims.T, seed + 1);
  return truth;
}

/* One-call synthetic dataset: covariate grid, seeded truth, Poisson counts. */
inline PanelDataset simulate_dataset(const Dims& dims, std::uint64_t seed,
                                     const SplineOptions& opt = {}, double phi_value = 0.6,
                                     double offset_scale = 1.0, double base_log_rate = 1.0) {
  PanelDataset grid = make_covariate_grid(dims, seed, offset_scale);
  const ModelDesign design = build_design(grid, opt);
  const GroundTruth truth = make_ground_truth(design, seed + 17, phi_value, base_log_rate);
  return sample_counts(grid, design, truth, seed + 42);
}

}  // namespace dgam
