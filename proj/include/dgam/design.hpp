#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <string>
#include <vector>

#include "dgam/errors.hpp"
#include "dgam/panel.hpp"
#include "dgam/spline.hpp"

namespace dgam {

enum class Covariate { stringency, age };
enum class ByFactor { none, cause, gender };

/* One additive term: a marginal natural-cubic basis, optionally expanded into
 * one block per non-baseline level of a factor.  Main-effect terms are
 * column-centered against the data; by-factor blocks are left raw so baseline
 * rows carry exact zeros. */
struct DesignSmooth {
  std::string name;
  Covariate covariate = Covariate::stringency;
  ByFactor by = ByFactor::none;
  int levels = 1;       // factor level count when by != none
  int col_offset = 0;   // first column in the design matrix
  Eigen::VectorXd knots;
  Eigen::RowVectorXd centering;  // per marginal column; zero row for by-factor terms
  Eigen::MatrixXd s1m, s2m;      // marginal penalty pair

  int marginal_size() const { return static_cast<int>(knots.size()); }
  int blocks() const { return by == ByFactor::none ? 1 : levels - 1; }
  int n_cols() const { return blocks() * marginal_size(); }

  /* Full-block penalties: identical marginal penalty per level block. */
  Eigen::MatrixXd s1_full() const { return block_repeat(s1m); }
  Eigen::MatrixXd s2_full() const { return block_repeat(s2m); }

 private:
  Eigen::MatrixXd block_repeat(const Eigen::MatrixXd& m) const {
    const int j = marginal_size(), nb = blocks();
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(j * nb, j * nb);
    for (int b = 0; b < nb; ++b) out.block(b * j, b * j, j, j) = m;
    return out;
  }
};

struct SplineOptions {
  int knots_stringency = 10;
  int knots_age = 0;  // 0 = one knot per level (minimum 3)
};

/* Design matrix and the metadata needed to interpret its columns.
 *
 * Column layout: [intercept | gender dummies | smooth blocks ... | latent].
 * Rows follow canonical_row() order, which makes the latent incidence block
 * an identity over (month, cause, region) cells expanded by ones over the
 * (age, gender) cells of each. */
struct ModelDesign {
  Dims dims;
  int n_param = 0;  // intercept + gender dummies
  int p = 0;        // all fixed-effect columns
  std::vector<DesignSmooth> smooths;
  Eigen::SparseMatrix<double, Eigen::RowMajor> x;

  int lk() const { return dims.lk(); }
  int q() const { return dims.lk() * dims.T; }
  int total_cols() const { return p + q(); }
  int n_rows() const { return static_cast<int>(x.rows()); }
  int latent_col(int l, int k, int t) const { return p + t * dims.lk() + dims.latent_coord(l, k); }
  int n_lambda() const { return 2 * static_cast<int>(smooths.size()); }
};

inline ModelDesign build_design(const PanelDataset& data, const SplineOptions& opt = {}) {
  validate_dataset(data);
  const Dims& d = data.dims;
  const PanelView view = align_panel(data);
  const long long n = d.rows();

  ModelDesign md;
  md.dims = d;

  /* marginal bases over the full data rows */
  if (opt.knots_stringency < 3) throw KnotCountTooSmall("build_design: need at least 3 stringency knots");
  SmoothSpec str_spec{quantile_knots(view.stringency, opt.knots_stringency)};
  const int ja = opt.knots_age > 0 ? opt.knots_age : std::max(3, d.A);
  if (ja < 3) throw KnotCountTooSmall("build_design: need at least 3 age knots");
  if (d.A < 2) throw DegenerateCovariate("build_design: age covariate is constant (A = 1)");
  SmoothSpec age_spec{uniform_knots(0.0, d.A - 1.0, ja)};

  const Eigen::MatrixXd str_raw = ncs_basis_raw(str_spec.knots, view.stringency);
  const Eigen::MatrixXd age_raw = ncs_basis_raw(age_spec.knots, view.age);
  const Eigen::RowVectorXd str_center = basis_centering(str_raw);
  const Eigen::RowVectorXd age_center = basis_centering(age_raw);
  const PenaltyPair str_pen = penalty_pair(str_spec);
  const PenaltyPair age_pen = penalty_pair(age_spec);

  auto add_smooth = [&](const std::string& name, Covariate cov, ByFactor by, int levels,
                        const SmoothSpec& spec, const Eigen::RowVectorXd& center,
                        const PenaltyPair& pen) {
    DesignSmooth s;
    s.name = name;
    s.covariate = cov;
    s.by = by;
    s.levels = levels;
    s.knots = spec.knots;
    s.centering = (by == ByFactor::none) ? center : Eigen::RowVectorXd::Zero(spec.size());
    s.s1m = pen.s1;
    s.s2m = pen.s2;
    md.smooths.push_back(std::move(s));
  };

  add_smooth("stringency", Covariate::stringency, ByFactor::none, 1, str_spec, str_center, str_pen);
  add_smooth("age", Covariate::age, ByFactor::none, 1, age_spec, age_center, age_pen);
  if (d.K >= 2) {
    add_smooth("cause_by_stringency", Covariate::stringency, ByFactor::cause, d.K, str_spec, str_center, str_pen);
    add_smooth("cause_by_age", Covariate::age, ByFactor::cause, d.K, age_spec, age_center, age_pen);
  }
  if (d.G >= 2)
    add_smooth("gender_by_age", Covariate::age, ByFactor::gender, d.G, age_spec, age_center, age_pen);

  md.n_param = 1 + (d.G - 1);
  int col = md.n_param;
  for (DesignSmooth& s : md.smooths) {
    s.col_offset = col;
    col += s.n_cols();
  }
  md.p = col;

  /* assemble the sparse design matrix */
  const int total = md.p + md.q();
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<size_t>(n) * (3 + 3 * str_spec.size() + 3 * age_spec.size()));

  for (const PanelRecord& rec : data.records) {
    const int r = static_cast<int>(canonical_row(d, rec));
    trip.emplace_back(r, 0, 1.0);
    if (rec.gender > 0) trip.emplace_back(r, rec.gender, 1.0);

    for (const DesignSmooth& s : md.smooths) {
      const Eigen::MatrixXd& raw = (s.covariate == Covariate::stringency) ? str_raw : age_raw;
      const int j = s.marginal_size();
      int block = 0;
      if (s.by == ByFactor::cause) {
        if (rec.cause == 0) continue;
        block = rec.cause - 1;
      } else if (s.by == ByFactor::gender) {
        if (rec.gender == 0) continue;
        block = rec.gender - 1;
      }
      const int base = s.col_offset + block * j;
      for (int c = 0; c < j; ++c) {
        const double v = raw(r, c) - s.centering[c];
        if (v != 0.0) trip.emplace_back(r, base + c, v);
      }
    }

    trip.emplace_back(r, md.latent_col(rec.region, rec.cause, rec.month), 1.0);
  }

  md.x.resize(static_cast<int>(n), total);
  md.x.setFromTriplets(trip.begin(), trip.end());
  md.x.makeCompressed();
  return md;
}

/* Evaluate a smooth's marginal basis on new covariate values, applying the
 * training-data centering so the result matches the design columns. */
inline Eigen::MatrixXd smooth_basis_at(const DesignSmooth& s, const Eigen::VectorXd& x) {
  Eigen::MatrixXd b = ncs_basis_raw(s.knots, x);
  b.rowwise() -= s.centering;
  return b;
}

}  // namespace dgam
