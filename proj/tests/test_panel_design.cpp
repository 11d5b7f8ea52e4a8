#include <catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "dgam/design.hpp"
#include "dgam/errors.hpp"
#include "dgam/panel.hpp"
#include "dgam/simulate.hpp"

using dgam::Dims;
using dgam::PanelDataset;
using dgam::PanelRecord;

namespace {

PanelDataset full_grid(const Dims& d) {
  return dgam::make_covariate_grid(d, 314);
}

}  // namespace

TEST_CASE("complete grid with positive offsets validates") {
  const PanelDataset data = full_grid({2, 2, 2, 2, 3});
  REQUIRE(data.records.size() == 48);
  CHECK_NOTHROW(dgam::validate_dataset(data));
}

TEST_CASE("validation pinpoints structural defects") {
  const Dims d{2, 2, 2, 2, 3};

  SECTION("a missing cell is reported") {
    PanelDataset data = full_grid(d);
    data.records.pop_back();
    CHECK_THROWS_AS(dgam::validate_dataset(data), dgam::MissingCell);
  }
  SECTION("a duplicated cell is reported") {
    PanelDataset data = full_grid(d);
    data.records.push_back(data.records.front());
    CHECK_THROWS_AS(dgam::validate_dataset(data), dgam::DuplicateCell);
  }
  SECTION("zero or negative offsets are rejected") {
    PanelDataset data = full_grid(d);
    data.records[5].offset = 0.0;
    CHECK_THROWS_AS(dgam::validate_dataset(data), dgam::NonPositiveOffset);
    data.records[5].offset = -2.0;
    CHECK_THROWS_AS(dgam::validate_dataset(data), dgam::NonPositiveOffset);
  }
  SECTION("stringency must be shared within a (region, month) pair") {
    PanelDataset data = full_grid(d);
    // records 0 and 1 differ only in gender, so they share (region, month)
    PanelRecord& a = data.records[0];
    for (PanelRecord& r : data.records) {
      if (&r != &a && r.region == a.region && r.month == a.month) {
        r.stringency = a.stringency + 0.5;
        break;
      }
    }
    CHECK_THROWS_AS(dgam::validate_dataset(data), dgam::StringencyMismatch);
  }
  SECTION("ids outside the declared dimensions are rejected") {
    PanelDataset data = full_grid(d);
    data.records[3].month = d.T;  // one past the end
    CHECK_THROWS_AS(dgam::validate_dataset(data), dgam::IdOutOfRange);
  }
  SECTION("negative counts are rejected") {
    PanelDataset data = full_grid(d);
    data.records[7].count = -1;
    CHECK_THROWS_AS(dgam::validate_dataset(data), dgam::ParseError);
  }
}

TEST_CASE("canonical row order is month-major then cause, region, age, gender") {
  const Dims d{2, 3, 2, 2, 4};
  PanelRecord r;
  r.region = 1; r.cause = 2; r.age_group = 0; r.gender = 1; r.month = 3;
  const long long expect = (((3LL * d.K + 2) * d.L + 1) * d.A + 0) * d.G + 1;
  CHECK(dgam::canonical_row(d, r) == expect);

  // bijection over the full grid
  const PanelDataset data = full_grid(d);
  std::vector<char> hit(static_cast<size_t>(d.cells()), 0);
  for (const PanelRecord& rec : data.records) {
    const long long i = dgam::canonical_row(d, rec);
    REQUIRE(i >= 0);
    REQUIRE(i < d.cells());
    REQUIRE(!hit[static_cast<size_t>(i)]);
    hit[static_cast<size_t>(i)] = 1;
  }
}

TEST_CASE("latent coordinate indexing is a bijection with region fastest") {
  const Dims d{3, 4, 2, 2, 1};
  std::vector<char> hit(static_cast<size_t>(d.lk()), 0);
  for (int k = 0; k < d.K; ++k)
    for (int l = 0; l < d.L; ++l) {
      const int i = d.latent_coord(l, k);
      CHECK(i == k * d.L + l);
      REQUIRE(!hit[static_cast<size_t>(i)]);
      hit[static_cast<size_t>(i)] = 1;
    }
}

TEST_CASE("design matrix dimensions follow the counting identities") {
  const Dims d{2, 2, 2, 2, 3};
  const PanelDataset data = full_grid(d);
  const dgam::ModelDesign md = dgam::build_design(data, dgam::SplineOptions{4, 0});

  const int j_str = 4;
  const int j_age = 3;  // max(3, A)
  CHECK(md.n_param == 1 + (d.G - 1));
  // smooths: stringency, age, cause_by_stringency, cause_by_age, gender_by_age
  REQUIRE(md.smooths.size() == 5);
  const int p_expect = 2 + j_str + j_age + (d.K - 1) * j_str + (d.K - 1) * j_age + (d.G - 1) * j_age;
  CHECK(md.p == p_expect);
  CHECK(md.q() == d.L * d.K * d.T);
  CHECK(md.q() == 12);
  CHECK(md.n_rows() == 48);
  CHECK(md.total_cols() == md.p + 12);
  CHECK(md.n_lambda() == 10);

  // smooth column blocks tile [n_param, p) exactly
  int col = md.n_param;
  for (const auto& s : md.smooths) {
    CHECK(s.col_offset == col);
    col += s.n_cols();
  }
  CHECK(col == md.p);
}

TEST_CASE("latent incidence block has exactly one unit entry per row") {
  const Dims d{2, 2, 2, 2, 3};
  const PanelDataset data = full_grid(d);
  const dgam::ModelDesign md = dgam::build_design(data, dgam::SplineOptions{4, 0});

  Eigen::MatrixXd dense = Eigen::MatrixXd(md.x);
  const Eigen::MatrixXd latent = dense.rightCols(md.q());
  for (int r = 0; r < md.n_rows(); ++r) {
    int ones = 0;
    for (int c = 0; c < md.q(); ++c) {
      if (latent(r, c) == 1.0) ++ones;
      else CHECK(latent(r, c) == 0.0);
    }
    CHECK(ones == 1);
  }
  // each latent column is hit by exactly A*G rows
  for (int c = 0; c < md.q(); ++c)
    CHECK(latent.col(c).sum() == Catch::Approx(double(d.A * d.G)));

  // and the unit sits at the column named by latent_col for the row's cell
  for (const PanelRecord& rec : data.records) {
    const long long r = dgam::canonical_row(d, rec);
    const int c = md.latent_col(rec.region, rec.cause, rec.month) - md.p;
    CHECK(latent(r, c) == 1.0);
  }
}

TEST_CASE("baseline factor levels have all-zero interaction columns") {
  const Dims d{2, 3, 3, 2, 2};
  const PanelDataset data = full_grid(d);
  const dgam::ModelDesign md = dgam::build_design(data, dgam::SplineOptions{4, 0});
  Eigen::MatrixXd dense = Eigen::MatrixXd(md.x);

  for (const auto& s : md.smooths) {
    if (s.by == dgam::ByFactor::none) continue;
    for (const PanelRecord& rec : data.records) {
      const int level = (s.by == dgam::ByFactor::cause) ? rec.cause : rec.gender;
      const long long r = dgam::canonical_row(d, rec);
      const Eigen::RowVectorXd row_block = dense.row(r).segment(s.col_offset, s.n_cols());
      if (level == 0) {
        CHECK(row_block.cwiseAbs().maxCoeff() == 0.0);
      } else {
        // entries live only in the block for this level
        const int j = s.marginal_size();
        for (int b = 0; b < s.blocks(); ++b) {
          const double mass = row_block.segment(b * j, j).cwiseAbs().sum();
          if (b == level - 1) CHECK(mass > 0.0);
          else CHECK(mass == 0.0);
        }
      }
    }
  }
}

TEST_CASE("by-factor penalties repeat the marginal penalty per block") {
  const Dims d{2, 3, 2, 2, 2};
  const PanelDataset data = full_grid(d);
  const dgam::ModelDesign md = dgam::build_design(data, dgam::SplineOptions{4, 0});

  const auto* cbs = &md.smooths[2];
  REQUIRE(cbs->name == "cause_by_stringency");
  CHECK(cbs->blocks() == d.K - 1);
  const Eigen::MatrixXd s1f = cbs->s1_full();
  const int j = cbs->marginal_size();
  REQUIRE(s1f.rows() == (d.K - 1) * j);
  CHECK(s1f.rows() == 8);
  for (int b = 0; b < cbs->blocks(); ++b)
    CHECK((s1f.block(b * j, b * j, j, j) - cbs->s1m).cwiseAbs().maxCoeff() == 0.0);
  // off-diagonal blocks vanish
  CHECK((s1f.block(0, j, j, j)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("fixed-effect rows evaluate the centered spline bases") {
  const Dims d{2, 2, 2, 2, 3};
  const PanelDataset data = full_grid(d);
  const dgam::ModelDesign md = dgam::build_design(data, dgam::SplineOptions{4, 0});
  const dgam::PanelView view = dgam::align_panel(data);
  Eigen::MatrixXd dense = Eigen::MatrixXd(md.x);

  // intercept column
  CHECK((dense.col(0).array() == 1.0).all());
  // gender dummy: 1 exactly on gender-1 rows
  for (const PanelRecord& rec : data.records) {
    const long long r = dgam::canonical_row(d, rec);
    CHECK(dense(r, 1) == (rec.gender == 1 ? 1.0 : 0.0));
  }

  // main stringency smooth rows equal the centered basis of the row covariate
  const auto& str = md.smooths[0];
  REQUIRE(str.name == "stringency");
  const Eigen::MatrixXd expect =
      dgam::smooth_basis_at(str, view.stringency);
  const Eigen::MatrixXd got = dense.middleCols(str.col_offset, str.n_cols());
  CHECK((got - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("degenerate covariates and tiny dimensions are rejected") {
  CHECK_THROWS_AS(dgam::build_design(full_grid({2, 2, 1, 2, 2})), dgam::DegenerateCovariate);
  CHECK_THROWS_AS(dgam::build_design(full_grid({2, 2, 3, 2, 2}), dgam::SplineOptions{2, 0}),
                  dgam::KnotCountTooSmall);
}

TEST_CASE("single-level factors drop their interaction smooths") {
  // K = 1: no cause interactions; G = 1: no gender dummy or interaction
  const dgam::ModelDesign md = dgam::build_design(full_grid({2, 1, 3, 1, 2}), dgam::SplineOptions{4, 0});
  REQUIRE(md.smooths.size() == 2);
  CHECK(md.smooths[0].name == "stringency");
  CHECK(md.smooths[1].name == "age");
  CHECK(md.n_param == 1);
}

TEST_CASE("production-scale dimension arithmetic") {
  // raw panel: 21 regions x 18 causes x 10 age groups x 2 genders x 72 months
  const Dims raw{21, 18, 10, 2, 72};
  CHECK(raw.rows() == 544320LL);

  // analysis panel after excluding one cause: 17 causes remain
  const Dims d{21, 17, 10, 2, 72};
  CHECK(d.rows() == 514080LL);            // 7,140 series x 72 months
  CHECK(1LL * d.lk() * d.T == 25704LL);   // latent columns

  // the same identities hold for an actually-assembled mid-size design
  const Dims mid{5, 4, 4, 2, 10};
  const dgam::ModelDesign md = dgam::build_design(full_grid(mid), dgam::SplineOptions{5, 4});
  CHECK(md.n_rows() == mid.rows());
  CHECK(md.q() == mid.lk() * mid.T);
  CHECK(md.x.cols() == md.p + md.q());
}
