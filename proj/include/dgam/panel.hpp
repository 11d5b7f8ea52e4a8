#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "dgam/errors.hpp"

namespace dgam {

/* Grid dimensions: regions, causes, age groups, genders, months. */
struct Dims {
  int L = 0, K = 0, A = 0, G = 0, T = 0;

  long long cells() const { return 1LL * L * K * A * G * T; }
  int lk() const { return L * K; }
  long long rows() const { return cells(); }

  /* latent coordinate of a (region, cause) pair; region varies fastest */
  int latent_coord(int l, int k) const { return k * L + l; }
};

/* One observed panel cell. */
struct PanelRecord {
  int region = 0;
  int cause = 0;
  int age_group = 0;
  int gender = 0;
  int month = 0;           // 0-based
  long long count = 0;
  double offset = 1.0;     // exposure, > 0
  double stringency = 0.0; // shared within (region, month)
};

struct PanelDataset {
  Dims dims;
  std::vector<PanelRecord> records;
};

/* Canonical row order: month-major, then cause, region, age, gender.
 * With this order the latent incidence block of the design matrix is exactly
 * an identity over (month, cause, region) cells expanded by an all-ones
 * column per (age, gender) cell. */
inline long long canonical_row(const Dims& d, const PanelRecord& r) {
  return (((1LL * r.month * d.K + r.cause) * d.L + r.region) * d.A + r.age_group) * d.G + r.gender;
}

inline std::string cell_label(const PanelRecord& r) {
  return "(region=" + std::to_string(r.region) + ", cause=" + std::to_string(r.cause) +
         ", age=" + std::to_string(r.age_group) + ", gender=" + std::to_string(r.gender) +
         ", month=" + std::to_string(r.month) + ")";
}

/* Complete-grid validation: exactly one record per cell, positive offsets,
 * stringency constant within (region, month). */
inline void validate_dataset(const PanelDataset& data) {
  const Dims& d = data.dims;
  if (d.L < 1 || d.K < 1 || d.A < 1 || d.G < 1 || d.T < 1)
    throw InvalidState("validate_dataset: all dimensions must be positive");

  const long long n = d.cells();
  std::vector<char> seen(static_cast<size_t>(n), 0);
  std::vector<double> stringency(static_cast<size_t>(d.L) * d.T);
  std::vector<char> str_set(static_cast<size_t>(d.L) * d.T, 0);

  for (const PanelRecord& r : data.records) {
    if (r.region < 0 || r.region >= d.L || r.cause < 0 || r.cause >= d.K ||
        r.age_group < 0 || r.age_group >= d.A || r.gender < 0 || r.gender >= d.G ||
        r.month < 0 || r.month >= d.T)
      throw IdOutOfRange("validate_dataset: id outside dims at " + cell_label(r));
    if (r.count < 0)
      throw ParseError("validate_dataset: negative count at " + cell_label(r));
    if (!(r.offset > 0.0))
      throw NonPositiveOffset("validate_dataset: offset must be > 0 at " + cell_label(r));

    const long long idx = canonical_row(d, r);
    if (seen[static_cast<size_t>(idx)])
      throw DuplicateCell("validate_dataset: duplicate record at " + cell_label(r));
    seen[static_cast<size_t>(idx)] = 1;

    const size_t lt = static_cast<size_t>(r.region) * d.T + r.month;
    if (str_set[lt]) {
      if (stringency[lt] != r.stringency)
        throw StringencyMismatch("validate_dataset: stringency differs within (region=" +
                                 std::to_string(r.region) + ", month=" + std::to_string(r.month) + ")");
    } else {
      stringency[lt] = r.stringency;
      str_set[lt] = 1;
    }
  }

  if (static_cast<long long>(data.records.size()) != n)
    for (long long i = 0; i < n; ++i)
      if (!seen[static_cast<size_t>(i)]) {
        /* decode i back to a cell for the message */
        long long rest = i;
        const int g = static_cast<int>(rest % d.G); rest /= d.G;
        const int a = static_cast<int>(rest % d.A); rest /= d.A;
        const int l = static_cast<int>(rest % d.L); rest /= d.L;
        const int k = static_cast<int>(rest % d.K); rest /= d.K;
        const int t = static_cast<int>(rest);
        PanelRecord miss; miss.region = l; miss.cause = k; miss.age_group = a; miss.gender = g; miss.month = t;
        throw MissingCell("validate_dataset: no record for " + cell_label(miss));
      }
}

/* Count, offset and stringency vectors in canonical row order. */
struct PanelView {
  Eigen::VectorXd y;
  Eigen::VectorXd offset;
  Eigen::VectorXd log_offset;
  Eigen::VectorXd stringency;
  Eigen::VectorXd age;  // age_group as a real covariate
};

inline PanelView align_panel(const PanelDataset& data) {
  const long long n = data.dims.cells();
  PanelView v;
  v.y.resize(n); v.offset.resize(n); v.log_offset.resize(n);
  v.stringency.resize(n); v.age.resize(n);
  for (const PanelRecord& r : data.records) {
    const long long i = canonical_row(data.dims, r);
    v.y[i] = static_cast<double>(r.count);
    v.offset[i] = r.offset;
    v.log_offset[i] = std::log(r.offset);
    v.stringency[i] = r.stringency;
    v.age[i] = static_cast<double>(r.age_group);
  }
  return v;
}

}  // namespace dgam
