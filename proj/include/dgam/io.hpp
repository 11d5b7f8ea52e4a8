#pragma once

#include <Eigen/Dense>

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dgam/cavi.hpp"
#include "dgam/design.hpp"
#include "dgam/errors.hpp"
#include "dgam/panel.hpp"
#include "dgam/priors.hpp"
#include "dgam/simulate.hpp"
#include "dgam/state.hpp"

namespace dgam {

using ojson = nlohmann::ordered_json;

/* ---------- locale-independent number formatting / parsing ---------- */

/* Shortest decimal form that parses back to the same double. */
inline std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

namespace detail {

inline std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& tok, int line_no, const std::string& what) {
  double v = 0.0;
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last)
    throw ParseError("line " + std::to_string(line_no) + ": invalid " + what + " '" + tok + "'");
  return v;
}

inline long long parse_int(const std::string& tok, int line_no, const std::string& what) {
  long long v = 0;
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last)
    throw ParseError("line " + std::to_string(line_no) + ": invalid " + what + " '" + tok + "'");
  return v;
}

inline bool parse_bool(const std::string& tok, int line_no, const std::string& what) {
  if (tok == "true" || tok == "1") return true;
  if (tok == "false" || tok == "0") return false;
  throw ParseError("line " + std::to_string(line_no) + ": invalid " + what + " '" + tok +
                   "' (use true/false)");
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  size_t start = 0;
  while (true) {
    const size_t pos = line.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
  return out;
}

/* getline that tolerates CRLF input. */
inline bool next_line(std::istream& in, std::string& line) {
  if (!std::getline(in, line)) return false;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return true;
}

}  // namespace detail

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  return in;
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << content;
  if (!out) throw IoError("write failed: " + path);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in = open_input(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/* ---------- panel CSV ---------- */

inline constexpr const char* kPanelHeader = "region,cause,age_group,gender,month,count,offset,stringency";

inline PanelDataset read_panel_csv(std::istream& in, const std::string& origin = "<stream>") {
  std::string line;
  int line_no = 0;
  if (!detail::next_line(in, line)) throw ParseError(origin + ": empty file");
  ++line_no;
  {
    const auto head = detail::split_csv_line(line);
    const auto want = detail::split_csv_line(kPanelHeader);
    if (head != want)
      throw ParseError("line 1: expected header '" + std::string(kPanelHeader) + "', got '" + line + "'");
  }

  PanelDataset data;
  int max_l = -1, max_k = -1, max_a = -1, max_g = -1, max_t = -1;
  while (detail::next_line(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != 8)
      throw ParseError("line " + std::to_string(line_no) + ": expected 8 fields, got " +
                       std::to_string(f.size()));
    PanelRecord rec;
    rec.region = static_cast<int>(detail::parse_int(f[0], line_no, "region"));
    rec.cause = static_cast<int>(detail::parse_int(f[1], line_no, "cause"));
    rec.age_group = static_cast<int>(detail::parse_int(f[2], line_no, "age_group"));
    rec.gender = static_cast<int>(detail::parse_int(f[3], line_no, "gender"));
    rec.month = static_cast<int>(detail::parse_int(f[4], line_no, "month"));
    rec.count = detail::parse_int(f[5], line_no, "count");
    rec.offset = detail::parse_double(f[6], line_no, "offset");
    rec.stringency = detail::parse_double(f[7], line_no, "stringency");
    if (rec.region < 0 || rec.cause < 0 || rec.age_group < 0 || rec.gender < 0 || rec.month < 0)
      throw ParseError("line " + std::to_string(line_no) + ": categorical codes must be nonnegative");
    if (rec.count < 0)
      throw ParseError("line " + std::to_string(line_no) + ": count must be nonnegative");
    max_l = std::max(max_l, rec.region);
    max_k = std::max(max_k, rec.cause);
    max_a = std::max(max_a, rec.age_group);
    max_g = std::max(max_g, rec.gender);
    max_t = std::max(max_t, rec.month);
    data.records.push_back(rec);
  }
  if (data.records.empty()) throw ParseError(origin + ": no data rows");
  data.dims = Dims{max_l + 1, max_k + 1, max_a + 1, max_g + 1, max_t + 1};
  validate_dataset(data);
  return data;
}

inline PanelDataset read_panel_csv(const std::string& path) {
  std::ifstream in = open_input(path);
  return read_panel_csv(in, path);
}

inline void write_panel_csv(std::ostream& out, const PanelDataset& data) {
  out << kPanelHeader << "\n";
  for (const PanelRecord& r : data.records)
    out << r.region << ',' << r.cause << ',' << r.age_group << ',' << r.gender << ',' << r.month
        << ',' << r.count << ',' << format_double(r.offset) << ',' << format_double(r.stringency)
        << "\n";
}

inline void write_panel_csv(const std::string& path, const PanelDataset& data) {
  std::ostringstream ss;
  write_panel_csv(ss, data);
  write_text_file(path, ss.str());
}

/* Remove one cause category and reindex the ids above it. */
inline PanelDataset drop_cause(const PanelDataset& data, int cause_id) {
  if (cause_id < 0 || cause_id >= data.dims.K)
    throw InvalidState("drop_cause: no cause with id " + std::to_string(cause_id));
  if (data.dims.K < 2) throw InvalidState("drop_cause: cannot drop the only cause");
  PanelDataset out;
  out.dims = data.dims;
  out.dims.K -= 1;
  out.records.reserve(data.records.size());
  for (PanelRecord r : data.records) {
    if (r.cause == cause_id) continue;
    if (r.cause > cause_id) r.cause -= 1;
    out.records.push_back(r);
  }
  validate_dataset(out);
  return out;
}

/* ---------- configuration ---------- */

struct FitConfig {
  PriorConfig priors;
  CaviConfig cavi;
  SplineOptions spline;
};

/* Line-oriented `key = value` text; '#' starts a comment; unknown keys are
 * rejected so typos cannot silently fall back to defaults. */
inline FitConfig parse_fit_config(std::istream& in) {
  FitConfig c;
  std::string line;
  int line_no = 0;
  while (detail::next_line(in, line)) {
    ++line_no;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError("line " + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string val = detail::trim(line.substr(eq + 1));
    if (key.empty() || val.empty())
      throw ParseError("line " + std::to_string(line_no) + ": expected 'key = value'");

    auto d = [&] { return detail::parse_double(val, line_no, key); };
    auto i = [&] { return detail::parse_int(val, line_no, key); };
    auto b = [&] { return detail::parse_bool(val, line_no, key); };

    if (key == "alpha_lambda") c.priors.alpha_lambda = d();
    else if (key == "beta_lambda") c.priors.beta_lambda = d();
    else if (key == "alpha_phi") c.priors.alpha_phi = d();
    else if (key == "beta_phi") c.priors.beta_phi = d();
    else if (key == "delta_k") c.priors.delta_k = d();
    else if (key == "theta_k") c.priors.theta_k = d();
    else if (key == "delta_l") c.priors.delta_l = d();
    else if (key == "theta_l") c.priors.theta_l = d();
    else if (key == "sigma2_beta") c.priors.sigma2_beta = d();
    else if (key == "sigma2_mu") c.priors.sigma2_mu = d();
    else if (key == "phi_prior_squared") c.priors.phi_prior_squared = b();
    else if (key == "max_sweeps") c.cavi.max_sweeps = static_cast<int>(i());
    else if (key == "elbo_rel_tol") c.cavi.elbo_rel_tol = d();
    else if (key == "anderson_memory") c.cavi.anderson_memory = static_cast<int>(i());
    else if (key == "use_anderson") c.cavi.use_anderson = b();
    else if (key == "newton_max_inner") c.cavi.newton_max_inner = static_cast<int>(i());
    else if (key == "fixed_point_tol") c.cavi.fixed_point_tol = d();
    else if (key == "backtrack_shrink") c.cavi.backtrack_shrink = d();
    else if (key == "backtrack_armijo") c.cavi.backtrack_armijo = d();
    else if (key == "projection_floor_lambda") c.cavi.projection_floor_lambda = d();
    else if (key == "phi_bound") c.cavi.phi_bound = d();
    else if (key == "seed") c.cavi.seed = static_cast<std::uint64_t>(i());
    else if (key == "random_init") c.cavi.random_init = b();
    else if (key == "knots_stringency") c.spline.knots_stringency = static_cast<int>(i());
    else if (key == "knots_age") c.spline.knots_age = static_cast<int>(i());
    else throw UnknownKey("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
  }
  return c;
}

inline FitConfig parse_fit_config_file(const std::string& path) {
  std::ifstream in = open_input(path);
  return parse_fit_config(in);
}

/* ---------- JSON helpers ---------- */

namespace detail {

inline ojson to_json(const Eigen::VectorXd& v) {
  ojson a = ojson::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline ojson to_json(const Eigen::MatrixXd& m) {
  ojson rows = ojson::array();
  for (int i = 0; i < m.rows(); ++i) {
    ojson row = ojson::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline ojson to_json(const Eigen::MatrixXi& m) {
  ojson rows = ojson::array();
  for (int i = 0; i < m.rows(); ++i) {
    ojson row = ojson::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Eigen::VectorXd vector_from_json(const ojson& a) {
  Eigen::VectorXd v(a.size());
  for (size_t i = 0; i < a.size(); ++i) v[static_cast<int>(i)] = a[i].get<double>();
  return v;
}

template <typename Mat>
inline Mat matrix_from_json(const ojson& a) {
  const int rows = static_cast<int>(a.size());
  const int cols = rows > 0 ? static_cast<int>(a[0].size()) : 0;
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    if (static_cast<int>(a[i].size()) != cols) throw ParseError("ragged matrix in JSON");
    for (int j = 0; j < cols; ++j) m(i, j) = a[i][j].get<typename Mat::Scalar>();
  }
  return m;
}

}  // namespace detail

/* ---------- variational state JSON ---------- */

inline ojson state_to_json(const VariationalState& s) {
  ojson j;
  j["m"] = detail::to_json(s.m);
  j["M"] = detail::to_json(s.M);
  j["lambda"] = detail::to_json(s.lambda);
  j["mu"] = detail::to_json(s.mu);
  j["sigma2"] = detail::to_json(s.sigma2);
  j["phi"] = detail::to_json(s.phi);
  j["delta_qk"] = s.delta_qk;
  j["v_qk"] = detail::to_json(s.v_qk);
  j["delta_ql"] = s.delta_ql;
  j["v_ql"] = detail::to_json(s.v_ql);
  return j;
}

inline VariationalState state_from_json(const ojson& j) {
  VariationalState s;
  s.m = detail::vector_from_json(j.at("m"));
  s.M = detail::matrix_from_json<Eigen::MatrixXd>(j.at("M"));
  s.lambda = detail::vector_from_json(j.at("lambda"));
  s.mu = detail::vector_from_json(j.at("mu"));
  s.sigma2 = detail::vector_from_json(j.at("sigma2"));
  s.phi = detail::vector_from_json(j.at("phi"));
  s.delta_qk = j.at("delta_qk").get<double>();
  s.v_qk = detail::matrix_from_json<Eigen::MatrixXd>(j.at("v_qk"));
  s.delta_ql = j.at("delta_ql").get<double>();
  s.v_ql = detail::matrix_from_json<Eigen::MatrixXd>(j.at("v_ql"));
  return s;
}

inline void write_variational_state(const std::string& path, const VariationalState& s) {
  write_text_file(path, state_to_json(s).dump(2) + "\n");
}

inline VariationalState read_variational_state(const std::string& path) {
  try {
    return state_from_json(ojson::parse(read_text_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

/* ---------- bound trace CSV ---------- */

inline void write_elbo_trace(const std::string& path, const std::vector<double>& trace) {
  std::ostringstream ss;
  ss << "sweep,elbo\n";
  for (size_t i = 0; i < trace.size(); ++i) ss << i << ',' << format_double(trace[i]) << "\n";
  write_text_file(path, ss.str());
}

inline std::vector<double> read_elbo_trace(const std::string& path) {
  std::ifstream in = open_input(path);
  std::string line;
  int line_no = 0;
  if (!detail::next_line(in, line) || detail::trim(line) != "sweep,elbo")
    throw ParseError(path + ": expected header 'sweep,elbo'");
  ++line_no;
  std::vector<double> trace;
  while (detail::next_line(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != 2) throw ParseError("line " + std::to_string(line_no) + ": expected 2 fields");
    trace.push_back(detail::parse_double(f[1], line_no, "elbo"));
  }
  return trace;
}

/* ---------- fitted smooth curves ---------- */

struct SmoothCurveExport {
  std::string name;
  Eigen::VectorXd grid;
  Eigen::VectorXd mean;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
};

struct SmoothCurveId {
  std::string name;  // export name, e.g. "age" or "cause2_stringency"
  int smooth = 0;    // index into design.smooths
  int block = 0;     // block within the smooth (non-baseline level - 1)
};

/* One exportable curve per smooth block.  Main effects keep the smooth's own
 * name; interaction blocks are named by factor level, e.g. level 2 of the
 * cause-by-age term exports as "cause2_age". */
inline std::vector<SmoothCurveId> smooth_curve_names(const ModelDesign& design) {
  std::vector<SmoothCurveId> out;
  for (size_t si = 0; si < design.smooths.size(); ++si) {
    const DesignSmooth& s = design.smooths[si];
    const std::string cov = s.covariate == Covariate::stringency ? "stringency" : "age";
    for (int b = 0; b < s.blocks(); ++b) {
      SmoothCurveId id;
      id.smooth = static_cast<int>(si);
      id.block = b;
      if (s.by == ByFactor::none)
        id.name = s.name;
      else
        id.name = (s.by == ByFactor::cause ? "cause" : "gender") + std::to_string(b + 1) + "_" + cov;
      out.push_back(std::move(id));
    }
  }
  return out;
}

/* Pointwise posterior curve with a 95% band from the coefficient covariance:
 * mean(g) = u(g)'m_block, sd(g) = sqrt(u(g)'M_block u(g)). */
inline SmoothCurveExport export_smooth(const VariationalState& st, const ModelDesign& design,
                                       const std::string& name, int grid_size = 100) {
  if (grid_size < 2) throw InvalidState("export_smooth: grid must have at least 2 points");
  const auto ids = smooth_curve_names(design);
  const SmoothCurveId* found = nullptr;
  for (const auto& id : ids)
    if (id.name == name) {
      found = &id;
      break;
    }
  if (!found) throw UnknownSmooth("export_smooth: no curve named '" + name + "'");

  const DesignSmooth& s = design.smooths[found->smooth];
  const int j = s.marginal_size();
  const int base = s.col_offset + found->block * j;
  const Eigen::VectorXd m_block = st.m.segment(base, j);
  const Eigen::MatrixXd cov_block = st.M.block(base, base, j, j);

  SmoothCurveExport cur;
  cur.name = name;
  cur.grid = Eigen::VectorXd::LinSpaced(grid_size, s.knots[0], s.knots[j - 1]);
  const Eigen::MatrixXd basis = smooth_basis_at(s, cur.grid);
  cur.mean = basis * m_block;
  Eigen::VectorXd sd(grid_size);
  for (int g = 0; g < grid_size; ++g) {
    const double v = basis.row(g) * cov_block * basis.row(g).transpose();
    sd[g] = std::sqrt(std::max(v, 0.0));
  }
  cur.lower = cur.mean - 1.96 * sd;
  cur.upper = cur.mean + 1.96 * sd;
  return cur;
}

inline void write_smooth_csv(const std::string& path, const SmoothCurveExport& cur) {
  std::ostringstream ss;
  ss << "grid,mean,lower,upper\n";
  for (int i = 0; i < cur.grid.size(); ++i)
    ss << format_double(cur.grid[i]) << ',' << format_double(cur.mean[i]) << ','
       << format_double(cur.lower[i]) << ',' << format_double(cur.upper[i]) << "\n";
  write_text_file(path, ss.str());
}

inline SmoothCurveExport read_smooth_csv(const std::string& path) {
  std::ifstream in = open_input(path);
  std::string line;
  if (!detail::next_line(in, line) || detail::trim(line) != "grid,mean,lower,upper")
    throw ParseError(path + ": expected header 'grid,mean,lower,upper'");
  int line_no = 1;
  std::vector<double> g, m, lo, up;
  while (detail::next_line(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != 4) throw ParseError("line " + std::to_string(line_no) + ": expected 4 fields");
    g.push_back(detail::parse_double(f[0], line_no, "grid"));
    m.push_back(detail::parse_double(f[1], line_no, "mean"));
    lo.push_back(detail::parse_double(f[2], line_no, "lower"));
    up.push_back(detail::parse_double(f[3], line_no, "upper"));
  }
  SmoothCurveExport cur;
  cur.name = std::filesystem::path(path).stem().string();
  auto to_vec = [](const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<int>(v.size())).eval();
  };
  cur.grid = to_vec(g);
  cur.mean = to_vec(m);
  cur.lower = to_vec(lo);
  cur.upper = to_vec(up);
  return cur;
}

/* ---------- dependence structure ---------- */

struct DependenceExport {
  Eigen::MatrixXd d_ql;
  Eigen::MatrixXd d_qk;
  Eigen::MatrixXd partial_correlation_l;
  Eigen::MatrixXi adjacency_l;
  Eigen::MatrixXd correlation_k;
  double threshold = 0.1;
};

namespace detail {

/* diag(a)^{-1/2} a diag(a)^{-1/2}; requires strictly positive diagonal. */
inline Eigen::MatrixXd normalize_by_diagonal(const Eigen::MatrixXd& a, const char* who) {
  for (int i = 0; i < a.rows(); ++i)
    if (!(a(i, i) > 0.0))
      throw SingularSystem(std::string(who) + ": nonpositive diagonal, cannot normalize");
  const Eigen::VectorXd s = a.diagonal().array().rsqrt();
  return s.asDiagonal() * a * s.asDiagonal();
}

}  // namespace detail

/* Region-side conditional dependence (normalized inverse scale, thresholded
 * into an adjacency) and cause-side correlation (normalized scale). */
inline DependenceExport export_dependence(const VariationalState& st, double threshold = 0.1) {
  DependenceExport dep;
  dep.threshold = threshold;
  dep.d_ql = st.d_ql();
  dep.d_qk = st.d_qk();

  const int L = static_cast<int>(dep.d_ql.rows());
  Eigen::LLT<Eigen::MatrixXd> llt(dep.d_ql);
  if (llt.info() != Eigen::Success)
    throw SingularSystem("export_dependence: region scale matrix is not positive definite");
  const Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(L, L));

  dep.partial_correlation_l = -detail::normalize_by_diagonal(inv, "export_dependence");
  dep.partial_correlation_l.diagonal().setOnes();
  dep.adjacency_l = Eigen::MatrixXi::Zero(L, L);
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < L; ++j)
      if (i != j && std::abs(dep.partial_correlation_l(i, j)) >= threshold) dep.adjacency_l(i, j) = 1;

  dep.correlation_k = detail::normalize_by_diagonal(dep.d_qk, "export_dependence");
  return dep;
}

inline ojson dependence_to_json(const DependenceExport& dep) {
  ojson j;
  j["d_ql"] = detail::to_json(dep.d_ql);
  j["d_qk"] = detail::to_json(dep.d_qk);
  j["partial_correlation_l"] = detail::to_json(dep.partial_correlation_l);
  j["adjacency_l"] = detail::to_json(dep.adjacency_l);
  j["correlation_k"] = detail::to_json(dep.correlation_k);
  j["threshold"] = dep.threshold;
  return j;
}

inline DependenceExport dependence_from_json(const ojson& j) {
  DependenceExport dep;
  dep.d_ql = detail::matrix_from_json<Eigen::MatrixXd>(j.at("d_ql"));
  dep.d_qk = detail::matrix_from_json<Eigen::MatrixXd>(j.at("d_qk"));
  dep.partial_correlation_l = detail::matrix_from_json<Eigen::MatrixXd>(j.at("partial_correlation_l"));
  dep.adjacency_l = detail::matrix_from_json<Eigen::MatrixXi>(j.at("adjacency_l"));
  dep.correlation_k = detail::matrix_from_json<Eigen::MatrixXd>(j.at("correlation_k"));
  dep.threshold = j.at("threshold").get<double>();
  return dep;
}

inline void write_dependence(const std::string& path, const DependenceExport& dep) {
  write_text_file(path, dependence_to_json(dep).dump(2) + "\n");
}

inline DependenceExport read_dependence(const std::string& path) {
  try {
    return dependence_from_json(ojson::parse(read_text_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

/* ---------- fit orchestration ---------- */

inline void write_summary(const std::string& path, const ModelDesign& design, const FitReport& rep) {
  std::ostringstream ss;
  const Dims& d = design.dims;
  ss << "regions = " << d.L << "\ncauses = " << d.K << "\nage_groups = " << d.A
     << "\ngenders = " << d.G << "\nmonths = " << d.T << "\nfixed_columns = " << design.p
     << "\nlatent_columns = " << design.q() << "\nsweeps = " << rep.sweeps
     << "\nconverged = " << (rep.converged ? "true" : "false")
     << "\nfinal_elbo = " << format_double(rep.elbo_trace.empty() ? 0.0 : rep.elbo_trace.back())
     << "\nwall_seconds = " << format_double(rep.wall_seconds)
     << "\nwarnings = " << rep.warnings.size() << "\n";
  for (const std::string& w : rep.warnings) ss << "warning: " << w << "\n";
  write_text_file(path, ss.str());
}

/* Write every reporting artifact of a fit under out_dir. */
inline void write_fit_artifacts(const std::string& out_dir, const ModelDesign& design,
                                const FitReport& rep, int grid_size = 100,
                                double edge_threshold = 0.1) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(out_dir) / "smooths");
  write_elbo_trace((fs::path(out_dir) / "elbo_trace.csv").string(), rep.elbo_trace);
  write_variational_state((fs::path(out_dir) / "variational_state.json").string(), rep.state);
  for (const SmoothCurveId& id : smooth_curve_names(design)) {
    const SmoothCurveExport cur = export_smooth(rep.state, design, id.name, grid_size);
    write_smooth_csv((fs::path(out_dir) / "smooths" / (id.name + ".csv")).string(), cur);
  }
  write_dependence((fs::path(out_dir) / "dependence.json").string(),
                   export_dependence(rep.state, edge_threshold));
  write_summary((fs::path(out_dir) / "summary.txt").string(), design, rep);
}

/* Full fit pipeline behind the command line: read, optionally drop a cause,
 * fit, export.  Hard failures return nonzero; a fit that merely failed to
 * converge still exports and returns zero with a warning line. */
inline int fit_command(const std::string& data_path, const std::string& config_path,
                       const std::string& out_dir, int drop_cause_id = -1,
                       std::optional<std::uint64_t> seed_override = std::nullopt,
                       std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  try {
    PanelDataset data = read_panel_csv(data_path);
    if (drop_cause_id >= 0) data = drop_cause(data, drop_cause_id);
    FitConfig cfg;
    if (!config_path.empty()) cfg = parse_fit_config_file(config_path);
    if (seed_override) cfg.cavi.seed = *seed_override;

    const ModelDesign design = build_design(data, cfg.spline);
    const PanelView view = align_panel(data);
    const FitReport rep = run_cavi(design, view, cfg.priors, cfg.cavi);

    write_fit_artifacts(out_dir, design, rep);
    for (const std::string& w : rep.warnings) err << "warning: " << w << "\n";
    if (!rep.converged)
      err << "warning: not converged after " << rep.sweeps << " sweeps\n";
    out << "fit: " << rep.sweeps << " sweeps, elbo "
        << format_double(rep.elbo_trace.empty() ? 0.0 : rep.elbo_trace.back()) << ", "
        << (rep.converged ? "converged" : "not converged") << ", artifacts in " << out_dir << "\n";
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

/* Parse "L,K,A,G,T" into grid dimensions. */
inline Dims parse_dims_spec(const std::string& spec) {
  const auto parts = detail::split_csv_line(spec);
  if (parts.size() != 5)
    throw ParseError("dims spec must be 'L,K,A,G,T', got '" + spec + "'");
  int v[5];
  for (int i = 0; i < 5; ++i) {
    v[i] = static_cast<int>(detail::parse_int(parts[i], 1, "dimension"));
    if (v[i] < 1) throw ParseError("dims spec entries must be positive, got '" + spec + "'");
  }
  return Dims{v[0], v[1], v[2], v[3], v[4]};
}

inline int simulate_command(const std::string& dims_spec, std::uint64_t seed,
                            const std::string& out_path, std::ostream& out = std::cout,
                            std::ostream& err = std::cerr) {
  try {
    const Dims dims = parse_dims_spec(dims_spec);
    const PanelDataset data = simulate_dataset(dims, seed);
    write_panel_csv(out_path, data);
    out << "simulate: " << data.records.size() << " rows written to " << out_path << "\n";
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace dgam
