#pragma once

#include <Eigen/Dense>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "shared_transfer/dictionary.hpp"
#include "shared_transfer/errors.hpp"
#include "shared_transfer/experiments.hpp"
#include "shared_transfer/learner.hpp"

namespace shared_transfer {

inline constexpr int kModelFormatVersion = 1;
inline constexpr const char* kModelFormatName = "shared-transfer-model";

namespace detail {

// shortest decimal that round-trips
inline std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline double parse_double(const std::string& token, std::size_t line) {
  double v = 0.0;
  const char* begin = token.data();
  const char* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc{} || ptr != end)
    throw DataError("line " + std::to_string(line) + ": non-numeric cell '" +
                    token + "'");
  if (!std::isfinite(v))
    throw DataError("line " + std::to_string(line) + ": non-finite cell '" +
                    token + "'");
  return v;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

}  // namespace detail

// Long-format CSV: header `task_id,row,<covariate names...>,y`, one sample
// per line, tasks grouped by first appearance. Every task must carry the
// same number of rows.
inline TaskDataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("load_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("load_csv: empty file " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto header = detail::split_csv_line(line);
  if (header.size() < 4 || header.front() != "task_id" || header[1] != "row" ||
      header.back() != "y")
    throw DataError(
        "load_csv: header must be task_id,row,<covariates...>,y, got '" +
        line + "'");
  const std::size_t p = header.size() - 3;

  std::vector<std::string> order;
  std::map<std::string, std::vector<std::vector<double>>> rows;
  std::size_t line_number = 1;
  while (std::getline(in, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw DataError("line " + std::to_string(line_number) + ": expected " +
                      std::to_string(header.size()) + " columns, got " +
                      std::to_string(cells.size()));
    auto& task_rows = rows[cells[0]];
    if (task_rows.empty()) order.push_back(cells[0]);
    std::vector<double> values;
    values.reserve(p + 1);
    for (std::size_t c = 2; c < cells.size(); ++c)
      values.push_back(detail::parse_double(cells[c], line_number));
    task_rows.push_back(std::move(values));
  }
  if (order.empty()) throw DataError("load_csv: no data rows in " + path);

  const std::size_t n = rows[order.front()].size();
  std::vector<TaskData> tasks;
  for (const auto& id : order) {
    const auto& task_rows = rows[id];
    if (task_rows.size() != n)
      throw DataError("load_csv: task '" + id + "' has " +
                      std::to_string(task_rows.size()) + " rows, expected " +
                      std::to_string(n) + " (ragged input)");
    TaskData task;
    task.task_id = id;
    task.covariates.resize(static_cast<Eigen::Index>(n),
                           static_cast<Eigen::Index>(p));
    task.responses.resize(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < p; ++j)
        task.covariates(static_cast<Eigen::Index>(i),
                        static_cast<Eigen::Index>(j)) = task_rows[i][j];
      task.responses[static_cast<Eigen::Index>(i)] = task_rows[i][p];
    }
    tasks.push_back(std::move(task));
  }
  return TaskDataset(std::move(tasks));
}

inline void save_csv(const TaskDataset& dataset, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("save_csv: cannot open " + path);
  out << "task_id,row";
  for (int j = 1; j <= dataset.num_covariates(); ++j) out << ",x" << j;
  out << ",y\n";
  for (int m = 0; m < dataset.num_tasks(); ++m) {
    const auto& task = dataset.task(m);
    for (Eigen::Index i = 0; i < task.responses.size(); ++i) {
      out << task.task_id << ',' << i;
      for (Eigen::Index j = 0; j < task.covariates.cols(); ++j)
        out << ',' << detail::format_double(task.covariates(i, j));
      out << ',' << detail::format_double(task.responses[i]) << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// Model persistence (JSON, see docs/model_format.md)

namespace detail {

inline nlohmann::json basis_to_json(const SplineBasis& basis) {
  return {{"covariate_index", basis.covariate_index},
          {"degree", basis.degree},
          {"knots", basis.knots},
          {"num_functions", basis.num_functions},
          {"column_means",
           std::vector<double>(basis.column_means.data(),
                               basis.column_means.data() +
                                   basis.column_means.size())},
          {"domain", {basis.domain_lo, basis.domain_hi}}};
}

inline SplineBasis basis_from_json(const nlohmann::json& j) {
  SplineBasis basis;
  basis.covariate_index = j.at("covariate_index").get<int>();
  basis.degree = j.at("degree").get<int>();
  basis.knots = j.at("knots").get<std::vector<double>>();
  basis.num_functions = j.at("num_functions").get<int>();
  auto means = j.at("column_means").get<std::vector<double>>();
  basis.column_means =
      Eigen::Map<const Eigen::VectorXd>(means.data(),
                                        static_cast<Eigen::Index>(means.size()));
  basis.domain_lo = j.at("domain").at(0).get<double>();
  basis.domain_hi = j.at("domain").at(1).get<double>();
  return basis;
}

inline nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  auto rows = j.at("rows").get<Eigen::Index>();
  auto cols = j.at("cols").get<Eigen::Index>();
  auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols)
    throw DataError("model: matrix data length mismatch");
  Eigen::MatrixXd m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[k++];
  return m;
}

inline nlohmann::json config_to_json(const FitConfig& config) {
  return {{"L_per_covariate", config.L_per_covariate},
          {"nu", config.nu},
          {"max_iterations", config.max_iterations},
          {"rel_objective_tol", config.rel_objective_tol},
          {"seed", config.seed},
          {"repair_empty", config.repair_empty},
          {"num_basis_functions", config.num_basis_functions},
          {"spline_degree", config.spline_degree}};
}

inline FitConfig config_from_json(const nlohmann::json& j) {
  FitConfig config;
  config.L_per_covariate = j.at("L_per_covariate").get<std::vector<int>>();
  config.nu = j.at("nu").get<double>();
  config.max_iterations = j.at("max_iterations").get<int>();
  config.rel_objective_tol = j.at("rel_objective_tol").get<double>();
  config.seed = j.at("seed").get<std::uint64_t>();
  config.repair_empty = j.at("repair_empty").get<bool>();
  config.num_basis_functions = j.at("num_basis_functions").get<int>();
  config.spline_degree = j.at("spline_degree").get<int>();
  return config;
}

}  // namespace detail

inline void save_model(const MultiTaskModel& model, const std::string& path) {
  nlohmann::json j;
  j["format"] = kModelFormatName;
  j["version"] = kModelFormatVersion;
  for (const auto& basis : model.bases)
    j["bases"].push_back(detail::basis_to_json(basis));
  for (const auto& B : model.coefficient_matrices)
    j["coefficients"].push_back(detail::matrix_to_json(B));
  j["tasks"] = nlohmann::json::array();
  for (std::size_t m = 0; m < model.codes.size(); ++m) {
    nlohmann::json task;
    task["task_id"] = model.task_ids[m];
    task["intercept"] = model.intercepts[static_cast<Eigen::Index>(m)];
    task["selections"] = nlohmann::json::array();
    for (const auto& sel : model.codes[m].selected)
      task["selections"].push_back({{"block", sel.block},
                                    {"atom", sel.atom},
                                    {"weight", sel.coefficient}});
    j["tasks"].push_back(std::move(task));
  }
  j["config"] = detail::config_to_json(model.config);
  j["objective_history"] = model.objective_history;
  j["objective_before_spline"] = model.objective_before_spline;
  j["non_monotone_iterations"] = model.non_monotone_iterations;

  std::ofstream out(path);
  if (!out) throw DataError("save_model: cannot open " + path);
  out << j.dump(1) << '\n';
}

inline MultiTaskModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("load_model: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("load_model: parse error in " + path + ": " + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != kModelFormatName)
      throw VersionError("load_model: not a " + std::string(kModelFormatName) +
                         " document");
    if (j.at("version").get<int>() != kModelFormatVersion)
      throw VersionError("load_model: unsupported version " +
                         std::to_string(j.at("version").get<int>()));
    MultiTaskModel model;
    for (const auto& b : j.at("bases"))
      model.bases.push_back(detail::basis_from_json(b));
    for (const auto& c : j.at("coefficients"))
      model.coefficient_matrices.push_back(detail::matrix_from_json(c));
    const auto& tasks = j.at("tasks");
    model.intercepts.resize(static_cast<Eigen::Index>(tasks.size()));
    Eigen::Index m = 0;
    for (const auto& task : tasks) {
      model.task_ids.push_back(task.at("task_id").get<std::string>());
      model.intercepts[m] = task.at("intercept").get<double>();
      BlockSparseCode code;
      for (const auto& B : model.coefficient_matrices)
        code.weights.push_back(Eigen::VectorXd::Zero(B.cols()));
      for (const auto& sel : task.at("selections")) {
        AtomSelection s{sel.at("block").get<int>(), sel.at("atom").get<int>(),
                        sel.at("weight").get<double>()};
        if (s.block < 0 ||
            s.block >= static_cast<int>(model.coefficient_matrices.size()) ||
            s.atom < 0 ||
            s.atom >= model.coefficient_matrices[static_cast<std::size_t>(
                                                     s.block)]
                          .cols())
          throw DataError("load_model: selection out of range");
        code.weights[static_cast<std::size_t>(s.block)][s.atom] =
            s.coefficient;
        code.selected.push_back(s);
      }
      model.codes.push_back(std::move(code));
      ++m;
    }
    model.config = detail::config_from_json(j.at("config"));
    model.objective_history =
        j.at("objective_history").get<std::vector<double>>();
    model.objective_before_spline =
        j.at("objective_before_spline").get<std::vector<double>>();
    model.non_monotone_iterations = j.at("non_monotone_iterations").get<int>();
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("load_model: malformed document " + path + ": " +
                    e.what());
  }
}

// Ground-truth persistence for the synthetic study.
inline void save_truth(const GroundTruth& truth, const std::string& path) {
  nlohmann::json j;
  j["format"] = "shared-transfer-truth";
  j["version"] = kModelFormatVersion;
  for (const auto& basis : truth.bases)
    j["bases"].push_back(detail::basis_to_json(basis));
  for (const auto& B : truth.coefficients)
    j["coefficients"].push_back(detail::matrix_to_json(B));
  j["codes"] = nlohmann::json::array();
  for (const auto& code : truth.codes) {
    nlohmann::json selections = nlohmann::json::array();
    for (const auto& sel : code.selected)
      selections.push_back({{"block", sel.block},
                            {"atom", sel.atom},
                            {"weight", sel.coefficient}});
    j["codes"].push_back(std::move(selections));
  }
  std::ofstream out(path);
  if (!out) throw DataError("save_truth: cannot open " + path);
  out << j.dump(1) << '\n';
}

inline GroundTruth load_truth(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("load_truth: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("load_truth: parse error in " + path + ": " + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != "shared-transfer-truth")
      throw VersionError("load_truth: not a shared-transfer-truth document");
    GroundTruth truth;
    for (const auto& b : j.at("bases"))
      truth.bases.push_back(detail::basis_from_json(b));
    for (const auto& c : j.at("coefficients"))
      truth.coefficients.push_back(detail::matrix_from_json(c));
    for (const auto& selections : j.at("codes")) {
      BlockSparseCode code;
      for (const auto& B : truth.coefficients)
        code.weights.push_back(Eigen::VectorXd::Zero(B.cols()));
      for (const auto& sel : selections) {
        AtomSelection s{sel.at("block").get<int>(), sel.at("atom").get<int>(),
                        sel.at("weight").get<double>()};
        code.weights[static_cast<std::size_t>(s.block)][s.atom] = s.coefficient;
        code.selected.push_back(s);
      }
      truth.codes.push_back(std::move(code));
    }
    return truth;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("load_truth: malformed document " + path + ": " + e.what());
  }
}

// The sign-free coefficient matrices a finalized model was trained with
// (left halves of the doubled matrices). Matrices that were never doubled
// pass through unchanged.
inline std::vector<Eigen::MatrixXd> primary_coefficients(
    const MultiTaskModel& model) {
  auto sizes =
      model.config.block_sizes(static_cast<int>(model.bases.size()));
  std::vector<Eigen::MatrixXd> out;
  for (std::size_t j = 0; j < model.coefficient_matrices.size(); ++j) {
    const auto& B = model.coefficient_matrices[j];
    if (B.cols() == 2 * static_cast<Eigen::Index>(sizes[j]))
      out.emplace_back(B.leftCols(sizes[j]));
    else
      out.push_back(B);
  }
  return out;
}

inline nlohmann::json coherence_to_json(const CoherenceReport& report) {
  return {{"mu_global", report.mu_global},
          {"mu_intra", report.mu_intra},
          {"mu_inter", report.mu_inter},
          {"omp_max_p", report.omp_condition_max_p},
          {"bcomp_holds", report.bcomp_condition_holds}};
}

// ---------------------------------------------------------------------------
// Experiment summary tables

struct SummaryRow {
  std::string method;
  std::uint64_t seed = 0;
  double train_rmse = 0.0;
  double test_rmse = 0.0;
  double tf_match_error = std::numeric_limits<double>::quiet_NaN();
  double wall_ms = 0.0;
};

inline void write_summary_csv(const std::vector<SummaryRow>& rows,
                              std::ostream& out) {
  out << "method,seed,train_rmse,test_rmse,tf_match_error,wall_ms\n";
  for (const auto& r : rows) {
    out << r.method << ',' << r.seed << ','
        << detail::format_double(r.train_rmse) << ','
        << detail::format_double(r.test_rmse) << ',';
    if (std::isfinite(r.tf_match_error))
      out << detail::format_double(r.tf_match_error);
    out << ',' << detail::format_double(r.wall_ms) << '\n';
  }
}

inline nlohmann::json summary_to_json(const std::vector<SummaryRow>& rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json item = {{"method", r.method},
                           {"seed", r.seed},
                           {"train_rmse", r.train_rmse},
                           {"test_rmse", r.test_rmse},
                           {"wall_ms", r.wall_ms}};
    if (std::isfinite(r.tf_match_error))
      item["tf_match_error"] = r.tf_match_error;
    else
      item["tf_match_error"] = nullptr;
    arr.push_back(std::move(item));
  }
  return arr;
}

}  // namespace shared_transfer
