#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "shared_transfer/dictionary.hpp"
#include "shared_transfer/errors.hpp"
#include "shared_transfer/parallel.hpp"
#include "shared_transfer/random.hpp"
#include "shared_transfer/sparse_coding.hpp"
#include "shared_transfer/splines.hpp"

namespace shared_transfer {

struct FitConfig {
  std::vector<int> L_per_covariate = {3};  // broadcast when shorter than p
  double nu = 1.0;
  int max_iterations = 30;
  double rel_objective_tol = 1e-6;  // 0 disables the early exit
  std::uint64_t seed = 0;
  bool repair_empty = true;
  int num_basis_functions = 12;
  int spline_degree = 3;

  std::vector<int> block_sizes(int p) const {
    std::vector<int> sizes;
    if (L_per_covariate.size() == 1)
      sizes.assign(static_cast<std::size_t>(p), L_per_covariate[0]);
    else if (L_per_covariate.size() == static_cast<std::size_t>(p))
      sizes = L_per_covariate;
    else
      throw ShapeError("FitConfig: L_per_covariate has " +
                       std::to_string(L_per_covariate.size()) +
                       " entries for " + std::to_string(p) + " covariates");
    for (int L : sizes)
      if (L < 1) throw Error("FitConfig: L must be >= 1");
    return sizes;
  }

  void validate() const {
    if (!(nu > 0.0)) throw Error("FitConfig: nu must be > 0");
    if (max_iterations < 1) throw Error("FitConfig: max_iterations must be >= 1");
    if (rel_objective_tol < 0.0)
      throw Error("FitConfig: rel_objective_tol must be >= 0");
    if (num_basis_functions < spline_degree + 1)
      throw Error("FitConfig: num_basis_functions must be >= degree + 1");
  }
};

struct TaskData {
  std::string task_id;
  Eigen::MatrixXd covariates;  // n x p
  Eigen::VectorXd responses;   // n
};

// N tasks sharing sample count and covariate count. Covariates may be
// identical across tasks (detected or forced), in which case designs and
// dictionaries are built once per fit iteration instead of per task.
class TaskDataset {
 public:
  TaskDataset() = default;
  explicit TaskDataset(std::vector<TaskData> tasks,
                       std::optional<bool> shared_override = std::nullopt)
      : tasks_(std::move(tasks)) {
    if (tasks_.empty()) throw DataError("TaskDataset: no tasks");
    const auto n = tasks_[0].covariates.rows();
    const auto p = tasks_[0].covariates.cols();
    for (const auto& t : tasks_) {
      if (t.covariates.rows() != n || t.covariates.cols() != p)
        throw DataError("TaskDataset: task " + t.task_id +
                        " has mismatched covariate shape");
      if (t.responses.size() != n)
        throw DataError("TaskDataset: task " + t.task_id +
                        " has mismatched response length");
    }
    identical_ = true;
    for (std::size_t m = 1; m < tasks_.size() && identical_; ++m)
      identical_ = tasks_[m].covariates == tasks_[0].covariates;
    shared_ = shared_override.value_or(identical_);
    if (shared_ && !identical_)
      throw DataError("TaskDataset: shared_covariates forced on differing data");
  }

  int num_tasks() const { return static_cast<int>(tasks_.size()); }
  Eigen::Index samples_per_task() const { return tasks_[0].covariates.rows(); }
  int num_covariates() const {
    return static_cast<int>(tasks_[0].covariates.cols());
  }
  // reuse designs and dictionaries across tasks (optimization flag)
  bool shared_covariates() const { return shared_; }
  // data property: every task carries the same covariate matrix
  bool covariates_identical() const { return identical_; }
  const TaskData& task(int m) const { return tasks_[static_cast<std::size_t>(m)]; }
  const std::vector<TaskData>& tasks() const { return tasks_; }

 private:
  std::vector<TaskData> tasks_;
  bool shared_ = false;
  bool identical_ = false;
};

// Column layout of the stacked coefficient vector b = [vec(B_1); ...].
struct CoefficientLayout {
  std::vector<Eigen::Index> offsets;
  std::vector<Eigen::Index> basis_sizes;  // T_j
  std::vector<Eigen::Index> block_sizes;  // L_j
  Eigen::Index total = 0;
};

inline CoefficientLayout make_layout(const std::vector<SplineBasis>& bases,
                                     const std::vector<int>& block_sizes) {
  CoefficientLayout layout;
  Eigen::Index offset = 0;
  for (std::size_t j = 0; j < bases.size(); ++j) {
    layout.offsets.push_back(offset);
    layout.basis_sizes.push_back(bases[j].num_functions);
    layout.block_sizes.push_back(block_sizes[j]);
    offset += bases[j].num_functions * block_sizes[j];
  }
  layout.total = offset;
  return layout;
}

inline Eigen::VectorXd pack_coefficients(
    const CoefficientLayout& layout, const std::vector<Eigen::MatrixXd>& B) {
  Eigen::VectorXd b(layout.total);
  for (std::size_t j = 0; j < B.size(); ++j)
    b.segment(layout.offsets[j],
              layout.basis_sizes[j] * layout.block_sizes[j]) =
        Eigen::Map<const Eigen::VectorXd>(B[j].data(), B[j].size());
  return b;
}

inline std::vector<Eigen::MatrixXd> unpack_coefficients(
    const CoefficientLayout& layout, const Eigen::VectorXd& b) {
  std::vector<Eigen::MatrixXd> B;
  for (std::size_t j = 0; j < layout.offsets.size(); ++j) {
    B.emplace_back(Eigen::Map<const Eigen::MatrixXd>(
        b.data() + layout.offsets[j], layout.basis_sizes[j],
        layout.block_sizes[j]));
  }
  return B;
}

// T_j x L_j matrices with iid standard normal entries.
inline std::vector<Eigen::MatrixXd> init_coefficients(
    const FitConfig& config, const std::vector<SplineBasis>& bases, Rng& rng) {
  auto sizes = config.block_sizes(static_cast<int>(bases.size()));
  std::vector<Eigen::MatrixXd> B;
  for (std::size_t j = 0; j < bases.size(); ++j) {
    Eigen::MatrixXd m(bases[j].num_functions, sizes[j]);
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = rng.normal();
    B.push_back(std::move(m));
  }
  return B;
}

// Per-fit precomputed state: bases, designs (one when covariates are
// shared), centered responses and their means.
struct FitWorkspace {
  std::vector<SplineBasis> bases;
  std::vector<DesignMatrix> designs;
  std::vector<Eigen::VectorXd> centered;
  Eigen::VectorXd means;
  CoefficientLayout layout;
  bool shared = false;
  int num_tasks = 0;

  const DesignMatrix& design_for(int m) const {
    return shared ? designs[0] : designs[static_cast<std::size_t>(m)];
  }
};

inline FitWorkspace make_workspace(const TaskDataset& dataset,
                                   const FitConfig& config) {
  config.validate();
  const int p = dataset.num_covariates();
  const int N = dataset.num_tasks();
  const Eigen::Index n = dataset.samples_per_task();

  for (const auto& t : dataset.tasks()) {
    if (!t.covariates.allFinite())
      throw DataError("fit: task " + t.task_id + " has non-finite covariates");
    if (!t.responses.allFinite())
      throw DataError("fit: task " + t.task_id + " has non-finite responses");
  }

  FitWorkspace ws;
  ws.shared = dataset.shared_covariates();
  ws.num_tasks = N;
  for (int j = 0; j < p; ++j) {
    // centering sample: the shared column when every task sees the same
    // covariates, otherwise the pool over all tasks
    Eigen::VectorXd samples;
    if (dataset.covariates_identical()) {
      samples = dataset.task(0).covariates.col(j);
    } else {
      samples.resize(n * N);
      for (int m = 0; m < N; ++m)
        samples.segment(m * n, n) = dataset.task(m).covariates.col(j);
    }
    ws.bases.push_back(
        make_basis(samples, config.num_basis_functions, config.spline_degree,
                   j + 1));
    if (n <= config.num_basis_functions && j == 0)
      std::cerr << "fit: warning: " << n
                << " samples per task does not exceed the basis size "
                << config.num_basis_functions << "\n";
  }
  if (ws.shared) {
    ws.designs.push_back(build_design(ws.bases, dataset.task(0).covariates));
  } else {
    for (int m = 0; m < N; ++m)
      ws.designs.push_back(build_design(ws.bases, dataset.task(m).covariates));
  }
  ws.means.resize(N);
  for (int m = 0; m < N; ++m) {
    ws.means[m] = dataset.task(m).responses.mean();
    ws.centered.push_back(dataset.task(m).responses.array() - ws.means[m]);
  }
  ws.layout = make_layout(ws.bases, config.block_sizes(p));
  return ws;
}

// One BC-OMP code per task against dictionaries assembled from the current
// coefficients. Tasks run independently; failures surface with the task id.
inline std::vector<BlockSparseCode> weights_update(
    const FitWorkspace& ws, const TaskDataset& dataset,
    const std::vector<Eigen::MatrixXd>& B, int threads = 1) {
  const int N = ws.num_tasks;
  std::vector<BlockSparseCode> codes(static_cast<std::size_t>(N));
  std::vector<std::exception_ptr> failures(static_cast<std::size_t>(N));

  std::optional<TransferDictionary> shared_dict;
  if (ws.shared) shared_dict = assemble(design_blocks(ws.designs[0]), B);

  parallel_for(static_cast<std::size_t>(N), threads, [&](std::size_t m) {
    try {
      if (ws.shared) {
        codes[m] = bcomp(*shared_dict, ws.centered[m]);
      } else {
        auto dict = assemble(design_blocks(ws.designs[m]), B);
        codes[m] = bcomp(dict, ws.centered[m]);
      }
    } catch (...) {
      failures[m] = std::current_exception();
    }
  });
  for (int m = 0; m < N; ++m) {
    if (!failures[static_cast<std::size_t>(m)]) continue;
    try {
      std::rethrow_exception(failures[static_cast<std::size_t>(m)]);
    } catch (const Error& e) {
      throw Error("weights_update: task " + dataset.task(m).task_id + ": " +
                  e.what());
    }
  }
  return codes;
}

struct VectorizedSystem {
  Eigen::MatrixXd Z;        // nN x total coefficients
  Eigen::VectorXd y;        // stacked centered responses
  CoefficientLayout layout;
};

// Fills the per-task row block of Z: column group (j, l) holds
// lambda_{jl} * S_j.
inline void fill_task_rows(Eigen::Ref<Eigen::MatrixXd> rows,
                           const DesignMatrix& design,
                           const BlockSparseCode& code,
                           const CoefficientLayout& layout) {
  rows.setZero();
  for (std::size_t j = 0; j < layout.offsets.size(); ++j) {
    const auto T = layout.basis_sizes[j];
    for (Eigen::Index l = 0; l < layout.block_sizes[j]; ++l) {
      double w = code.weights[j][l];
      if (w == 0.0) continue;
      rows.middleCols(layout.offsets[j] + l * T, T) =
          w * design.block(static_cast<int>(j));
    }
  }
}

// Materialized Kronecker system (small problems and equivalence tests; the
// fit path accumulates the Gram per task instead).
inline VectorizedSystem build_vectorized_system(
    const FitWorkspace& ws, const std::vector<BlockSparseCode>& codes) {
  if (codes.size() != static_cast<std::size_t>(ws.num_tasks))
    throw ShapeError("build_vectorized_system: " + std::to_string(codes.size()) +
                     " codes for " + std::to_string(ws.num_tasks) + " tasks");
  const Eigen::Index n = ws.designs[0].rows();
  VectorizedSystem sys;
  sys.layout = ws.layout;
  sys.Z.resize(n * ws.num_tasks, ws.layout.total);
  sys.y.resize(n * ws.num_tasks);
  for (int m = 0; m < ws.num_tasks; ++m) {
    fill_task_rows(sys.Z.middleRows(m * n, n), ws.design_for(m),
                   codes[static_cast<std::size_t>(m)], ws.layout);
    sys.y.segment(m * n, n) = ws.centered[static_cast<std::size_t>(m)];
  }
  return sys;
}

// Closed-form coefficient update: b = (Z'Z + nu I)^-1 Z' y.
inline Eigen::VectorXd spline_update(const Eigen::MatrixXd& Z,
                                     const Eigen::VectorXd& y, double nu) {
  if (Z.rows() != y.size())
    throw ShapeError("spline_update: Z rows vs stacked response length");
  Eigen::MatrixXd G = Z.transpose() * Z;
  Eigen::VectorXd rhs = Z.transpose() * y;
  return detail::solve_regularized(std::move(G), rhs, nu);
}

// Same solution, assembled by accumulating each task's Gram contribution
// (fixed chunking keeps the reduction order independent of the thread
// count).
inline Eigen::VectorXd spline_update_accumulated(
    const FitWorkspace& ws, const std::vector<BlockSparseCode>& codes,
    double nu, int threads = 1) {
  const Eigen::Index n = ws.designs[0].rows();
  const Eigen::Index M = ws.layout.total;
  struct Partial {
    Eigen::MatrixXd G;
    Eigen::VectorXd g;
  };
  constexpr std::size_t kChunk = 16;
  auto partials = map_chunks<Partial>(
      static_cast<std::size_t>(ws.num_tasks), kChunk, threads,
      [&](std::size_t begin, std::size_t end) {
        Partial part{Eigen::MatrixXd::Zero(M, M), Eigen::VectorXd::Zero(M)};
        Eigen::MatrixXd rows(n, M);
        for (std::size_t m = begin; m < end; ++m) {
          fill_task_rows(rows, ws.design_for(static_cast<int>(m)), codes[m],
                         ws.layout);
          part.G.noalias() += rows.transpose() * rows;
          part.g.noalias() += rows.transpose() * ws.centered[m];
        }
        return part;
      });
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(M, M);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(M);
  for (const auto& part : partials) {
    G += part.G;
    rhs += part.g;
  }
  return detail::solve_regularized(std::move(G), rhs, nu);
}

// Sum of squared residuals on centered responses plus the nu |B|_F^2 penalty.
inline double objective(const FitWorkspace& ws,
                        const std::vector<Eigen::MatrixXd>& B,
                        const std::vector<BlockSparseCode>& codes, double nu) {
  double value = 0.0;
  for (int m = 0; m < ws.num_tasks; ++m) {
    Eigen::VectorXd pred = Eigen::VectorXd::Zero(ws.designs[0].rows());
    const auto& design = ws.design_for(m);
    for (const auto& sel : codes[static_cast<std::size_t>(m)].selected) {
      if (sel.coefficient == 0.0) continue;
      pred.noalias() += design.block(sel.block) *
                        (B[static_cast<std::size_t>(sel.block)].col(sel.atom) *
                         sel.coefficient);
    }
    value += (ws.centered[static_cast<std::size_t>(m)] - pred).squaredNorm();
  }
  for (const auto& b : B) value += nu * b.squaredNorm();
  return value;
}

// Re-seats transfer functions no task uses: the unused column is refit to
// the worst task's residual on that covariate and assigned to that task.
// The ridge refit can only lower the residual when the task had no previous
// selection in the block; when replacing one, an unpenalized refit is the
// fallback that keeps the repair non-degrading.
inline int repair_empty_transfer_functions(const FitWorkspace& ws,
                                           std::vector<BlockSparseCode>& codes,
                                           std::vector<Eigen::MatrixXd>& B,
                                           double nu) {
  const int p = static_cast<int>(ws.bases.size());
  const int N = ws.num_tasks;
  int repairs = 0;
  std::vector<std::vector<bool>> repaired(static_cast<std::size_t>(p));
  for (int j = 0; j < p; ++j)
    repaired[static_cast<std::size_t>(j)].assign(
        static_cast<std::size_t>(ws.layout.block_sizes[j]), false);

  auto task_residual = [&](int m) -> Eigen::VectorXd {
    Eigen::VectorXd pred = Eigen::VectorXd::Zero(ws.designs[0].rows());
    const auto& design = ws.design_for(m);
    for (const auto& sel : codes[static_cast<std::size_t>(m)].selected)
      if (sel.coefficient != 0.0)
        pred.noalias() += design.block(sel.block) *
                          (B[static_cast<std::size_t>(sel.block)].col(sel.atom) *
                           sel.coefficient);
    return ws.centered[static_cast<std::size_t>(m)] - pred;
  };

  for (;;) {
    // usage over the current codes
    std::vector<std::vector<int>> usage(static_cast<std::size_t>(p));
    for (int j = 0; j < p; ++j)
      usage[static_cast<std::size_t>(j)].assign(
          static_cast<std::size_t>(ws.layout.block_sizes[j]), 0);
    for (const auto& code : codes)
      for (const auto& sel : code.selected)
        if (sel.coefficient != 0.0)
          ++usage[static_cast<std::size_t>(sel.block)]
                 [static_cast<std::size_t>(sel.atom)];

    int uj = -1, ul = -1;
    for (int j = 0; j < p && uj < 0; ++j)
      for (int l = 0; l < ws.layout.block_sizes[j]; ++l)
        if (usage[static_cast<std::size_t>(j)][static_cast<std::size_t>(l)] ==
                0 &&
            !repaired[static_cast<std::size_t>(j)][static_cast<std::size_t>(l)]) {
          uj = j;
          ul = l;
          break;
        }
    if (uj < 0) break;
    repaired[static_cast<std::size_t>(uj)][static_cast<std::size_t>(ul)] = true;

    int worst = 0;
    double worst_norm = -1.0;
    std::vector<Eigen::VectorXd> residuals(static_cast<std::size_t>(N));
    for (int m = 0; m < N; ++m) {
      residuals[static_cast<std::size_t>(m)] = task_residual(m);
      double norm = residuals[static_cast<std::size_t>(m)].norm();
      if (norm > worst_norm) {
        worst_norm = norm;
        worst = m;
      }
    }

    auto& code = codes[static_cast<std::size_t>(worst)];
    const auto& design = ws.design_for(worst);
    auto S = design.block(uj);
    // residual with block uj's current contribution added back
    Eigen::VectorXd target = residuals[static_cast<std::size_t>(worst)];
    for (const auto& sel : code.selected)
      if (sel.block == uj && sel.coefficient != 0.0)
        target.noalias() += S * (B[static_cast<std::size_t>(uj)].col(sel.atom) *
                                 sel.coefficient);

    Eigen::MatrixXd gram = S.transpose() * S;
    Eigen::VectorXd beta =
        detail::solve_regularized(gram, S.transpose() * target, nu);
    if ((target - S * beta).norm() > worst_norm) {
      beta = Eigen::MatrixXd(S).completeOrthogonalDecomposition().solve(target);
    }

    B[static_cast<std::size_t>(uj)].col(ul) = beta;
    code.weights[static_cast<std::size_t>(uj)].setZero();
    code.weights[static_cast<std::size_t>(uj)][ul] = 1.0;
    bool replaced = false;
    for (auto& sel : code.selected)
      if (sel.block == uj) {
        sel.atom = ul;
        sel.coefficient = 1.0;
        replaced = true;
        break;
      }
    if (!replaced) code.selected.push_back({uj, ul, 1.0});
    code.residual_norm = task_residual(worst).norm();
    ++repairs;
  }
  return repairs;
}

// B_j <- [B_j, -B_j]; weights split into positive and negative parts so every
// stored weight is non-negative. Predictions are unchanged (the sign flip is
// exact in floating point).
inline void finalize_nonneg(std::vector<Eigen::MatrixXd>& B,
                            std::vector<BlockSparseCode>& codes) {
  std::vector<Eigen::Index> widths;
  for (auto& b : B) {
    widths.push_back(b.cols());
    Eigen::MatrixXd doubled(b.rows(), 2 * b.cols());
    doubled << b, -b;
    b = std::move(doubled);
  }
  for (auto& code : codes) {
    for (std::size_t j = 0; j < code.weights.size(); ++j) {
      const Eigen::Index L = widths[j];
      Eigen::VectorXd split = Eigen::VectorXd::Zero(2 * L);
      for (Eigen::Index l = 0; l < L; ++l) {
        split[l] = std::max(0.0, code.weights[j][l]);
        split[L + l] = std::max(0.0, -code.weights[j][l]);
      }
      code.weights[j] = std::move(split);
    }
    for (auto& sel : code.selected)
      if (sel.coefficient < 0.0) {
        sel.atom += static_cast<int>(widths[static_cast<std::size_t>(sel.block)]);
        sel.coefficient = -sel.coefficient;
      }
  }
}

// The fitted artifact: shared bases, finalized coefficient matrices
// (width 2 L_j), per-task non-negative codes and intercepts.
struct MultiTaskModel {
  std::vector<SplineBasis> bases;
  std::vector<Eigen::MatrixXd> coefficient_matrices;
  std::vector<BlockSparseCode> codes;
  std::vector<std::string> task_ids;
  Eigen::VectorXd intercepts;
  FitConfig config;
  std::vector<double> objective_history;        // after each spline update
  std::vector<double> objective_before_spline;  // same iteration, before it
  int non_monotone_iterations = 0;
};

inline Eigen::VectorXd predict(const std::vector<SplineBasis>& bases,
                               const std::vector<Eigen::MatrixXd>& B,
                               const BlockSparseCode& code,
                               const Eigen::MatrixXd& covariates,
                               double task_mean) {
  const int p = static_cast<int>(bases.size());
  if (covariates.cols() != p)
    throw ShapeError("predict: covariates have " +
                     std::to_string(covariates.cols()) + " columns, expected " +
                     std::to_string(p));
  std::vector<Eigen::VectorXd> effective(static_cast<std::size_t>(p));
  for (int j = 0; j < p; ++j) {
    if (B[static_cast<std::size_t>(j)].rows() !=
        bases[static_cast<std::size_t>(j)].num_functions)
      throw ShapeError("predict: coefficient rows vs basis size for block " +
                       std::to_string(j));
    effective[static_cast<std::size_t>(j)] =
        Eigen::VectorXd::Zero(bases[static_cast<std::size_t>(j)].num_functions);
  }
  for (const auto& sel : code.selected)
    if (sel.coefficient != 0.0)
      effective[static_cast<std::size_t>(sel.block)] +=
          sel.coefficient *
          B[static_cast<std::size_t>(sel.block)].col(sel.atom);

  Eigen::VectorXd out(covariates.rows());
  for (Eigen::Index i = 0; i < covariates.rows(); ++i) {
    double acc = task_mean;
    for (int j = 0; j < p; ++j)
      acc += bases[static_cast<std::size_t>(j)]
                 .eval_centered(covariates(i, j))
                 .dot(effective[static_cast<std::size_t>(j)]);
    out[i] = acc;
  }
  return out;
}

inline Eigen::VectorXd predict(const MultiTaskModel& model,
                               const Eigen::MatrixXd& covariates,
                               int task_index) {
  return predict(model.bases, model.coefficient_matrices,
                 model.codes[static_cast<std::size_t>(task_index)], covariates,
                 model.intercepts[task_index]);
}

inline double objective(const MultiTaskModel& model,
                        const TaskDataset& dataset) {
  FitWorkspace ws;
  ws.shared = dataset.shared_covariates();
  ws.num_tasks = dataset.num_tasks();
  ws.bases = model.bases;
  if (ws.shared) {
    ws.designs.push_back(build_design(ws.bases, dataset.task(0).covariates));
  } else {
    for (int m = 0; m < dataset.num_tasks(); ++m)
      ws.designs.push_back(build_design(ws.bases, dataset.task(m).covariates));
  }
  ws.means.resize(dataset.num_tasks());
  for (int m = 0; m < dataset.num_tasks(); ++m) {
    ws.means[m] = dataset.task(m).responses.mean();
    ws.centered.push_back(dataset.task(m).responses.array() - ws.means[m]);
  }
  return objective(ws, model.coefficient_matrices, model.codes,
                   model.config.nu);
}

// Algorithm: random (or supplied) coefficients, then alternate the per-task
// BC-OMP weights update (plus optional empty-function repair) with the
// closed-form spline update, stop on the iteration budget or a relative
// objective tolerance, and finalize to non-negative weights.
inline MultiTaskModel fit(
    const TaskDataset& dataset, const FitConfig& config, int threads = 1,
    const std::vector<Eigen::MatrixXd>* initial_coefficients = nullptr) {
  FitWorkspace ws = make_workspace(dataset, config);
  Rng rng(config.seed);
  std::vector<Eigen::MatrixXd> B;
  if (initial_coefficients) {
    B = *initial_coefficients;
    if (B.size() != ws.bases.size())
      throw ShapeError("fit: initial coefficients block count mismatch");
  } else {
    B = init_coefficients(config, ws.bases, rng);
  }

  MultiTaskModel model;
  model.config = config;
  std::vector<BlockSparseCode> codes;
  double prev_obj = std::numeric_limits<double>::quiet_NaN();

  for (int iter = 0; iter < config.max_iterations; ++iter) {
    codes = weights_update(ws, dataset, B, threads);
    if (config.repair_empty)
      repair_empty_transfer_functions(ws, codes, B, config.nu);

    double before = objective(ws, B, codes, config.nu);
    Eigen::VectorXd b = spline_update_accumulated(ws, codes, config.nu, threads);
    B = unpack_coefficients(ws.layout, b);
    double after = objective(ws, B, codes, config.nu);

    model.objective_before_spline.push_back(before);
    model.objective_history.push_back(after);
    if (iter > 0 && after > model.objective_history[static_cast<std::size_t>(
                                iter - 1)])
      ++model.non_monotone_iterations;

    if (config.rel_objective_tol > 0.0 && iter > 0) {
      double rel = std::abs(prev_obj - after) / std::max(1.0, std::abs(prev_obj));
      if (rel < config.rel_objective_tol) {
        prev_obj = after;
        break;
      }
    }
    prev_obj = after;
  }

  finalize_nonneg(B, codes);
  model.bases = std::move(ws.bases);
  model.coefficient_matrices = std::move(B);
  model.codes = std::move(codes);
  model.intercepts = ws.means;
  for (const auto& t : dataset.tasks()) model.task_ids.push_back(t.task_id);
  return model;
}

}  // namespace shared_transfer
