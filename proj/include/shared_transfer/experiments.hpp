#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "shared_transfer/errors.hpp"
#include "shared_transfer/learner.hpp"
#include "shared_transfer/random.hpp"
#include "shared_transfer/splines.hpp"

namespace shared_transfer {

// Synthetic multi-task setting; the defaults mirror the reference study
// (n=100 samples, p=10 covariates, N=200 tasks, L=3 candidate functions,
// unit noise, 400 test rows).
struct SyntheticSpec {
  int n = 100;
  int p = 10;
  int N = 200;
  int L = 3;
  double noise_sigma = 1.0;
  int test_n = 400;
  double weight_scale = 1.0;
  std::uint64_t seed = 0;
  int num_basis_functions = 12;
  int spline_degree = 3;
};

struct GroundTruth {
  std::vector<SplineBasis> bases;
  std::vector<Eigen::MatrixXd> coefficients;  // true B_j, T x L
  std::vector<BlockSparseCode> codes;         // one per task, weights >= 0
};

struct SyntheticData {
  TaskDataset train;
  TaskDataset test;
  GroundTruth truth;
};

// Covariates iid U[-1,1] shared across tasks; true transfer functions are
// random spline coefficients rescaled to unit empirical norm over the
// training sample; weights are U[0.5, 1.5] (times weight_scale) on one
// uniformly chosen atom per covariate.
inline SyntheticData generate_synthetic(const SyntheticSpec& spec, Rng& rng) {
  SyntheticData data;
  Eigen::MatrixXd train_x(spec.n, spec.p);
  for (int j = 0; j < spec.p; ++j)
    for (int i = 0; i < spec.n; ++i) train_x(i, j) = rng.uniform(-1.0, 1.0);

  for (int j = 0; j < spec.p; ++j)
    data.truth.bases.push_back(make_basis(train_x.col(j),
                                          spec.num_basis_functions,
                                          spec.spline_degree, j + 1));
  auto train_design = build_design(data.truth.bases, train_x);

  const double root_n = std::sqrt(static_cast<double>(spec.n));
  for (int j = 0; j < spec.p; ++j) {
    Eigen::MatrixXd B(spec.num_basis_functions, spec.L);
    for (int l = 0; l < spec.L; ++l) {
      Eigen::VectorXd beta(spec.num_basis_functions);
      for (int t = 0; t < spec.num_basis_functions; ++t) beta[t] = rng.normal();
      Eigen::VectorXd atom = train_design.block(j) * beta;
      B.col(l) = beta * (root_n / atom.norm());  // unit empirical norm
    }
    data.truth.coefficients.push_back(std::move(B));
  }
  auto dict = assemble(design_blocks(train_design), data.truth.coefficients);

  Eigen::MatrixXd test_x(spec.test_n, spec.p);
  for (int j = 0; j < spec.p; ++j)
    for (int i = 0; i < spec.test_n; ++i) test_x(i, j) = rng.uniform(-1.0, 1.0);
  auto test_design = build_design(data.truth.bases, test_x);

  std::vector<TaskData> train_tasks, test_tasks;
  for (int m = 0; m < spec.N; ++m) {
    BlockSparseCode code;
    Eigen::VectorXd train_signal = Eigen::VectorXd::Zero(spec.n);
    Eigen::VectorXd test_signal = Eigen::VectorXd::Zero(spec.test_n);
    for (int j = 0; j < spec.p; ++j) {
      code.weights.push_back(Eigen::VectorXd::Zero(spec.L));
      int l = rng.uniform_int(0, spec.L - 1);
      double w = spec.weight_scale * rng.uniform(0.5, 1.5);
      code.weights[j][l] = w;
      code.selected.push_back({j, l, w});
      train_signal += w * dict.blocks[j].col(l);
      test_signal += w * (test_design.block(j) *
                          data.truth.coefficients[static_cast<std::size_t>(j)]
                              .col(l));
    }
    data.truth.codes.push_back(std::move(code));

    Eigen::VectorXd train_y = train_signal;
    for (int i = 0; i < spec.n; ++i) train_y[i] += spec.noise_sigma * rng.normal();
    Eigen::VectorXd test_y = test_signal;
    for (int i = 0; i < spec.test_n; ++i)
      test_y[i] += spec.noise_sigma * rng.normal();

    std::string id = "t" + std::to_string(m);
    train_tasks.push_back({id, train_x, std::move(train_y)});
    test_tasks.push_back({id, test_x, std::move(test_y)});
  }
  data.train = TaskDataset(std::move(train_tasks));
  data.test = TaskDataset(std::move(test_tasks));
  return data;
}

inline double rmse(const Eigen::VectorXd& predictions,
                   const Eigen::VectorXd& truth) {
  if (predictions.size() != truth.size())
    throw ShapeError("rmse: length mismatch");
  return std::sqrt((predictions - truth).squaredNorm() /
                   static_cast<double>(predictions.size()));
}

// ---------------------------------------------------------------------------
// Baselines

// Independent additive model per task (spline ridge fit).
struct IamModel {
  std::vector<SplineBasis> bases;
  std::vector<RidgeFit> fits;
};

inline IamModel fit_iam(const TaskDataset& dataset, double nu, int T = 12,
                        int degree = 3) {
  IamModel model;
  const int p = dataset.num_covariates();
  for (int j = 0; j < p; ++j) {
    Eigen::VectorXd samples;
    if (dataset.covariates_identical()) {
      samples = dataset.task(0).covariates.col(j);
    } else {
      samples.resize(dataset.samples_per_task() * dataset.num_tasks());
      for (int m = 0; m < dataset.num_tasks(); ++m)
        samples.segment(m * dataset.samples_per_task(),
                        dataset.samples_per_task()) =
            dataset.task(m).covariates.col(j);
    }
    model.bases.push_back(make_basis(samples, T, degree, j + 1));
  }
  DesignMatrix shared_design;
  if (dataset.covariates_identical())
    shared_design = build_design(model.bases, dataset.task(0).covariates);
  for (int m = 0; m < dataset.num_tasks(); ++m) {
    const DesignMatrix& design =
        dataset.covariates_identical()
            ? shared_design
            : build_design(model.bases, dataset.task(m).covariates);
    model.fits.push_back(fit_ridge(design, dataset.task(m).responses, nu));
  }
  return model;
}

inline Eigen::VectorXd predict_iam(const IamModel& model, int task,
                                   const Eigen::MatrixXd& covariates) {
  auto design = build_design(model.bases, covariates);
  return predict_ridge(model.fits[static_cast<std::size_t>(task)], design);
}

// K-means over response vectors followed by one additive model per cluster
// centroid.
struct KamModel {
  std::vector<SplineBasis> bases;
  std::vector<int> assignments;  // task -> cluster
  std::vector<RidgeFit> fits;    // one per cluster
};

inline KamModel fit_kam(const TaskDataset& dataset, int clusters, double nu,
                        Rng& rng, int T = 12, int degree = 3) {
  if (clusters < 1) throw Error("fit_kam: cluster count must be >= 1");
  const int N = dataset.num_tasks();
  clusters = std::min(clusters, N);
  const Eigen::Index n = dataset.samples_per_task();

  Eigen::MatrixXd Y(n, N);
  for (int m = 0; m < N; ++m) Y.col(m) = dataset.task(m).responses;

  // k-means++ seeding
  std::vector<Eigen::VectorXd> centroids;
  centroids.push_back(Y.col(rng.uniform_int(0, N - 1)));
  while (static_cast<int>(centroids.size()) < clusters) {
    Eigen::VectorXd d2(N);
    for (int m = 0; m < N; ++m) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : centroids)
        best = std::min(best, (Y.col(m) - c).squaredNorm());
      d2[m] = best;
    }
    double total = d2.sum();
    if (total <= 0.0) {
      centroids.push_back(Y.col(rng.uniform_int(0, N - 1)));
      continue;
    }
    double r = rng.uniform() * total, acc = 0.0;
    int chosen = N - 1;
    for (int m = 0; m < N; ++m) {
      acc += d2[m];
      if (acc >= r) {
        chosen = m;
        break;
      }
    }
    centroids.push_back(Y.col(chosen));
  }

  // Lloyd iterations, empty clusters reseeded from the farthest point
  std::vector<int> assignments(static_cast<std::size_t>(N), 0);
  for (int iter = 0; iter < 100; ++iter) {
    bool changed = false;
    for (int m = 0; m < N; ++m) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int k = 0; k < clusters; ++k) {
        double d = (Y.col(m) - centroids[static_cast<std::size_t>(k)])
                       .squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = k;
        }
      }
      if (assignments[static_cast<std::size_t>(m)] != best) {
        assignments[static_cast<std::size_t>(m)] = best;
        changed = true;
      }
    }
    for (int k = 0; k < clusters; ++k) {
      Eigen::VectorXd mean = Eigen::VectorXd::Zero(n);
      int count = 0;
      for (int m = 0; m < N; ++m)
        if (assignments[static_cast<std::size_t>(m)] == k) {
          mean += Y.col(m);
          ++count;
        }
      if (count == 0) {
        int farthest = 0;
        double far_d = -1.0;
        for (int m = 0; m < N; ++m) {
          double d = (Y.col(m) -
                      centroids[static_cast<std::size_t>(
                          assignments[static_cast<std::size_t>(m)])])
                         .squaredNorm();
          if (d > far_d) {
            far_d = d;
            farthest = m;
          }
        }
        centroids[static_cast<std::size_t>(k)] = Y.col(farthest);
        changed = true;
      } else {
        centroids[static_cast<std::size_t>(k)] = mean / count;
      }
    }
    if (!changed) break;
  }

  KamModel model;
  model.assignments = assignments;
  const int p = dataset.num_covariates();
  for (int j = 0; j < p; ++j) {
    Eigen::VectorXd samples;
    if (dataset.covariates_identical()) {
      samples = dataset.task(0).covariates.col(j);
    } else {
      samples.resize(n * N);
      for (int m = 0; m < N; ++m)
        samples.segment(m * n, n) = dataset.task(m).covariates.col(j);
    }
    model.bases.push_back(make_basis(samples, T, degree, j + 1));
  }
  if (dataset.covariates_identical()) {
    auto design = build_design(model.bases, dataset.task(0).covariates);
    for (int k = 0; k < clusters; ++k)
      model.fits.push_back(
          fit_ridge(design, centroids[static_cast<std::size_t>(k)], nu));
  } else {
    // no common sampling grid: fit each cluster on its pooled member rows
    for (int k = 0; k < clusters; ++k) {
      std::vector<int> members;
      for (int m = 0; m < N; ++m)
        if (assignments[static_cast<std::size_t>(m)] == k) members.push_back(m);
      Eigen::MatrixXd x(n * static_cast<Eigen::Index>(members.size()), p);
      Eigen::VectorXd y(n * static_cast<Eigen::Index>(members.size()));
      for (std::size_t i = 0; i < members.size(); ++i) {
        x.middleRows(static_cast<Eigen::Index>(i) * n, n) =
            dataset.task(members[i]).covariates;
        y.segment(static_cast<Eigen::Index>(i) * n, n) =
            dataset.task(members[i]).responses;
      }
      model.fits.push_back(fit_ridge(build_design(model.bases, x), y, nu));
    }
  }
  return model;
}

inline Eigen::VectorXd predict_kam(const KamModel& model, int task,
                                   const Eigen::MatrixXd& covariates) {
  auto design = build_design(model.bases, covariates);
  int cluster = model.assignments[static_cast<std::size_t>(task)];
  return predict_ridge(model.fits[static_cast<std::size_t>(cluster)], design);
}

// Per-task linear ridge regression on centered covariates.
struct LinearFit {
  Eigen::VectorXd beta;
  Eigen::RowVectorXd covariate_means;
  double response_mean = 0.0;
};

inline std::vector<LinearFit> fit_linear(const TaskDataset& dataset,
                                         double nu) {
  std::vector<LinearFit> fits;
  for (int m = 0; m < dataset.num_tasks(); ++m) {
    const auto& task = dataset.task(m);
    LinearFit fit;
    fit.covariate_means = task.covariates.colwise().mean();
    fit.response_mean = task.responses.mean();
    Eigen::MatrixXd xc = task.covariates.rowwise() - fit.covariate_means;
    Eigen::VectorXd yc = task.responses.array() - fit.response_mean;
    Eigen::MatrixXd G = xc.transpose() * xc;
    fit.beta = detail::solve_regularized(std::move(G), xc.transpose() * yc, nu);
    fits.push_back(std::move(fit));
  }
  return fits;
}

inline Eigen::VectorXd predict_linear(const LinearFit& fit,
                                      const Eigen::MatrixXd& covariates) {
  return ((covariates.rowwise() - fit.covariate_means) * fit.beta).array() +
         fit.response_mean;
}

// ---------------------------------------------------------------------------
// Ground-truth matching

// Per-covariate assignment of estimated transfer functions to the true ones,
// with a signed least-squares scale aligning each pair on the grid (the
// bilinear model only identifies functions up to scale and sign).
struct TransferFunctionMatch {
  std::vector<int> permutation;        // true l -> estimated column
  std::vector<double> scales;          // signed alignment scale
  std::vector<double> relative_errors; // |c g - f| / |f| on the grid
};

namespace detail {

inline void assignment_search(const Eigen::MatrixXd& cost, int level,
                              std::vector<int>& current, std::vector<bool>& used,
                              double acc, double& best,
                              std::vector<int>& best_assign) {
  const int rows = static_cast<int>(cost.rows());
  const int cols = static_cast<int>(cost.cols());
  if (level == rows) {
    if (acc < best) {
      best = acc;
      best_assign = current;
    }
    return;
  }
  for (int c = 0; c < cols; ++c) {
    if (used[static_cast<std::size_t>(c)]) continue;
    if (acc + cost(level, c) >= best) continue;
    used[static_cast<std::size_t>(c)] = true;
    current[static_cast<std::size_t>(level)] = c;
    assignment_search(cost, level + 1, current, used, acc + cost(level, c),
                      best, best_assign);
    used[static_cast<std::size_t>(c)] = false;
  }
}

}  // namespace detail

inline std::vector<TransferFunctionMatch> match_transfer_functions(
    const std::vector<SplineBasis>& est_bases,
    const std::vector<Eigen::MatrixXd>& est_coefficients,
    const GroundTruth& truth, const Eigen::VectorXd& grid) {
  const int p = static_cast<int>(truth.bases.size());
  if (static_cast<int>(est_bases.size()) != p)
    throw ShapeError("match_transfer_functions: covariate count mismatch");
  std::vector<TransferFunctionMatch> matches;
  for (int j = 0; j < p; ++j) {
    const int L_true =
        static_cast<int>(truth.coefficients[static_cast<std::size_t>(j)].cols());
    const int L_est =
        static_cast<int>(est_coefficients[static_cast<std::size_t>(j)].cols());
    if (L_est < L_true)
      throw ShapeError("match_transfer_functions: fewer estimated functions "
                       "than true ones");
    if (L_true > 8)
      throw BudgetExceeded("match_transfer_functions: exhaustive assignment "
                           "supports at most 8 functions");

    Eigen::MatrixXd f(grid.size(), L_true), g(grid.size(), L_est);
    for (Eigen::Index i = 0; i < grid.size(); ++i) {
      Eigen::VectorXd st =
          truth.bases[static_cast<std::size_t>(j)].eval_centered(grid[i]);
      Eigen::VectorXd se =
          est_bases[static_cast<std::size_t>(j)].eval_centered(grid[i]);
      f.row(i) = (st.transpose() *
                  truth.coefficients[static_cast<std::size_t>(j)]);
      g.row(i) =
          (se.transpose() * est_coefficients[static_cast<std::size_t>(j)]);
    }

    Eigen::MatrixXd cost(L_true, L_est);
    Eigen::MatrixXd scale(L_true, L_est);
    for (int a = 0; a < L_true; ++a)
      for (int b = 0; b < L_est; ++b) {
        double gg = g.col(b).squaredNorm();
        double c = gg > 0.0 ? f.col(a).dot(g.col(b)) / gg : 0.0;
        scale(a, b) = c;
        double fnorm = f.col(a).norm();
        cost(a, b) = fnorm > 0.0 ? (f.col(a) - c * g.col(b)).norm() / fnorm
                                 : (c * g.col(b)).norm();
      }

    std::vector<int> current(static_cast<std::size_t>(L_true), -1), best_assign;
    std::vector<bool> used(static_cast<std::size_t>(L_est), false);
    double best = std::numeric_limits<double>::infinity();
    detail::assignment_search(cost, 0, current, used, 0.0, best, best_assign);

    TransferFunctionMatch match;
    for (int a = 0; a < L_true; ++a) {
      int b = best_assign[static_cast<std::size_t>(a)];
      match.permutation.push_back(b);
      match.scales.push_back(scale(a, b));
      match.relative_errors.push_back(cost(a, b));
    }
    matches.push_back(std::move(match));
  }
  return matches;
}

inline double mean_match_error(const std::vector<TransferFunctionMatch>& matches) {
  double total = 0.0;
  int count = 0;
  for (const auto& m : matches)
    for (double e : m.relative_errors) {
      total += e;
      ++count;
    }
  return count > 0 ? total / count : 0.0;
}

// ---------------------------------------------------------------------------
// Iteration timing for complexity-scaling checks

struct IterationBenchmark {
  double median_ms = 0.0;
  std::vector<double> runs_ms;
};

// Median wall time of one full fit iteration (weights update, repair, spline
// update) at the given sizes; data generation and basis construction are
// excluded from the timed region.
inline IterationBenchmark measure_fit_iteration(const SyntheticSpec& spec,
                                                int runs, int threads = 1) {
  Rng rng(spec.seed);
  auto data = generate_synthetic(spec, rng);
  FitConfig config;
  config.L_per_covariate = {spec.L};
  config.num_basis_functions = spec.num_basis_functions;
  config.spline_degree = spec.spline_degree;
  config.seed = spec.seed;
  auto ws = make_workspace(data.train, config);
  Rng init_rng(spec.seed + 1);
  auto B0 = init_coefficients(config, ws.bases, init_rng);

  IterationBenchmark bench;
  double sink = 0.0;
  for (int r = 0; r < runs; ++r) {
    auto B = B0;
    auto start = std::chrono::steady_clock::now();
    auto codes = weights_update(ws, data.train, B, threads);
    repair_empty_transfer_functions(ws, codes, B, config.nu);
    Eigen::VectorXd b = spline_update_accumulated(ws, codes, config.nu, threads);
    auto stop = std::chrono::steady_clock::now();
    sink += b.sum();
    bench.runs_ms.push_back(
        std::chrono::duration<double, std::milli>(stop - start).count());
  }
  if (!std::isfinite(sink)) throw Error("measure_fit_iteration: diverged");
  auto sorted = bench.runs_ms;
  std::sort(sorted.begin(), sorted.end());
  bench.median_ms = sorted[sorted.size() / 2];
  return bench;
}

// ---------------------------------------------------------------------------
// Model complexity accounting

// Scalar counts needed to store each model, normalized by N*p.
struct ComplexityReport {
  std::string method;
  double raw = 0.0;
  double normalized = 0.0;
};

inline ComplexityReport complexity_report(const std::string& method, int N,
                                          int p, int T, int L, int n) {
  const double dN = N, dp = p, dT = T, dL = L, dn = n;
  ComplexityReport report;
  report.method = method;
  if (method == "proposed")
    report.raw = dp * (dT * dL + 2.0 * dN);
  else if (method == "lr")
    report.raw = dN * dp;
  else if (method == "svr-rbf")
    report.raw = dN * dn * (dp + 1.0);
  else if (method == "iam")
    report.raw = dp * dT * dN;
  else if (method == "kam")
    report.raw = dp * dT * dL;
  else
    throw Error("complexity_report: unknown method " + method);
  report.normalized = report.raw / (dN * dp);
  return report;
}

}  // namespace shared_transfer
