// shared-transfer: fit, inspect and evaluate multi-task additive models with
// shared transfer functions.

#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "shared_transfer/shared_transfer.hpp"

namespace st = shared_transfer;

namespace {

struct FitOptions {
  std::string data_path;
  std::string out_path;
  std::string config_path;
  std::vector<int> L = {3};
  double nu = 1.0;
  int iterations = 30;
  double tol = 1e-6;
  std::uint64_t seed = 0;
  int basis_functions = 12;
  int degree = 3;
  bool no_repair = false;
  int threads = 0;
};

// Optional JSON config file; command-line flags win over file values and
// unknown keys are rejected.
void apply_config_file(const CLI::App* cmd, FitOptions& opt) {
  if (opt.config_path.empty()) return;
  std::ifstream in(opt.config_path);
  if (!in) throw st::DataError("config: cannot open " + opt.config_path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw st::DataError("config: parse error in " + opt.config_path + ": " +
                        e.what());
  }
  auto given = [&](const std::string& flag) {
    return cmd->count(flag) > 0;
  };
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "L") {
        if (!given("--L")) {
          if (value.is_array())
            opt.L = value.get<std::vector<int>>();
          else
            opt.L = {value.get<int>()};
        }
      } else if (key == "nu") {
        if (!given("--nu")) opt.nu = value.get<double>();
      } else if (key == "iterations") {
        if (!given("--iterations")) opt.iterations = value.get<int>();
      } else if (key == "tol") {
        if (!given("--tol")) opt.tol = value.get<double>();
      } else if (key == "seed") {
        if (!given("--seed")) opt.seed = value.get<std::uint64_t>();
      } else if (key == "basis_functions") {
        if (!given("--basis-functions"))
          opt.basis_functions = value.get<int>();
      } else if (key == "degree") {
        if (!given("--degree")) opt.degree = value.get<int>();
      } else if (key == "repair") {
        if (!given("--no-repair")) opt.no_repair = !value.get<bool>();
      } else if (key == "threads") {
        if (!given("--threads")) opt.threads = value.get<int>();
      } else {
        throw st::DataError("config: unknown key '" + key + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      throw st::DataError("config: bad value for '" + key + "': " + e.what());
    }
  }
}

st::FitConfig to_fit_config(const FitOptions& opt) {
  st::FitConfig config;
  config.L_per_covariate = opt.L;
  config.nu = opt.nu;
  config.max_iterations = opt.iterations;
  config.rel_objective_tol = opt.tol;
  config.seed = opt.seed;
  config.repair_empty = !opt.no_repair;
  config.num_basis_functions = opt.basis_functions;
  config.spline_degree = opt.degree;
  return config;
}

int run_fit(const CLI::App* cmd, FitOptions& opt) {
  apply_config_file(cmd, opt);
  auto dataset = st::load_csv(opt.data_path);
  auto model = st::fit(dataset, to_fit_config(opt), opt.threads);
  for (std::size_t i = 0; i < model.objective_history.size(); ++i)
    std::cout << "iteration " << i + 1 << ": objective "
              << model.objective_history[i] << "\n";
  if (model.non_monotone_iterations > 0)
    std::cout << "non-monotone iterations: " << model.non_monotone_iterations
              << "\n";
  st::save_model(model, opt.out_path);
  std::cout << "model written to " << opt.out_path << "\n";
  return 0;
}

int run_predict(const std::string& model_path, const std::string& data_path,
                const std::string& out_path) {
  auto model = st::load_model(model_path);
  auto dataset = st::load_csv(data_path);
  std::map<std::string, int> index;
  for (std::size_t m = 0; m < model.task_ids.size(); ++m)
    index[model.task_ids[m]] = static_cast<int>(m);

  std::ofstream out(out_path);
  if (!out) throw st::DataError("predict: cannot open " + out_path);
  out << "task_id,row,prediction\n";
  for (int m = 0; m < dataset.num_tasks(); ++m) {
    const auto& task = dataset.task(m);
    auto it = index.find(task.task_id);
    if (it == index.end())
      throw st::DataError("predict: task '" + task.task_id +
                          "' is not in the model");
    Eigen::VectorXd pred = st::predict(model, task.covariates, it->second);
    for (Eigen::Index i = 0; i < pred.size(); ++i)
      out << task.task_id << ',' << i << ','
          << st::detail::format_double(pred[i]) << '\n';
  }
  std::cout << "predictions written to " << out_path << "\n";
  return 0;
}

int run_synth(const st::SyntheticSpec& spec, const std::string& train_path,
              const std::string& test_path, const std::string& truth_path) {
  st::Rng rng(spec.seed);
  auto data = st::generate_synthetic(spec, rng);
  st::save_csv(data.train, train_path);
  if (!test_path.empty()) st::save_csv(data.test, test_path);
  if (!truth_path.empty()) st::save_truth(data.truth, truth_path);
  std::cout << "synthetic data: " << data.train.num_tasks() << " tasks, "
            << data.train.samples_per_task() << " train rows, "
            << data.test.samples_per_task() << " test rows\n";
  return 0;
}

int run_coherence(const std::string& model_path, const std::string& data_path,
                  const std::string& out_path, int samples,
                  std::uint64_t seed) {
  auto model = st::load_model(model_path);
  auto coefficients = st::primary_coefficients(model);

  st::DesignMatrix design;
  if (!data_path.empty()) {
    auto dataset = st::load_csv(data_path);
    if (dataset.covariates_identical()) {
      design = st::build_design(model.bases, dataset.task(0).covariates);
    } else {
      Eigen::Index n = dataset.samples_per_task();
      Eigen::MatrixXd stacked(n * dataset.num_tasks(),
                              dataset.num_covariates());
      for (int m = 0; m < dataset.num_tasks(); ++m)
        stacked.middleRows(m * n, n) = dataset.task(m).covariates;
      design = st::build_design(model.bases, stacked);
    }
  } else {
    // no data: sample covariates independently over each basis domain
    st::Rng rng(seed);
    Eigen::MatrixXd x(samples, static_cast<Eigen::Index>(model.bases.size()));
    for (std::size_t j = 0; j < model.bases.size(); ++j)
      for (int i = 0; i < samples; ++i)
        x(i, static_cast<Eigen::Index>(j)) =
            rng.uniform(model.bases[j].domain_lo, model.bases[j].domain_hi);
    design = st::build_design(model.bases, x);
  }

  auto dict = st::assemble(st::design_blocks(design), coefficients);
  auto report = st::coherence(dict);
  auto j = st::coherence_to_json(report);
  std::cout << j.dump(1) << "\n";
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw st::DataError("coherence: cannot open " + out_path);
    out << j.dump(1) << '\n';
  }
  return 0;
}

double dataset_rmse(
    const st::TaskDataset& dataset,
    const std::function<Eigen::VectorXd(int, const Eigen::MatrixXd&)>& predict) {
  double sum_sq = 0.0;
  Eigen::Index count = 0;
  for (int m = 0; m < dataset.num_tasks(); ++m) {
    const auto& task = dataset.task(m);
    Eigen::VectorXd pred = predict(m, task.covariates);
    sum_sq += (pred - task.responses).squaredNorm();
    count += task.responses.size();
  }
  return std::sqrt(sum_sq / static_cast<double>(count));
}

int run_eval(const std::string& model_path, const std::string& data_path,
             const std::string& test_path, const std::string& truth_path,
             const std::string& baselines_arg, const std::string& out_json,
             const std::string& out_csv, std::uint64_t seed, int threads) {
  auto model = st::load_model(model_path);
  auto train = st::load_csv(data_path);
  std::optional<st::TaskDataset> test;
  if (!test_path.empty()) test = st::load_csv(test_path);

  std::map<std::string, int> index;
  for (std::size_t m = 0; m < model.task_ids.size(); ++m)
    index[model.task_ids[m]] = static_cast<int>(m);
  auto model_index = [&](const st::TaskDataset& dataset, int m) {
    auto it = index.find(dataset.task(m).task_id);
    if (it == index.end())
      throw st::DataError("eval: task '" + dataset.task(m).task_id +
                          "' is not in the model");
    return it->second;
  };

  std::vector<st::SummaryRow> rows;
  using clock = std::chrono::steady_clock;

  {
    st::SummaryRow row;
    row.method = "proposed";
    row.seed = model.config.seed;
    auto start = clock::now();
    row.train_rmse = dataset_rmse(train, [&](int m, const Eigen::MatrixXd& x) {
      return st::predict(model, x, model_index(train, m));
    });
    if (test)
      row.test_rmse = dataset_rmse(*test, [&](int m, const Eigen::MatrixXd& x) {
        return st::predict(model, x, model_index(*test, m));
      });
    if (!truth_path.empty()) {
      auto truth = st::load_truth(truth_path);
      Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(
          200, model.bases[0].domain_lo, model.bases[0].domain_hi);
      auto matches = st::match_transfer_functions(
          model.bases, st::primary_coefficients(model), truth, grid);
      row.tf_match_error = st::mean_match_error(matches);
    }
    row.wall_ms =
        std::chrono::duration<double, std::milli>(clock::now() - start).count();
    rows.push_back(row);
  }

  std::vector<std::string> baselines;
  if (!baselines_arg.empty()) {
    std::size_t start = 0;
    for (;;) {
      auto comma = baselines_arg.find(',', start);
      baselines.push_back(baselines_arg.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
  }
  const double nu = model.config.nu;
  const int T = model.config.num_basis_functions;
  const int degree = model.config.spline_degree;
  for (const auto& name : baselines) {
    st::SummaryRow row;
    row.method = name;
    row.seed = seed;
    auto start = clock::now();
    if (name == "iam") {
      auto iam = st::fit_iam(train, nu, T, degree);
      row.train_rmse = dataset_rmse(train, [&](int m, const Eigen::MatrixXd& x) {
        return st::predict_iam(iam, m, x);
      });
      if (test)
        row.test_rmse = dataset_rmse(*test, [&](int m, const Eigen::MatrixXd& x) {
          return st::predict_iam(iam, m, x);
        });
    } else if (name == "kam") {
      int clusters = model.config.L_per_covariate.front();
      st::Rng rng(seed);
      auto kam = st::fit_kam(train, clusters, nu, rng, T, degree);
      row.train_rmse = dataset_rmse(train, [&](int m, const Eigen::MatrixXd& x) {
        return st::predict_kam(kam, m, x);
      });
      if (test)
        row.test_rmse = dataset_rmse(*test, [&](int m, const Eigen::MatrixXd& x) {
          return st::predict_kam(kam, m, x);
        });
    } else if (name == "lr") {
      auto fits = st::fit_linear(train, nu);
      row.train_rmse = dataset_rmse(train, [&](int m, const Eigen::MatrixXd& x) {
        return st::predict_linear(fits[static_cast<std::size_t>(m)], x);
      });
      if (test)
        row.test_rmse = dataset_rmse(*test, [&](int m, const Eigen::MatrixXd& x) {
          return st::predict_linear(fits[static_cast<std::size_t>(m)], x);
        });
    } else {
      throw st::DataError("eval: unknown baseline '" + name + "'");
    }
    row.wall_ms =
        std::chrono::duration<double, std::milli>(clock::now() - start).count();
    rows.push_back(row);
  }
  (void)threads;

  st::write_summary_csv(rows, std::cout);
  if (!out_csv.empty()) {
    std::ofstream out(out_csv);
    if (!out) throw st::DataError("eval: cannot open " + out_csv);
    st::write_summary_csv(rows, out);
  }
  if (!out_json.empty()) {
    std::ofstream out(out_json);
    if (!out) throw st::DataError("eval: cannot open " + out_json);
    out << st::summary_to_json(rows).dump(1) << '\n';
  }
  return 0;
}

int run_export_tf(const std::string& model_path, const std::string& out_path,
                  int grid_size) {
  auto model = st::load_model(model_path);
  std::ofstream out(out_path);
  if (!out) throw st::DataError("export-tf: cannot open " + out_path);
  out << "covariate,function,z,value\n";
  for (std::size_t j = 0; j < model.bases.size(); ++j) {
    const auto& basis = model.bases[j];
    const auto& B = model.coefficient_matrices[j];
    for (Eigen::Index l = 0; l < B.cols(); ++l)
      for (int i = 0; i < grid_size; ++i) {
        double z = basis.domain_lo + (basis.domain_hi - basis.domain_lo) *
                                         static_cast<double>(i) /
                                         (grid_size - 1);
        double value = basis.eval_centered(z).dot(B.col(l));
        out << basis.covariate_index << ',' << l << ','
            << st::detail::format_double(z) << ','
            << st::detail::format_double(value) << '\n';
      }
  }
  std::cout << "transfer functions written to " << out_path << "\n";
  return 0;
}

int run_bench(int n, int N, int p, int L, int T, int runs, std::uint64_t seed,
              const std::string& out_path) {
  st::SyntheticSpec base;
  base.n = n;
  base.N = N;
  base.p = p;
  base.L = L;
  base.num_basis_functions = T;
  base.test_n = 8;
  base.seed = seed;

  auto tasks_doubled = base;
  tasks_doubled.N = 2 * N;
  auto functions_doubled = base;
  functions_doubled.L = 2 * L;

  auto at_base = st::measure_fit_iteration(base, runs);
  auto at_2N = st::measure_fit_iteration(tasks_doubled, runs);
  auto at_2L = st::measure_fit_iteration(functions_doubled, runs);

  nlohmann::json j = {
      {"n", n},
      {"tasks", N},
      {"covariates", p},
      {"functions", L},
      {"runs", runs},
      {"base_ms", at_base.median_ms},
      {"tasks_doubled_ms", at_2N.median_ms},
      {"functions_doubled_ms", at_2L.median_ms},
      {"task_ratio", at_2N.median_ms / at_base.median_ms},
      {"function_ratio", at_2L.median_ms / at_base.median_ms}};
  std::cout << j.dump(1) << "\n";
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw st::DataError("bench: cannot open " + out_path);
    out << j.dump(1) << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-task additive models with shared transfer functions"};
  app.require_subcommand(1);

  FitOptions fit_opt;
  auto* fit_cmd = app.add_subcommand("fit", "Fit a model to a CSV dataset");
  fit_cmd->add_option("--data", fit_opt.data_path, "training CSV")->required();
  fit_cmd->add_option("--out", fit_opt.out_path, "output model JSON")
      ->required();
  fit_cmd->add_option("--config", fit_opt.config_path,
                      "JSON config file (flags override it)");
  fit_cmd->add_option("--L", fit_opt.L,
                      "candidate functions per covariate (one value or p)");
  fit_cmd->add_option("--nu", fit_opt.nu, "ridge regularizer");
  fit_cmd->add_option("--iterations", fit_opt.iterations, "max iterations");
  fit_cmd->add_option("--tol", fit_opt.tol,
                      "relative objective tolerance (0 disables)");
  fit_cmd->add_option("--seed", fit_opt.seed, "rng seed");
  fit_cmd->add_option("--basis-functions", fit_opt.basis_functions,
                      "spline basis size per covariate");
  fit_cmd->add_option("--degree", fit_opt.degree, "spline degree");
  fit_cmd->add_flag("--no-repair", fit_opt.no_repair,
                    "disable empty-transfer-function repair");
  fit_cmd->add_option("--threads", fit_opt.threads, "0 = auto");

  std::string predict_model, predict_data, predict_out;
  auto* predict_cmd =
      app.add_subcommand("predict", "Predict responses for known tasks");
  predict_cmd->add_option("--model", predict_model, "model JSON")->required();
  predict_cmd->add_option("--data", predict_data, "CSV with covariates")
      ->required();
  predict_cmd->add_option("--out", predict_out, "output predictions CSV")
      ->required();

  st::SyntheticSpec synth_spec;
  std::string synth_train, synth_test, synth_truth;
  auto* synth_cmd =
      app.add_subcommand("synth", "Generate a synthetic multi-task dataset");
  synth_cmd->add_option("--out-train", synth_train, "training CSV path")
      ->required();
  synth_cmd->add_option("--out-test", synth_test, "test CSV path");
  synth_cmd->add_option("--out-truth", synth_truth, "ground-truth JSON path");
  synth_cmd->add_option("--n", synth_spec.n, "samples per task");
  synth_cmd->add_option("--p", synth_spec.p, "covariates");
  synth_cmd->add_option("--tasks", synth_spec.N, "number of tasks");
  synth_cmd->add_option("--L", synth_spec.L, "true functions per covariate");
  synth_cmd->add_option("--sigma", synth_spec.noise_sigma, "noise level");
  synth_cmd->add_option("--test-n", synth_spec.test_n, "test rows");
  synth_cmd->add_option("--weight-scale", synth_spec.weight_scale,
                        "weight magnitude scale");
  synth_cmd->add_option("--seed", synth_spec.seed, "rng seed");
  synth_cmd->add_option("--basis-functions", synth_spec.num_basis_functions,
                        "spline basis size");

  std::string coh_model, coh_data, coh_out;
  int coh_samples = 1024;
  std::uint64_t coh_seed = 0;
  auto* coh_cmd = app.add_subcommand(
      "coherence", "Coherence report for a fitted model's dictionary");
  coh_cmd->add_option("--model", coh_model, "model JSON")->required();
  coh_cmd->add_option("--data", coh_data,
                      "CSV whose covariates define the dictionary rows");
  coh_cmd->add_option("--out", coh_out, "output JSON path");
  coh_cmd->add_option("--samples", coh_samples,
                      "sampled rows when no data is given");
  coh_cmd->add_option("--seed", coh_seed, "rng seed for sampling");

  std::string eval_model, eval_data, eval_test, eval_truth, eval_baselines;
  std::string eval_json, eval_csv;
  std::uint64_t eval_seed = 0;
  int eval_threads = 0;
  auto* eval_cmd =
      app.add_subcommand("eval", "RMSE table for a model and baselines");
  eval_cmd->add_option("--model", eval_model, "model JSON")->required();
  eval_cmd->add_option("--data", eval_data, "training CSV")->required();
  eval_cmd->add_option("--test", eval_test, "test CSV");
  eval_cmd->add_option("--truth", eval_truth,
                       "ground-truth JSON for transfer-function matching");
  eval_cmd->add_option("--baselines", eval_baselines,
                       "comma list from iam,kam,lr");
  eval_cmd->add_option("--out-json", eval_json, "summary JSON path");
  eval_cmd->add_option("--out-csv", eval_csv, "summary CSV path");
  eval_cmd->add_option("--seed", eval_seed, "baseline rng seed");
  eval_cmd->add_option("--threads", eval_threads, "0 = auto");

  std::string tf_model, tf_out;
  int tf_grid = 200;
  auto* tf_cmd = app.add_subcommand(
      "export-tf", "Sample the fitted transfer functions onto a grid CSV");
  tf_cmd->add_option("--model", tf_model, "model JSON")->required();
  tf_cmd->add_option("--out", tf_out, "output CSV")->required();
  tf_cmd->add_option("--grid", tf_grid, "grid points per covariate")
      ->check(CLI::Range(2, 100000));

  int bench_n = 200, bench_N = 200, bench_p = 6, bench_L = 3, bench_T = 12,
      bench_runs = 5;
  std::uint64_t bench_seed = 0;
  std::string bench_out;
  auto* bench_cmd = app.add_subcommand(
      "bench", "Iteration wall-time scaling in tasks and functions");
  bench_cmd->add_option("--n", bench_n, "samples per task");
  bench_cmd->add_option("--tasks", bench_N, "base task count");
  bench_cmd->add_option("--p", bench_p, "covariates");
  bench_cmd->add_option("--L", bench_L, "base functions per covariate");
  bench_cmd->add_option("--basis-functions", bench_T, "spline basis size");
  bench_cmd->add_option("--runs", bench_runs, "timing repetitions");
  bench_cmd->add_option("--seed", bench_seed, "rng seed");
  bench_cmd->add_option("--out", bench_out, "report JSON path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (fit_cmd->parsed()) return run_fit(fit_cmd, fit_opt);
    if (predict_cmd->parsed())
      return run_predict(predict_model, predict_data, predict_out);
    if (synth_cmd->parsed())
      return run_synth(synth_spec, synth_train, synth_test, synth_truth);
    if (coh_cmd->parsed())
      return run_coherence(coh_model, coh_data, coh_out, coh_samples, coh_seed);
    if (eval_cmd->parsed())
      return run_eval(eval_model, eval_data, eval_test, eval_truth,
                      eval_baselines, eval_json, eval_csv, eval_seed,
                      eval_threads);
    if (tf_cmd->parsed()) return run_export_tf(tf_model, tf_out, tf_grid);
    if (bench_cmd->parsed())
      return run_bench(bench_n, bench_N, bench_p, bench_L, bench_T, bench_runs,
                       bench_seed, bench_out);
  } catch (const st::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
