#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>

#include "shared_transfer/experiments.hpp"
#include "shared_transfer/random.hpp"

using namespace shared_transfer;

TEST_CASE("generate_synthetic dimensions match the spec defaults") {
  SyntheticSpec spec;
  Rng rng(spec.seed);
  auto data = generate_synthetic(spec, rng);
  CHECK(data.train.num_tasks() == 200);
  CHECK(data.train.samples_per_task() == 100);
  CHECK(data.train.num_covariates() == 10);
  CHECK(data.test.num_tasks() == 200);
  CHECK(data.test.samples_per_task() == 400);
  CHECK(data.train.shared_covariates());
  CHECK(data.test.shared_covariates());
  CHECK(data.truth.coefficients.size() == 10u);
  CHECK(data.truth.codes.size() == 200u);
  for (const auto& code : data.truth.codes)
    for (const auto& w : code.weights) CHECK(w.minCoeff() >= 0.0);
}

TEST_CASE("noiseless synthetic data is reproduced by the ground truth") {
  SyntheticSpec spec;
  spec.n = 60;
  spec.p = 3;
  spec.N = 5;
  spec.test_n = 40;
  spec.noise_sigma = 0.0;
  Rng rng(3);
  auto data = generate_synthetic(spec, rng);
  for (int m = 0; m < spec.N; ++m) {
    Eigen::VectorXd train_pred =
        predict(data.truth.bases, data.truth.coefficients,
                data.truth.codes[static_cast<std::size_t>(m)],
                data.train.task(m).covariates, 0.0);
    CHECK((train_pred - data.train.task(m).responses).lpNorm<Eigen::Infinity>() <
          1e-10);
    Eigen::VectorXd test_pred =
        predict(data.truth.bases, data.truth.coefficients,
                data.truth.codes[static_cast<std::size_t>(m)],
                data.test.task(m).covariates, 0.0);
    CHECK((test_pred - data.test.task(m).responses).lpNorm<Eigen::Infinity>() <
          1e-10);
  }
}

TEST_CASE("synthetic response variance decomposes into signal plus noise") {
  SyntheticSpec spec;
  spec.N = 100;
  Rng rng(7);
  auto data = generate_synthetic(spec, rng);
  // pooled over tasks: var(y) should be close to var(signal) + sigma^2
  double y_var = 0.0, signal_var = 0.0;
  Eigen::Index count = 0;
  for (int m = 0; m < spec.N; ++m) {
    Eigen::VectorXd signal =
        predict(data.truth.bases, data.truth.coefficients,
                data.truth.codes[static_cast<std::size_t>(m)],
                data.train.task(m).covariates, 0.0);
    const Eigen::VectorXd& y = data.train.task(m).responses;
    y_var += (y.array() - y.mean()).square().sum();
    signal_var += (signal.array() - signal.mean()).square().sum();
    count += y.size();
  }
  y_var /= static_cast<double>(count);
  signal_var /= static_cast<double>(count);
  CHECK(y_var ==
        Catch::Approx(signal_var + spec.noise_sigma * spec.noise_sigma)
            .epsilon(0.10));
}

TEST_CASE("generate_synthetic is deterministic per seed") {
  SyntheticSpec spec;
  spec.n = 30;
  spec.p = 2;
  spec.N = 4;
  spec.test_n = 10;
  Rng a(42), b(42);
  auto one = generate_synthetic(spec, a);
  auto two = generate_synthetic(spec, b);
  for (int m = 0; m < spec.N; ++m) {
    CHECK((one.train.task(m).responses.array() ==
           two.train.task(m).responses.array())
              .all());
    CHECK((one.train.task(m).covariates.array() ==
           two.train.task(m).covariates.array())
              .all());
  }
}

TEST_CASE("fit_iam on a single task equals fit_ridge") {
  SyntheticSpec spec;
  spec.n = 50;
  spec.p = 2;
  spec.N = 1;
  spec.test_n = 10;
  Rng rng(5);
  auto data = generate_synthetic(spec, rng);
  auto iam = fit_iam(data.train, 1.0);
  REQUIRE(iam.fits.size() == 1u);

  auto design = build_design(iam.bases, data.train.task(0).covariates);
  auto direct = fit_ridge(design, data.train.task(0).responses, 1.0);
  CHECK((iam.fits[0].coefficients - direct.coefficients)
            .lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(iam.fits[0].intercept == direct.intercept);
}

TEST_CASE("fit_iam drives residuals to zero on noiseless data") {
  SyntheticSpec spec;
  spec.n = 80;
  spec.p = 2;
  spec.N = 3;
  spec.test_n = 10;
  spec.noise_sigma = 0.0;
  Rng rng(6);
  auto data = generate_synthetic(spec, rng);
  auto iam = fit_iam(data.train, 1e-10);
  for (const auto& fit : iam.fits) CHECK(fit.residual_norm < 1e-5);
}

TEST_CASE("fit_kam with one cluster pools every task") {
  SyntheticSpec spec;
  spec.n = 40;
  spec.p = 2;
  spec.N = 6;
  spec.test_n = 10;
  Rng data_rng(8);
  auto data = generate_synthetic(spec, data_rng);
  Rng km_rng(1);
  auto kam = fit_kam(data.train, 1, 1.0, km_rng);
  REQUIRE(kam.fits.size() == 1u);
  for (int assignment : kam.assignments) CHECK(assignment == 0);

  // the single centroid is the mean response
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(spec.n);
  for (int m = 0; m < spec.N; ++m) mean += data.train.task(m).responses;
  mean /= spec.N;
  auto design = build_design(kam.bases, data.train.task(0).covariates);
  auto direct = fit_ridge(design, mean, 1.0);
  CHECK((kam.fits[0].coefficients - direct.coefficients)
            .lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("fit_kam with N clusters reduces to independent fits") {
  SyntheticSpec spec;
  spec.n = 40;
  spec.p = 2;
  spec.N = 5;
  spec.test_n = 10;
  Rng data_rng(9);
  auto data = generate_synthetic(spec, data_rng);
  Rng km_rng(2);
  auto kam = fit_kam(data.train, spec.N, 1.0, km_rng);
  auto iam = fit_iam(data.train, 1.0);
  for (int m = 0; m < spec.N; ++m) {
    int cluster = kam.assignments[static_cast<std::size_t>(m)];
    CHECK((kam.fits[static_cast<std::size_t>(cluster)].coefficients -
           iam.fits[static_cast<std::size_t>(m)].coefficients)
              .lpNorm<Eigen::Infinity>() < 1e-9);
  }
}

TEST_CASE("fit_kam recovers a planted partition") {
  // two groups of tasks with well-separated response profiles
  int n = 30, N = 10;
  Rng rng(10);
  Eigen::MatrixXd x(n, 1);
  for (int i = 0; i < n; ++i) x(i, 0) = rng.uniform(-1.0, 1.0);
  std::vector<TaskData> tasks;
  for (int m = 0; m < N; ++m) {
    Eigen::VectorXd y(n);
    double sign = m < N / 2 ? 1.0 : -1.0;
    for (int i = 0; i < n; ++i)
      y[i] = sign * (5.0 + std::sin(3.0 * x(i, 0))) + 0.05 * rng.normal();
    tasks.push_back({"t" + std::to_string(m), x, y});
  }
  TaskDataset dataset(std::move(tasks));
  Rng km_rng(11);
  auto kam = fit_kam(dataset, 2, 1.0, km_rng, 8, 3);
  for (int m = 1; m < N; ++m) {
    bool same_group = (m < N / 2);
    CHECK((kam.assignments[static_cast<std::size_t>(m)] == kam.assignments[0]) ==
          same_group);
  }
}

TEST_CASE("fit_linear basics") {
  Rng rng(12);
  int n = 50, p = 3;
  Eigen::MatrixXd x(n, p);
  for (int j = 0; j < p; ++j)
    for (int i = 0; i < n; ++i) x(i, j) = rng.uniform(-1.0, 1.0);

  SECTION("exactly linear data fits with near-zero residual") {
    Eigen::VectorXd beta(p);
    beta << 2.0, -1.0, 0.5;
    Eigen::VectorXd y = x * beta;
    y.array() += 3.0;
    TaskDataset dataset({{"t0", x, y}});
    auto fits = fit_linear(dataset, 1e-10);
    Eigen::VectorXd pred = predict_linear(fits[0], x);
    CHECK((pred - y).lpNorm<Eigen::Infinity>() < 1e-6);
  }

  SECTION("pure noise gives near-zero explanatory power") {
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) y[i] = rng.normal();
    TaskDataset dataset({{"t0", x, y}});
    auto fits = fit_linear(dataset, 1.0);
    Eigen::VectorXd pred = predict_linear(fits[0], x);
    double ss_res = (y - pred).squaredNorm();
    double ss_tot = (y.array() - y.mean()).square().sum();
    CHECK(1.0 - ss_res / ss_tot < 0.3);
  }

  SECTION("huge penalty shrinks coefficients to zero") {
    Eigen::VectorXd y = x.col(0) * 4.0;
    TaskDataset dataset({{"t0", x, y}});
    auto fits = fit_linear(dataset, 1e12);
    CHECK(fits[0].beta.lpNorm<Eigen::Infinity>() < 1e-6);
  }
}

TEST_CASE("rmse basics") {
  Eigen::VectorXd a(4), b(4);
  a << 1, 2, 3, 4;
  b << 1, 2, 3, 4;
  CHECK(rmse(a, b) == 0.0);
  CHECK(rmse(a.array() + 2.5, a) == Catch::Approx(2.5));

  Rng rng(13);
  Eigen::VectorXd u(30), v(30);
  for (int i = 0; i < 30; ++i) {
    u[i] = rng.normal();
    v[i] = rng.normal();
  }
  double direct = 0.0;
  for (int i = 0; i < 30; ++i) direct += (u[i] - v[i]) * (u[i] - v[i]);
  CHECK(rmse(u, v) == Catch::Approx(std::sqrt(direct / 30.0)));
  CHECK_THROWS_AS(rmse(u, Eigen::VectorXd::Zero(5)), ShapeError);
}

TEST_CASE("match_transfer_functions identifies the truth exactly") {
  SyntheticSpec spec;
  spec.n = 60;
  spec.p = 3;
  spec.N = 4;
  spec.test_n = 10;
  Rng rng(14);
  auto data = generate_synthetic(spec, rng);
  Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(100, -0.95, 0.95);

  SECTION("the model itself matches with zero error") {
    auto matches = match_transfer_functions(
        data.truth.bases, data.truth.coefficients, data.truth, grid);
    for (const auto& m : matches) {
      for (std::size_t l = 0; l < m.permutation.size(); ++l)
        CHECK(m.permutation[l] == static_cast<int>(l));
      for (double e : m.relative_errors) CHECK(e < 1e-12);
      for (double s : m.scales) CHECK(s == Catch::Approx(1.0).margin(1e-10));
    }
  }

  SECTION("a permuted and rescaled copy is matched through the permutation") {
    auto shuffled = data.truth.coefficients;
    for (auto& B : shuffled) {
      Eigen::MatrixXd reordered(B.rows(), B.cols());
      reordered.col(0) = -2.0 * B.col(2);
      reordered.col(1) = 0.5 * B.col(0);
      reordered.col(2) = B.col(1);
      B = reordered;
    }
    auto matches =
        match_transfer_functions(data.truth.bases, shuffled, data.truth, grid);
    for (const auto& m : matches) {
      CHECK(m.permutation[0] == 1);  // true 0 lives in shuffled column 1
      CHECK(m.permutation[1] == 2);
      CHECK(m.permutation[2] == 0);
      for (double e : m.relative_errors) CHECK(e < 1e-10);
      CHECK(m.scales[0] == Catch::Approx(2.0).margin(1e-8));
      CHECK(m.scales[2] == Catch::Approx(-0.5).margin(1e-8));
    }
  }
}

TEST_CASE("complexity report reproduces the published normalized values") {
  const int N = 4066, p = 3, T = 12, L = 5, n = 200;
  auto iam = complexity_report("iam", N, p, T, L, n);
  CHECK(std::round(iam.normalized * 100.0) / 100.0 ==
        Catch::Approx(12.0).margin(0.005));
  auto kam = complexity_report("kam", N, p, T, L, n);
  CHECK(std::round(kam.normalized * 100.0) / 100.0 ==
        Catch::Approx(0.01).margin(0.005));
  auto proposed = complexity_report("proposed", N, p, T, L, n);
  CHECK(std::round(proposed.normalized * 100.0) / 100.0 ==
        Catch::Approx(2.01).margin(0.005));
  auto lr = complexity_report("lr", N, p, T, L, n);
  CHECK(lr.normalized == 1.0);
  auto svr = complexity_report("svr-rbf", N, p, T, L, n);
  CHECK(svr.normalized >= 3800.0 / 16.0);  // n-dependent, large by design
  CHECK_THROWS_AS(complexity_report("unknown", N, p, T, L, n), Error);
}
