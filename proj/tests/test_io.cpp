#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "shared_transfer/experiments.hpp"
#include "shared_transfer/io.hpp"
#include "shared_transfer/random.hpp"

using namespace shared_transfer;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("shared_transfer_test_" + std::to_string(std::rand()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

}  // namespace

TEST_CASE("load_csv parses a small long-format file") {
  TempDir dir;
  auto path = dir.file("data.csv");
  write_file(path,
             "task_id,row,x1,x2,y\n"
             "a,0,0.5,1.5,2\n"
             "a,1,-0.25,0,1\n"
             "a,2,1,2,0.125\n");
  auto dataset = load_csv(path);
  CHECK(dataset.num_tasks() == 1);
  CHECK(dataset.samples_per_task() == 3);
  CHECK(dataset.num_covariates() == 2);
  CHECK(dataset.task(0).task_id == "a");
  CHECK(dataset.task(0).covariates(1, 0) == -0.25);
  CHECK(dataset.task(0).responses[2] == 0.125);
}

TEST_CASE("load_csv reports bad cells with line numbers") {
  TempDir dir;
  auto path = dir.file("bad.csv");
  write_file(path,
             "task_id,row,x1,y\n"
             "a,0,0.5,2\n"
             "a,1,nan,1\n");
  try {
    load_csv(path);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }

  write_file(path,
             "task_id,row,x1,y\n"
             "a,0,hello,2\n");
  CHECK_THROWS_AS(load_csv(path), DataError);
}

TEST_CASE("load_csv rejects ragged and malformed input") {
  TempDir dir;
  auto path = dir.file("ragged.csv");
  write_file(path,
             "task_id,row,x1,y\n"
             "a,0,0.5,2\n"
             "a,1,0.25,1\n"
             "b,0,0.1,3\n");
  CHECK_THROWS_AS(load_csv(path), DataError);

  write_file(path, "task_id,row,x1\n");
  CHECK_THROWS_AS(load_csv(path), DataError);

  write_file(path, "");
  CHECK_THROWS_AS(load_csv(path), DataError);

  write_file(path,
             "task_id,row,x1,y\n"
             "a,0,0.5\n");
  CHECK_THROWS_AS(load_csv(path), DataError);
}

TEST_CASE("CSV round-trip preserves values exactly") {
  SyntheticSpec spec;
  spec.n = 20;
  spec.p = 3;
  spec.N = 4;
  spec.test_n = 5;
  Rng rng(31);
  auto data = generate_synthetic(spec, rng);

  TempDir dir;
  auto path = dir.file("round.csv");
  save_csv(data.train, path);
  auto loaded = load_csv(path);
  REQUIRE(loaded.num_tasks() == data.train.num_tasks());
  for (int m = 0; m < loaded.num_tasks(); ++m) {
    CHECK(loaded.task(m).task_id == data.train.task(m).task_id);
    CHECK((loaded.task(m).covariates.array() ==
           data.train.task(m).covariates.array())
              .all());
    CHECK((loaded.task(m).responses.array() ==
           data.train.task(m).responses.array())
              .all());
  }
  CHECK(loaded.shared_covariates() == data.train.shared_covariates());
}

TEST_CASE("model JSON round-trip preserves predictions bitwise") {
  SyntheticSpec spec;
  spec.n = 40;
  spec.p = 2;
  spec.N = 5;
  spec.test_n = 10;
  Rng rng(32);
  auto data = generate_synthetic(spec, rng);
  FitConfig config;
  config.L_per_covariate = {2};
  config.max_iterations = 3;
  config.seed = 9;
  auto model = fit(data.train, config);

  TempDir dir;
  auto path = dir.file("model.json");
  save_model(model, path);
  auto loaded = load_model(path);

  CHECK(loaded.task_ids == model.task_ids);
  CHECK(loaded.objective_history == model.objective_history);
  for (int m = 0; m < data.train.num_tasks(); ++m) {
    // fixed probe grid inside the training domain
    Eigen::MatrixXd probe(7, spec.p);
    for (int i = 0; i < 7; ++i)
      for (int j = 0; j < spec.p; ++j)
        probe(i, j) = -0.9 + 0.3 * i + 0.01 * j;
    Eigen::VectorXd before = predict(model, probe, m);
    Eigen::VectorXd after = predict(loaded, probe, m);
    CHECK((before.array() == after.array()).all());
  }
  double before_obj = objective(model, data.train);
  double after_obj = objective(loaded, data.train);
  CHECK(before_obj == after_obj);
}

TEST_CASE("load_model rejects damaged documents") {
  TempDir dir;
  auto path = dir.file("bad_model.json");
  write_file(path, "{ \"format\": \"shared-transfer-model\", \"version\": 1,");
  CHECK_THROWS_AS(load_model(path), DataError);

  write_file(path, "{ \"format\": \"something-else\", \"version\": 1 }");
  CHECK_THROWS_AS(load_model(path), VersionError);

  write_file(path, "{ \"format\": \"shared-transfer-model\", \"version\": 99 }");
  CHECK_THROWS_AS(load_model(path), VersionError);

  CHECK_THROWS_AS(load_model(dir.file("missing.json")), DataError);
}

TEST_CASE("coherence report serializes with the documented field names") {
  CoherenceReport report;
  report.mu_global = 0.87;
  report.mu_intra = 0.87;
  report.mu_inter = 0.01;
  report.omp_condition_max_p = 1;
  report.bcomp_condition_holds = true;
  auto j = coherence_to_json(report);
  CHECK(j.at("mu_global").get<double>() == 0.87);
  CHECK(j.at("mu_intra").get<double>() == 0.87);
  CHECK(j.at("mu_inter").get<double>() == 0.01);
  CHECK(j.at("omp_max_p").get<int>() == 1);
  CHECK(j.at("bcomp_holds").get<bool>());
}

TEST_CASE("summary tables carry the documented columns") {
  std::vector<SummaryRow> rows = {
      {"proposed", 7, 1.25, 1.5, 0.08, 120.0},
      {"iam", 7, 1.0, 2.0, std::numeric_limits<double>::quiet_NaN(), 80.0}};
  std::ostringstream csv;
  write_summary_csv(rows, csv);
  CHECK(csv.str().find("method,seed,train_rmse,test_rmse,tf_match_error,"
                       "wall_ms") == 0);
  CHECK(csv.str().find("proposed,7,1.25,1.5,0.08,120") != std::string::npos);

  auto j = summary_to_json(rows);
  REQUIRE(j.size() == 2);
  CHECK(j[0].at("method") == "proposed");
  CHECK(j[1].at("tf_match_error").is_null());
}
