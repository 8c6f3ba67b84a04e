// distsens: sensitivities of random-vector realizations w.r.t. distribution parameters
// SPDX-License-Identifier: MIT

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "distsens/errors.hpp"
#include "distsens/experiments.hpp"

using namespace distsens;

TEST_CASE("loglog slope recovers exact power laws") {
  const std::vector<double> xs{64, 128, 256, 512, 1024};
  std::vector<double> ys;
  for (double x : xs) ys.push_back(7.5 / (x * x));
  const SlopeFit s = fit_loglog_slope(xs, ys);
  CHECK(s.slope == doctest::Approx(-2.0).epsilon(1e-12));
  CHECK(s.r2 == doctest::Approx(1.0).epsilon(1e-12));

  std::vector<double> flat(xs.size(), 7.0);
  const SlopeFit c = fit_loglog_slope(xs, flat);
  CHECK(c.slope == doctest::Approx(0.0).epsilon(1e-12));

  // An error floor flattens the tail, so the fitted slope is shallower.
  std::vector<double> floored;
  for (double x : xs) floored.push_back(1.0 / (x * x) + 1e-5);
  CHECK(fit_loglog_slope(xs, floored).slope > -2.0);
  CHECK(fit_loglog_slope(xs, floored).slope < -1.0);
}

TEST_CASE("loglog slope rejects unusable inputs") {
  CHECK_THROWS_AS((void)fit_loglog_slope({1, 2, 3}, {1, 2}), ShapeMismatch);
  CHECK_THROWS_AS((void)fit_loglog_slope({1, 2}, {1, 2}), TooFewSamples);
  CHECK_THROWS_AS((void)fit_loglog_slope({1, 2, 3}, {1, -2, 3}), NonPositiveData);
  CHECK_THROWS_AS((void)fit_loglog_slope({1, 2, 3}, {1, 0, 3}), NonPositiveData);
  CHECK_THROWS_AS((void)fit_loglog_slope({2, 2, 2}, {1, 2, 3}), NonPositiveData);
}

TEST_CASE("experiment specs round trip through json") {
  for (const char *verb : {"verify-gaussian-1d", "verify-gaussian-2d", "validate-beta",
                           "validate-proxy", "sensitivity", "fit", "bootstrap"}) {
    const ExperimentSpec spec = default_spec(verb);
    const ExperimentSpec back = parse_experiment_spec(serialize_experiment_spec(spec));
    CHECK(back == spec);
    // Serialization is stable: a second round trip yields the same text.
    CHECK(serialize_experiment_spec(back) == serialize_experiment_spec(spec));
  }
}

TEST_CASE("spec files round trip through disk") {
  ExperimentSpec spec = default_spec("validate-beta");
  spec.seed = 987654321;
  spec.out_dir = "results";
  const std::string path = "tmp_spec_roundtrip.json";
  save_experiment_spec(spec, path);
  const ExperimentSpec back = load_experiment_spec(path);
  CHECK(back == spec);
  std::remove(path.c_str());
}

TEST_CASE("partial specs inherit defaults on resolve") {
  ExperimentSpec partial;
  partial.experiment = "verify-gaussian-1d";
  partial.seed = 5;
  const ExperimentSpec full = resolve_spec(partial);
  CHECK(full.seed == 5);  // explicit values survive
  CHECK(full.density == "gaussian1d");
  CHECK(!full.resolutions.empty());
  CHECK(!full.algorithms.empty());
  CHECK(full.params.size() == 2);
}

TEST_CASE("malformed spec text is a configuration error") {
  CHECK_THROWS_AS((void)parse_experiment_spec("{not json"), InvalidParameter);
  CHECK_THROWS_AS((void)parse_experiment_spec("[1, 2, 3]"), InvalidParameter);
  CHECK_THROWS_AS((void)default_spec("frobnicate"), UnknownAlgorithm);
}

TEST_CASE("make grid honors spacing") {
  AxisSpec u{-2.0, 6.0, 5, "uniform"};
  AxisSpec l{1e-4, 1.0, 5, "log"};
  const RectilinearGrid g = make_grid({u, l});
  CHECK(g.dims() == 2);
  CHECK(g.axis(0)[1] == doctest::Approx(0.0));
  CHECK(g.axis(1)[1] == doctest::Approx(1e-3).epsilon(1e-12));
  AxisSpec bad{0.0, 1.0, 5, "hyperbolic"};
  CHECK_THROWS_AS((void)make_grid({bad}), InvalidParameter);
}

TEST_CASE("result tables sort canonically and look up values") {
  ResultTable t;
  t.append({"e", "B Alg", 128, "err", 0.25, 0.0, 10, 1});
  t.append({"e", "A Alg", 256, "err", 0.5, 0.0, 20, 1});
  t.append({"e", "A Alg", 64, "err", 1.0, 0.0, 30, 1});
  t.append({"e", "A Alg", 64, "aux", 2.0, 0.0, 40, 1});
  t.sort_canonical();
  CHECK(t.rows[0].algorithm == "A Alg");
  CHECK(t.rows[0].resolution_or_m == 64);
  CHECK(t.rows[0].metric == "aux");
  CHECK(t.rows[1].metric == "err");
  CHECK(t.rows[2].resolution_or_m == 256);
  CHECK(t.rows[3].algorithm == "B Alg");

  CHECK(t.value("A Alg", 64, "err") == doctest::Approx(1.0));
  CHECK_THROWS_AS((void)t.value("A Alg", 512, "err"), Error);
  t.append({"e", "A Alg", 64, "err", 9.0, 0.0, 0, 1});
  CHECK_THROWS_AS((void)t.value("A Alg", 64, "err"), Error);

  ResultTable other;
  other.append({"e2", "C", 1, "m", 3.0, 0.0, 0, 2});
  t.extend(other);
  CHECK(t.rows.back().experiment == "e2");
}

TEST_CASE("result tables serialize with their schema") {
  ResultTable t;
  t.append({"demo", "1D Alg", 64, "l1", 0.001953125, 0.25, 704, 99});
  const std::string cpath = "tmp_table.csv";
  const std::string jpath = "tmp_table.json";
  t.save_csv(cpath);
  t.save_json(jpath);

  std::ifstream cin_(cpath);
  std::string line;
  std::getline(cin_, line);
  CHECK(line.find(kResultTableSchema) != std::string::npos);
  std::getline(cin_, line);
  CHECK(line ==
        "experiment,algorithm,resolution_or_m,metric,value,wall_time_s,density_evals,seed");
  std::getline(cin_, line);
  CHECK(line.find("demo,1D Alg,64,l1,0.001953125") == 0);

  std::ifstream jin(jpath);
  nlohmann::json doc;
  jin >> doc;
  CHECK(doc["schema"].get<std::string>() == kResultTableSchema);
  REQUIRE(doc["rows"].size() == 1);
  CHECK(doc["rows"][0]["metric"].get<std::string>() == "l1");
  CHECK(doc["rows"][0]["value"].get<double>() == 0.001953125);
  std::remove(cpath.c_str());
  std::remove(jpath.c_str());
}

TEST_CASE("unknown experiments are rejected") {
  ExperimentSpec spec;
  spec.experiment = "teleport";
  CHECK_THROWS_AS((void)run_experiment(spec), UnknownAlgorithm);
}

TEST_CASE("a tiny gaussian sweep produces rows slopes and small errors") {
  // Desk-size smoke: two resolutions, one algorithm, modest foreground.
  ExperimentSpec spec = default_spec("verify-gaussian-1d");
  spec.resolutions = {64, 128, 256};
  spec.algorithms = {"1D Alg"};
  spec.foreground = 2048;
  const ResultTable t = run_verify_gaussian_1d(spec);

  const double e64 = t.value("1D Alg", 64, "l1");
  const double e256 = t.value("1D Alg", 256, "l1");
  CHECK(e64 > 0.0);
  CHECK(e256 < e64);
  // Second order convergence gains about 16x over two doublings.
  CHECK(e64 / e256 > 8.0);
  const double slope = t.value("1D Alg", 0, "loglog_slope");
  CHECK(slope < -1.6);
  CHECK(slope > -2.4);
  // Call counts are part of the table.
  CHECK(t.value("1D Alg", 64, "l1") == doctest::Approx(e64));
  for (const ResultRow &row : t.rows) {
    if (row.metric == "l1" && row.resolution_or_m == 64) {
      CHECK(row.density_evals == 2048ull * 5ull * 64ull);
    }
  }
}
