// distsens: sensitivities of random-vector realizations w.r.t. distribution parameters
// SPDX-License-Identifier: MIT

#include "distsens/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <tuple>

#include <json.hpp>

#include "distsens/density.hpp"
#include "distsens/energy.hpp"
#include "distsens/errors.hpp"
#include "distsens/grid.hpp"
#include "distsens/inference.hpp"
#include "distsens/rng.hpp"
#include "distsens/sampling.hpp"
#include "distsens/sensitivity.hpp"
#include "distsens/summation.hpp"

namespace distsens {

namespace {

using Clock = std::chrono::steady_clock;

// Squared-Mahalanobis cutoff for the 2-D domain of interest; covers
// 99.9936% of the bivariate normal mass.
constexpr double kMahalanobisCut = 19.313;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<double> to_std(const Eigen::VectorXd &v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd from_std(const std::vector<double> &v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

ResultRow make_row(const ExperimentSpec &spec, std::string algorithm, double res,
                   std::string metric, double value, double wall = 0.0,
                   std::uint64_t evals = 0) {
  ResultRow row;
  row.experiment = spec.experiment;
  row.algorithm = std::move(algorithm);
  row.resolution_or_m = res;
  row.metric = std::move(metric);
  row.value = value;
  row.wall_time_s = wall;
  row.density_evals = evals;
  row.seed = spec.seed;
  return row;
}

// Trapezoid weight for vertex k of an n-point uniform line with spacing h.
double trap_weight(Eigen::Index k, Eigen::Index n, double h) {
  return (k == 0 || k == n - 1) ? 0.5 * h : h;
}

SampleSet draw_set(const Density &f, const RectilinearGrid &grid, const ParamVector &params,
                   std::size_t count, RngSeed seed, double safety = 1.05) {
  const PiecewiseConstantProposal prop = build_proposal(f, grid, params, safety);
  return sample(f, prop, params, count, seed);
}

void require_no_failures(const JacobianBatch &batch, const std::string &context) {
  if (batch.ok()) return;
  throw Error(context + ": " + std::to_string(batch.failures.size()) + " of " +
              std::to_string(batch.size()) + " points failed; first: " +
              batch.failures.front().message);
}

void append_slope_rows(ResultTable &table, const ExperimentSpec &spec,
                       const std::string &algorithm, const std::vector<double> &xs,
                       const std::vector<double> &ys) {
  const SlopeFit sf = fit_loglog_slope(xs, ys);
  table.append(make_row(spec, algorithm, 0.0, "loglog_slope", sf.slope));
  table.append(make_row(spec, algorithm, 0.0, "loglog_intercept", sf.intercept));
  table.append(make_row(spec, algorithm, 0.0, "loglog_r2", sf.r2));
}

void append_quantile_rows(ResultTable &table, const ExperimentSpec &spec,
                          const std::string &algorithm, double res,
                          const std::string &metric, const std::vector<double> &vals,
                          double wall, std::uint64_t evals) {
  table.append(make_row(spec, algorithm, res, metric + "_median",
                        quantile(vals, 0.5), wall, evals));
  table.append(make_row(spec, algorithm, res, metric + "_q25", quantile(vals, 0.25)));
  table.append(make_row(spec, algorithm, res, metric + "_q75", quantile(vals, 0.75)));
}

}  // namespace

bool operator==(const AxisSpec &a, const AxisSpec &b) {
  return a.lo == b.lo && a.hi == b.hi && a.count == b.count && a.spacing == b.spacing;
}

bool operator==(const ExperimentSpec &a, const ExperimentSpec &b) {
  auto veq = [](const Eigen::VectorXd &x, const Eigen::VectorXd &y) {
    return x.size() == y.size() && (x.size() == 0 || (x.array() == y.array()).all());
  };
  auto meq = [](const Eigen::MatrixXd &x, const Eigen::MatrixXd &y) {
    return x.rows() == y.rows() && x.cols() == y.cols() &&
           (x.size() == 0 || (x.array() == y.array()).all());
  };
  return a.experiment == b.experiment && a.density == b.density && veq(a.params, b.params) &&
         veq(a.eval_params, b.eval_params) && a.grid == b.grid && meq(a.points, b.points) &&
         veq(a.box_lo, b.box_lo) && veq(a.box_hi, b.box_hi) &&
         a.resolutions == b.resolutions &&
         a.algorithms == b.algorithms && a.foreground == b.foreground &&
         a.sample_counts == b.sample_counts &&
         a.observation_counts == b.observation_counts && a.repeats == b.repeats &&
         a.m_x == b.m_x && a.grid_count == b.grid_count && a.epochs == b.epochs &&
         a.learning_rate == b.learning_rate && a.optimizer == b.optimizer &&
         a.gradient_path == b.gradient_path && a.n_bootstrap == b.n_bootstrap &&
         a.restarts == b.restarts && a.quad_cells == b.quad_cells &&
         a.quad_points == b.quad_points && a.gl_points == b.gl_points &&
         a.epsilon == b.epsilon && a.seed == b.seed && a.threads == b.threads &&
         a.out_dir == b.out_dir && a.format == b.format;
}

ExperimentSpec parse_experiment_spec(const std::string &json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception &e) {
    throw InvalidParameter(std::string("experiment spec is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw InvalidParameter("experiment spec must be a JSON object");

  ExperimentSpec s;
  try {
    s.experiment = doc.value("experiment", s.experiment);
    s.density = doc.value("density", s.density);
    if (doc.contains("params")) s.params = from_std(doc["params"].get<std::vector<double>>());
    if (doc.contains("eval_params")) {
      s.eval_params = from_std(doc["eval_params"].get<std::vector<double>>());
    }
    if (doc.contains("grid")) {
      for (const auto &axis : doc["grid"]) {
        AxisSpec a;
        a.lo = axis.at("lo").get<double>();
        a.hi = axis.at("hi").get<double>();
        a.count = static_cast<Eigen::Index>(axis.at("count").get<std::int64_t>());
        a.spacing = axis.value("spacing", a.spacing);
        s.grid.push_back(std::move(a));
      }
    }
    if (doc.contains("points")) {
      const auto rows = doc["points"].get<std::vector<std::vector<double>>>();
      if (!rows.empty()) {
        const Eigen::Index cols = static_cast<Eigen::Index>(rows.front().size());
        s.points.resize(static_cast<Eigen::Index>(rows.size()), cols);
        for (std::size_t i = 0; i < rows.size(); ++i) {
          if (static_cast<Eigen::Index>(rows[i].size()) != cols) {
            throw ShapeMismatch("spec points must form a rectangular array");
          }
          for (Eigen::Index j = 0; j < cols; ++j) {
            s.points(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
          }
        }
      }
    }
    if (doc.contains("box_lo")) s.box_lo = from_std(doc["box_lo"].get<std::vector<double>>());
    if (doc.contains("box_hi")) s.box_hi = from_std(doc["box_hi"].get<std::vector<double>>());
    if (doc.contains("resolutions")) {
      for (const auto &v : doc["resolutions"]) {
        s.resolutions.push_back(static_cast<Eigen::Index>(v.get<std::int64_t>()));
      }
    }
    s.algorithms = doc.value("algorithms", s.algorithms);
    s.foreground = static_cast<Eigen::Index>(
        doc.value("foreground", static_cast<std::int64_t>(s.foreground)));
    s.sample_counts = doc.value("sample_counts", s.sample_counts);
    s.observation_counts = doc.value("observation_counts", s.observation_counts);
    s.repeats = doc.value("repeats", s.repeats);
    s.m_x = doc.value("m_x", s.m_x);
    s.grid_count = static_cast<Eigen::Index>(
        doc.value("grid_count", static_cast<std::int64_t>(s.grid_count)));
    s.epochs = doc.value("epochs", s.epochs);
    s.learning_rate = doc.value("learning_rate", s.learning_rate);
    s.optimizer = doc.value("optimizer", s.optimizer);
    s.gradient_path = doc.value("gradient_path", s.gradient_path);
    s.n_bootstrap = doc.value("n_bootstrap", s.n_bootstrap);
    s.restarts = doc.value("restarts", s.restarts);
    s.quad_cells = doc.value("quad_cells", s.quad_cells);
    s.quad_points = doc.value("quad_points", s.quad_points);
    s.gl_points = doc.value("gl_points", s.gl_points);
    s.epsilon = doc.value("epsilon", s.epsilon);
    s.seed = doc.value("seed", s.seed);
    s.threads = doc.value("threads", s.threads);
    s.out_dir = doc.value("out_dir", s.out_dir);
    s.format = doc.value("format", s.format);
  } catch (const nlohmann::json::exception &e) {
    throw InvalidParameter(std::string("experiment spec field has wrong type: ") + e.what());
  }
  return s;
}

std::string serialize_experiment_spec(const ExperimentSpec &s) {
  nlohmann::json doc;
  doc["experiment"] = s.experiment;
  doc["density"] = s.density;
  doc["params"] = to_std(s.params);
  doc["eval_params"] = to_std(s.eval_params);
  nlohmann::json grid = nlohmann::json::array();
  for (const AxisSpec &a : s.grid) {
    grid.push_back({{"lo", a.lo},
                    {"hi", a.hi},
                    {"count", static_cast<std::int64_t>(a.count)},
                    {"spacing", a.spacing}});
  }
  doc["grid"] = std::move(grid);
  nlohmann::json pts = nlohmann::json::array();
  for (Eigen::Index i = 0; i < s.points.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(s.points.cols()));
    for (Eigen::Index j = 0; j < s.points.cols(); ++j) {
      row[static_cast<std::size_t>(j)] = s.points(i, j);
    }
    pts.push_back(std::move(row));
  }
  doc["points"] = std::move(pts);
  doc["box_lo"] = to_std(s.box_lo);
  doc["box_hi"] = to_std(s.box_hi);
  std::vector<std::int64_t> res;
  for (Eigen::Index n : s.resolutions) res.push_back(static_cast<std::int64_t>(n));
  doc["resolutions"] = res;
  doc["algorithms"] = s.algorithms;
  doc["foreground"] = static_cast<std::int64_t>(s.foreground);
  doc["sample_counts"] = s.sample_counts;
  doc["observation_counts"] = s.observation_counts;
  doc["repeats"] = s.repeats;
  doc["m_x"] = s.m_x;
  doc["grid_count"] = static_cast<std::int64_t>(s.grid_count);
  doc["epochs"] = s.epochs;
  doc["learning_rate"] = s.learning_rate;
  doc["optimizer"] = s.optimizer;
  doc["gradient_path"] = s.gradient_path;
  doc["n_bootstrap"] = s.n_bootstrap;
  doc["restarts"] = s.restarts;
  doc["quad_cells"] = s.quad_cells;
  doc["quad_points"] = s.quad_points;
  doc["gl_points"] = s.gl_points;
  doc["epsilon"] = s.epsilon;
  doc["seed"] = s.seed;
  doc["threads"] = s.threads;
  doc["out_dir"] = s.out_dir;
  doc["format"] = s.format;
  return doc.dump(2);
}

ExperimentSpec load_experiment_spec(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw InvalidParameter("cannot open spec file '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_experiment_spec(text);
}

void save_experiment_spec(const ExperimentSpec &spec, const std::string &path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << serialize_experiment_spec(spec) << "\n";
  if (!out) throw Error("failed to write '" + path + "'");
}

ExperimentSpec default_spec(const std::string &experiment) {
  ExperimentSpec s;
  s.experiment = experiment;
  if (experiment == "verify-gaussian-1d") {
    s.density = "gaussian1d";
    s.params = from_std({2.175, 1.371});
    s.resolutions = {64, 128, 256, 512, 1024, 2048};
    s.algorithms = {"1D Alg", "Full Inv", "Interp Full", "Diag Approx", "Interp Diag"};
    s.foreground = 16384;
    s.repeats = 1;
    s.epochs = 0;
  } else if (experiment == "verify-gaussian-2d") {
    s.density = "gaussian2d";
    s.params = from_std({0.7, -1.1, 2.6, 1.3, 0.678});
    s.resolutions = {64, 128, 256, 512};
    s.algorithms = {"Full Inv", "Interp Full", "Diag Approx", "Interp Diag"};
    s.foreground = 512;
    s.repeats = 1;
    s.epochs = 0;
  } else if (experiment == "validate-beta") {
    s.density = "beta1d";
    s.params = from_std({2.31, 1.627});
    s.eval_params = from_std({3.0, 1.4});
    s.resolutions = {257};  // background grid for the gradient study
    s.algorithms = {"1D Alg"};
    s.sample_counts = {100, 1000, 10000};
    s.observation_counts = {10000};
    s.repeats = 20;
    s.m_x = 10000;
    s.grid_count = 65;  // background grid for the fits
    s.epochs = 400;
    s.learning_rate = 0.01;
    s.optimizer = "adam";
    s.gradient_path = "1D Alg";
    s.restarts = 1;
    s.gl_points = 16;
  } else if (experiment == "validate-proxy") {
    s.density = "proxy2d";
    s.params = from_std({0.5, 3.0, 0.3, 4.0, 0.75});
    s.eval_params = from_std({0.25, 3.375, 0.65, 3.75, 0.1});
    s.resolutions = {1024};  // log-spaced study grid
    s.algorithms = {"Interp Diag"};
    s.sample_counts = {100, 1000, 10000};
    s.observation_counts = {10000, 50000};
    s.repeats = 10;
    s.m_x = 1000;
    s.grid_count = 64;  // fit grid, log-spaced
    s.epochs = 30;      // L-BFGS outer-iteration cap
    s.optimizer = "lbfgs";
    s.gradient_path = "Interp Diag";
    s.n_bootstrap = 20;
    s.restarts = 3;
    s.quad_cells = 50;
    s.quad_points = 5;
  } else if (experiment == "sensitivity" || experiment == "fit" || experiment == "bootstrap") {
    s.density = "gaussian1d";
    s.params = from_std({0.0, 1.0});
    s.eval_params = from_std({2.0, 2.0});  // fit/bootstrap start
    s.grid = {AxisSpec{-8.0, 8.0, 257, "uniform"}};
    s.points = Eigen::MatrixXd(3, 1);
    s.points << -1.0, 0.0, 1.0;
    s.box_lo = from_std({-5.0, 0.1});
    s.box_hi = from_std({5.0, 5.0});
    s.observation_counts = {1000};
    s.repeats = 1;
    s.epochs = 400;
    s.learning_rate = 0.05;
    s.m_x = 100;
    s.grid_count = 257;
    s.optimizer = "adam";
    s.gradient_path = "1D Alg";
    s.n_bootstrap = 1;
    s.restarts = 1;
  } else {
    throw UnknownAlgorithm("unknown experiment '" + experiment + "'");
  }
  return s;
}

ExperimentSpec resolve_spec(const ExperimentSpec &spec) {
  const ExperimentSpec d = default_spec(spec.experiment);
  ExperimentSpec s = spec;
  if (s.density.empty()) s.density = d.density;
  if (s.params.size() == 0) s.params = d.params;
  if (s.eval_params.size() == 0) s.eval_params = d.eval_params;
  if (s.grid.empty()) s.grid = d.grid;
  if (s.points.size() == 0) s.points = d.points;
  if (s.box_lo.size() == 0) s.box_lo = d.box_lo;
  if (s.box_hi.size() == 0) s.box_hi = d.box_hi;
  if (s.resolutions.empty()) s.resolutions = d.resolutions;
  if (s.algorithms.empty()) s.algorithms = d.algorithms;
  if (s.foreground <= 0) s.foreground = d.foreground;
  if (s.sample_counts.empty()) s.sample_counts = d.sample_counts;
  if (s.observation_counts.empty()) s.observation_counts = d.observation_counts;
  if (s.repeats <= 0) s.repeats = d.repeats;
  if (s.m_x == 0) s.m_x = d.m_x;
  if (s.grid_count <= 0) s.grid_count = d.grid_count;
  if (s.epochs < 0) s.epochs = d.epochs;
  if (s.optimizer.empty()) s.optimizer = d.optimizer;
  if (s.gradient_path.empty()) s.gradient_path = d.gradient_path;
  if (s.n_bootstrap <= 0) s.n_bootstrap = d.n_bootstrap;
  if (s.restarts <= 0) s.restarts = d.restarts;
  return s;
}

RectilinearGrid make_grid(const std::vector<AxisSpec> &axes) {
  if (axes.empty()) throw InvalidParameter("spec declares no background grid axes");
  std::vector<GridLine> lines;
  lines.reserve(axes.size());
  for (const AxisSpec &a : axes) {
    if (a.spacing == "uniform") {
      lines.push_back(GridLine::uniform(a.lo, a.hi, a.count));
    } else if (a.spacing == "log") {
      lines.push_back(GridLine::log_uniform(a.lo, a.hi, a.count));
    } else {
      throw InvalidParameter("unknown axis spacing '" + a.spacing + "'");
    }
  }
  return RectilinearGrid(std::move(lines));
}

void ResultTable::extend(const ResultTable &other) {
  rows.insert(rows.end(), other.rows.begin(), other.rows.end());
}

void ResultTable::sort_canonical() {
  std::stable_sort(rows.begin(), rows.end(), [](const ResultRow &a, const ResultRow &b) {
    return std::tie(a.experiment, a.algorithm, a.resolution_or_m, a.metric) <
           std::tie(b.experiment, b.algorithm, b.resolution_or_m, b.metric);
  });
}

double ResultTable::value(const std::string &algorithm, double resolution_or_m,
                          const std::string &metric) const {
  const ResultRow *hit = nullptr;
  for (const ResultRow &row : rows) {
    if (row.algorithm != algorithm || row.metric != metric) continue;
    if (row.resolution_or_m != resolution_or_m) continue;
    if (hit != nullptr) {
      throw Error("ambiguous result row (" + algorithm + ", " + fmt(resolution_or_m) +
                  ", " + metric + ")");
    }
    hit = &row;
  }
  if (hit == nullptr) {
    throw Error("no result row (" + algorithm + ", " + fmt(resolution_or_m) + ", " +
                metric + ")");
  }
  return hit->value;
}

void ResultTable::save_csv(const std::string &path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << "# schema: " << kResultTableSchema << "\n";
  out << "experiment,algorithm,resolution_or_m,metric,value,wall_time_s,density_evals,seed\n";
  for (const ResultRow &row : rows) {
    out << row.experiment << "," << row.algorithm << "," << fmt(row.resolution_or_m) << ","
        << row.metric << "," << fmt(row.value) << "," << fmt(row.wall_time_s) << ","
        << row.density_evals << "," << row.seed << "\n";
  }
  if (!out) throw Error("failed to write '" + path + "'");
}

void ResultTable::save_json(const std::string &path) const {
  nlohmann::json doc;
  doc["schema"] = kResultTableSchema;
  nlohmann::json arr = nlohmann::json::array();
  for (const ResultRow &row : rows) {
    arr.push_back({{"experiment", row.experiment},
                   {"algorithm", row.algorithm},
                   {"resolution_or_m", row.resolution_or_m},
                   {"metric", row.metric},
                   {"value", row.value},
                   {"wall_time_s", row.wall_time_s},
                   {"density_evals", row.density_evals},
                   {"seed", row.seed}});
  }
  doc["rows"] = std::move(arr);
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << doc.dump(2) << "\n";
  if (!out) throw Error("failed to write '" + path + "'");
}

SlopeFit fit_loglog_slope(const std::vector<double> &xs, const std::vector<double> &ys) {
  if (xs.size() != ys.size()) throw ShapeMismatch("slope fit needs matching x/y lengths");
  if (xs.size() < 3) throw TooFewSamples("slope fit needs at least 3 pairs");
  const std::size_t n = xs.size();
  std::vector<double> lx(n), ly(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(xs[i] > 0.0) || !(ys[i] > 0.0)) {
      throw NonPositiveData("slope fit needs positive x and y values");
    }
    lx[i] = std::log(xs[i]);
    ly[i] = std::log(ys[i]);
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  if (!(sxx > 0.0)) throw NonPositiveData("slope fit needs at least two distinct x values");

  SlopeFit sf;
  sf.slope = sxy / sxx;
  sf.intercept = my - sf.slope * mx;
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double pred = sf.intercept + sf.slope * lx[i];
    ss_res += (ly[i] - pred) * (ly[i] - pred);
    ss_tot += (ly[i] - my) * (ly[i] - my);
  }
  sf.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
  return sf;
}

ResultTable run_verify_gaussian_1d(const ExperimentSpec &user) {
  const ExperimentSpec spec = resolve_spec(user);
  const Density f = density_by_name(spec.density);
  if (f.dims != 1 || spec.params.size() != 2) {
    throw InvalidParameter("verify-gaussian-1d needs a 1-D density with [mu, sigma]");
  }
  const double mu = spec.params[0];
  const double sg = spec.params[1];

  // Foreground: uniform points on the domain of interest (mu +- 4 sigma);
  // the background grids span the computational domain (mu +- 5 sigma).
  const Eigen::Index mf = spec.foreground;
  RowMatrixXd pts(mf, 1);
  Eigen::VectorXd w(mf), pdf(mf);
  RowMatrixXd oracle(mf, 2);
  const double ilo = mu - 4.0 * sg;
  const double ihi = mu + 4.0 * sg;
  const double h = (ihi - ilo) / static_cast<double>(mf - 1);
  for (Eigen::Index k = 0; k < mf; ++k) {
    const double x = ilo + h * static_cast<double>(k);
    const double z = (x - mu) / sg;
    pts(k, 0) = x;
    w[k] = trap_weight(k, mf, h);
    pdf[k] = std::exp(-0.5 * z * z) / (sg * std::sqrt(2.0 * M_PI));
    oracle.row(k) = gaussian1d_jacobian_oracle(x, spec.params).transpose();
  }

  SensitivityConfig cfg;
  cfg.epsilon = spec.epsilon;

  ResultTable table;
  for (const std::string &alg_name : spec.algorithms) {
    const SensitivityAlgorithm alg = algorithm_by_name(alg_name);
    std::vector<double> ns, l1s;
    for (Eigen::Index n : spec.resolutions) {
      const RectilinearGrid grid({GridLine::uniform(mu - 5.0 * sg, mu + 5.0 * sg, n)});
      CallCounter counter;
      const Density fc = counted(f, counter);
      const auto t0 = Clock::now();
      const JacobianBatch batch = compute_sensitivities(alg, fc, grid, spec.params, pts, cfg);
      const double wall = seconds_since(t0);
      require_no_failures(batch, alg_name + " at N=" + std::to_string(n));

      double total = 0.0;
      for (int j = 0; j < 2; ++j) {
        const double l1 = blocked_sum(static_cast<std::size_t>(mf), [&](std::size_t k) {
          const Eigen::Index kk = static_cast<Eigen::Index>(k);
          return w[kk] * std::abs(batch.jac(kk, j) - oracle(kk, j)) * pdf[kk];
        });
        total += l1;
        table.append(make_row(spec, alg_name, static_cast<double>(n),
                              "l1_p" + std::to_string(j), l1, wall, counter.count()));
      }
      const double l1 = total / 2.0;
      table.append(
          make_row(spec, alg_name, static_cast<double>(n), "l1", l1, wall, counter.count()));
      ns.push_back(static_cast<double>(n));
      l1s.push_back(l1);
    }
    if (ns.size() >= 3) append_slope_rows(table, spec, alg_name, ns, l1s);
  }
  table.sort_canonical();
  return table;
}

ResultTable run_verify_gaussian_2d(const ExperimentSpec &user) {
  const ExperimentSpec spec = resolve_spec(user);
  const Density f = density_by_name(spec.density);
  if (f.dims != 2 || spec.params.size() != 5) {
    throw InvalidParameter("verify-gaussian-2d needs a 2-D density with 5 parameters");
  }
  const double mu1 = spec.params[0], mu2 = spec.params[1];
  const double s1 = spec.params[2], s2 = spec.params[3], rho = spec.params[4];
  const double omr = 1.0 - rho * rho;

  // Foreground: uniform grid over the computational domain, masked to the
  // squared-Mahalanobis ellipse (the domain of interest).
  const Eigen::Index g = spec.foreground;
  const double lo1 = mu1 - 5.0 * s1, hi1 = mu1 + 5.0 * s1;
  const double lo2 = mu2 - 5.0 * s2, hi2 = mu2 + 5.0 * s2;
  const double h1 = (hi1 - lo1) / static_cast<double>(g - 1);
  const double h2 = (hi2 - lo2) / static_cast<double>(g - 1);

  std::vector<double> weights, pdfs;
  std::vector<Eigen::Vector2d> coords;
  for (Eigen::Index i1 = 0; i1 < g; ++i1) {
    const double x1 = lo1 + h1 * static_cast<double>(i1);
    const double z1 = (x1 - mu1) / s1;
    for (Eigen::Index i2 = 0; i2 < g; ++i2) {
      const double x2 = lo2 + h2 * static_cast<double>(i2);
      const double z2 = (x2 - mu2) / s2;
      const double q = (z1 * z1 - 2.0 * rho * z1 * z2 + z2 * z2) / omr;
      if (q > kMahalanobisCut) continue;
      coords.emplace_back(x1, x2);
      weights.push_back(trap_weight(i1, g, h1) * trap_weight(i2, g, h2));
      pdfs.push_back(std::exp(-0.5 * q) / (2.0 * M_PI * s1 * s2 * std::sqrt(omr)));
    }
  }
  const std::size_t mk = coords.size();
  RowMatrixXd pts(static_cast<Eigen::Index>(mk), 2);
  RowMatrixXd full_o(static_cast<Eigen::Index>(mk), 10);
  RowMatrixXd diag_o(static_cast<Eigen::Index>(mk), 10);
  for (std::size_t k = 0; k < mk; ++k) {
    const Eigen::Index kk = static_cast<Eigen::Index>(k);
    pts.row(kk) = coords[k].transpose();
    const Eigen::Matrix<double, 2, 5> fo = gaussian2d_jacobian_oracle(coords[k], spec.params);
    const Eigen::Matrix<double, 2, 5> dg =
        gaussian2d_diag_jacobian_oracle(coords[k], spec.params);
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 5; ++j) {
        full_o(kk, i * 5 + j) = fo(i, j);
        diag_o(kk, i * 5 + j) = dg(i, j);
      }
    }
  }

  SensitivityConfig cfg;
  cfg.epsilon = spec.epsilon;

  ResultTable table;
  for (const std::string &alg_name : spec.algorithms) {
    const SensitivityAlgorithm alg = algorithm_by_name(alg_name);
    const bool diagonal = alg == SensitivityAlgorithm::DiagApprox ||
                          alg == SensitivityAlgorithm::InterpDiag;
    const RowMatrixXd &oracle = diagonal ? diag_o : full_o;

    std::vector<double> ns, l1s;
    for (Eigen::Index n : spec.resolutions) {
      const RectilinearGrid grid(
          {GridLine::uniform(lo1, hi1, n), GridLine::uniform(lo2, hi2, n)});
      CallCounter counter;
      const Density fc = counted(f, counter);
      const auto t0 = Clock::now();
      const JacobianBatch batch = compute_sensitivities(alg, fc, grid, spec.params, pts, cfg);
      const double wall = seconds_since(t0);
      require_no_failures(batch, alg_name + " at N=" + std::to_string(n));

      double total = 0.0;
      for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 5; ++j) {
          const int idx = i * 5 + j;
          const double l1 = blocked_sum(mk, [&](std::size_t k) {
            const Eigen::Index kk = static_cast<Eigen::Index>(k);
            return weights[k] * std::abs(batch.jac(kk, idx) - oracle(kk, idx)) * pdfs[k];
          });
          total += l1;
          table.append(make_row(spec, alg_name, static_cast<double>(n),
                                "l1_x" + std::to_string(i) + "_p" + std::to_string(j), l1,
                                wall, counter.count()));
        }
      }
      const double l1 = total / 10.0;
      table.append(
          make_row(spec, alg_name, static_cast<double>(n), "l1", l1, wall, counter.count()));
      ns.push_back(static_cast<double>(n));
      l1s.push_back(l1);
    }
    if (ns.size() >= 3) append_slope_rows(table, spec, alg_name, ns, l1s);
  }
  table.sort_canonical();
  return table;
}

ResultTable run_validate_beta(const ExperimentSpec &user) {
  const ExperimentSpec spec = resolve_spec(user);
  const Density f = density_by_name(spec.density);
  if (f.dims != 1) throw InvalidParameter("validate-beta needs a 1-D density");
  const ParamVector truth = spec.params;
  const ParamVector theta = spec.eval_params;
  const RngSeed master{spec.seed, 0};

  const RectilinearGrid study_grid(
      {GridLine::uniform(1e-6, 1.0 - 1e-6, spec.resolutions.front())});
  const std::size_t m_o = spec.observation_counts.front();
  const SampleSet obs = draw_set(f, study_grid, truth, m_o, master.child(1));

  ResultTable table;

  // Continuous reference gradient at the evaluation point.
  const QuadratureRule gl = gauss_legendre_rule(spec.gl_points, 0.0, 1.0);
  PdfParamGradient bgrad = [](const Eigen::VectorXd &x, const ParamVector &p) {
    return Eigen::VectorXd(beta_pdf_param_gradient(x[0], p));
  };
  const Eigen::VectorXd g_ref =
      continuous_energy_param_gradient(f, bgrad, theta, obs, gl, true);
  for (Eigen::Index j = 0; j < g_ref.size(); ++j) {
    table.append(make_row(spec, "reference", 0.0, "continuous_grad_p" + std::to_string(j),
                          g_ref[j]));
  }
  const double ref_norm = g_ref.norm();

  SensitivityConfig cfg;
  cfg.epsilon = spec.epsilon;

  // Gradient-estimate convergence in the model-sample count.
  for (const std::string &alg_name : spec.algorithms) {
    const SensitivityAlgorithm alg = algorithm_by_name(alg_name);
    std::vector<double> ms, medians;
    for (std::size_t mi = 0; mi < spec.sample_counts.size(); ++mi) {
      const std::size_t m_x = spec.sample_counts[mi];
      CallCounter counter;
      const Density fc = counted(f, counter);
      const PiecewiseConstantProposal prop = build_proposal(fc, study_grid, theta, 1.05);
      std::vector<double> errs;
      std::vector<std::vector<double>> perr(static_cast<std::size_t>(g_ref.size()));
      const auto t0 = Clock::now();
      for (int r = 0; r < spec.repeats; ++r) {
        const SampleSet x_set = sample(fc, prop, theta, m_x,
                                       master.child(2).child(mi).child(static_cast<std::uint64_t>(r)));
        const JacobianBatch batch =
            compute_sensitivities(alg, fc, study_grid, theta, x_set.points, cfg);
        require_no_failures(batch, alg_name + " at M_x=" + std::to_string(m_x));
        const Eigen::VectorXd g_hat = energy_score_param_gradient(x_set, obs, batch);
        errs.push_back((g_hat - g_ref).norm() / ref_norm);
        for (Eigen::Index j = 0; j < g_ref.size(); ++j) {
          perr[static_cast<std::size_t>(j)].push_back(std::abs(g_hat[j] - g_ref[j]) /
                                                      std::abs(g_ref[j]));
        }
      }
      const double wall = seconds_since(t0);
      append_quantile_rows(table, spec, alg_name, static_cast<double>(m_x), "rel_err", errs,
                           wall, counter.count());
      for (Eigen::Index j = 0; j < g_ref.size(); ++j) {
        table.append(make_row(spec, alg_name, static_cast<double>(m_x),
                              "rel_err_p" + std::to_string(j) + "_median",
                              quantile(perr[static_cast<std::size_t>(j)], 0.5)));
      }
      ms.push_back(static_cast<double>(m_x));
      medians.push_back(quantile(errs, 0.5));
    }
    if (ms.size() >= 3) append_slope_rows(table, spec, alg_name, ms, medians);
  }

  // Naive finite-difference baseline at both published step sizes.
  const std::vector<double> deltas = {1e-3, 1e-5};
  for (std::size_t di = 0; di < deltas.size(); ++di) {
    const std::string name = di == 0 ? "naive-fd-1e-3" : "naive-fd-1e-5";
    std::vector<double> ms, medians;
    for (std::size_t mi = 0; mi < spec.sample_counts.size(); ++mi) {
      const std::size_t m_x = spec.sample_counts[mi];
      CallCounter counter;
      const Density fc = counted(f, counter);
      std::vector<double> errs;
      const auto t0 = Clock::now();
      for (int r = 0; r < spec.repeats; ++r) {
        const RngSeed ds = master.child(3).child(di).child(mi).child(static_cast<std::uint64_t>(r));
        const Eigen::VectorXd g_hat = naive_fd_param_gradient(
            fc, theta, obs, rejection_drawer(study_grid, ds, 1.05), m_x, deltas[di]);
        errs.push_back((g_hat - g_ref).norm() / ref_norm);
      }
      const double wall = seconds_since(t0);
      append_quantile_rows(table, spec, name, static_cast<double>(m_x), "rel_err", errs,
                           wall, counter.count());
      ms.push_back(static_cast<double>(m_x));
      medians.push_back(quantile(errs, 0.5));
    }
    if (ms.size() >= 3) append_slope_rows(table, spec, name, ms, medians);
  }

  // Energy-score fits from the shared starting point: the sensitivity-driven
  // optimizer against the naive finite-difference one.
  if (spec.epochs > 0) {
    FitConfig fit_cfg;
    fit_cfg.optimizer = "adam";
    fit_cfg.learning_rate = spec.learning_rate;
    fit_cfg.epochs = spec.epochs;
    fit_cfg.m_x = spec.m_x;
    fit_cfg.box_lo = from_std({0.5, 0.5});
    fit_cfg.box_hi = from_std({8.0, 8.0});
    fit_cfg.restarts = 1;
    fit_cfg.theta_init = theta;
    fit_cfg.grid = RectilinearGrid({GridLine::uniform(1e-6, 1.0 - 1e-6, spec.grid_count)});
    fit_cfg.sensitivity = cfg;

    struct FitCase {
      std::string label;
      std::string path;
      std::uint64_t seed_child;
    };
    const std::vector<FitCase> cases = {{spec.gradient_path, spec.gradient_path, 4},
                                        {"naive-fd-1e-3", "naive-fd", 5}};
    for (const FitCase &fc : cases) {
      FitConfig run_cfg = fit_cfg;
      run_cfg.gradient_path = fc.path;
      run_cfg.naive_fd_delta = 1e-3;
      run_cfg.seed = master.child(fc.seed_child);
      const FitResult fr = fit(f, obs, run_cfg);
      const double res = static_cast<double>(spec.m_x);
      table.append(make_row(spec, fc.label, res, "fit_final_loss", fr.final_loss,
                            fr.wall_time_s, fr.density_evals));
      for (Eigen::Index j = 0; j < truth.size(); ++j) {
        table.append(make_row(spec, fc.label, res, "fit_theta_p" + std::to_string(j),
                              fr.theta_opt[j]));
        table.append(make_row(spec, fc.label, res, "fit_ratio_err_p" + std::to_string(j),
                              std::abs(fr.theta_opt[j] / truth[j] - 1.0)));
      }
      table.append(make_row(spec, fc.label, res, "fit_epochs",
                            static_cast<double>(spec.epochs)));
    }
  }

  table.sort_canonical();
  return table;
}

ResultTable run_validate_proxy(const ExperimentSpec &user) {
  const ExperimentSpec spec = resolve_spec(user);
  const Density f = density_by_name(spec.density);
  if (f.dims != 2) throw InvalidParameter("validate-proxy needs a 2-D density");
  const ParamVector truth = spec.params;
  const ParamVector theta = spec.eval_params;
  const RngSeed master{spec.seed, 0};

  ResultTable table;

  // Reference quadrature: log-spaced cells per axis, Gauss-Legendre inside
  // each cell, tensorized over the unit square.
  const std::vector<double> edges = log_cell_edges(1e-6, 1.0, spec.quad_cells);
  const QuadratureRule axis_rule = piecewise_gauss_legendre(edges, spec.quad_points);
  const QuadratureRule quad = tensor_product(axis_rule, axis_rule);
  PdfParamGradient pgrad = [](const Eigen::VectorXd &x, const ParamVector &p) {
    return proxy2d_param_gradient(x, p);
  };

  SensitivityConfig cfg;
  cfg.epsilon = spec.epsilon;

  // Gradient-estimate convergence on the log-spaced study grid.
  {
    const Eigen::Index k_a = spec.resolutions.front();
    const GridLine axis = GridLine::log_uniform(1e-6, 1.0 - 1e-6, k_a);
    const RectilinearGrid study_grid({axis, axis});
    const std::size_t m_o = spec.observation_counts.front();
    const SampleSet obs = draw_set(f, study_grid, truth, m_o, master.child(1));

    const Eigen::VectorXd g_ref =
        continuous_energy_param_gradient(f, pgrad, theta, obs, quad, true);
    for (Eigen::Index j = 0; j < g_ref.size(); ++j) {
      table.append(make_row(spec, "reference", 0.0, "continuous_grad_p" + std::to_string(j),
                            g_ref[j]));
    }
    const double ref_norm = g_ref.norm();

    for (const std::string &alg_name : spec.algorithms) {
      const SensitivityAlgorithm alg = algorithm_by_name(alg_name);
      std::vector<double> ms, medians;
      for (std::size_t mi = 0; mi < spec.sample_counts.size(); ++mi) {
        const std::size_t m_x = spec.sample_counts[mi];
        CallCounter counter;
        const Density fc = counted(f, counter);
        const PiecewiseConstantProposal prop = build_proposal(fc, study_grid, theta, 1.05);
        std::vector<double> errs;
        const auto t0 = Clock::now();
        for (int r = 0; r < spec.repeats; ++r) {
          const SampleSet x_set = sample(fc, prop, theta, m_x,
                                         master.child(2).child(mi).child(static_cast<std::uint64_t>(r)));
          const JacobianBatch batch =
              compute_sensitivities(alg, fc, study_grid, theta, x_set.points, cfg);
          require_no_failures(batch, alg_name + " at M_x=" + std::to_string(m_x));
          const Eigen::VectorXd g_hat = energy_score_param_gradient(x_set, obs, batch);
          errs.push_back((g_hat - g_ref).norm() / ref_norm);
        }
        const double wall = seconds_since(t0);
        append_quantile_rows(table, spec, alg_name, static_cast<double>(m_x), "rel_err",
                             errs, wall, counter.count());
        ms.push_back(static_cast<double>(m_x));
        medians.push_back(quantile(errs, 0.5));
      }
      if (ms.size() >= 3) append_slope_rows(table, spec, alg_name, ms, medians);
    }
  }

  // Bootstrap inference trend on the coarse fit grid.
  if (spec.n_bootstrap > 0 && spec.epochs > 0) {
    const GridLine axis_f = GridLine::log_uniform(1e-6, 1.0 - 1e-6, spec.grid_count);
    const RectilinearGrid fit_grid({axis_f, axis_f});
    const auto [box_lo, box_hi] = proxy2d_box();

    FitConfig fit_cfg;
    fit_cfg.gradient_path = spec.gradient_path;
    fit_cfg.optimizer = spec.optimizer;
    fit_cfg.learning_rate = spec.learning_rate;
    fit_cfg.epochs = spec.epochs;
    fit_cfg.m_x = spec.m_x;
    fit_cfg.box_lo = box_lo;
    fit_cfg.box_hi = box_hi;
    fit_cfg.grid = fit_grid;
    fit_cfg.sensitivity = cfg;

    for (std::size_t oi = 0; oi < spec.observation_counts.size(); ++oi) {
      const std::size_t m_o = spec.observation_counts[oi];
      const SampleSet obs = draw_set(f, fit_grid, truth, m_o, master.child(3).child(oi));
      fit_cfg.seed = master.child(10 + oi);

      const auto t0 = Clock::now();
      const BootstrapRun run = bootstrap_fit(f, obs, fit_cfg, spec.n_bootstrap, spec.restarts);
      const double wall = seconds_since(t0);
      std::uint64_t evals = 0;
      for (const FitResult &fr : run.fits) evals += fr.density_evals;

      const double res = static_cast<double>(m_o);
      for (Eigen::Index j = 0; j < truth.size(); ++j) {
        const std::string pj = "_p" + std::to_string(j);
        table.append(make_row(spec, spec.gradient_path, res, "theta_ratio_median" + pj,
                              run.median[j] / truth[j], wall, evals));
        table.append(make_row(spec, spec.gradient_path, res, "theta_ratio_q25" + pj,
                              run.q25[j] / truth[j]));
        table.append(make_row(spec, spec.gradient_path, res, "theta_ratio_q75" + pj,
                              run.q75[j] / truth[j]));
      }
      std::vector<double> l1s, losses;
      for (const FitResult &fr : run.fits) {
        l1s.push_back(l1_pdf_error(f, fr.theta_opt, truth, quad));
        losses.push_back(fr.final_loss);
      }
      append_quantile_rows(table, spec, spec.gradient_path, res, "l1_pdf_error", l1s, wall,
                           evals);
      table.append(make_row(spec, spec.gradient_path, res, "final_loss_median",
                            quantile(losses, 0.5), wall, evals));
    }
  }

  table.sort_canonical();
  return table;
}

ResultTable run_experiment(const ExperimentSpec &spec) {
  if (spec.experiment == "verify-gaussian-1d") return run_verify_gaussian_1d(spec);
  if (spec.experiment == "verify-gaussian-2d") return run_verify_gaussian_2d(spec);
  if (spec.experiment == "validate-beta") return run_validate_beta(spec);
  if (spec.experiment == "validate-proxy") return run_validate_proxy(spec);
  throw UnknownAlgorithm("unknown experiment '" + spec.experiment + "'");
}

}  // namespace distsens
