// distsens: sensitivities of random-vector realizations w.r.t. distribution parameters
// SPDX-License-Identifier: MIT

#ifndef DISTSENS_EXPERIMENTS_HPP
#define DISTSENS_EXPERIMENTS_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "distsens/grid.hpp"

namespace distsens {

/// One background-grid axis: bounds, vertex count, and spacing.
struct AxisSpec {
  double lo = 0.0;
  double hi = 1.0;
  Eigen::Index count = 0;
  std::string spacing = "uniform";  ///< "uniform" or "log"
};

bool operator==(const AxisSpec &a, const AxisSpec &b);

/// Declarative configuration for one experiment run. Every knob is a plain
/// field so a spec round-trips through JSON exactly; unset numeric fields
/// (0, -1, or empty) are filled with per-experiment defaults at run time.
struct ExperimentSpec {
  std::string experiment = "verify-gaussian-1d";
  std::string density;             ///< registry name; empty = experiment default
  Eigen::VectorXd params;          ///< true / oracle parameters
  Eigen::VectorXd eval_params;     ///< parameter point for gradient studies
  std::vector<AxisSpec> grid;      ///< explicit background grid (ad-hoc runs)
  Eigen::MatrixXd points;          ///< explicit evaluation points, one per row
  Eigen::VectorXd box_lo, box_hi;  ///< parameter box for ad-hoc fits
  std::vector<Eigen::Index> resolutions;  ///< background vertices per axis
  std::vector<std::string> algorithms;
  Eigen::Index foreground = 0;     ///< evaluation points per axis
  std::vector<std::size_t> sample_counts;       ///< model-sample sweep (M_x)
  std::vector<std::size_t> observation_counts;  ///< observation sizes (M_o)
  int repeats = 0;
  std::size_t m_x = 0;             ///< model draws per fit step
  Eigen::Index grid_count = 0;     ///< background vertices per axis for fits
  int epochs = -1;
  double learning_rate = 0.01;
  std::string optimizer;
  std::string gradient_path;
  int n_bootstrap = 0;
  int restarts = 0;
  int quad_cells = 50;             ///< log-spaced cells per axis, reference quadrature
  int quad_points = 5;             ///< Gauss-Legendre points per cell per axis
  int gl_points = 16;              ///< single-interval Gauss-Legendre rule size
  double epsilon = 1e-5;           ///< parameter step for CDF derivatives
  std::uint64_t seed = 20260818;
  int threads = 0;                 ///< 0 = hardware default
  std::string out_dir = ".";
  std::string format = "csv";
};

bool operator==(const ExperimentSpec &a, const ExperimentSpec &b);

/// JSON (de)serialization; parse -> serialize -> parse is the identity.
ExperimentSpec parse_experiment_spec(const std::string &json_text);
std::string serialize_experiment_spec(const ExperimentSpec &spec);
ExperimentSpec load_experiment_spec(const std::string &path);
void save_experiment_spec(const ExperimentSpec &spec, const std::string &path);

/// Fully-populated spec for a named experiment (desk-scale defaults).
ExperimentSpec default_spec(const std::string &experiment);

/// Copy of `spec` with unset fields filled from its experiment's defaults.
ExperimentSpec resolve_spec(const ExperimentSpec &spec);

/// Materialize the explicit grid axes of a spec; InvalidParameter when the
/// spec declares none or an axis is malformed.
RectilinearGrid make_grid(const std::vector<AxisSpec> &axes);

/// One output observation: a metric value for an (algorithm, resolution-or-
/// sample-count) cell, plus the cost bookkeeping that makes it re-derivable.
struct ResultRow {
  std::string experiment;
  std::string algorithm;
  double resolution_or_m = 0.0;
  std::string metric;
  double value = 0.0;
  double wall_time_s = 0.0;
  std::uint64_t density_evals = 0;
  std::uint64_t seed = 0;
};

inline constexpr const char *kResultTableSchema = "distsens.result_table/1";

/// Append-only result rows; canonical order is (experiment, algorithm,
/// resolution_or_m, metric). Wall-time columns are excluded from any
/// determinism comparison.
struct ResultTable {
  std::vector<ResultRow> rows;

  void append(ResultRow row) { rows.push_back(std::move(row)); }
  void extend(const ResultTable &other);
  void sort_canonical();

  /// Value of the unique row matching (algorithm, resolution_or_m, metric).
  double value(const std::string &algorithm, double resolution_or_m,
               const std::string &metric) const;

  void save_csv(const std::string &path) const;
  void save_json(const std::string &path) const;
};

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

/// Least-squares line through (log x, log y); needs >= 3 pairs, all positive.
SlopeFit fit_loglog_slope(const std::vector<double> &xs, const std::vector<double> &ys);

// Experiment runners. Each resolves defaults, runs the study described by
// the spec, and returns the canonical-sorted table.
ResultTable run_verify_gaussian_1d(const ExperimentSpec &spec);
ResultTable run_verify_gaussian_2d(const ExperimentSpec &spec);
ResultTable run_validate_beta(const ExperimentSpec &spec);
ResultTable run_validate_proxy(const ExperimentSpec &spec);

/// Dispatch on spec.experiment; UnknownAlgorithm for unrecognized names.
ResultTable run_experiment(const ExperimentSpec &spec);

}  // namespace distsens

#endif  // DISTSENS_EXPERIMENTS_HPP
