// distsens: sensitivities of random-vector realizations w.r.t. distribution parameters
// SPDX-License-Identifier: MIT

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "distsens/density.hpp"
#include "distsens/energy.hpp"
#include "distsens/errors.hpp"
#include "distsens/experiments.hpp"
#include "distsens/inference.hpp"
#include "distsens/rng.hpp"
#include "distsens/sampling.hpp"
#include "distsens/sensitivity.hpp"
#include "distsens/summation.hpp"

namespace {

using namespace distsens;

struct CliOptions {
  std::string spec_path;
  std::string out_dir = ".";
  std::string format;
  std::string points_path;
  std::string obs_path;
  std::uint64_t seed = 0;
  bool seed_given = false;
  int threads = -1;
};

std::string out_file(const CliOptions &opt, const std::string &stem, const std::string &ext) {
  return (std::filesystem::path(opt.out_dir) / (stem + "." + ext)).string();
}

void write_diagnostics(const CliOptions &opt, const std::string &verb,
                       const std::string &message) {
  const std::string path = out_file(opt, verb + "_diagnostics", "txt");
  std::ofstream out(path);
  out << verb << ": " << message << "\n";
  std::cerr << "numerical failure (details in " << path << "): " << message << "\n";
}

ExperimentSpec spec_for(const CliOptions &opt, const std::string &verb) {
  ExperimentSpec spec;
  if (opt.spec_path.empty()) {
    spec = default_spec(verb);
  } else {
    spec = load_experiment_spec(opt.spec_path);
    if (spec.experiment.empty()) spec.experiment = verb;
    if (spec.experiment != verb) {
      throw InvalidParameter("spec file is for experiment '" + spec.experiment +
                             "', not '" + verb + "'");
    }
  }
  if (opt.seed_given) spec.seed = opt.seed;
  if (opt.threads >= 0) spec.threads = opt.threads;
  if (!opt.format.empty()) spec.format = opt.format;
  if (spec.format != "csv" && spec.format != "json") {
    throw InvalidParameter("format must be csv or json");
  }
  return spec;
}

void save_table(const ResultTable &table, const ExperimentSpec &spec,
                const CliOptions &opt, const std::string &verb) {
  const std::string path = out_file(opt, verb, spec.format);
  if (spec.format == "csv") {
    table.save_csv(path);
  } else {
    table.save_json(path);
  }
  std::cout << "wrote " << path << " (" << table.rows.size() << " rows)\n";
}

// Quadrature over the spec grid's bounding box for the continuous gradient
// path: per-cell Gauss-Legendre along each axis, tensorized.
QuadratureRule grid_quadrature(const RectilinearGrid &grid, int pts_per_cell) {
  QuadratureRule rule;
  for (int i = 0; i < grid.dims(); ++i) {
    const GridLine &axis = grid.axis(i);
    std::vector<double> edges(axis.vertices().begin(), axis.vertices().end());
    const QuadratureRule line = piecewise_gauss_legendre(edges, pts_per_cell);
    rule = i == 0 ? line : tensor_product(rule, line);
  }
  return rule;
}

SampleSet observations_for(const Density &f, const ExperimentSpec &spec,
                           const CliOptions &opt, const RectilinearGrid &grid) {
  if (!opt.obs_path.empty()) {
    SampleSet obs = load_sample_set_csv(opt.obs_path);
    if (obs.dims() != f.dims) {
      throw ShapeMismatch("observation file dimension does not match the density");
    }
    return obs;
  }
  if (spec.params.size() == 0) {
    throw InvalidParameter("spec needs params to synthesize observations");
  }
  const std::size_t m_o =
      spec.observation_counts.empty() ? 10000 : spec.observation_counts.front();
  const PiecewiseConstantProposal prop = build_proposal(f, grid, spec.params);
  return sample(f, prop, spec.params, m_o, RngSeed{spec.seed, 0}.child(99));
}

FitConfig fit_config_for(const Density &f, const ExperimentSpec &spec) {
  FitConfig cfg;
  cfg.gradient_path = spec.gradient_path;
  cfg.optimizer = spec.optimizer;
  cfg.learning_rate = spec.learning_rate;
  cfg.epochs = spec.epochs;
  cfg.m_x = spec.m_x;
  cfg.restarts = spec.restarts;
  cfg.seed = RngSeed{spec.seed, 0};
  cfg.grid = make_grid(spec.grid);
  cfg.sensitivity.epsilon = spec.epsilon;
  if (spec.box_lo.size() > 0) {
    cfg.box_lo = spec.box_lo;
    cfg.box_hi = spec.box_hi;
  } else if (spec.density == "proxy2d") {
    std::tie(cfg.box_lo, cfg.box_hi) = proxy2d_box();
  } else {
    throw InvalidParameter("spec needs box_lo/box_hi for this density");
  }
  if (spec.eval_params.size() > 0) cfg.theta_init = spec.eval_params;
  if (cfg.gradient_path == "continuous") {
    cfg.quadrature = grid_quadrature(cfg.grid, spec.quad_points);
  }
  (void)f;
  return cfg;
}

int run_sensitivity(const CliOptions &opt, const ExperimentSpec &raw) {
  const ExperimentSpec spec = resolve_spec(raw);
  const Density f = density_by_name(spec.density);
  const RectilinearGrid grid = make_grid(spec.grid);

  RowMatrixXd pts;
  if (!opt.points_path.empty()) {
    pts = load_sample_set_csv(opt.points_path).points;
  } else {
    pts = spec.points;
  }
  if (pts.rows() == 0) throw InvalidParameter("no evaluation points given");
  if (pts.cols() != f.dims) {
    throw ShapeMismatch("evaluation points do not match the density dimension");
  }
  const std::string alg =
      spec.algorithms.empty() ? spec.gradient_path : spec.algorithms.front();

  SensitivityConfig cfg;
  cfg.epsilon = spec.epsilon;
  const JacobianBatch batch =
      compute_sensitivities(algorithm_by_name(alg), f, grid, spec.params, pts, cfg);

  const std::string path = out_file(opt, "sensitivity", spec.format);
  if (spec.format == "csv") {
    save_jacobian_batch_csv(batch, path);
  } else {
    save_jacobian_batch_json(batch, path);
  }
  std::cout << "wrote " << path << " (" << batch.size() << " points, "
            << batch.failures.size() << " failures)\n";

  if (!batch.ok()) {
    const std::string diag = out_file(opt, "sensitivity_failures", "csv");
    std::ofstream out(diag);
    out << "point,message\n";
    for (const PointFailure &pf : batch.failures) {
      out << pf.point << "," << pf.message << "\n";
    }
    std::cerr << batch.failures.size() << " points failed; see " << diag << "\n";
    return 2;
  }
  return 0;
}

int run_fit(const CliOptions &opt, const ExperimentSpec &raw) {
  const ExperimentSpec spec = resolve_spec(raw);
  const Density f = density_by_name(spec.density);
  const FitConfig cfg = fit_config_for(f, spec);
  const SampleSet obs = observations_for(f, spec, opt, cfg.grid);

  const FitResult result = fit(f, obs, cfg);
  const std::string path = out_file(opt, "fit_result", "json");
  save_fit_result_json(result, path);
  std::cout << "wrote " << path << "\n";
  std::cout << "theta_opt =";
  for (Eigen::Index j = 0; j < result.theta_opt.size(); ++j) {
    std::cout << " " << result.theta_opt[j];
  }
  std::cout << "\nfinal_loss = " << result.final_loss
            << ", density_evals = " << result.density_evals << "\n";
  return 0;
}

int run_bootstrap(const CliOptions &opt, const ExperimentSpec &raw) {
  const ExperimentSpec spec = resolve_spec(raw);
  const Density f = density_by_name(spec.density);
  const FitConfig cfg = fit_config_for(f, spec);
  const SampleSet obs = observations_for(f, spec, opt, cfg.grid);

  const BootstrapRun run = bootstrap_fit(f, obs, cfg, spec.n_bootstrap, spec.restarts);
  const std::string jpath = out_file(opt, "bootstrap_run", "json");
  const std::string cpath = out_file(opt, "bootstrap_run", "csv");
  save_bootstrap_run_json(run, jpath);
  save_bootstrap_run_csv(run, cpath);
  std::cout << "wrote " << jpath << " and " << cpath << "\n";
  std::cout << "median theta =";
  for (Eigen::Index j = 0; j < run.median.size(); ++j) std::cout << " " << run.median[j];
  std::cout << "\n";
  return 0;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"distsens: space-parameter sensitivity experiments"};
  app.require_subcommand(1);
  app.fallthrough();  // global options are accepted after the subcommand too

  CliOptions opt;
  app.add_option("--spec", opt.spec_path, "experiment spec JSON file");
  app.add_option("--out", opt.out_dir, "output directory (default: .)");
  auto *seed_opt = app.add_option("--seed", opt.seed, "master seed override");
  app.add_option("--threads", opt.threads, "worker thread cap (0 = hardware default)");
  app.add_option("--format", opt.format, "output table format: csv or json")
      ->check(CLI::IsMember({"csv", "json"}));

  app.add_subcommand("verify-gaussian-1d", "1-D Gaussian oracle verification sweep");
  app.add_subcommand("verify-gaussian-2d", "2-D Gaussian oracle verification sweep");
  app.add_subcommand("validate-beta", "beta gradient convergence and fits");
  app.add_subcommand("validate-proxy", "proxy gradient study and bootstrap fits");
  auto *sens = app.add_subcommand("sensitivity", "Jacobians at explicit points");
  sens->add_option("--points", opt.points_path, "sample-set CSV of evaluation points");
  auto *fit_cmd = app.add_subcommand("fit", "energy-score parameter fit");
  fit_cmd->add_option("--obs", opt.obs_path, "observation sample-set CSV");
  auto *boot_cmd = app.add_subcommand("bootstrap", "bootstrapped energy-score fits");
  boot_cmd->add_option("--obs", opt.obs_path, "observation sample-set CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return 1;
  }
  opt.seed_given = seed_opt->count() > 0;

  const std::string verb = app.get_subcommands().front()->get_name();

  // Configuration phase: anything thrown here is a usage problem.
  ExperimentSpec spec;
  try {
    std::filesystem::create_directories(opt.out_dir);
    spec = spec_for(opt, verb);
    set_max_threads(spec.threads > 0 ? spec.threads : 0);
  } catch (const std::exception &e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  }

  // Run phase: library errors here are numerical failures.
  try {
    if (verb == "sensitivity") return run_sensitivity(opt, spec);
    if (verb == "fit") return run_fit(opt, spec);
    if (verb == "bootstrap") return run_bootstrap(opt, spec);
    const ResultTable table = run_experiment(spec);
    save_table(table, spec, opt, verb);
    return 0;
  } catch (const Error &e) {
    write_diagnostics(opt, verb, e.what());
    return 2;
  } catch (const std::exception &e) {
    write_diagnostics(opt, verb, e.what());
    return 2;
  }
}
