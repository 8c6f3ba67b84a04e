// distsens: sensitivities of random-vector realizations w.r.t. distribution parameters
// SPDX-License-Identifier: MIT

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "distsens/density.hpp"
#include "distsens/energy.hpp"
#include "distsens/grid.hpp"
#include "distsens/rng.hpp"
#include "distsens/sampling.hpp"
#include "distsens/sensitivity.hpp"

namespace distsens {

/// ADAM with bias-corrected moment estimates. Exposed so the update rule can
/// be sanity-tested in isolation.
class AdamOptimizer {
 public:
  AdamOptimizer(Eigen::Index dim, double learning_rate, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8);

  void step(Eigen::VectorXd &theta, const Eigen::VectorXd &grad);

 private:
  double lr_, b1_, b2_, eps_;
  int t_ = 0;
  Eigen::VectorXd m_, v_;
};

/// Everything a fit needs besides the density and the observations.
/// gradient_path selects how the loss gradient is produced: one of the five
/// sensitivity algorithm names (empirical score, chain rule through the
/// realizations), "continuous" (quadrature score, analytic gradient), or
/// "naive-fd" (fresh-draw central differences, the negative baseline).
struct FitConfig {
  std::string gradient_path = "1D Alg";
  std::string optimizer = "adam";  ///< "adam" or "lbfgs"
  double learning_rate = 0.01;
  int epochs = 1;  ///< ADAM epochs, or the L-BFGS outer-iteration cap
  std::size_t m_x = 2;
  Eigen::VectorXd box_lo, box_hi;  ///< componentwise parameter bounds
  int restarts = 1;
  RngSeed seed;
  /// Optional explicit start; applies to restart 0, the rest draw uniformly
  /// in the box from their substream.
  Eigen::VectorXd theta_init;

  RectilinearGrid grid;  ///< background grid (sensitivities and proposals)
  SensitivityConfig sensitivity;
  double proposal_safety = 1.05;
  double naive_fd_delta = 1e-3;

  QuadratureRule quadrature;     ///< continuous path only
  PdfParamGradient pdf_grad;     ///< continuous path; empty falls back to FD
  bool normalize_density = true;  ///< continuous path: treat f as unnormalized

  /// L-BFGS knobs (paper protocol: memory 10, strong Wolfe, gtol 1e-8).
  int lbfgs_memory = 10;
  double lbfgs_gtol = 1e-8;

  void validate(Eigen::Index nparams) const;
};

struct FitResult {
  Eigen::VectorXd theta_opt;
  Eigen::VectorXd theta_init;
  double final_loss = 0.0;
  int best_restart = -1;
  std::vector<std::pair<int, double>> loss_trajectory;  ///< best restart only
  std::vector<double> restart_losses;      ///< final loss per restart (NaN = failed)
  std::vector<std::string> restart_errors; ///< empty string = success
  std::uint64_t density_evals = 0;
  double wall_time_s = 0.0;
};

struct BootstrapRun {
  int n_bootstrap = 0;
  int restarts = 0;
  std::vector<FitResult> fits;
  /// Per-parameter quantiles of theta_opt across bootstraps.
  Eigen::VectorXd q25, median, q75;
};

/// Minimizes the energy score over the parameter box. Each ADAM epoch draws
/// fresh realizations at the current parameters; L-BFGS freezes the draw seed
/// per outer iteration so the line search sees a consistent function. Errors
/// inside a restart abort that restart and are recorded; NoSuccessfulRestart
/// only if every restart fails.
FitResult fit(const Density &f, const SampleSet &observations, const FitConfig &cfg);

/// Best-of-restarts fit per bootstrap resample of the observations
/// (with replacement, original size). Deterministic given cfg.seed.
BootstrapRun bootstrap_fit(const Density &f, const SampleSet &observations,
                           const FitConfig &cfg, int n_bootstrap, int restarts);

/// Integral of the absolute difference of the normalized densities.
double l1_pdf_error(const Density &f, const ParamVector &theta_hat,
                    const ParamVector &theta_true, const QuadratureRule &quad);

/// Linear-interpolation quantile of unsorted values, q in [0, 1].
double quantile(std::vector<double> values, double q);

void save_fit_result_json(const FitResult &result, const std::string &path);
void save_bootstrap_run_json(const BootstrapRun &run, const std::string &path);
/// Summary rows: bootstrap id, final loss, theta, wall time, density evals.
void save_bootstrap_run_csv(const BootstrapRun &run, const std::string &path);

}  // namespace distsens
