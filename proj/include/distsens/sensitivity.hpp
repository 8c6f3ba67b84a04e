// distsens: sensitivities of random-vector realizations w.r.t. distribution parameters
// SPDX-License-Identifier: MIT

#ifndef DISTSENS_SENSITIVITY_HPP
#define DISTSENS_SENSITIVITY_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "distsens/cdf.hpp"
#include "distsens/density.hpp"
#include "distsens/grid.hpp"

namespace distsens {

using RowMatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Numerical knobs shared by all sensitivity algorithms.
struct SensitivityConfig {
  /// Central-difference step for parameter perturbations; the same step is
  /// used for the spatial perturbations of the full N-D algorithm.
  double epsilon = 1e-5;
  /// A linear solve whose 1-norm condition estimate exceeds this limit is
  /// treated as a bijectivity breakdown (SingularSystem).
  double condition_limit = 1e12;
  /// Guard for 1/f divisions, relative to the largest conditional density on
  /// the relevant line (per-point algorithms) or axis field (grid
  /// algorithms). Normalized densities below floor * max raise
  /// DensityTooSmall instead of magnifying rounding errors.
  double density_floor = 1e-12;

  void validate() const;
};

/// One failed evaluation point of a batch computation.
struct PointFailure {
  std::size_t point = 0;
  std::string message;
};

/// Sensitivities dx/dtheta at M evaluation points. jac row m holds the
/// row-major N x P Jacobian of point m. Failed points keep a zero Jacobian
/// and carry an entry in failures; all stored entries are finite.
struct JacobianBatch {
  RowMatrixXd points;  ///< M x N coordinates
  RowMatrixXd jac;     ///< M x (N*P), row-major Jacobian blocks
  int nparams = 0;
  std::vector<PointFailure> failures;

  JacobianBatch() = default;
  JacobianBatch(RowMatrixXd pts, int p);

  std::size_t size() const { return static_cast<std::size_t>(points.rows()); }
  int dims() const { return static_cast<int>(points.cols()); }
  bool ok() const { return failures.empty(); }

  Eigen::MatrixXd jacobian(std::size_t m) const;
  void set_jacobian(std::size_t m, const Eigen::MatrixXd &j);
};

/// Sensitivity of a 1-D realization x w.r.t. every parameter ("1D Alg"):
/// -(1/f(x)) dF/dtheta with dF/dtheta by central differences of the
/// normalized vertex CDF and piecewise linear interpolation to x. The
/// density at x is interpolated from the base tabulation, so the call
/// consumes exactly (2P+1)*K evaluations.
Eigen::VectorXd sensitivity_1d(const Density1d &f, const GridLine &line,
                               const ParamVector &params, double x,
                               const SensitivityConfig &cfg);

/// Per-point N-D sensitivity by the full linear system ("Full Inv"):
/// H = -grad_x F from the point's conditional lines, G = grad_theta F by
/// central differences, J solves H J = G. Consumes exactly 2(N+P)*sum(K_i)
/// evaluations per point. Throws SingularSystem when the condition estimate
/// of H exceeds cfg.condition_limit.
Eigen::MatrixXd sensitivity_nd_full(const Density &f, const RectilinearGrid &grid,
                                    const ParamVector &params, const Eigen::VectorXd &x,
                                    const SensitivityConfig &cfg);

/// Grid-interpolated N-D sensitivity ("Interp Full"): one conditional-CDF
/// field at theta plus 2P perturbed fields, per-vertex stencil systems, and
/// multilinear interpolation of the vertex Jacobians to the points. Consumes
/// exactly (2P+1)*prod(K_i) evaluations, independent of M. Vertices whose
/// solve is non-finite or breaches the condition limit are recorded; points
/// whose interpolation cell touches such a vertex become per-point failures.
JacobianBatch sensitivity_nd_grid(const Density &f, const RectilinearGrid &grid,
                                  const ParamVector &params, const RowMatrixXd &points,
                                  const SensitivityConfig &cfg);

/// Per-point diagonal approximation ("Diag Approx"): row i is sensitivity_1d
/// applied to the i-th conditional density through x. Consumes exactly
/// (2P+1)*sum(K_i) evaluations per point.
Eigen::MatrixXd sensitivity_nd_diag(const Density &f, const RectilinearGrid &grid,
                                    const ParamVector &params, const Eigen::VectorXd &x,
                                    const SensitivityConfig &cfg);

/// Grid-interpolated diagonal approximation ("Interp Diag"): conditional
/// PDFs at theta plus 2P perturbed conditional CDFs; J[m,i,j] =
/// -interp(dPhi_i/dtheta_j) / interp(phi_i). Consumes exactly
/// (2P+1)*prod(K_i) evaluations. DensityTooSmall applies to the interpolated
/// conditional density, per point.
JacobianBatch sensitivity_nd_grid_diag(const Density &f, const RectilinearGrid &grid,
                                       const ParamVector &params, const RowMatrixXd &points,
                                       const SensitivityConfig &cfg);

enum class SensitivityAlgorithm { OneDim, FullInv, InterpFull, DiagApprox, InterpDiag };

/// Canonical labels: "1D Alg", "Full Inv", "Interp Full", "Diag Approx",
/// "Interp Diag". Kebab-case aliases ("1d", "full-inv", ...) are accepted.
/// Throws UnknownAlgorithm.
SensitivityAlgorithm algorithm_by_name(const std::string &name);
const char *algorithm_name(SensitivityAlgorithm alg);

/// Closed-form density-evaluation budget for M points on an N-D grid with P
/// parameters and per-axis vertex counts k. Measured CallCounter totals
/// equal this prediction exactly:
///   1D Alg      M(2P+1)K          Full Inv    2M(N+P)*sum(K_i)
///   Diag Approx M(2P+1)*sum(K_i)  Interp Full (2P+1)*prod(K_i)
///   Interp Diag (2P+1)*prod(K_i)
std::uint64_t predict_call_count(SensitivityAlgorithm alg, std::uint64_t m, int n, int p,
                                 const std::vector<Eigen::Index> &k);
std::uint64_t predict_call_count(const std::string &algorithm, std::uint64_t m, int n,
                                 int p, const std::vector<Eigen::Index> &k);

/// Run any algorithm over a batch of points, converting per-point exceptions
/// into JacobianBatch failures. "1D Alg" requires a 1-axis grid.
JacobianBatch compute_sensitivities(SensitivityAlgorithm alg, const Density &f,
                                    const RectilinearGrid &grid, const ParamVector &params,
                                    const RowMatrixXd &points,
                                    const SensitivityConfig &cfg);

/// CSV: one row per point, coordinates first, then the row-major Jacobian.
void save_jacobian_batch_csv(const JacobianBatch &batch, const std::string &path);
/// JSON with shape metadata and per-point failure records.
void save_jacobian_batch_json(const JacobianBatch &batch, const std::string &path);

}  // namespace distsens

#endif  // DISTSENS_SENSITIVITY_HPP
