// distsens: sensitivities of random-vector realizations w.r.t. distribution parameters
// SPDX-License-Identifier: MIT

#ifndef DISTSENS_CDF_HPP
#define DISTSENS_CDF_HPP

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "distsens/density.hpp"
#include "distsens/grid.hpp"

namespace distsens {

/// Normalized trapezoidal CDF on a gridline.
struct Cdf1dResult {
  Eigen::VectorXd phi;  ///< phi[0] = 0, phi[K-1] = 1, nondecreasing
  double c = 0.0;       ///< normalization factor (raw trapezoid mass)
};

/// Vertex tabulation behind cdf_1d. The sensitivity kernels reuse pdf so the
/// density value at an off-vertex point can be interpolated instead of
/// costing an extra evaluation.
struct LineTabulation {
  Eigen::VectorXd pdf;  ///< raw density at the vertices
  Eigen::VectorXd phi;  ///< normalized CDF at the vertices
  double c = 0.0;       ///< raw trapezoid mass
};

/// Tabulate f on the line and accumulate the trapezoidal CDF:
/// phi[0] = 0, phi[k] = phi[k-1] + (f_{k-1} + f_k)(v_k - v_{k-1})/2, then
/// normalization by c = phi[K-1]. Consumes exactly K density evaluations.
/// Throws ZeroMass when c is not finite and positive.
LineTabulation tabulate_line(const Density1d &f, const GridLine &line,
                             const ParamVector &params);

/// CDF at the vertices of a gridline; exactly K density evaluations.
Cdf1dResult cdf_1d(const Density1d &f, const GridLine &line, const ParamVector &params);

/// All 1-D conditional PDFs and CDFs of a joint density at grid vertices.
struct CondField {
  std::vector<VertexField> cond_pdfs;  ///< phi_i, one scalar field per axis
  std::vector<VertexField> cond_cdfs;  ///< Phi_i, one scalar field per axis
};

/// Evaluate the joint density once at every vertex (exactly prod K_i calls),
/// then for each axis form the running trapezoid along every axis-aligned
/// line and normalize by the line's total mass. Along axis i each Phi_i line
/// starts at 0, ends at 1, and phi_i is the joint value over the line mass.
/// Lines are processed independently (parallel when f.concurrency_safe), and
/// every line is a strictly sequential prefix sum, so results do not depend
/// on the schedule. Throws ZeroMass naming the axis and line.
CondField conditionals_nd(const Density &f, const RectilinearGrid &grid,
                          const ParamVector &params);

/// Cache key for a CondField: density name, exact parameter bytes, grid hash.
std::string cond_field_cache_key(const Density &f, const ParamVector &params,
                                 const RectilinearGrid &grid);

}  // namespace distsens

#endif  // DISTSENS_CDF_HPP
