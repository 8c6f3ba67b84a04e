// distsens: sensitivities of random-vector realizations w.r.t. distribution parameters
// SPDX-License-Identifier: MIT

#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "distsens/density.hpp"
#include "distsens/energy.hpp"
#include "distsens/grid.hpp"
#include "distsens/rng.hpp"

namespace distsens {

/// Piecewise-constant envelope over the cells of a rectilinear grid. Heights
/// dominate the density at all cell corners by construction; interior
/// violations are detected at sampling time, never silently absorbed.
struct PiecewiseConstantProposal {
  RectilinearGrid grid;
  Eigen::VectorXd cell_heights;  ///< one per cell, corner max x safety
  Eigen::VectorXd cell_masses;   ///< height x cell volume
  Eigen::VectorXd cumulative;    ///< inclusive prefix sums of cell_masses
  double total_mass = 0.0;

  std::size_t num_cells() const { return static_cast<std::size_t>(cell_heights.size()); }
};

/// Builds the envelope from one density pass over the grid vertices.
/// safety >= 1 scales every corner max; ZeroMass if the total mass is not
/// finite and positive.
PiecewiseConstantProposal build_proposal(const Density &f, const RectilinearGrid &grid,
                                         const ParamVector &params, double safety = 1.05);

/// Rejection sampling: cells are chosen proportional to mass, points uniform
/// within the cell, accepted when u * height <= f(x). Deterministic given
/// (seed, stream); draws are produced in fixed-size substream chunks so the
/// result is identical for any thread count.
SampleSet sample(const Density &f, const PiecewiseConstantProposal &proposal,
                 const ParamVector &params, std::size_t count, RngSeed seed);

/// A SampleDrawer that rebuilds the envelope at each requested parameter
/// vector and advances an internal call counter, so repeated invocations
/// yield fresh, reproducible draws. Not safe for concurrent calls.
SampleDrawer rejection_drawer(const RectilinearGrid &grid, RngSeed seed,
                              double safety = 1.05);

/// One-sample Kolmogorov-Smirnov statistic of 1-D draws against a CDF.
double ks_statistic(const Eigen::VectorXd &samples,
                    const std::function<double(double)> &cdf);

/// Asymptotic critical value of the one-sample KS statistic at level alpha.
double ks_critical_value(std::size_t n, double alpha);

}  // namespace distsens
