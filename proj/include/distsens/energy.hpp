// distsens: sensitivities of random-vector realizations w.r.t. distribution parameters
// SPDX-License-Identifier: MIT

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "distsens/density.hpp"
#include "distsens/sensitivity.hpp"

namespace distsens {

/// A set of realizations, one row per draw. The metadata fields record how
/// the set was produced and travel with the CSV serialization.
struct SampleSet {
  RowMatrixXd points;  ///< M x N
  std::string density;
  ParamVector params;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;

  std::size_t size() const { return static_cast<std::size_t>(points.rows()); }
  int dims() const { return static_cast<int>(points.cols()); }

  /// Throws InvalidParameter unless the set has at least one finite row.
  void validate() const;
};

void save_sample_set_csv(const SampleSet &set, const std::string &path);
SampleSet load_sample_set_csv(const std::string &path);

/// Nodes and weights of a fixed quadrature rule on a box.
struct QuadratureRule {
  RowMatrixXd nodes;  ///< Q x N
  Eigen::VectorXd weights;
  std::string description;

  std::size_t size() const { return static_cast<std::size_t>(nodes.rows()); }
  int dims() const { return static_cast<int>(nodes.cols()); }
  void validate() const;
};

/// n-point Gauss-Legendre rule on [lo, hi]; exact for polynomials of degree
/// 2n-1.
QuadratureRule gauss_legendre_rule(int n, double lo, double hi);

/// Composite rule: an independent Gauss-Legendre rule per cell of the given
/// edge partition.
QuadratureRule piecewise_gauss_legendre(const std::vector<double> &edges, int pts_per_cell);

/// Tensor product of two rules; node count is the product of the factors.
QuadratureRule tensor_product(const QuadratureRule &a, const QuadratureRule &b);

/// Cell edges for integrands concentrated near zero: a first cell [0, first]
/// followed by geometrically growing cells up to hi. Returns ncells+1 edges.
std::vector<double> log_cell_edges(double first, double hi, int ncells);

/// Energy score between two sample sets: the mean cross distance minus half
/// the mean internal distance of X (the k = l diagonal contributes zero).
double energy_score(const SampleSet &x_set, const SampleSet &o_set);

/// Closed-form gradient of energy_score in realization k of X.
Eigen::VectorXd energy_score_sample_gradient(const SampleSet &x_set, const SampleSet &o_set,
                                             std::size_t k);

/// Chain rule through the realizations: sum over k of jac_k^T grad_{x_k} L.
/// jac must hold the sensitivities of exactly x_set.points, in order.
Eigen::VectorXd energy_score_param_gradient(const SampleSet &x_set, const SampleSet &o_set,
                                            const JacobianBatch &jac);

/// Continuous counterpart of energy_score with the density integrated by the
/// rule; set normalize when f is unnormalized.
double continuous_energy_score(const Density &f, const ParamVector &params,
                               const SampleSet &o_set, const QuadratureRule &quad,
                               bool normalize);

/// Gradient of an (optionally unnormalized) density in its parameters.
using PdfParamGradient =
    std::function<Eigen::VectorXd(const Eigen::VectorXd &, const ParamVector &)>;

/// Central-difference fallback for densities without a closed-form parameter
/// gradient.
PdfParamGradient fd_pdf_param_gradient(const Density &f, double step = 1e-6);

/// Analytic parameter gradient of continuous_energy_score. With normalize
/// set, the density gradient is corrected for the parameter dependence of the
/// normalization factor: grad f = (grad f_raw - f grad c) / c with c and
/// grad c integrated by the same rule.
Eigen::VectorXd continuous_energy_param_gradient(const Density &f,
                                                 const PdfParamGradient &pdf_grad,
                                                 const ParamVector &params,
                                                 const SampleSet &o_set,
                                                 const QuadratureRule &quad, bool normalize);

/// Draws a fresh sample set from f at the given parameters.
using SampleDrawer =
    std::function<SampleSet(const Density &, const ParamVector &, std::size_t)>;

/// Central-difference baseline: fresh draws at each perturbed parameter, so
/// the estimate is intentionally stochastic.
Eigen::VectorXd naive_fd_param_gradient(const Density &f, const ParamVector &params,
                                        const SampleSet &o_set, const SampleDrawer &draw,
                                        std::size_t m_x, double delta);

}  // namespace distsens
