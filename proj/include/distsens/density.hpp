// distsens: sensitivities of random-vector realizations w.r.t. distribution parameters
// SPDX-License-Identifier: MIT

#ifndef DISTSENS_DENSITY_HPP
#define DISTSENS_DENSITY_HPP

#include <Eigen/Dense>
#include <atomic>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "distsens/errors.hpp"

namespace distsens {

/// Distribution parameter vector theta (length P >= 1, all finite).
using ParamVector = Eigen::VectorXd;

/// Black-box density contract: eval(point, params) -> value >= 0, possibly
/// unnormalized, deterministic in its inputs. Consumers normalize by
/// quadrature; no evaluator declares a normalization constant.
struct Density {
  std::function<double(const Eigen::VectorXd &, const ParamVector &)> eval;
  int dims = 0;
  /// Set by the provider when eval may be invoked concurrently.
  bool concurrency_safe = false;
  std::string name;

  double operator()(const Eigen::VectorXd &x, const ParamVector &params) const {
    return eval(x, params);
  }
};

/// Density restricted to a single coordinate: eval(s, params).
using Density1d = std::function<double(double, const ParamVector &)>;

/// Exact count of density evaluations; atomic so totals stay exact when an
/// evaluator is shared across threads.
class CallCounter {
 public:
  std::uint64_t count() const { return n_.load(std::memory_order_relaxed); }
  void reset() { n_.store(0, std::memory_order_relaxed); }
  void add(std::uint64_t n = 1) { n_.fetch_add(n, std::memory_order_relaxed); }

 private:
  std::atomic<std::uint64_t> n_{0};
};

/// Wrap f so each eval bumps counter by exactly one. counter must outlive
/// the returned evaluator.
Density counted(const Density &f, CallCounter &counter);

/// View of an N-D density along the axis-aligned line through `base`:
/// section(s, params) = f(base with coordinate `axis` replaced by s, params).
/// Each instance owns a scratch copy of base, so one section must not be
/// shared between threads; distinct sections over the same f are fine.
class AxisSection {
 public:
  AxisSection(const Density &f, Eigen::VectorXd base, int axis);

  double operator()(double s, const ParamVector &params) {
    buf_[axis_] = s;
    return f_->eval(buf_, params);
  }

  /// Density1d view referencing this section; the section must outlive it.
  Density1d fn() {
    return [this](double s, const ParamVector &p) { return (*this)(s, p); };
  }

 private:
  const Density *f_;
  Eigen::VectorXd buf_;
  int axis_;
};

// Built-in densities. Parameters are supplied per evaluation so callers can
// perturb them freely; the factories only fix the parameter convention.

/// Normalized 1-D normal density; params = [mu, sigma], sigma > 0.
Density gaussian1d();

/// Normalized bivariate normal; params = [mu1, mu2, sigma1, sigma2, rho],
/// sigma1, sigma2 > 0 and |rho| < 1.
Density gaussian2d();

/// Normalized beta density on (0, 1); params = [theta1, theta2], both > 0.
Density beta1d();

/// Gradient of the normalized beta density w.r.t. its two parameters:
/// f * [ln x + psi(t1 + t2) - psi(t1), ln(1 - x) + psi(t1 + t2) - psi(t2)].
Eigen::Vector2d beta_pdf_param_gradient(double x, const ParamVector &params);

/// Unnormalized 2-D proxy density on (0, 1)^2:
/// f = x1^t1 (1 - x1)^t2 x2^t3 (1 - x2)^t4 (1 + t5 x1 x2),
/// with parameters restricted to the box returned by proxy2d_box().
Density proxy2d();

/// Gradient of the unnormalized proxy density w.r.t. its five parameters.
Eigen::VectorXd proxy2d_param_gradient(const Eigen::VectorXd &x, const ParamVector &params);

/// Admissible proxy parameter box {lower, upper}.
std::pair<ParamVector, ParamVector> proxy2d_box();

// Closed-form sensitivity oracles for the Gaussian test densities.

/// d x / d [mu, sigma] = [1, (x - mu) / sigma].
Eigen::Vector2d gaussian1d_jacobian_oracle(double x, const ParamVector &params);

/// 1-D Gaussian CDF (erf closed form), used as a quadrature oracle.
double gaussian1d_cdf(double x, const ParamVector &params);

/// Exact 2x5 Jacobian of the conditional-CDF construction:
/// [[1, 0, z1, 0, sigma1 z2 / (1 - rho^2)],
///  [0, 1, 0, z2, sigma2 z1 / (1 - rho^2)]], z_i = (x_i - mu_i) / sigma_i.
Eigen::Matrix<double, 2, 5> gaussian2d_jacobian_oracle(const Eigen::VectorXd &x,
                                                       const ParamVector &params);

/// Exact 2x5 Jacobian of the diagonal approximation:
/// [[1, -rho s1/s2, z1, -rho (s1/s2) z2, -s1 (rho z1 - z2) / (1 - rho^2)],
///  [-rho s2/s1, 1, -rho (s2/s1) z1, z2, s2 (z1 - rho z2) / (1 - rho^2)]].
Eigen::Matrix<double, 2, 5> gaussian2d_diag_jacobian_oracle(const Eigen::VectorXd &x,
                                                            const ParamVector &params);

/// Conditional law of coordinate `axis` of the bivariate normal given the
/// other coordinate: {mean, standard deviation}.
std::pair<double, double> gaussian2d_conditional(int axis, double other,
                                                 const ParamVector &params);

/// Digamma function psi(t) for t > 0; abs error <= 1e-10 on [1e-3, 1e6].
double digamma(double t);

/// Registry for CLI config files: "gaussian1d", "gaussian2d", "beta1d",
/// "proxy2d". Throws InvalidParameter for unknown names.
Density density_by_name(const std::string &name);
const std::vector<std::string> &density_names();

}  // namespace distsens

#endif  // DISTSENS_DENSITY_HPP
