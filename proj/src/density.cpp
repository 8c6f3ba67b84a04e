// distsens: sensitivities of random-vector realizations w.r.t. distribution parameters
// SPDX-License-Identifier: MIT

#include "distsens/density.hpp"

#include <cmath>

namespace distsens {

namespace {

constexpr double kSqrt2Pi = 2.5066282746310005024;
constexpr double kSqrt2 = 1.4142135623730950488;

void require_params(const ParamVector &p, Eigen::Index n, const char *who) {
  if (p.size() != n) {
    throw InvalidParameter(std::string(who) + " expects " + std::to_string(n) +
                           " parameters, got " + std::to_string(p.size()));
  }
  if (!p.allFinite()) throw InvalidParameter(std::string(who) + ": parameters must be finite");
}

void require_point(const Eigen::VectorXd &x, Eigen::Index n, const char *who) {
  if (x.size() != n) {
    throw ShapeMismatch(std::string(who) + " expects " + std::to_string(n) +
                        "-D points, got " + std::to_string(x.size()));
  }
}

void check_gaussian2d(const ParamVector &p) {
  require_params(p, 5, "gaussian2d");
  if (!(p[2] > 0.0) || !(p[3] > 0.0) || !(std::abs(p[4]) < 1.0)) {
    throw InvalidParameter("gaussian2d: covariance is degenerate (need sigma > 0, |rho| < 1)");
  }
}

void check_proxy_box(const ParamVector &p) {
  require_params(p, 5, "proxy2d");
  static const double lo[5] = {-0.5, 2.75, 0.0, 3.0, 0.0};
  static const double hi[5] = {1.0, 4.0, 1.3, 4.5, 1.5};
  for (int j = 0; j < 5; ++j) {
    if (!(p[j] >= lo[j] && p[j] <= hi[j])) {
      throw InvalidParameter("proxy2d: parameter " + std::to_string(j + 1) + " = " +
                             std::to_string(p[j]) + " outside [" + std::to_string(lo[j]) +
                             ", " + std::to_string(hi[j]) + "]");
    }
  }
}

}  // namespace

Density counted(const Density &f, CallCounter &counter) {
  Density out = f;
  auto inner = f.eval;
  CallCounter *c = &counter;
  out.eval = [inner, c](const Eigen::VectorXd &x, const ParamVector &p) {
    c->add();
    return inner(x, p);
  };
  return out;
}

AxisSection::AxisSection(const Density &f, Eigen::VectorXd base, int axis)
    : f_(&f), buf_(std::move(base)), axis_(axis) {
  if (buf_.size() != f.dims) throw ShapeMismatch("section base point rank mismatch");
  if (axis < 0 || axis >= f.dims) throw IndexOutOfRange("section axis out of range");
}

Density gaussian1d() {
  Density d;
  d.dims = 1;
  d.concurrency_safe = true;
  d.name = "gaussian1d";
  d.eval = [](const Eigen::VectorXd &x, const ParamVector &p) {
    require_point(x, 1, "gaussian1d");
    require_params(p, 2, "gaussian1d");
    if (!(p[1] > 0.0)) throw InvalidParameter("gaussian1d: sigma must be positive");
    const double z = (x[0] - p[0]) / p[1];
    return std::exp(-0.5 * z * z) / (p[1] * kSqrt2Pi);
  };
  return d;
}

Density gaussian2d() {
  Density d;
  d.dims = 2;
  d.concurrency_safe = true;
  d.name = "gaussian2d";
  d.eval = [](const Eigen::VectorXd &x, const ParamVector &p) {
    require_point(x, 2, "gaussian2d");
    check_gaussian2d(p);
    const double z1 = (x[0] - p[0]) / p[2];
    const double z2 = (x[1] - p[1]) / p[3];
    const double rho = p[4];
    const double om = 1.0 - rho * rho;
    const double q = (z1 * z1 - 2.0 * rho * z1 * z2 + z2 * z2) / om;
    return std::exp(-0.5 * q) / (2.0 * M_PI * p[2] * p[3] * std::sqrt(om));
  };
  return d;
}

Density beta1d() {
  Density d;
  d.dims = 1;
  d.concurrency_safe = true;
  d.name = "beta1d";
  d.eval = [](const Eigen::VectorXd &x, const ParamVector &p) {
    require_point(x, 1, "beta1d");
    require_params(p, 2, "beta1d");
    if (!(p[0] > 0.0 && p[1] > 0.0)) {
      throw InvalidParameter("beta1d: both shape parameters must be positive");
    }
    if (!(x[0] > 0.0 && x[0] < 1.0)) {
      throw DomainViolation("beta1d: x = " + std::to_string(x[0]) + " outside (0, 1)");
    }
    const double log_b = std::lgamma(p[0]) + std::lgamma(p[1]) - std::lgamma(p[0] + p[1]);
    return std::exp((p[0] - 1.0) * std::log(x[0]) + (p[1] - 1.0) * std::log1p(-x[0]) - log_b);
  };
  return d;
}

Eigen::Vector2d beta_pdf_param_gradient(double x, const ParamVector &p) {
  require_params(p, 2, "beta_pdf_param_gradient");
  if (!(p[0] > 0.0 && p[1] > 0.0)) {
    throw InvalidParameter("beta_pdf_param_gradient: shape parameters must be positive");
  }
  if (!(x > 0.0 && x < 1.0)) {
    throw DomainViolation("beta_pdf_param_gradient: x outside (0, 1)");
  }
  Eigen::VectorXd pt(1);
  pt[0] = x;
  const double f = beta1d().eval(pt, p);
  const double psi_sum = digamma(p[0] + p[1]);
  return {f * (std::log(x) + psi_sum - digamma(p[0])),
          f * (std::log1p(-x) + psi_sum - digamma(p[1]))};
}

Density proxy2d() {
  Density d;
  d.dims = 2;
  d.concurrency_safe = true;
  d.name = "proxy2d";
  d.eval = [](const Eigen::VectorXd &x, const ParamVector &p) {
    require_point(x, 2, "proxy2d");
    check_proxy_box(p);
    if (!(x[0] > 0.0 && x[0] < 1.0 && x[1] > 0.0 && x[1] < 1.0)) {
      throw DomainViolation("proxy2d: point outside (0, 1)^2");
    }
    return std::pow(x[0], p[0]) * std::pow(1.0 - x[0], p[1]) * std::pow(x[1], p[2]) *
           std::pow(1.0 - x[1], p[3]) * (1.0 + p[4] * x[0] * x[1]);
  };
  return d;
}

Eigen::VectorXd proxy2d_param_gradient(const Eigen::VectorXd &x, const ParamVector &p) {
  require_point(x, 2, "proxy2d_param_gradient");
  const double f = proxy2d().eval(x, p);
  Eigen::VectorXd g(5);
  g[0] = f * std::log(x[0]);
  g[1] = f * std::log1p(-x[0]);
  g[2] = f * std::log(x[1]);
  g[3] = f * std::log1p(-x[1]);
  g[4] = f * x[0] * x[1] / (1.0 + p[4] * x[0] * x[1]);
  return g;
}

std::pair<ParamVector, ParamVector> proxy2d_box() {
  ParamVector lo(5), hi(5);
  lo << -0.5, 2.75, 0.0, 3.0, 0.0;
  hi << 1.0, 4.0, 1.3, 4.5, 1.5;
  return {lo, hi};
}

Eigen::Vector2d gaussian1d_jacobian_oracle(double x, const ParamVector &p) {
  require_params(p, 2, "gaussian1d_jacobian_oracle");
  if (!(p[1] > 0.0)) throw InvalidParameter("gaussian1d: sigma must be positive");
  return {1.0, (x - p[0]) / p[1]};
}

double gaussian1d_cdf(double x, const ParamVector &p) {
  require_params(p, 2, "gaussian1d_cdf");
  if (!(p[1] > 0.0)) throw InvalidParameter("gaussian1d: sigma must be positive");
  return 0.5 * (1.0 + std::erf((x - p[0]) / (p[1] * kSqrt2)));
}

Eigen::Matrix<double, 2, 5> gaussian2d_jacobian_oracle(const Eigen::VectorXd &x,
                                                       const ParamVector &p) {
  require_point(x, 2, "gaussian2d_jacobian_oracle");
  check_gaussian2d(p);
  const double z1 = (x[0] - p[0]) / p[2];
  const double z2 = (x[1] - p[1]) / p[3];
  const double om = 1.0 - p[4] * p[4];
  Eigen::Matrix<double, 2, 5> j;
  j << 1.0, 0.0, z1, 0.0, p[2] * z2 / om,
       0.0, 1.0, 0.0, z2, p[3] * z1 / om;
  return j;
}

Eigen::Matrix<double, 2, 5> gaussian2d_diag_jacobian_oracle(const Eigen::VectorXd &x,
                                                            const ParamVector &p) {
  require_point(x, 2, "gaussian2d_diag_jacobian_oracle");
  check_gaussian2d(p);
  const double z1 = (x[0] - p[0]) / p[2];
  const double z2 = (x[1] - p[1]) / p[3];
  const double rho = p[4];
  const double om = 1.0 - rho * rho;
  const double r12 = rho * p[2] / p[3];
  const double r21 = rho * p[3] / p[2];
  Eigen::Matrix<double, 2, 5> j;
  j << 1.0, -r12, z1, -r12 * z2, -p[2] * (rho * z1 - z2) / om,
       -r21, 1.0, -r21 * z1, z2, p[3] * (z1 - rho * z2) / om;
  return j;
}

std::pair<double, double> gaussian2d_conditional(int axis, double other,
                                                 const ParamVector &p) {
  check_gaussian2d(p);
  if (axis != 0 && axis != 1) throw IndexOutOfRange("gaussian2d_conditional: axis must be 0 or 1");
  const double om = std::sqrt(1.0 - p[4] * p[4]);
  if (axis == 0) {
    const double z2 = (other - p[1]) / p[3];
    return {p[0] + p[4] * p[2] * z2, p[2] * om};
  }
  const double z1 = (other - p[0]) / p[2];
  return {p[1] + p[4] * p[3] * z1, p[3] * om};
}

double digamma(double t) {
  if (!(t > 0.0)) throw DomainViolation("digamma: argument must be positive");
  // Recurrence psi(t) = psi(t + 1) - 1/t lifts the argument to >= 6, where
  // the asymptotic series truncated after the t^-12 term is below 1e-10.
  double acc = 0.0;
  while (t < 6.0) {
    acc -= 1.0 / t;
    t += 1.0;
  }
  const double inv = 1.0 / t;
  const double inv2 = inv * inv;
  const double tail =
      inv2 * (1.0 / 12.0 -
              inv2 * (1.0 / 120.0 -
                      inv2 * (1.0 / 252.0 -
                              inv2 * (1.0 / 240.0 -
                                      inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32760.0))))));
  return acc + std::log(t) - 0.5 * inv - tail;
}

Density density_by_name(const std::string &name) {
  if (name == "gaussian1d") return gaussian1d();
  if (name == "gaussian2d") return gaussian2d();
  if (name == "beta1d") return beta1d();
  if (name == "proxy2d") return proxy2d();
  throw InvalidParameter("unknown density '" + name + "'");
}

const std::vector<std::string> &density_names() {
  static const std::vector<std::string> names = {"gaussian1d", "gaussian2d", "beta1d",
                                                 "proxy2d"};
  return names;
}

}  // namespace distsens
