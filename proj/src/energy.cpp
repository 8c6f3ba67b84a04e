// distsens: sensitivities of random-vector realizations w.r.t. distribution parameters
// SPDX-License-Identifier: MIT

#include "distsens/energy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "distsens/errors.hpp"
#include "distsens/summation.hpp"

namespace distsens {

namespace {

// Euclidean distance between two contiguous rows.
inline double row_distance(const double *a, const double *b, int n) {
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

void check_pair(const SampleSet &x_set, const SampleSet &o_set) {
  x_set.validate();
  o_set.validate();
  if (x_set.dims() != o_set.dims()) {
    throw ShapeMismatch("sample sets have different dimensions");
  }
  if (x_set.size() < 2) {
    throw TooFewSamples("energy score needs at least 2 model samples, got " +
                        std::to_string(x_set.size()));
  }
}

// Density values at all quadrature nodes, evaluated in node order.
Eigen::VectorXd node_values(const Density &f, const ParamVector &params,
                            const QuadratureRule &quad) {
  const std::size_t q = quad.size();
  Eigen::VectorXd out(static_cast<Eigen::Index>(q));
  auto fill = [&](std::size_t, std::size_t begin, std::size_t end) {
    Eigen::VectorXd x(quad.dims());
    for (std::size_t i = begin; i < end; ++i) {
      x = quad.nodes.row(static_cast<Eigen::Index>(i)).transpose();
      out[static_cast<Eigen::Index>(i)] = f.eval(x, params);
    }
  };
  if (f.concurrency_safe) {
    parallel_blocks(q, 1024, fill);
  } else {
    fill(0, 0, q);
  }
  return out;
}

}  // namespace

void SampleSet::validate() const {
  if (points.rows() < 1) throw InvalidParameter("sample set is empty");
  if (points.cols() < 1) throw InvalidParameter("sample set has no coordinates");
  if (!points.allFinite()) throw InvalidParameter("sample set has non-finite entries");
}

void QuadratureRule::validate() const {
  if (nodes.rows() < 1) throw InvalidParameter("quadrature rule is empty");
  if (weights.size() != nodes.rows()) {
    throw ShapeMismatch("quadrature weight count does not match node count");
  }
  if (!weights.allFinite() || !nodes.allFinite()) {
    throw InvalidParameter("quadrature rule has non-finite entries");
  }
}

QuadratureRule gauss_legendre_rule(int n, double lo, double hi) {
  if (n < 1) throw InvalidParameter("quadrature needs at least one point");
  if (!(hi > lo)) throw InvalidParameter("quadrature interval is empty");

  // Nodes are the Legendre roots, found by Newton iteration from the
  // Chebyshev-like initial guess; weights are 2 / ((1-x^2) P_n'(x)^2).
  Eigen::VectorXd nodes(n);
  Eigen::VectorXd weights(n);
  const double pi = 3.14159265358979323846;
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0;
      double p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    nodes[i] = -x;
    nodes[n - 1 - i] = x;
    weights[i] = w;
    weights[n - 1 - i] = w;
  }

  QuadratureRule rule;
  rule.nodes.resize(n, 1);
  rule.weights.resize(n);
  const double mid = 0.5 * (lo + hi);
  const double half = 0.5 * (hi - lo);
  for (int i = 0; i < n; ++i) {
    rule.nodes(i, 0) = mid + half * nodes[i];
    rule.weights[i] = half * weights[i];
  }
  rule.description = "gauss-legendre n=" + std::to_string(n) + " on [" +
                     std::to_string(lo) + ", " + std::to_string(hi) + "]";
  return rule;
}

QuadratureRule piecewise_gauss_legendre(const std::vector<double> &edges,
                                        int pts_per_cell) {
  if (edges.size() < 2) throw InvalidParameter("need at least one cell");
  for (std::size_t i = 1; i < edges.size(); ++i) {
    if (!(edges[i] > edges[i - 1])) {
      throw InvalidParameter("cell edges must be strictly increasing");
    }
  }
  const int ncells = static_cast<int>(edges.size()) - 1;
  QuadratureRule rule;
  rule.nodes.resize(static_cast<Eigen::Index>(ncells) * pts_per_cell, 1);
  rule.weights.resize(static_cast<Eigen::Index>(ncells) * pts_per_cell);
  for (int c = 0; c < ncells; ++c) {
    const QuadratureRule cell = gauss_legendre_rule(
        pts_per_cell, edges[static_cast<std::size_t>(c)],
        edges[static_cast<std::size_t>(c) + 1]);
    rule.nodes.block(static_cast<Eigen::Index>(c) * pts_per_cell, 0, pts_per_cell, 1) =
        cell.nodes;
    rule.weights.segment(static_cast<Eigen::Index>(c) * pts_per_cell, pts_per_cell) =
        cell.weights;
  }
  rule.description = "piecewise gauss-legendre, " + std::to_string(ncells) +
                     " cells x " + std::to_string(pts_per_cell) + " points";
  return rule;
}

QuadratureRule tensor_product(const QuadratureRule &a, const QuadratureRule &b) {
  a.validate();
  b.validate();
  QuadratureRule rule;
  const Eigen::Index qa = a.nodes.rows();
  const Eigen::Index qb = b.nodes.rows();
  rule.nodes.resize(qa * qb, a.dims() + b.dims());
  rule.weights.resize(qa * qb);
  for (Eigen::Index i = 0; i < qa; ++i) {
    for (Eigen::Index j = 0; j < qb; ++j) {
      rule.nodes.row(i * qb + j) << a.nodes.row(i), b.nodes.row(j);
      rule.weights[i * qb + j] = a.weights[i] * b.weights[j];
    }
  }
  rule.description = "(" + a.description + ") x (" + b.description + ")";
  return rule;
}

std::vector<double> log_cell_edges(double first, double hi, int ncells) {
  if (!(first > 0.0) || !(hi > first)) throw InvalidParameter("bad log cell bounds");
  if (ncells < 2) throw InvalidParameter("need at least two cells");
  std::vector<double> edges(static_cast<std::size_t>(ncells) + 1);
  edges[0] = 0.0;
  const double ratio = std::log(hi / first) / (ncells - 1);
  for (int k = 1; k <= ncells; ++k) {
    edges[static_cast<std::size_t>(k)] = first * std::exp((k - 1) * ratio);
  }
  edges[static_cast<std::size_t>(ncells)] = hi;
  return edges;
}

double energy_score(const SampleSet &x_set, const SampleSet &o_set) {
  check_pair(x_set, o_set);
  const std::size_t m_x = x_set.size();
  const std::size_t m_o = o_set.size();
  const int n = x_set.dims();
  const double *xp = x_set.points.data();
  const double *op = o_set.points.data();

  const double cross = blocked_sum(m_x, [&](std::size_t k) {
    const double *xk = xp + k * static_cast<std::size_t>(n);
    double acc = 0.0;
    for (std::size_t l = 0; l < m_o; ++l) {
      acc += row_distance(xk, op + l * static_cast<std::size_t>(n), n);
    }
    return acc;
  });
  const double internal = blocked_sum(m_x, [&](std::size_t k) {
    const double *xk = xp + k * static_cast<std::size_t>(n);
    double acc = 0.0;
    for (std::size_t l = 0; l < m_x; ++l) {
      acc += row_distance(xk, xp + l * static_cast<std::size_t>(n), n);
    }
    return acc;
  });

  return cross / (static_cast<double>(m_x) * static_cast<double>(m_o)) -
         0.5 * internal /
             (static_cast<double>(m_x) * (static_cast<double>(m_x) - 1.0));
}

Eigen::VectorXd energy_score_sample_gradient(const SampleSet &x_set,
                                             const SampleSet &o_set, std::size_t k) {
  check_pair(x_set, o_set);
  const std::size_t m_x = x_set.size();
  const std::size_t m_o = o_set.size();
  const int n = x_set.dims();
  if (k >= m_x) throw IndexOutOfRange("sample index out of range");
  const double *xp = x_set.points.data();
  const double *op = o_set.points.data();
  const double *xk = xp + k * static_cast<std::size_t>(n);

  Eigen::VectorXd cross = Eigen::VectorXd::Zero(n);
  for (std::size_t l = 0; l < m_o; ++l) {
    const double *ol = op + l * static_cast<std::size_t>(n);
    const double nrm = row_distance(xk, ol, n);
    if (nrm == 0.0) {
      throw DuplicatePoint("model sample " + std::to_string(k) +
                           " coincides with observation " + std::to_string(l));
    }
    for (int i = 0; i < n; ++i) cross[i] += (xk[i] - ol[i]) / nrm;
  }
  Eigen::VectorXd internal = Eigen::VectorXd::Zero(n);
  for (std::size_t l = 0; l < m_x; ++l) {
    if (l == k) continue;
    const double *xl = xp + l * static_cast<std::size_t>(n);
    const double nrm = row_distance(xk, xl, n);
    if (nrm == 0.0) {
      throw DuplicatePoint("model samples " + std::to_string(k) + " and " +
                           std::to_string(l) + " coincide");
    }
    for (int i = 0; i < n; ++i) internal[i] += (xk[i] - xl[i]) / nrm;
  }

  return cross / (static_cast<double>(m_x) * static_cast<double>(m_o)) -
         internal / (static_cast<double>(m_x) * (static_cast<double>(m_x) - 1.0));
}

Eigen::VectorXd energy_score_param_gradient(const SampleSet &x_set,
                                            const SampleSet &o_set,
                                            const JacobianBatch &jac) {
  check_pair(x_set, o_set);
  if (jac.size() != x_set.size() || jac.dims() != x_set.dims()) {
    throw ShapeMismatch("jacobian batch shape does not match the sample set");
  }
  if (!(jac.points.array() == x_set.points.array()).all()) {
    throw ShapeMismatch("jacobian batch points do not match the sample set");
  }

  const std::size_t m_x = x_set.size();
  const int p = jac.nparams;
  RowMatrixXd contrib(static_cast<Eigen::Index>(m_x), p);
  auto fill = [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) {
      const Eigen::VectorXd g = energy_score_sample_gradient(x_set, o_set, k);
      contrib.row(static_cast<Eigen::Index>(k)) =
          (jac.jacobian(k).transpose() * g).transpose();
    }
  };
  parallel_blocks(m_x, 64, fill);

  Eigen::VectorXd grad(p);
  for (int j = 0; j < p; ++j) {
    grad[j] = blocked_sum(
        m_x, [&](std::size_t k) { return contrib(static_cast<Eigen::Index>(k), j); },
        false);
  }
  return grad;
}

double continuous_energy_score(const Density &f, const ParamVector &params,
                               const SampleSet &o_set, const QuadratureRule &quad,
                               bool normalize) {
  quad.validate();
  o_set.validate();
  if (quad.dims() != o_set.dims()) {
    throw ShapeMismatch("quadrature and observations have different dimensions");
  }
  const std::size_t q = quad.size();
  const std::size_t m_o = o_set.size();
  const int n = quad.dims();

  Eigen::VectorXd fv = node_values(f, params, quad);
  if (normalize) {
    const double c = blocked_sum(
        q, [&](std::size_t i) {
          return quad.weights[static_cast<Eigen::Index>(i)] *
                 fv[static_cast<Eigen::Index>(i)];
        });
    if (!std::isfinite(c) || !(c > 0.0)) {
      throw ZeroMass("quadrature mass is not finite and positive");
    }
    fv /= c;
  }
  const Eigen::VectorXd wf = quad.weights.cwiseProduct(fv);

  const double *np = quad.nodes.data();
  const double *op = o_set.points.data();
  const double term1 = blocked_sum(q, [&](std::size_t i) {
    const double *xi = np + i * static_cast<std::size_t>(n);
    double acc = 0.0;
    for (std::size_t l = 0; l < m_o; ++l) {
      acc += row_distance(xi, op + l * static_cast<std::size_t>(n), n);
    }
    return wf[static_cast<Eigen::Index>(i)] * acc;
  });
  const double term2 = blocked_sum(q, [&](std::size_t i) {
    const double *xi = np + i * static_cast<std::size_t>(n);
    double acc = 0.0;
    for (std::size_t l = 0; l < q; ++l) {
      acc += wf[static_cast<Eigen::Index>(l)] *
             row_distance(xi, np + l * static_cast<std::size_t>(n), n);
    }
    return wf[static_cast<Eigen::Index>(i)] * acc;
  });

  return term1 / static_cast<double>(m_o) - 0.5 * term2;
}

PdfParamGradient fd_pdf_param_gradient(const Density &f, double step) {
  if (!(step > 0.0)) throw InvalidParameter("FD step must be positive");
  return [f, step](const Eigen::VectorXd &x, const ParamVector &params) {
    Eigen::VectorXd g(params.size());
    ParamVector th = params;
    for (Eigen::Index j = 0; j < params.size(); ++j) {
      th[j] = params[j] + step;
      const double fp = f.eval(x, th);
      th[j] = params[j] - step;
      const double fm = f.eval(x, th);
      th[j] = params[j];
      g[j] = (fp - fm) / (2.0 * step);
    }
    return g;
  };
}

Eigen::VectorXd continuous_energy_param_gradient(const Density &f,
                                                 const PdfParamGradient &pdf_grad,
                                                 const ParamVector &params,
                                                 const SampleSet &o_set,
                                                 const QuadratureRule &quad,
                                                 bool normalize) {
  quad.validate();
  o_set.validate();
  if (quad.dims() != o_set.dims()) {
    throw ShapeMismatch("quadrature and observations have different dimensions");
  }
  const std::size_t q = quad.size();
  const std::size_t m_o = o_set.size();
  const int n = quad.dims();
  const Eigen::Index p = params.size();

  Eigen::VectorXd fv = node_values(f, params, quad);
  RowMatrixXd gv(static_cast<Eigen::Index>(q), p);
  auto fill = [&](std::size_t, std::size_t begin, std::size_t end) {
    Eigen::VectorXd x(n);
    for (std::size_t i = begin; i < end; ++i) {
      x = quad.nodes.row(static_cast<Eigen::Index>(i)).transpose();
      const Eigen::VectorXd g = pdf_grad(x, params);
      if (g.size() != p) throw ShapeMismatch("pdf gradient has wrong length");
      gv.row(static_cast<Eigen::Index>(i)) = g.transpose();
    }
  };
  if (f.concurrency_safe) {
    parallel_blocks(q, 1024, fill);
  } else {
    fill(0, 0, q);
  }

  if (normalize) {
    // Quotient rule through the normalization factor: with f = f_raw / c,
    // grad f = (grad f_raw - f grad c) / c, both integrals under this rule.
    const double c = blocked_sum(q, [&](std::size_t i) {
      return quad.weights[static_cast<Eigen::Index>(i)] * fv[static_cast<Eigen::Index>(i)];
    });
    if (!std::isfinite(c) || !(c > 0.0)) {
      throw ZeroMass("quadrature mass is not finite and positive");
    }
    Eigen::VectorXd cg(p);
    for (Eigen::Index j = 0; j < p; ++j) {
      cg[j] = blocked_sum(q, [&](std::size_t i) {
        return quad.weights[static_cast<Eigen::Index>(i)] *
               gv(static_cast<Eigen::Index>(i), j);
      });
    }
    fv /= c;
    auto fix = [&](std::size_t, std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) {
        const Eigen::Index ii = static_cast<Eigen::Index>(i);
        gv.row(ii) = (gv.row(ii) - fv[ii] * cg.transpose()) / c;
      }
    };
    parallel_blocks(q, 4096, fix);
  }

  const Eigen::VectorXd wf = quad.weights.cwiseProduct(fv);
  const double *np = quad.nodes.data();
  const double *op = o_set.points.data();

  // First term: per-node observation distances shared across parameters.
  Eigen::VectorXd s_obs(static_cast<Eigen::Index>(q));
  auto dists = [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const double *xi = np + i * static_cast<std::size_t>(n);
      double acc = 0.0;
      for (std::size_t l = 0; l < m_o; ++l) {
        acc += row_distance(xi, op + l * static_cast<std::size_t>(n), n);
      }
      s_obs[static_cast<Eigen::Index>(i)] = acc;
    }
  };
  parallel_blocks(q, 256, dists);

  Eigen::VectorXd grad(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    grad[j] = blocked_sum(q, [&](std::size_t i) {
      const Eigen::Index ii = static_cast<Eigen::Index>(i);
      return quad.weights[ii] * gv(ii, j) * s_obs[ii];
    }) / static_cast<double>(m_o);
  }

  // Second term: per-node inner sums against the weighted gradient field;
  // no 1/2 factor because the product rule doubles the symmetric integral.
  RowMatrixXd inner(static_cast<Eigen::Index>(q), p);
  auto pair_sums = [&](std::size_t, std::size_t begin, std::size_t end) {
    Eigen::VectorXd acc(p);
    for (std::size_t i = begin; i < end; ++i) {
      const double *xi = np + i * static_cast<std::size_t>(n);
      acc.setZero();
      for (std::size_t l = 0; l < q; ++l) {
        const Eigen::Index ll = static_cast<Eigen::Index>(l);
        const double d = row_distance(xi, np + l * static_cast<std::size_t>(n), n);
        const double wl = quad.weights[ll] * d;
        for (Eigen::Index j = 0; j < p; ++j) acc[j] += wl * gv(ll, j);
      }
      inner.row(static_cast<Eigen::Index>(i)) = acc.transpose();
    }
  };
  parallel_blocks(q, 64, pair_sums);

  for (Eigen::Index j = 0; j < p; ++j) {
    grad[j] -= blocked_sum(q, [&](std::size_t i) {
      const Eigen::Index ii = static_cast<Eigen::Index>(i);
      return wf[ii] * inner(ii, j);
    });
  }
  return grad;
}

Eigen::VectorXd naive_fd_param_gradient(const Density &f, const ParamVector &params,
                                        const SampleSet &o_set, const SampleDrawer &draw,
                                        std::size_t m_x, double delta) {
  if (!(delta > 0.0)) throw InvalidParameter("FD step must be positive");
  if (!draw) throw SamplerFailure("no sample drawer provided");
  Eigen::VectorXd grad(params.size());
  ParamVector th = params;
  for (Eigen::Index j = 0; j < params.size(); ++j) {
    th[j] = params[j] + delta;
    const SampleSet x_plus = draw(f, th, m_x);
    th[j] = params[j] - delta;
    const SampleSet x_minus = draw(f, th, m_x);
    th[j] = params[j];
    grad[j] = (energy_score(x_plus, o_set) - energy_score(x_minus, o_set)) / (2.0 * delta);
  }
  return grad;
}

void save_sample_set_csv(const SampleSet &set, const std::string &path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out.precision(17);
  out << "# distsens sample_set density=" << (set.density.empty() ? "-" : set.density)
      << " params=";
  for (Eigen::Index j = 0; j < set.params.size(); ++j) {
    out << (j ? "," : "") << set.params[j];
  }
  if (set.params.size() == 0) out << "-";
  out << " seed=" << set.seed << " stream=" << set.stream << "\n";
  for (int i = 0; i < set.dims(); ++i) out << (i ? "," : "") << "x" << i;
  out << "\n";
  for (Eigen::Index k = 0; k < set.points.rows(); ++k) {
    for (Eigen::Index i = 0; i < set.points.cols(); ++i) {
      out << (i ? "," : "") << set.points(k, i);
    }
    out << "\n";
  }
  if (!out) throw Error("failed to write '" + path + "'");
}

SampleSet load_sample_set_csv(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  SampleSet set;
  std::string line;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream meta(line);
      std::string tok;
      while (meta >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = tok.substr(0, eq);
        const std::string val = tok.substr(eq + 1);
        if (key == "density" && val != "-") set.density = val;
        if (key == "seed") set.seed = std::stoull(val);
        if (key == "stream") set.stream = std::stoull(val);
        if (key == "params" && val != "-") {
          std::vector<double> ps;
          std::istringstream vs(val);
          std::string num;
          while (std::getline(vs, num, ',')) ps.push_back(std::stod(num));
          set.params = Eigen::Map<Eigen::VectorXd>(ps.data(),
                                                   static_cast<Eigen::Index>(ps.size()));
        }
      }
      continue;
    }
    if (line[0] == 'x') continue;  // column header
    std::vector<double> row;
    std::istringstream vs(line);
    std::string num;
    while (std::getline(vs, num, ',')) row.push_back(std::stod(num));
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ShapeMismatch("ragged rows in '" + path + "'");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw InvalidParameter("no samples in '" + path + "'");
  set.points.resize(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    for (std::size_t i = 0; i < rows[k].size(); ++i) {
      set.points(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) = rows[k][i];
    }
  }
  set.validate();
  return set;
}

}  // namespace distsens
