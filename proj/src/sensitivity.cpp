// distsens: sensitivities of random-vector realizations w.r.t. distribution parameters
// SPDX-License-Identifier: MIT

#include "distsens/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <utility>

#include <json.hpp>

#include "distsens/errors.hpp"
#include "distsens/summation.hpp"

namespace distsens {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string vertex_label(const RectilinearGrid &grid, std::size_t lin) {
  const Eigen::VectorXi k = grid.multi_index(lin);
  std::ostringstream os;
  os << "(";
  for (int i = 0; i < k.size(); ++i) os << (i ? ", " : "") << k[i];
  os << ")";
  return os.str();
}

std::string point_label(const Eigen::VectorXd &x) {
  std::ostringstream os;
  os << "(";
  for (Eigen::Index i = 0; i < x.size(); ++i) os << (i ? ", " : "") << fmt(x[i]);
  os << ")";
  return os.str();
}

void check_shapes(const Density &f, const RectilinearGrid &grid,
                  const ParamVector &params) {
  if (f.dims != grid.dims()) {
    throw ShapeMismatch("density has " + std::to_string(f.dims) + " dims but grid has " +
                        std::to_string(grid.dims()));
  }
  if (params.size() < 1) throw InvalidParameter("need at least one parameter");
}

// Vertex outcome of the stencil-per-vertex algorithms. Non-zero states are
// recorded instead of thrown: vertices deep in a tail can carry a badly
// conditioned (even exactly consistent) system that no query point ever
// touches, so failure is decided per point at interpolation time.
enum : std::uint8_t { kVertexOk = 0, kVertexIllConditioned = 1, kVertexNonFinite = 2 };

std::string vertex_failure_message(const RectilinearGrid &grid, std::size_t lin,
                                   std::uint8_t state, double rcond,
                                   const SensitivityConfig &cfg) {
  std::string msg = "vertex " + vertex_label(grid, lin);
  if (state == kVertexNonFinite) {
    msg += ": linear solve produced non-finite sensitivities";
  } else {
    msg += ": condition estimate " + fmt(rcond > 0.0 ? 1.0 / rcond : INFINITY) +
           " exceeds limit " + fmt(cfg.condition_limit);
  }
  return msg;
}

}  // namespace

void SensitivityConfig::validate() const {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw InvalidParameter("sensitivity config: epsilon must be positive and finite");
  }
  if (!(condition_limit > 1.0)) {
    throw InvalidParameter("sensitivity config: condition_limit must exceed 1");
  }
  if (!(density_floor > 0.0)) {
    throw InvalidParameter("sensitivity config: density_floor must be positive");
  }
}

JacobianBatch::JacobianBatch(RowMatrixXd pts, int p) : points(std::move(pts)), nparams(p) {
  if (p < 1) throw InvalidParameter("jacobian batch needs at least one parameter");
  if (points.rows() > 0 && points.cols() < 1) {
    throw ShapeMismatch("jacobian batch points need at least one coordinate");
  }
  jac = RowMatrixXd::Zero(points.rows(), points.cols() * p);
}

Eigen::MatrixXd JacobianBatch::jacobian(std::size_t m) const {
  if (m >= size()) throw IndexOutOfRange("batch point index out of range");
  return Eigen::Map<const RowMatrixXd>(jac.data() + m * static_cast<std::size_t>(jac.cols()),
                                       dims(), nparams);
}

void JacobianBatch::set_jacobian(std::size_t m, const Eigen::MatrixXd &j) {
  if (m >= size()) throw IndexOutOfRange("batch point index out of range");
  if (j.rows() != dims() || j.cols() != nparams) {
    throw ShapeMismatch("jacobian block shape mismatch");
  }
  Eigen::Map<RowMatrixXd>(jac.data() + m * static_cast<std::size_t>(jac.cols()), dims(),
                          nparams) = j;
}

Eigen::VectorXd sensitivity_1d(const Density1d &f, const GridLine &line,
                               const ParamVector &params, double x,
                               const SensitivityConfig &cfg) {
  cfg.validate();
  if (params.size() < 1) throw InvalidParameter("need at least one parameter");
  if (!line.contains(x)) {
    throw PointOutsideGrid("x = " + fmt(x) + " outside [" + fmt(line.front()) + ", " +
                           fmt(line.back()) + "]");
  }

  // One tabulation pass supplies both the normalization and the vertex
  // densities; the density at x is interpolated from those vertices so the
  // evaluation count stays at exactly (2P+1)K.
  const LineTabulation base = tabulate_line(f, line, params);
  const double f_x = interpolate_line(x, line, base.pdf) / base.c;
  const double floor = cfg.density_floor * (base.pdf.maxCoeff() / base.c);
  if (!(f_x > floor)) {
    throw DensityTooSmall("normalized density " + fmt(f_x) + " at x = " + fmt(x) +
                          " is below the guard floor " + fmt(floor));
  }

  const Eigen::Index p = params.size();
  Eigen::VectorXd g(p);
  ParamVector th = params;
  for (Eigen::Index j = 0; j < p; ++j) {
    th[j] = params[j] + cfg.epsilon;
    const Eigen::VectorXd phi_plus = cdf_1d(f, line, th).phi;
    th[j] = params[j] - cfg.epsilon;
    const Eigen::VectorXd phi_minus = cdf_1d(f, line, th).phi;
    th[j] = params[j];
    const Eigen::VectorXd delta = (phi_plus - phi_minus) / (2.0 * cfg.epsilon);
    g[j] = -interpolate_line(x, line, delta) / f_x;
  }
  return g;
}

Eigen::MatrixXd sensitivity_nd_full(const Density &f, const RectilinearGrid &grid,
                                    const ParamVector &params, const Eigen::VectorXd &x,
                                    const SensitivityConfig &cfg) {
  cfg.validate();
  check_shapes(f, grid, params);
  grid.require_inside(x);

  const int n = grid.dims();
  const Eigen::Index p = params.size();
  const double eps = cfg.epsilon;
  Eigen::MatrixXd h_mat(n, n);  // holds the negated spatial CDF gradient
  Eigen::MatrixXd g_mat(n, p);  // holds the parameter CDF gradient

  for (int i = 0; i < n; ++i) {
    const GridLine &vi = grid.axis(i);
    AxisSection sect(f, x, i);
    Density1d fi = sect.fn();

    // Diagonal entry: the line normalization from one CDF pass, the density
    // at x_i interpolated from a second tabulation pass. Two passes keep the
    // measured evaluation count at exactly 2(N+P) sum(K_i) and reuse the same
    // interpolated density as the 1-D kernel.
    const double c_i = cdf_1d(fi, vi, params).c;
    const LineTabulation tab = tabulate_line(fi, vi, params);
    const double f_ii = interpolate_line(x[i], vi, tab.pdf) / c_i;
    const double floor = cfg.density_floor * (tab.pdf.maxCoeff() / c_i);
    if (!(f_ii > floor)) {
      throw DensityTooSmall("conditional density " + fmt(f_ii) + " along axis " +
                            std::to_string(i) + " at " + point_label(x) +
                            " is below the guard floor " + fmt(floor));
    }
    h_mat(i, i) = -f_ii;

    // Off-diagonal entries: central differences of the axis-i conditional CDF
    // under perturbations of the conditioning coordinates.
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      Eigen::VectorXd xp = x;
      xp[j] += eps;
      Eigen::VectorXd xm = x;
      xm[j] -= eps;
      AxisSection sp(f, xp, i);
      AxisSection sm(f, xm, i);
      const Eigen::VectorXd phi_plus = cdf_1d(sp.fn(), vi, params).phi;
      const Eigen::VectorXd phi_minus = cdf_1d(sm.fn(), vi, params).phi;
      const Eigen::VectorXd delta = (phi_plus - phi_minus) / (2.0 * eps);
      h_mat(i, j) = -interpolate_line(x[i], vi, delta);
    }

    // Parameter derivatives by central differences on the same line.
    ParamVector th = params;
    for (Eigen::Index j = 0; j < p; ++j) {
      th[j] = params[j] + eps;
      const Eigen::VectorXd phi_plus = cdf_1d(fi, vi, th).phi;
      th[j] = params[j] - eps;
      const Eigen::VectorXd phi_minus = cdf_1d(fi, vi, th).phi;
      th[j] = params[j];
      const Eigen::VectorXd delta = (phi_plus - phi_minus) / (2.0 * eps);
      g_mat(i, j) = interpolate_line(x[i], vi, delta);
    }
  }

  Eigen::PartialPivLU<Eigen::MatrixXd> lu(h_mat);
  const double rc = lu.rcond();
  if (!(rc >= 1.0 / cfg.condition_limit)) {
    throw SingularSystem("condition estimate " + fmt(rc > 0.0 ? 1.0 / rc : INFINITY) +
                         " exceeds limit " + fmt(cfg.condition_limit) + " at " +
                         point_label(x));
  }
  Eigen::MatrixXd j_mat = lu.solve(g_mat);
  if (!j_mat.allFinite()) {
    throw SingularSystem("linear solve produced non-finite sensitivities at " +
                         point_label(x));
  }
  return j_mat;
}

Eigen::MatrixXd sensitivity_nd_diag(const Density &f, const RectilinearGrid &grid,
                                    const ParamVector &params, const Eigen::VectorXd &x,
                                    const SensitivityConfig &cfg) {
  cfg.validate();
  check_shapes(f, grid, params);
  grid.require_inside(x);

  const int n = grid.dims();
  Eigen::MatrixXd j_mat(n, params.size());
  for (int i = 0; i < n; ++i) {
    // Row i is exactly the 1-D kernel applied to the axis-i section.
    AxisSection sect(f, x, i);
    j_mat.row(i) = sensitivity_1d(sect.fn(), grid.axis(i), params, x[i], cfg).transpose();
  }
  return j_mat;
}

JacobianBatch sensitivity_nd_grid(const Density &f, const RectilinearGrid &grid,
                                  const ParamVector &params, const RowMatrixXd &points,
                                  const SensitivityConfig &cfg) {
  cfg.validate();
  check_shapes(f, grid, params);
  const int n = grid.dims();
  const Eigen::Index p = params.size();
  if (points.rows() > 0 && points.cols() != n) {
    throw ShapeMismatch("points have " + std::to_string(points.cols()) +
                        " coordinates but grid has " + std::to_string(n));
  }

  JacobianBatch batch(points, static_cast<int>(p));

  // Conditional CDF fields at theta and theta +- eps e_j; the PDFs are not
  // needed by this algorithm and are dropped to bound memory.
  CondField base = conditionals_nd(f, grid, params);
  base.cond_pdfs.clear();
  std::vector<CondField> plus(static_cast<std::size_t>(p));
  std::vector<CondField> minus(static_cast<std::size_t>(p));
  {
    ParamVector th = params;
    for (Eigen::Index j = 0; j < p; ++j) {
      th[j] = params[j] + cfg.epsilon;
      plus[static_cast<std::size_t>(j)] = conditionals_nd(f, grid, th);
      plus[static_cast<std::size_t>(j)].cond_pdfs.clear();
      th[j] = params[j] - cfg.epsilon;
      minus[static_cast<std::size_t>(j)] = conditionals_nd(f, grid, th);
      minus[static_cast<std::size_t>(j)].cond_pdfs.clear();
      th[j] = params[j];
    }
  }

  const std::size_t nv = grid.num_vertices();
  VertexField jv(grid, n, static_cast<int>(p));
  std::vector<std::uint8_t> vertex_state(nv, kVertexOk);
  std::vector<double> vertex_rcond(nv, 0.0);

  std::vector<std::size_t> stride(static_cast<std::size_t>(n));
  Eigen::VectorXi sizes(n);
  for (int a = 0; a < n; ++a) {
    stride[static_cast<std::size_t>(a)] = grid.axis_stride(a);
    sizes[a] = static_cast<int>(grid.axis(a).size());
  }

  // One linear system per vertex: rows are the axis conditionals, columns the
  // spatial (3-point stencil) and parameter (central difference) derivatives.
  auto do_vertices = [&](std::size_t, std::size_t begin, std::size_t end) {
    Eigen::MatrixXd h_mat(n, n);
    Eigen::MatrixXd g_mat(n, p);
    Eigen::VectorXi k = grid.multi_index(begin);
    for (std::size_t lin = begin; lin < end; ++lin) {
      for (int i = 0; i < n; ++i) {
        const VertexField &phi_i = base.cond_cdfs[static_cast<std::size_t>(i)];
        for (int a = 0; a < n; ++a) {
          const GridLine &ax = grid.axis(a);
          const Eigen::Index kj = k[a];
          const std::size_t s = stride[static_cast<std::size_t>(a)];
          if (kj == 0) {
            h_mat(i, a) = fd3_forward(ax[0], ax[1], ax[2], phi_i.scalar(lin),
                                      phi_i.scalar(lin + s), phi_i.scalar(lin + 2 * s));
          } else if (kj == ax.size() - 1) {
            h_mat(i, a) =
                fd3_backward(ax[kj - 2], ax[kj - 1], ax[kj], phi_i.scalar(lin - 2 * s),
                             phi_i.scalar(lin - s), phi_i.scalar(lin));
          } else {
            h_mat(i, a) =
                fd3_central(ax[kj - 1], ax[kj], ax[kj + 1], phi_i.scalar(lin - s),
                            phi_i.scalar(lin), phi_i.scalar(lin + s));
          }
        }
        for (Eigen::Index j = 0; j < p; ++j) {
          const std::size_t ju = static_cast<std::size_t>(j);
          g_mat(i, j) =
              (plus[ju].cond_cdfs[static_cast<std::size_t>(i)].scalar(lin) -
               minus[ju].cond_cdfs[static_cast<std::size_t>(i)].scalar(lin)) /
              (2.0 * cfg.epsilon);
        }
      }
      Eigen::PartialPivLU<Eigen::MatrixXd> lu(h_mat);
      const double rc = lu.rcond();
      const Eigen::MatrixXd sol = -lu.solve(g_mat);
      if (!sol.allFinite()) {
        vertex_state[lin] = kVertexNonFinite;
        vertex_rcond[lin] = rc;
      } else if (!(rc >= 1.0 / cfg.condition_limit)) {
        vertex_state[lin] = kVertexIllConditioned;
        vertex_rcond[lin] = rc;
      } else {
        Eigen::Map<RowMatrixXd>(jv.elem(lin).data(), n, p) = sol;
      }
      // Odometer increment, last axis fastest; matches linear_index order.
      for (int a = n - 1; a >= 0; --a) {
        if (++k[a] < sizes[a]) break;
        k[a] = 0;
      }
    }
  };
  const bool parallel = f.concurrency_safe;
  if (parallel) {
    parallel_blocks(nv, 1024, do_vertices);
  } else {
    do_vertices(0, 0, nv);
  }

  // Interpolate per point; a point fails only if its cell touches a vertex
  // whose system failed.
  const std::size_t m_count = batch.size();
  std::vector<std::string> errs(m_count);
  auto do_points = [&](std::size_t, std::size_t pb, std::size_t pe) {
    for (std::size_t m = pb; m < pe; ++m) {
      const Eigen::VectorXd pt = points.row(static_cast<Eigen::Index>(m)).transpose();
      const CellStencil cell(grid, pt);
      std::size_t bad = nv;
      for (std::size_t c : cell.corners()) {
        if (vertex_state[c] != kVertexOk) {
          bad = c;
          break;
        }
      }
      if (bad != nv) {
        errs[m] = vertex_failure_message(grid, bad, vertex_state[bad], vertex_rcond[bad],
                                         cfg);
        continue;
      }
      batch.jac.row(static_cast<Eigen::Index>(m)) = cell.gather(jv).transpose();
    }
  };
  if (m_count > 0) parallel_blocks(m_count, 256, do_points);

  for (std::size_t m = 0; m < m_count; ++m) {
    if (!errs[m].empty()) batch.failures.push_back({m, errs[m]});
  }
  return batch;
}

JacobianBatch sensitivity_nd_grid_diag(const Density &f, const RectilinearGrid &grid,
                                       const ParamVector &params, const RowMatrixXd &points,
                                       const SensitivityConfig &cfg) {
  cfg.validate();
  check_shapes(f, grid, params);
  const int n = grid.dims();
  const Eigen::Index p = params.size();
  if (points.rows() > 0 && points.cols() != n) {
    throw ShapeMismatch("points have " + std::to_string(points.cols()) +
                        " coordinates but grid has " + std::to_string(n));
  }

  JacobianBatch batch(points, static_cast<int>(p));

  // Conditional PDFs at theta, conditional CDFs at theta +- eps e_j.
  CondField base = conditionals_nd(f, grid, params);
  base.cond_cdfs.clear();
  std::vector<CondField> plus(static_cast<std::size_t>(p));
  std::vector<CondField> minus(static_cast<std::size_t>(p));
  {
    ParamVector th = params;
    for (Eigen::Index j = 0; j < p; ++j) {
      th[j] = params[j] + cfg.epsilon;
      plus[static_cast<std::size_t>(j)] = conditionals_nd(f, grid, th);
      plus[static_cast<std::size_t>(j)].cond_pdfs.clear();
      th[j] = params[j] - cfg.epsilon;
      minus[static_cast<std::size_t>(j)] = conditionals_nd(f, grid, th);
      minus[static_cast<std::size_t>(j)].cond_pdfs.clear();
      th[j] = params[j];
    }
  }

  const std::size_t m_count = batch.size();
  std::vector<std::string> errs(m_count);
  VertexField delta(grid);

  for (int i = 0; i < n; ++i) {
    const VertexField &phi_i = base.cond_pdfs[static_cast<std::size_t>(i)];
    const double floor = cfg.density_floor * phi_i.data().maxCoeff();

    // Interpolated conditional density per point, then one difference field
    // per parameter gathered with the same cell stencils.
    Eigen::VectorXd f_x(static_cast<Eigen::Index>(m_count));
    auto do_points = [&](std::size_t, std::size_t pb, std::size_t pe) {
      for (std::size_t m = pb; m < pe; ++m) {
        const Eigen::VectorXd pt = points.row(static_cast<Eigen::Index>(m)).transpose();
        f_x[static_cast<Eigen::Index>(m)] = interpolate_scalar(pt, phi_i);
        if (!(f_x[static_cast<Eigen::Index>(m)] > floor) && errs[m].empty()) {
          errs[m] = "conditional density " + fmt(f_x[static_cast<Eigen::Index>(m)]) +
                    " along axis " + std::to_string(i) + " at " + point_label(pt) +
                    " is below the guard floor " + fmt(floor);
        }
      }
    };
    if (m_count > 0) parallel_blocks(m_count, 256, do_points);

    for (Eigen::Index j = 0; j < p; ++j) {
      const std::size_t ju = static_cast<std::size_t>(j);
      delta.data() = (plus[ju].cond_cdfs[static_cast<std::size_t>(i)].data() -
                      minus[ju].cond_cdfs[static_cast<std::size_t>(i)].data()) /
                     (2.0 * cfg.epsilon);
      auto do_entry = [&](std::size_t, std::size_t pb, std::size_t pe) {
        for (std::size_t m = pb; m < pe; ++m) {
          if (!errs[m].empty()) continue;
          const Eigen::VectorXd pt = points.row(static_cast<Eigen::Index>(m)).transpose();
          const double dd = interpolate_scalar(pt, delta);
          batch.jac(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(i) * p + j) =
              -dd / f_x[static_cast<Eigen::Index>(m)];
        }
      };
      if (m_count > 0) parallel_blocks(m_count, 256, do_entry);
    }
  }

  for (std::size_t m = 0; m < m_count; ++m) {
    if (!errs[m].empty()) {
      batch.jac.row(static_cast<Eigen::Index>(m)).setZero();
      batch.failures.push_back({m, errs[m]});
    }
  }
  return batch;
}

SensitivityAlgorithm algorithm_by_name(const std::string &name) {
  if (name == "1D Alg" || name == "1d" || name == "1d-alg") {
    return SensitivityAlgorithm::OneDim;
  }
  if (name == "Full Inv" || name == "full-inv") return SensitivityAlgorithm::FullInv;
  if (name == "Interp Full" || name == "interp-full") {
    return SensitivityAlgorithm::InterpFull;
  }
  if (name == "Diag Approx" || name == "diag-approx") {
    return SensitivityAlgorithm::DiagApprox;
  }
  if (name == "Interp Diag" || name == "interp-diag") {
    return SensitivityAlgorithm::InterpDiag;
  }
  throw UnknownAlgorithm("unknown sensitivity algorithm '" + name + "'");
}

const char *algorithm_name(SensitivityAlgorithm alg) {
  switch (alg) {
    case SensitivityAlgorithm::OneDim: return "1D Alg";
    case SensitivityAlgorithm::FullInv: return "Full Inv";
    case SensitivityAlgorithm::InterpFull: return "Interp Full";
    case SensitivityAlgorithm::DiagApprox: return "Diag Approx";
    case SensitivityAlgorithm::InterpDiag: return "Interp Diag";
  }
  throw UnknownAlgorithm("unknown sensitivity algorithm enum value");
}

std::uint64_t predict_call_count(SensitivityAlgorithm alg, std::uint64_t m, int n, int p,
                                 const std::vector<Eigen::Index> &k) {
  if (n < 1) throw InvalidParameter("need at least one dimension");
  if (p < 1) throw InvalidParameter("need at least one parameter");
  if (static_cast<int>(k.size()) != n) {
    throw ShapeMismatch("expected " + std::to_string(n) + " axis sizes, got " +
                        std::to_string(k.size()));
  }
  std::uint64_t sum = 0;
  std::uint64_t prod = 1;
  for (Eigen::Index ki : k) {
    if (ki < 3) throw InvalidParameter("gridline needs at least 3 vertices");
    sum += static_cast<std::uint64_t>(ki);
    prod *= static_cast<std::uint64_t>(ki);
  }
  const std::uint64_t two_p1 = 2ull * static_cast<std::uint64_t>(p) + 1ull;
  switch (alg) {
    case SensitivityAlgorithm::OneDim:
      if (n != 1) throw InvalidParameter("1D Alg requires exactly one axis");
      return m * two_p1 * sum;
    case SensitivityAlgorithm::FullInv:
      return 2ull * m * static_cast<std::uint64_t>(n + p) * sum;
    case SensitivityAlgorithm::DiagApprox:
      return m * two_p1 * sum;
    case SensitivityAlgorithm::InterpFull:
    case SensitivityAlgorithm::InterpDiag:
      return two_p1 * prod;
  }
  throw UnknownAlgorithm("unknown sensitivity algorithm enum value");
}

std::uint64_t predict_call_count(const std::string &algorithm, std::uint64_t m, int n,
                                 int p, const std::vector<Eigen::Index> &k) {
  return predict_call_count(algorithm_by_name(algorithm), m, n, p, k);
}

JacobianBatch compute_sensitivities(SensitivityAlgorithm alg, const Density &f,
                                    const RectilinearGrid &grid, const ParamVector &params,
                                    const RowMatrixXd &points,
                                    const SensitivityConfig &cfg) {
  cfg.validate();
  check_shapes(f, grid, params);
  const int n = grid.dims();
  if (points.rows() > 0 && points.cols() != n) {
    throw ShapeMismatch("points have " + std::to_string(points.cols()) +
                        " coordinates but grid has " + std::to_string(n));
  }

  if (alg == SensitivityAlgorithm::InterpFull) {
    return sensitivity_nd_grid(f, grid, params, points, cfg);
  }
  if (alg == SensitivityAlgorithm::InterpDiag) {
    return sensitivity_nd_grid_diag(f, grid, params, points, cfg);
  }
  if (alg == SensitivityAlgorithm::OneDim && n != 1) {
    throw InvalidParameter("1D Alg requires a one-dimensional grid");
  }

  JacobianBatch batch(points, static_cast<int>(params.size()));
  const std::size_t m_count = batch.size();
  std::vector<std::string> errs(m_count);

  auto do_points = [&](std::size_t, std::size_t pb, std::size_t pe) {
    for (std::size_t m = pb; m < pe; ++m) {
      const Eigen::VectorXd x = points.row(static_cast<Eigen::Index>(m)).transpose();
      try {
        Eigen::MatrixXd j_mat;
        if (alg == SensitivityAlgorithm::OneDim) {
          AxisSection sect(f, x, 0);
          j_mat = sensitivity_1d(sect.fn(), grid.axis(0), params, x[0], cfg).transpose();
        } else if (alg == SensitivityAlgorithm::FullInv) {
          j_mat = sensitivity_nd_full(f, grid, params, x, cfg);
        } else {
          j_mat = sensitivity_nd_diag(f, grid, params, x, cfg);
        }
        batch.set_jacobian(m, j_mat);
      } catch (const Error &err) {
        errs[m] = err.what();
      }
    }
  };
  if (m_count > 0) {
    if (f.concurrency_safe) {
      parallel_blocks(m_count, 1, do_points);
    } else {
      do_points(0, 0, m_count);
    }
  }

  for (std::size_t m = 0; m < m_count; ++m) {
    if (!errs[m].empty()) batch.failures.push_back({m, errs[m]});
  }
  return batch;
}

void save_jacobian_batch_csv(const JacobianBatch &batch, const std::string &path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out.precision(17);
  const int n = batch.dims();
  const int p = batch.nparams;
  for (int i = 0; i < n; ++i) out << "x" << i << ",";
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) {
      out << "j_" << i << "_" << j << (i + 1 == n && j + 1 == p ? "" : ",");
    }
  }
  out << "\n";
  for (std::size_t m = 0; m < batch.size(); ++m) {
    const Eigen::Index mi = static_cast<Eigen::Index>(m);
    for (int i = 0; i < n; ++i) out << batch.points(mi, i) << ",";
    for (Eigen::Index c = 0; c < batch.jac.cols(); ++c) {
      out << batch.jac(mi, c) << (c + 1 == batch.jac.cols() ? "" : ",");
    }
    out << "\n";
  }
  if (!out) throw Error("failed to write '" + path + "'");
}

void save_jacobian_batch_json(const JacobianBatch &batch, const std::string &path) {
  nlohmann::json doc;
  doc["schema"] = "distsens.jacobian_batch/1";
  doc["dims"] = batch.dims();
  doc["params"] = batch.nparams;
  nlohmann::json pts = nlohmann::json::array();
  nlohmann::json jacs = nlohmann::json::array();
  for (std::size_t m = 0; m < batch.size(); ++m) {
    const Eigen::Index mi = static_cast<Eigen::Index>(m);
    nlohmann::json pt = nlohmann::json::array();
    for (int i = 0; i < batch.dims(); ++i) pt.push_back(batch.points(mi, i));
    pts.push_back(std::move(pt));
    const Eigen::MatrixXd j_mat = batch.jacobian(m);
    nlohmann::json rows = nlohmann::json::array();
    for (int i = 0; i < j_mat.rows(); ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (int j = 0; j < j_mat.cols(); ++j) row.push_back(j_mat(i, j));
      rows.push_back(std::move(row));
    }
    jacs.push_back(std::move(rows));
  }
  doc["points"] = std::move(pts);
  doc["jacobians"] = std::move(jacs);
  nlohmann::json fails = nlohmann::json::array();
  for (const PointFailure &pf : batch.failures) {
    fails.push_back({{"point", pf.point}, {"message", pf.message}});
  }
  doc["failures"] = std::move(fails);
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << doc.dump(2) << "\n";
  if (!out) throw Error("failed to write '" + path + "'");
}

}  // namespace distsens
