// distsens: sensitivities of random-vector realizations w.r.t. distribution parameters
// SPDX-License-Identifier: MIT

#include "distsens/cdf.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "distsens/summation.hpp"

namespace distsens {

LineTabulation tabulate_line(const Density1d &f, const GridLine &line,
                             const ParamVector &params) {
  const Eigen::Index k = line.size();
  LineTabulation t;
  t.pdf.resize(k);
  t.phi.resize(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    t.pdf[i] = f(line[i], params);
    if (t.pdf[i] < 0.0) {
      throw DomainViolation("density is negative at vertex " + std::to_string(i) +
                            " (x = " + std::to_string(line[i]) + ")");
    }
  }
  t.phi[0] = 0.0;
  for (Eigen::Index i = 1; i < k; ++i) {
    t.phi[i] = t.phi[i - 1] + (t.pdf[i - 1] + t.pdf[i]) * (line[i] - line[i - 1]) / 2.0;
  }
  t.c = t.phi[k - 1];
  if (!std::isfinite(t.c) || !(t.c > 0.0)) {
    throw ZeroMass("gridline carries no density mass (trapezoid integral = " +
                   std::to_string(t.c) + "); widen or refine the grid");
  }
  t.phi /= t.c;
  return t;
}

Cdf1dResult cdf_1d(const Density1d &f, const GridLine &line, const ParamVector &params) {
  LineTabulation t = tabulate_line(f, line, params);
  return {std::move(t.phi), t.c};
}

namespace {

std::string line_label(const RectilinearGrid &grid, int axis, std::size_t base) {
  Eigen::VectorXi k = grid.multi_index(base);
  std::ostringstream os;
  os << "axis " << axis << ", line through multi-index (";
  for (int i = 0; i < k.size(); ++i) os << (i ? ", " : "") << k[i];
  os << ")";
  return os.str();
}

}  // namespace

CondField conditionals_nd(const Density &f, const RectilinearGrid &grid,
                          const ParamVector &params) {
  const int n = grid.dims();
  if (f.dims != n) {
    throw ShapeMismatch("density is " + std::to_string(f.dims) + "-D but grid has " +
                        std::to_string(n) + " axes");
  }
  const std::size_t nv = grid.num_vertices();

  // Joint PDF at every vertex, evaluated once and reused by all axes.
  VertexField eta(grid);
  {
    auto fill = [&](std::size_t, std::size_t begin, std::size_t end) {
      Eigen::VectorXd point(n);
      Eigen::VectorXi k = grid.multi_index(begin);
      for (std::size_t lin = begin; lin < end; ++lin) {
        for (int i = 0; i < n; ++i) point[i] = grid.axis(i)[k[i]];
        eta.scalar(lin) = f.eval(point, params);
        // Odometer step in linearization order (last axis fastest).
        for (int i = n - 1; i >= 0; --i) {
          if (++k[i] < grid.axis(i).size()) break;
          k[i] = 0;
        }
      }
    };
    if (f.concurrency_safe) {
      parallel_blocks(nv, 4096, fill);
    } else {
      fill(0, 0, nv);
    }
  }

  CondField out;
  out.cond_pdfs.reserve(static_cast<std::size_t>(n));
  out.cond_cdfs.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    out.cond_pdfs.emplace_back(grid);
    out.cond_cdfs.emplace_back(grid);
  }

  for (int i = 0; i < n; ++i) {
    const std::size_t stride = grid.axis_stride(i);
    const auto ki = static_cast<std::size_t>(grid.axis(i).size());
    const std::size_t block = ki * stride;       // span of one axis-i slab
    const std::size_t nlines = nv / ki;
    const GridLine &ax = grid.axis(i);
    VertexField &pdf_i = out.cond_pdfs[static_cast<std::size_t>(i)];
    VertexField &cdf_i = out.cond_cdfs[static_cast<std::size_t>(i)];

    auto do_line = [&](std::size_t line_id) {
      const std::size_t outer = line_id / stride;
      const std::size_t suffix = line_id % stride;
      const std::size_t base = outer * block + suffix;
      // Running trapezoid along the line; strictly sequential.
      double acc = 0.0;
      cdf_i.scalar(base) = 0.0;
      for (std::size_t m = 1; m < ki; ++m) {
        const std::size_t cur = base + m * stride;
        const std::size_t prev = cur - stride;
        acc += (eta.scalar(prev) + eta.scalar(cur)) *
               (ax[static_cast<Eigen::Index>(m)] - ax[static_cast<Eigen::Index>(m - 1)]) /
               2.0;
        cdf_i.scalar(cur) = acc;
      }
      const double mass = acc;
      if (!std::isfinite(mass) || !(mass > 0.0)) {
        throw ZeroMass("conditional has no mass along " + line_label(grid, i, base) +
                       " (trapezoid integral = " + std::to_string(mass) + ")");
      }
      for (std::size_t m = 0; m < ki; ++m) {
        const std::size_t cur = base + m * stride;
        pdf_i.scalar(cur) = eta.scalar(cur) / mass;
        cdf_i.scalar(cur) /= mass;
      }
    };

    // One block per batch of whole lines; lines touch disjoint vertices.
    parallel_blocks(nlines, std::max<std::size_t>(1, nlines / 256), [&](std::size_t, std::size_t b, std::size_t e) {
      for (std::size_t l = b; l < e; ++l) do_line(l);
    });
  }
  return out;
}

std::string cond_field_cache_key(const Density &f, const ParamVector &params,
                                 const RectilinearGrid &grid) {
  std::ostringstream os;
  os << f.name << "|";
  os.precision(17);
  for (Eigen::Index j = 0; j < params.size(); ++j) os << (j ? "," : "") << params[j];
  char buf[32];
  std::snprintf(buf, sizeof buf, "|%016llx",
                static_cast<unsigned long long>(grid.hash()));
  os << buf;
  return os.str();
}

}  // namespace distsens
