// distsens: sensitivities of random-vector realizations w.r.t. distribution parameters
// SPDX-License-Identifier: MIT

#ifndef DISTSENS_GRID_HPP
#define DISTSENS_GRID_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "distsens/errors.hpp"

namespace distsens {

/// A strictly increasing sequence of K >= 3 vertex coordinates. The minimum
/// length comes from the three-point finite-difference stencils.
class GridLine {
 public:
  GridLine() = default;
  explicit GridLine(Eigen::VectorXd vertices);

  /// K equally spaced vertices spanning [lo, hi].
  static GridLine uniform(double lo, double hi, Eigen::Index k);
  /// K vertices equally spaced in log coordinate; requires 0 < lo < hi.
  static GridLine log_uniform(double lo, double hi, Eigen::Index k);

  Eigen::Index size() const { return v_.size(); }
  double operator[](Eigen::Index k) const { return v_[k]; }
  double front() const { return v_[0]; }
  double back() const { return v_[v_.size() - 1]; }
  double span() const { return back() - front(); }
  const Eigen::VectorXd &vertices() const { return v_; }

  bool contains(double x) const { return x >= front() && x <= back(); }

  /// Index c of the cell [v_c, v_{c+1}] containing x, by binary search.
  /// A point exactly on the upper boundary belongs to the last cell, so the
  /// closed box is covered without an epsilon. Throws PointOutsideGrid.
  Eigen::Index cell_of(double x) const;

 private:
  Eigen::VectorXd v_;
};

/// Tensor product of N gridlines.
class RectilinearGrid {
 public:
  RectilinearGrid() = default;
  explicit RectilinearGrid(std::vector<GridLine> axes);

  int dims() const { return static_cast<int>(axes_.size()); }
  const GridLine &axis(int i) const { return axes_.at(static_cast<std::size_t>(i)); }
  const std::vector<GridLine> &axes() const { return axes_; }
  std::size_t num_vertices() const { return nverts_; }

  bool contains(const Eigen::VectorXd &x) const;
  /// Throws PointOutsideGrid naming the first violating axis.
  void require_inside(const Eigen::VectorXd &x) const;

  /// Linearization is row-major with the first axis slowest:
  /// lin = ((k_0 K_1 + k_1) K_2 + ...) + k_{N-1}. This order is part of the
  /// serialization format.
  std::size_t linear_index(const Eigen::VectorXi &k) const;
  Eigen::VectorXi multi_index(std::size_t lin) const;
  /// Distance in linear index between neighbours along axis i.
  std::size_t axis_stride(int i) const;

  /// FNV-1a over dimensions and raw vertex bytes; used in cache keys.
  std::uint64_t hash() const;

 private:
  std::vector<GridLine> axes_;
  std::size_t nverts_ = 0;
};

/// Dense per-vertex storage of scalar or small-matrix values. Elements are
/// stored as contiguous row-major blocks in vertex linearization order.
class VertexField {
 public:
  VertexField() = default;
  VertexField(RectilinearGrid grid, int elem_rows = 1, int elem_cols = 1);

  const RectilinearGrid &grid() const { return grid_; }
  int elem_rows() const { return rows_; }
  int elem_cols() const { return cols_; }
  int elem_size() const { return rows_ * cols_; }

  double &scalar(std::size_t lin) { return values_[static_cast<Eigen::Index>(lin)]; }
  double scalar(std::size_t lin) const { return values_[static_cast<Eigen::Index>(lin)]; }

  Eigen::Map<Eigen::VectorXd> elem(std::size_t lin) {
    return {values_.data() + static_cast<Eigen::Index>(lin) * elem_size(), elem_size()};
  }
  Eigen::Map<const Eigen::VectorXd> elem(std::size_t lin) const {
    return {values_.data() + static_cast<Eigen::Index>(lin) * elem_size(), elem_size()};
  }

  /// View a flat element as its elem_rows x elem_cols matrix.
  Eigen::MatrixXd reshape(const Eigen::VectorXd &flat) const;

  Eigen::VectorXd &data() { return values_; }
  const Eigen::VectorXd &data() const { return values_; }

 private:
  RectilinearGrid grid_;
  int rows_ = 1;
  int cols_ = 1;
  Eigen::VectorXd values_;
};

/// The interpolation cell of one point: the 2^N cell corners (as linear
/// vertex indices) with their multilinear weights. Useful when several
/// fields on the same grid are gathered at the same point.
class CellStencil {
 public:
  CellStencil(const RectilinearGrid &grid, const Eigen::VectorXd &point);

  const std::vector<std::size_t> &corners() const { return corners_; }
  const std::vector<double> &weights() const { return weights_; }

  double gather_scalar(const VertexField &field) const;
  Eigen::VectorXd gather(const VertexField &field) const;

 private:
  std::vector<std::size_t> corners_;
  std::vector<double> weights_;
};

/// Piecewise multilinear interpolation of field at point. Exact at vertices
/// and for any multilinear polynomial; continuous across cell faces. The
/// returned vector is the flat element block (length elem_size).
Eigen::VectorXd interpolate(const Eigen::VectorXd &point, const VertexField &field);

/// Scalar-field convenience overload of interpolate.
double interpolate_scalar(const Eigen::VectorXd &point, const VertexField &field);

/// 1-D convenience: interpolate values sampled on a gridline at x.
double interpolate_line(double x, const GridLine &line,
                        const Eigen::Ref<const Eigen::VectorXd> &values);

/// Three-point first-derivative stencils on nonuniform spacing, exact for
/// polynomials of degree <= 2. Arguments are the three vertex coordinates in
/// increasing order and the function values there; the derivative is taken
/// at x0 (forward), x2 (backward), or x1 (central).
double fd3_forward(double x0, double x1, double x2, double f0, double f1, double f2);
double fd3_backward(double x0, double x1, double x2, double f0, double f1, double f2);
double fd3_central(double x0, double x1, double x2, double f0, double f1, double f2);

/// First derivative of vertex data by the second-order three-point stencil
/// for nonuniform spacing: forward at the first vertex, backward at the last,
/// central elsewhere. Exact for polynomials of degree <= 2.
double fd_first_derivative(const GridLine &line,
                           const Eigen::Ref<const Eigen::VectorXd> &values,
                           Eigen::Index at_index);

/// Write field as <path_prefix>.json (axes, element shape, layout) plus
/// <path_prefix>.bin (flat little-endian doubles in linearization order).
void save_vertex_field(const VertexField &field, const std::string &path_prefix);
VertexField load_vertex_field(const std::string &path_prefix);

}  // namespace distsens

#endif  // DISTSENS_GRID_HPP
