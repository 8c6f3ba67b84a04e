// distsens: sensitivities of random-vector realizations w.r.t. distribution parameters
// SPDX-License-Identifier: MIT

#include "distsens/grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace distsens {

namespace {

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

}  // namespace

GridLine::GridLine(Eigen::VectorXd vertices) : v_(std::move(vertices)) {
  if (v_.size() < 3) {
    throw InvalidParameter("gridline needs at least 3 vertices, got " +
                           std::to_string(v_.size()));
  }
  for (Eigen::Index k = 0; k + 1 < v_.size(); ++k) {
    if (!(v_[k] < v_[k + 1])) {
      throw InvalidParameter("gridline vertices must be strictly increasing; v[" +
                             std::to_string(k) + "]=" + fmt(v_[k]) + " >= v[" +
                             std::to_string(k + 1) + "]=" + fmt(v_[k + 1]));
    }
  }
  if (!v_.allFinite()) throw InvalidParameter("gridline vertices must be finite");
}

GridLine GridLine::uniform(double lo, double hi, Eigen::Index k) {
  if (!(lo < hi)) throw InvalidParameter("uniform gridline needs lo < hi");
  return GridLine(Eigen::VectorXd::LinSpaced(k, lo, hi));
}

GridLine GridLine::log_uniform(double lo, double hi, Eigen::Index k) {
  if (!(0.0 < lo && lo < hi)) throw InvalidParameter("log gridline needs 0 < lo < hi");
  Eigen::VectorXd v = Eigen::VectorXd::LinSpaced(k, std::log(lo), std::log(hi)).array().exp();
  v[0] = lo;          // pin the endpoints against exp/log round-off
  v[k - 1] = hi;
  return GridLine(std::move(v));
}

Eigen::Index GridLine::cell_of(double x) const {
  if (!(x >= front() && x <= back())) {
    throw PointOutsideGrid("coordinate " + fmt(x) + " outside gridline span [" +
                           fmt(front()) + ", " + fmt(back()) + "]");
  }
  const double *begin = v_.data();
  const double *end = v_.data() + v_.size();
  // Greatest c with v[c] <= x, clamped so x == back() lands in the last cell.
  Eigen::Index c = std::upper_bound(begin, end, x) - begin - 1;
  return std::min(c, v_.size() - 2);
}

RectilinearGrid::RectilinearGrid(std::vector<GridLine> axes) : axes_(std::move(axes)) {
  if (axes_.empty()) throw InvalidParameter("grid needs at least one axis");
  nverts_ = 1;
  for (const GridLine &ax : axes_) {
    const auto k = static_cast<std::size_t>(ax.size());
    if (nverts_ > std::numeric_limits<std::size_t>::max() / k) {
      throw InvalidParameter("grid vertex count overflows the index type");
    }
    nverts_ *= k;
  }
}

bool RectilinearGrid::contains(const Eigen::VectorXd &x) const {
  if (x.size() != dims()) return false;
  for (int i = 0; i < dims(); ++i) {
    if (!axes_[static_cast<std::size_t>(i)].contains(x[i])) return false;
  }
  return true;
}

void RectilinearGrid::require_inside(const Eigen::VectorXd &x) const {
  if (x.size() != dims()) {
    throw ShapeMismatch("point has " + std::to_string(x.size()) + " coordinates, grid has " +
                        std::to_string(dims()) + " axes");
  }
  for (int i = 0; i < dims(); ++i) {
    const GridLine &ax = axes_[static_cast<std::size_t>(i)];
    if (!ax.contains(x[i])) {
      throw PointOutsideGrid("axis " + std::to_string(i) + ": coordinate " + fmt(x[i]) +
                             " outside [" + fmt(ax.front()) + ", " + fmt(ax.back()) + "]");
    }
  }
}

std::size_t RectilinearGrid::linear_index(const Eigen::VectorXi &k) const {
  if (k.size() != dims()) throw ShapeMismatch("multi-index rank mismatch");
  std::size_t lin = 0;
  for (int i = 0; i < dims(); ++i) {
    const Eigen::Index ki = k[i];
    if (ki < 0 || ki >= axes_[static_cast<std::size_t>(i)].size()) {
      throw IndexOutOfRange("multi-index component " + std::to_string(i) + " = " +
                            std::to_string(ki) + " out of range");
    }
    lin = lin * static_cast<std::size_t>(axes_[static_cast<std::size_t>(i)].size()) +
          static_cast<std::size_t>(ki);
  }
  return lin;
}

Eigen::VectorXi RectilinearGrid::multi_index(std::size_t lin) const {
  if (lin >= nverts_) throw IndexOutOfRange("linear index out of range");
  Eigen::VectorXi k(dims());
  for (int i = dims() - 1; i >= 0; --i) {
    const auto ki = static_cast<std::size_t>(axes_[static_cast<std::size_t>(i)].size());
    k[i] = static_cast<int>(lin % ki);
    lin /= ki;
  }
  return k;
}

std::size_t RectilinearGrid::axis_stride(int i) const {
  if (i < 0 || i >= dims()) throw IndexOutOfRange("axis index out of range");
  std::size_t stride = 1;
  for (int j = i + 1; j < dims(); ++j) {
    stride *= static_cast<std::size_t>(axes_[static_cast<std::size_t>(j)].size());
  }
  return stride;
}

std::uint64_t RectilinearGrid::hash() const {
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a offset basis
  auto mix = [&h](const void *bytes, std::size_t n) {
    const auto *p = static_cast<const unsigned char *>(bytes);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  };
  const std::uint64_t nd = static_cast<std::uint64_t>(dims());
  mix(&nd, sizeof nd);
  for (const GridLine &ax : axes_) {
    const std::uint64_t k = static_cast<std::uint64_t>(ax.size());
    mix(&k, sizeof k);
    mix(ax.vertices().data(), sizeof(double) * static_cast<std::size_t>(ax.size()));
  }
  return h;
}

VertexField::VertexField(RectilinearGrid grid, int elem_rows, int elem_cols)
    : grid_(std::move(grid)), rows_(elem_rows), cols_(elem_cols) {
  if (rows_ < 1 || cols_ < 1) throw InvalidParameter("element shape must be positive");
  values_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(grid_.num_vertices()) *
                                  elem_size());
}

Eigen::MatrixXd VertexField::reshape(const Eigen::VectorXd &flat) const {
  if (flat.size() != elem_size()) throw ShapeMismatch("flat element has wrong length");
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                        Eigen::RowMajor>>(flat.data(), rows_, cols_);
}

CellStencil::CellStencil(const RectilinearGrid &grid, const Eigen::VectorXd &point) {
  grid.require_inside(point);
  const int n = grid.dims();

  // Cell anchor and the normalized coordinate within the cell, per axis.
  Eigen::VectorXi cell(n);
  Eigen::VectorXd w(n);
  std::vector<std::size_t> stride(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const GridLine &ax = grid.axis(i);
    const Eigen::Index c = ax.cell_of(point[i]);
    cell[i] = static_cast<int>(c);
    w[i] = (point[i] - ax[c]) / (ax[c + 1] - ax[c]);
    stride[static_cast<std::size_t>(i)] = grid.axis_stride(i);
  }

  const std::size_t base = grid.linear_index(cell);
  const unsigned corners = 1u << n;
  corners_.resize(corners);
  weights_.resize(corners);
  for (unsigned c = 0; c < corners; ++c) {
    double weight = 1.0;
    std::size_t lin = base;
    for (int i = 0; i < n; ++i) {
      if (c & (1u << i)) {
        weight *= w[i];
        lin += stride[static_cast<std::size_t>(i)];
      } else {
        weight *= 1.0 - w[i];
      }
    }
    corners_[c] = lin;
    weights_[c] = weight;
  }
}

double CellStencil::gather_scalar(const VertexField &field) const {
  if (field.elem_size() != 1) throw ShapeMismatch("field element is not scalar");
  double out = 0.0;
  for (std::size_t c = 0; c < corners_.size(); ++c) {
    if (weights_[c] != 0.0) out += weights_[c] * field.scalar(corners_[c]);
  }
  return out;
}

Eigen::VectorXd CellStencil::gather(const VertexField &field) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(field.elem_size());
  for (std::size_t c = 0; c < corners_.size(); ++c) {
    if (weights_[c] != 0.0) out += weights_[c] * field.elem(corners_[c]);
  }
  return out;
}

Eigen::VectorXd interpolate(const Eigen::VectorXd &point, const VertexField &field) {
  return CellStencil(field.grid(), point).gather(field);
}

double interpolate_scalar(const Eigen::VectorXd &point, const VertexField &field) {
  return CellStencil(field.grid(), point).gather_scalar(field);
}

double interpolate_line(double x, const GridLine &line,
                        const Eigen::Ref<const Eigen::VectorXd> &values) {
  if (values.size() != line.size()) throw ShapeMismatch("line value count mismatch");
  const Eigen::Index c = line.cell_of(x);
  const double w = (x - line[c]) / (line[c + 1] - line[c]);
  return (1.0 - w) * values[c] + w * values[c + 1];
}

double fd3_forward(double x0, double x1, double x2, double f0, double f1, double f2) {
  const double h0 = x1 - x0;
  const double h1 = x2 - x1;
  return (-h1 * (2.0 * h0 + h1) * f0 + (h0 + h1) * (h0 + h1) * f1 - h0 * h0 * f2) /
         (h0 * h1 * (h0 + h1));
}

double fd3_backward(double x0, double x1, double x2, double f0, double f1, double f2) {
  const double h1 = x2 - x1;
  const double h2 = x1 - x0;
  return (h2 * (2.0 * h1 + h2) * f2 - (h1 + h2) * (h1 + h2) * f1 + h1 * h1 * f0) /
         (h1 * h2 * (h1 + h2));
}

double fd3_central(double x0, double x1, double x2, double f0, double f1, double f2) {
  const double hm = x1 - x0;
  const double hp = x2 - x1;
  return (-hp * hp * f0 + (hp - hm) * (hp + hm) * f1 + hm * hm * f2) /
         (hp * hm * (hp + hm));
}

double fd_first_derivative(const GridLine &line,
                           const Eigen::Ref<const Eigen::VectorXd> &values,
                           Eigen::Index at_index) {
  const Eigen::Index kmax = line.size() - 1;
  if (values.size() != line.size()) throw ShapeMismatch("value count mismatch");
  if (at_index < 0 || at_index > kmax) {
    throw IndexOutOfRange("stencil index " + std::to_string(at_index) + " outside [0, " +
                          std::to_string(kmax) + "]");
  }
  const Eigen::Index k = at_index;
  if (k == 0) {
    return fd3_forward(line[k], line[k + 1], line[k + 2], values[k], values[k + 1],
                       values[k + 2]);
  }
  if (k == kmax) {
    return fd3_backward(line[k - 2], line[k - 1], line[k], values[k - 2], values[k - 1],
                        values[k]);
  }
  return fd3_central(line[k - 1], line[k], line[k + 1], values[k - 1], values[k],
                     values[k + 1]);
}

void save_vertex_field(const VertexField &field, const std::string &path_prefix) {
  nlohmann::json header;
  header["schema"] = "distsens.vertex_field/1";
  header["layout"] = "row-major, first axis slowest; element blocks row-major";
  header["byte_order"] = "little";
  header["elem_rows"] = field.elem_rows();
  header["elem_cols"] = field.elem_cols();
  header["axes"] = nlohmann::json::array();
  for (int i = 0; i < field.grid().dims(); ++i) {
    const Eigen::VectorXd &v = field.grid().axis(i).vertices();
    header["axes"].push_back(std::vector<double>(v.data(), v.data() + v.size()));
  }
  header["value_count"] = field.data().size();

  std::ofstream js(path_prefix + ".json");
  if (!js) throw Error("cannot open " + path_prefix + ".json for writing");
  js << header.dump(2) << "\n";

  std::ofstream bin(path_prefix + ".bin", std::ios::binary);
  if (!bin) throw Error("cannot open " + path_prefix + ".bin for writing");
  bin.write(reinterpret_cast<const char *>(field.data().data()),
            static_cast<std::streamsize>(sizeof(double) *
                                         static_cast<std::size_t>(field.data().size())));
  if (!bin) throw Error("short write to " + path_prefix + ".bin");
}

VertexField load_vertex_field(const std::string &path_prefix) {
  std::ifstream js(path_prefix + ".json");
  if (!js) throw Error("cannot open " + path_prefix + ".json");
  nlohmann::json header = nlohmann::json::parse(js);
  if (header.value("schema", "") != "distsens.vertex_field/1") {
    throw Error("unrecognized vertex-field schema in " + path_prefix + ".json");
  }
  std::vector<GridLine> axes;
  for (const auto &ax : header.at("axes")) {
    std::vector<double> v = ax.get<std::vector<double>>();
    axes.emplace_back(Eigen::Map<Eigen::VectorXd>(v.data(),
                                                  static_cast<Eigen::Index>(v.size())));
  }
  VertexField field(RectilinearGrid(std::move(axes)), header.at("elem_rows").get<int>(),
                    header.at("elem_cols").get<int>());
  const auto count = header.at("value_count").get<Eigen::Index>();
  if (count != field.data().size()) throw Error("vertex-field header/value count mismatch");

  std::ifstream bin(path_prefix + ".bin", std::ios::binary);
  if (!bin) throw Error("cannot open " + path_prefix + ".bin");
  bin.read(reinterpret_cast<char *>(field.data().data()),
           static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(count)));
  if (bin.gcount() != static_cast<std::streamsize>(sizeof(double) *
                                                   static_cast<std::size_t>(count))) {
    throw Error("short read from " + path_prefix + ".bin");
  }
  return field;
}

}  // namespace distsens
