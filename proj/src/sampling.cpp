// distsens: sensitivities of random-vector realizations w.r.t. distribution parameters
// SPDX-License-Identifier: MIT

#include "distsens/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>

#include "distsens/errors.hpp"
#include "distsens/summation.hpp"

namespace distsens {

namespace {

// Draws per substream chunk; part of the determinism contract (the chunk
// boundaries, not the thread count, decide which generator produces which
// draw).
constexpr std::size_t kSampleChunk = 4096;

// Attempts per accepted draw before giving up.
constexpr std::size_t kMaxAttempts = 1000000;

std::string cell_label(const RectilinearGrid &grid, const std::vector<Eigen::Index> &cell) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < cell.size(); ++i) os << (i ? ", " : "") << cell[i];
  os << ")";
  (void)grid;
  return os.str();
}

}  // namespace

PiecewiseConstantProposal build_proposal(const Density &f, const RectilinearGrid &grid,
                                         const ParamVector &params, double safety) {
  if (!(safety >= 1.0)) throw InvalidParameter("proposal safety factor must be >= 1");
  if (f.dims != grid.dims()) {
    throw ShapeMismatch("density has " + std::to_string(f.dims) + " dims but grid has " +
                        std::to_string(grid.dims()));
  }

  const int n = grid.dims();
  VertexField values(grid);
  const std::size_t nv = grid.num_vertices();
  auto fill = [&](std::size_t, std::size_t begin, std::size_t end) {
    Eigen::VectorXi k = grid.multi_index(begin);
    Eigen::VectorXd x(n);
    for (std::size_t lin = begin; lin < end; ++lin) {
      for (int i = 0; i < n; ++i) x[i] = grid.axis(i)[k[i]];
      values.scalar(lin) = f.eval(x, params);
      for (int i = n - 1; i >= 0; --i) {
        if (++k[i] < static_cast<int>(grid.axis(i).size())) break;
        k[i] = 0;
      }
    }
  };
  if (f.concurrency_safe) {
    parallel_blocks(nv, 4096, fill);
  } else {
    fill(0, 0, nv);
  }

  std::size_t ncells = 1;
  std::vector<std::size_t> csizes(static_cast<std::size_t>(n));
  std::vector<std::size_t> vstride(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    csizes[static_cast<std::size_t>(i)] = static_cast<std::size_t>(grid.axis(i).size()) - 1;
    vstride[static_cast<std::size_t>(i)] = grid.axis_stride(i);
    ncells *= csizes[static_cast<std::size_t>(i)];
  }

  PiecewiseConstantProposal prop;
  prop.grid = grid;
  prop.cell_heights.resize(static_cast<Eigen::Index>(ncells));
  prop.cell_masses.resize(static_cast<Eigen::Index>(ncells));
  prop.cumulative.resize(static_cast<Eigen::Index>(ncells));

  std::vector<Eigen::Index> cell(static_cast<std::size_t>(n), 0);
  for (std::size_t c = 0; c < ncells; ++c) {
    std::size_t base = 0;
    double volume = 1.0;
    for (int i = 0; i < n; ++i) {
      const GridLine &ax = grid.axis(i);
      base += static_cast<std::size_t>(cell[static_cast<std::size_t>(i)]) *
              vstride[static_cast<std::size_t>(i)];
      volume *= ax[cell[static_cast<std::size_t>(i)] + 1] - ax[cell[static_cast<std::size_t>(i)]];
    }
    double peak = 0.0;
    const unsigned corners = 1u << n;
    for (unsigned mask = 0; mask < corners; ++mask) {
      std::size_t lin = base;
      for (int i = 0; i < n; ++i) {
        if (mask & (1u << i)) lin += vstride[static_cast<std::size_t>(i)];
      }
      peak = std::max(peak, values.scalar(lin));
    }
    prop.cell_heights[static_cast<Eigen::Index>(c)] = safety * peak;
    prop.cell_masses[static_cast<Eigen::Index>(c)] = safety * peak * volume;
    // Odometer over cells, last axis fastest.
    for (int i = n - 1; i >= 0; --i) {
      if (static_cast<std::size_t>(++cell[static_cast<std::size_t>(i)]) <
          csizes[static_cast<std::size_t>(i)]) {
        break;
      }
      cell[static_cast<std::size_t>(i)] = 0;
    }
  }

  double acc = 0.0;
  for (Eigen::Index c = 0; c < prop.cell_masses.size(); ++c) {
    acc += prop.cell_masses[c];
    prop.cumulative[c] = acc;
  }
  prop.total_mass = acc;
  if (!std::isfinite(acc) || !(acc > 0.0)) {
    throw ZeroMass("proposal mass is not finite and positive");
  }
  return prop;
}

SampleSet sample(const Density &f, const PiecewiseConstantProposal &proposal,
                 const ParamVector &params, std::size_t count, RngSeed seed) {
  if (count < 1) throw InvalidParameter("sample count must be positive");
  const RectilinearGrid &grid = proposal.grid;
  const int n = grid.dims();
  if (f.dims != n) throw ShapeMismatch("density dimension does not match the proposal");

  SampleSet set;
  set.points.resize(static_cast<Eigen::Index>(count), n);
  set.density = f.name;
  set.params = params;
  set.seed = seed.seed;
  set.stream = seed.stream;

  std::vector<std::size_t> csizes(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    csizes[static_cast<std::size_t>(i)] = static_cast<std::size_t>(grid.axis(i).size()) - 1;
  }
  const std::size_t nchunks = (count + kSampleChunk - 1) / kSampleChunk;

  auto do_chunk = [&](std::size_t, std::size_t cbegin, std::size_t cend) {
    Eigen::VectorXd x(n);
    std::vector<Eigen::Index> cell(static_cast<std::size_t>(n));
    for (std::size_t chunk = cbegin; chunk < cend; ++chunk) {
      Rng rng(seed.child(chunk));
      const std::size_t first = chunk * kSampleChunk;
      const std::size_t last = std::min(first + kSampleChunk, count);
      for (std::size_t m = first; m < last; ++m) {
        std::size_t attempts = 0;
        for (;;) {
          if (++attempts > kMaxAttempts) {
            throw SamplerFailure("no acceptance after " + std::to_string(kMaxAttempts) +
                                 " attempts; envelope mass is spread too thin");
          }
          // Fixed draw order per attempt: cell selector, then one coordinate
          // per axis, then the acceptance uniform.
          const double r = rng.uniform() * proposal.total_mass;
          const double *cum = proposal.cumulative.data();
          const std::size_t ncells = proposal.num_cells();
          std::size_t c = static_cast<std::size_t>(
              std::upper_bound(cum, cum + ncells, r) - cum);
          if (c >= ncells) c = ncells - 1;
          std::size_t rem = c;
          for (int i = n - 1; i >= 0; --i) {
            cell[static_cast<std::size_t>(i)] =
                static_cast<Eigen::Index>(rem % csizes[static_cast<std::size_t>(i)]);
            rem /= csizes[static_cast<std::size_t>(i)];
          }
          for (int i = 0; i < n; ++i) {
            const GridLine &ax = grid.axis(i);
            x[i] = rng.uniform(ax[cell[static_cast<std::size_t>(i)]],
                               ax[cell[static_cast<std::size_t>(i)] + 1]);
          }
          const double u = rng.uniform();
          const double height = proposal.cell_heights[static_cast<Eigen::Index>(c)];
          const double fx = f.eval(x, params);
          if (fx > height) {
            throw EnvelopeViolation("density " + std::to_string(fx) + " exceeds height " +
                                    std::to_string(height) + " in cell " +
                                    cell_label(grid, cell));
          }
          if (u * height <= fx) {
            set.points.row(static_cast<Eigen::Index>(m)) = x.transpose();
            break;
          }
        }
      }
    }
  };
  if (f.concurrency_safe) {
    parallel_blocks(nchunks, 1, do_chunk);
  } else {
    do_chunk(0, 0, nchunks);
  }
  return set;
}

SampleDrawer rejection_drawer(const RectilinearGrid &grid, RngSeed seed, double safety) {
  auto calls = std::make_shared<std::uint64_t>(0);
  return [grid, seed, safety, calls](const Density &f, const ParamVector &params,
                                     std::size_t count) {
    const PiecewiseConstantProposal prop = build_proposal(f, grid, params, safety);
    return sample(f, prop, params, count, seed.child((*calls)++));
  };
}

double ks_statistic(const Eigen::VectorXd &samples,
                    const std::function<double(double)> &cdf) {
  if (samples.size() < 1) throw TooFewSamples("KS statistic needs at least one sample");
  std::vector<double> sorted(samples.data(), samples.data() + samples.size());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double fx = cdf(sorted[i]);
    d = std::max(d, fx - static_cast<double>(i) / n);
    d = std::max(d, static_cast<double>(i + 1) / n - fx);
  }
  return d;
}

double ks_critical_value(std::size_t n, double alpha) {
  if (n < 1) throw TooFewSamples("KS critical value needs at least one sample");
  if (!(alpha > 0.0) || !(alpha < 1.0)) throw InvalidParameter("alpha must be in (0, 1)");
  return std::sqrt(-0.5 * std::log(alpha / 2.0)) / std::sqrt(static_cast<double>(n));
}

}  // namespace distsens
