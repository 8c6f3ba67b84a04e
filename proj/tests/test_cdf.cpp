// distsens: sensitivities of random-vector realizations w.r.t. distribution parameters
// SPDX-License-Identifier: MIT

#include <doctest.h>

#include <cmath>

#include "distsens/cdf.hpp"
#include "distsens/density.hpp"
#include "distsens/errors.hpp"

using namespace distsens;

namespace {

Density1d gaussian1d_section() {
  const Density g = gaussian1d();
  return [g](double x, const ParamVector &p) {
    Eigen::VectorXd v(1);
    v << x;
    return g(v, p);
  };
}

}  // namespace

TEST_CASE("cdf endpoints are exact and the interior converges") {
  const Density1d f = gaussian1d_section();
  ParamVector p(2);
  p << 0.0, 1.0;
  const GridLine line = GridLine::uniform(-8.0, 8.0, 1025);
  const Cdf1dResult res = cdf_1d(f, line, p);
  REQUIRE(res.phi.size() == 1025);
  CHECK(res.phi[0] == 0.0);
  CHECK(res.phi[1024] == 1.0);
  CHECK(res.c == doctest::Approx(1.0).epsilon(1e-6));
  // Vertex 512 sits exactly at x = 0.
  CHECK(line[512] == doctest::Approx(0.0));
  CHECK(res.phi[512] == doctest::Approx(0.5).epsilon(1e-6));
  // Monotone by construction.
  for (Eigen::Index k = 1; k < res.phi.size(); ++k) CHECK(res.phi[k] >= res.phi[k - 1]);
  // A generic quantile against the closed form: trapezoid error is O(h^2),
  // about 5e-6 at K = 1025 and 16x finer grids gain a factor 256.
  CHECK(res.phi[576] == doctest::Approx(gaussian1d_cdf(line[576], p)).epsilon(2e-5));
  const GridLine fine = GridLine::uniform(-8.0, 8.0, 16385);
  const Cdf1dResult fres = cdf_1d(f, fine, p);
  CHECK(fres.phi[9216] == doctest::Approx(gaussian1d_cdf(fine[9216], p)).epsilon(1e-7));
}

TEST_CASE("cdf tabulation consumes exactly K evaluations") {
  CallCounter counter;
  const Density g = counted(gaussian1d(), counter);
  const Density1d f = [&g](double x, const ParamVector &p) {
    Eigen::VectorXd v(1);
    v << x;
    return g(v, p);
  };
  ParamVector p(2);
  p << 1.0, 2.0;
  const GridLine line = GridLine::uniform(-9.0, 11.0, 257);
  (void)cdf_1d(f, line, p);
  CHECK(counter.count() == 257);
  counter.reset();
  (void)tabulate_line(f, line, p);
  CHECK(counter.count() == 257);
}

TEST_CASE("zero mass lines are rejected") {
  const Density1d zero = [](double, const ParamVector &) { return 0.0; };
  const GridLine line = GridLine::uniform(0.0, 1.0, 17);
  CHECK_THROWS_AS((void)cdf_1d(zero, line, ParamVector()), ZeroMass);
}

TEST_CASE("negative density values are rejected") {
  const Density1d bad = [](double x, const ParamVector &) { return x < 0.5 ? 1.0 : -1.0; };
  const GridLine line = GridLine::uniform(0.0, 1.0, 17);
  CHECK_THROWS_AS((void)cdf_1d(bad, line, ParamVector()), DomainViolation);
}

TEST_CASE("conditional fields match per line tabulation") {
  const Density g2 = gaussian2d();
  ParamVector p(5);
  p << 0.3, -0.2, 1.1, 0.9, 0.45;
  const RectilinearGrid grid(
      {GridLine::uniform(-5.0, 5.6, 33), GridLine::uniform(-4.7, 4.3, 29)});

  CallCounter counter;
  const Density counted_g2 = counted(g2, counter);
  const CondField field = conditionals_nd(counted_g2, grid, p);
  CHECK(counter.count() == 33 * 29);
  REQUIRE(field.cond_pdfs.size() == 2);
  REQUIRE(field.cond_cdfs.size() == 2);

  // Rebuild one line per axis directly and compare vertex by vertex.
  for (int axis = 0; axis < 2; ++axis) {
    const int other = 1 - axis;
    const Eigen::Index fixed = 7;
    Eigen::VectorXd base(2);
    base[other] = grid.axis(other)[fixed];
    base[axis] = 0.0;
    AxisSection sec(g2, base, axis);
    const LineTabulation tab = tabulate_line(sec.fn(), grid.axis(axis), p);
    for (Eigen::Index k = 0; k < grid.axis(axis).size(); ++k) {
      Eigen::VectorXi idx(2);
      idx[axis] = static_cast<int>(k);
      idx[other] = static_cast<int>(fixed);
      const std::size_t lin = grid.linear_index(idx);
      CHECK(field.cond_cdfs[static_cast<std::size_t>(axis)].scalar(lin) ==
            doctest::Approx(tab.phi[k]).epsilon(1e-13));
      CHECK(field.cond_pdfs[static_cast<std::size_t>(axis)].scalar(lin) ==
            doctest::Approx(tab.pdf[k] / tab.c).epsilon(1e-13));
    }
    // Every line starts at 0 and ends at 1 exactly.
    Eigen::VectorXi lo(2), hi(2);
    lo[other] = hi[other] = static_cast<int>(fixed);
    lo[axis] = 0;
    hi[axis] = static_cast<int>(grid.axis(axis).size() - 1);
    CHECK(field.cond_cdfs[static_cast<std::size_t>(axis)].scalar(grid.linear_index(lo)) == 0.0);
    CHECK(field.cond_cdfs[static_cast<std::size_t>(axis)].scalar(grid.linear_index(hi)) == 1.0);
  }
}

TEST_CASE("conditional cdf matches the closed form conditional") {
  const Density g2 = gaussian2d();
  ParamVector p(5);
  p << 0.0, 0.0, 1.0, 1.0, 0.6;
  const RectilinearGrid grid(
      {GridLine::uniform(-6.0, 6.0, 513), GridLine::uniform(-6.0, 6.0, 513)});
  const CondField field = conditionals_nd(g2, grid, p);

  // Conditional of x1 given x2 is Gaussian with shifted mean and shrunk sigma.
  const Eigen::Index j2 = 300;
  const double x2 = grid.axis(1)[j2];
  const auto [mu, sigma] = gaussian2d_conditional(0, x2, p);
  ParamVector cp(2);
  cp << mu, sigma;
  for (Eigen::Index k : {Eigen::Index(180), Eigen::Index(256), Eigen::Index(330)}) {
    Eigen::VectorXi idx(2);
    idx << static_cast<int>(k), static_cast<int>(j2);
    const double phi = field.cond_cdfs[0].scalar(grid.linear_index(idx));
    CHECK(phi == doctest::Approx(gaussian1d_cdf(grid.axis(0)[k], cp)).epsilon(5e-5));
  }
}

TEST_CASE("cache keys separate parameters and grids") {
  const Density g2 = gaussian2d();
  ParamVector p(5), q(5);
  p << 0.0, 0.0, 1.0, 1.0, 0.0;
  q = p;
  q[4] = 1e-17;  // tiny but distinct
  const RectilinearGrid a({GridLine::uniform(0, 1, 3), GridLine::uniform(0, 1, 3)});
  const RectilinearGrid b({GridLine::uniform(0, 1, 3), GridLine::uniform(0, 1, 4)});
  CHECK(cond_field_cache_key(g2, p, a) != cond_field_cache_key(g2, q, a));
  CHECK(cond_field_cache_key(g2, p, a) != cond_field_cache_key(g2, p, b));
  CHECK(cond_field_cache_key(g2, p, a) == cond_field_cache_key(g2, p, a));
}
