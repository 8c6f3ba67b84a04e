// distsens: sensitivities of random-vector realizations w.r.t. distribution parameters
// SPDX-License-Identifier: MIT

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "distsens/density.hpp"
#include "distsens/errors.hpp"
#include "distsens/sensitivity.hpp"

using namespace distsens;

namespace {

RowMatrixXd rows1(std::initializer_list<double> xs) {
  RowMatrixXd m(static_cast<Eigen::Index>(xs.size()), 1);
  Eigen::Index i = 0;
  for (double x : xs) m(i++, 0) = x;
  return m;
}

RowMatrixXd rows2(std::initializer_list<std::pair<double, double>> xs) {
  RowMatrixXd m(static_cast<Eigen::Index>(xs.size()), 2);
  Eigen::Index i = 0;
  for (const auto &[a, b] : xs) {
    m(i, 0) = a;
    m(i, 1) = b;
    ++i;
  }
  return m;
}

ParamVector gauss2d_params() {
  ParamVector p(5);
  p << 0.7, -1.1, 2.6, 1.3, 0.678;
  return p;
}

RectilinearGrid gauss2d_grid(Eigen::Index k) {
  const ParamVector p = gauss2d_params();
  return RectilinearGrid({GridLine::uniform(p[0] - 5 * p[2], p[0] + 5 * p[2], k),
                          GridLine::uniform(p[1] - 5 * p[3], p[1] + 5 * p[3], k)});
}

}  // namespace

TEST_CASE("call count formulas") {
  const std::vector<Eigen::Index> k1{64};
  const std::vector<Eigen::Index> k2{64, 64};
  CHECK(predict_call_count("1D Alg", 1, 1, 5, k1) == 11 * 64);
  CHECK(predict_call_count("1D Alg", 7, 1, 2, k1) == 7 * 5 * 64);
  CHECK(predict_call_count("Full Inv", 1, 2, 5, k2) == 1792);
  CHECK(predict_call_count("Full Inv", 3, 2, 5, k2) == 3 * 1792);
  CHECK(predict_call_count("Diag Approx", 1, 2, 5, k2) == 11 * 128);
  CHECK(predict_call_count("Interp Full", 1, 2, 5, k2) == 45056);
  CHECK(predict_call_count("Interp Diag", 9, 2, 5, k2) == 45056);  // M free
  const std::vector<Eigen::Index> k3{16, 32, 8};
  CHECK(predict_call_count("Full Inv", 4, 3, 2, k3) == 2 * 4 * 5 * 56);
  CHECK(predict_call_count("Interp Full", 4, 3, 2, k3) == 5 * 16 * 32 * 8);
}

TEST_CASE("measured evaluation counts match the prediction exactly") {
  const ParamVector p = gauss2d_params();
  const int np = static_cast<int>(p.size());
  CallCounter counter;
  const Density f = counted(gaussian2d(), counter);
  const RectilinearGrid grid({GridLine::uniform(p[0] - 5 * p[2], p[0] + 5 * p[2], 17),
                              GridLine::uniform(p[1] - 5 * p[3], p[1] + 5 * p[3], 21)});
  const std::vector<Eigen::Index> ks{17, 21};
  const RowMatrixXd pts = rows2({{0.9, -0.6}, {0.1, 0.4}, {-1.2, 0.8}});
  SensitivityConfig cfg;

  for (const char *name : {"Full Inv", "Diag Approx", "Interp Full", "Interp Diag"}) {
    counter.reset();
    const JacobianBatch b =
        compute_sensitivities(algorithm_by_name(name), f, grid, p, pts, cfg);
    REQUIRE(b.ok());
    CHECK(counter.count() ==
          predict_call_count(name, static_cast<std::uint64_t>(pts.rows()), 2, np, ks));
  }

  // 1D Alg on a one-axis grid.
  CallCounter c1;
  const Density g1 = counted(gaussian1d(), c1);
  ParamVector p1(2);
  p1 << 2.175, 1.371;
  const RectilinearGrid line({GridLine::uniform(2.175 - 5 * 1.371, 2.175 + 5 * 1.371, 33)});
  const JacobianBatch b1 = compute_sensitivities(SensitivityAlgorithm::OneDim, g1, line, p1,
                                                 rows1({1.1, 2.175, 3.9}), cfg);
  REQUIRE(b1.ok());
  CHECK(c1.count() == predict_call_count("1D Alg", 3, 1, 2, {33}));
}

TEST_CASE("1d sensitivities match the location scale identities") {
  const Density f = gaussian1d();
  ParamVector p(2);
  p << 2.175, 1.371;
  const GridLine line = GridLine::uniform(p[0] - 5 * p[1], p[0] + 5 * p[1], 16385);
  SensitivityConfig cfg;

  // Normalizing the CDF over the bounded domain mu +- 5 sigma shifts the
  // exact sensitivities away from the infinite-domain identities [1, z]:
  //   dx/dmu    = 1 - phi(5)/phi(z)
  //   dx/dsigma = z + 5 phi(5) (1 - 2 F_t(z)) / phi(z)
  // with phi the standard normal pdf and F_t the truncated CDF. The solver
  // is tested tightly against the truncated values and loosely against the
  // identities (the truncation bias itself is ~1e-4 at worst here).
  const double phi5 = std::exp(-12.5) / std::sqrt(2.0 * M_PI);
  ParamVector std_p(2);
  std_p << 0.0, 1.0;
  const double mass = gaussian1d_cdf(5.0, std_p) - gaussian1d_cdf(-5.0, std_p);
  for (double x : {1.1, 2.175, 3.9, -0.5}) {
    AxisSection sect(f, Eigen::VectorXd::Constant(1, x), 0);
    const Eigen::VectorXd j = sensitivity_1d(sect.fn(), line, p, x, cfg);
    const Eigen::Vector2d oracle = gaussian1d_jacobian_oracle(x, p);
    REQUIRE(j.size() == 2);
    const double z = (x - p[0]) / p[1];
    const double phiz = std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
    const double ft = (gaussian1d_cdf(z, std_p) - gaussian1d_cdf(-5.0, std_p)) / mass;
    const double mu_ref = 1.0 - phi5 / phiz;
    const double sg_ref = z + 5.0 * phi5 * (1.0 - 2.0 * ft) / phiz;
    CHECK(std::abs(j[0] - mu_ref) < 1e-5);
    CHECK(std::abs(j[1] - sg_ref) < 1e-5);
    CHECK(std::abs(j[0] - oracle[0]) < 2e-4);
    CHECK(std::abs(j[1] - oracle[1]) < 2e-4);
  }
}

TEST_CASE("full 2d sensitivities approach the closed form") {
  const Density f = gaussian2d();
  const ParamVector p = gauss2d_params();
  const RectilinearGrid grid = gauss2d_grid(513);
  SensitivityConfig cfg;
  const RowMatrixXd pts = rows2({{0.9, -0.6}, {-1.2, 0.8}});

  const JacobianBatch full =
      compute_sensitivities(SensitivityAlgorithm::FullInv, f, grid, p, pts, cfg);
  const JacobianBatch interp =
      compute_sensitivities(SensitivityAlgorithm::InterpFull, f, grid, p, pts, cfg);
  REQUIRE(full.ok());
  REQUIRE(interp.ok());
  for (std::size_t m = 0; m < full.size(); ++m) {
    const Eigen::MatrixXd oracle =
        gaussian2d_jacobian_oracle(pts.row(static_cast<Eigen::Index>(m)).transpose(), p);
    CHECK((full.jacobian(m) - oracle).cwiseAbs().maxCoeff() < 5e-3);
    CHECK((interp.jacobian(m) - oracle).cwiseAbs().maxCoeff() < 5e-3);
  }
}

TEST_CASE("diagonal 2d sensitivities approach their own closed form") {
  const Density f = gaussian2d();
  const ParamVector p = gauss2d_params();
  const RectilinearGrid grid = gauss2d_grid(513);
  SensitivityConfig cfg;
  const RowMatrixXd pts = rows2({{0.9, -0.6}, {-1.2, 0.8}});

  const JacobianBatch diag =
      compute_sensitivities(SensitivityAlgorithm::DiagApprox, f, grid, p, pts, cfg);
  const JacobianBatch idiag =
      compute_sensitivities(SensitivityAlgorithm::InterpDiag, f, grid, p, pts, cfg);
  REQUIRE(diag.ok());
  REQUIRE(idiag.ok());
  for (std::size_t m = 0; m < diag.size(); ++m) {
    const Eigen::MatrixXd oracle =
        gaussian2d_diag_jacobian_oracle(pts.row(static_cast<Eigen::Index>(m)).transpose(), p);
    CHECK((diag.jacobian(m) - oracle).cwiseAbs().maxCoeff() < 5e-3);
    CHECK((idiag.jacobian(m) - oracle).cwiseAbs().maxCoeff() < 5e-3);
  }
}

TEST_CASE("nd algorithms collapse to the 1d algorithm on one axis") {
  const Density f = gaussian1d();
  ParamVector p(2);
  p << 0.4, 1.9;
  const GridLine line = GridLine::uniform(p[0] - 5 * p[1], p[0] + 5 * p[1], 16385);
  const RectilinearGrid grid({line});
  SensitivityConfig cfg;
  const RowMatrixXd pts = rows1({-1.3, 0.4, 2.9});

  const JacobianBatch one =
      compute_sensitivities(SensitivityAlgorithm::OneDim, f, grid, p, pts, cfg);
  const JacobianBatch full =
      compute_sensitivities(SensitivityAlgorithm::FullInv, f, grid, p, pts, cfg);
  const JacobianBatch diag =
      compute_sensitivities(SensitivityAlgorithm::DiagApprox, f, grid, p, pts, cfg);
  REQUIRE(one.ok());
  REQUIRE(full.ok());
  REQUIRE(diag.ok());
  CHECK((one.jac - full.jac).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((one.jac - diag.jac).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("diagonal equals full for a separable density") {
  const Density f = gaussian2d();
  ParamVector p(5);
  p << 0.2, -0.5, 1.4, 0.9, 0.0;  // rho = 0: conditionals are the marginals
  const RectilinearGrid grid({GridLine::uniform(p[0] - 5 * p[2], p[0] + 5 * p[2], 513),
                              GridLine::uniform(p[1] - 5 * p[3], p[1] + 5 * p[3], 513)});
  SensitivityConfig cfg;
  const RowMatrixXd pts = rows2({{0.5, -0.2}, {-0.9, 0.3}});

  const JacobianBatch full =
      compute_sensitivities(SensitivityAlgorithm::FullInv, f, grid, p, pts, cfg);
  const JacobianBatch diag =
      compute_sensitivities(SensitivityAlgorithm::DiagApprox, f, grid, p, pts, cfg);
  REQUIRE(full.ok());
  REQUIRE(diag.ok());
  CHECK((full.jac - diag.jac).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("failures are isolated per point") {
  const Density f = gaussian2d();
  const ParamVector p = gauss2d_params();
  const RectilinearGrid grid = gauss2d_grid(65);
  SensitivityConfig cfg;
  RowMatrixXd pts = rows2({{0.9, -0.6}, {99.0, 0.0}, {-1.2, 0.8}});  // middle outside

  const JacobianBatch b =
      compute_sensitivities(SensitivityAlgorithm::FullInv, f, grid, p, pts, cfg);
  REQUIRE(b.failures.size() == 1);
  CHECK(b.failures[0].point == 1);
  CHECK(!b.ok());
  CHECK(b.jacobian(1).cwiseAbs().maxCoeff() == 0.0);  // failed point stays zero
  CHECK(b.jacobian(0).cwiseAbs().maxCoeff() > 0.0);
  CHECK(b.jacobian(2).cwiseAbs().maxCoeff() > 0.0);
  CHECK(b.jac.allFinite());
}

TEST_CASE("condition limit proclaims singular systems") {
  const Density f = gaussian2d();
  const ParamVector p = gauss2d_params();
  const RectilinearGrid grid = gauss2d_grid(65);
  SensitivityConfig cfg;
  Eigen::VectorXd x(2);
  x << 0.9, -0.6;
  // The correlated conditional-CDF system at this point has condition ~6.5,
  // so a limit of 1.5 must reject it while the 1e12 default accepts it.
  cfg.condition_limit = 1.5;
  CHECK_THROWS_AS((void)sensitivity_nd_full(f, grid, p, x, cfg), SingularSystem);
  // Limits at or below 1 are config mistakes, caught up front.
  cfg.condition_limit = 0.5;
  CHECK_THROWS_AS((void)sensitivity_nd_full(f, grid, p, x, cfg), InvalidParameter);
}

TEST_CASE("density floor proclaims starved divisions") {
  const Density f = gaussian1d();
  ParamVector p(2);
  p << 0.0, 1.0;
  const GridLine line = GridLine::uniform(-5.0, 5.0, 2049);
  SensitivityConfig cfg;
  cfg.density_floor = 1e-2;  // exp(-3.5^2 / 2) is about 2e-3 of the peak
  AxisSection sect(f, Eigen::VectorXd::Constant(1, 3.5), 0);
  CHECK_THROWS_AS((void)sensitivity_1d(sect.fn(), line, p, 3.5, cfg), DensityTooSmall);
}

TEST_CASE("algorithm names and aliases") {
  CHECK(algorithm_by_name("1D Alg") == SensitivityAlgorithm::OneDim);
  CHECK(algorithm_by_name("1d") == SensitivityAlgorithm::OneDim);
  CHECK(algorithm_by_name("Full Inv") == SensitivityAlgorithm::FullInv);
  CHECK(algorithm_by_name("full-inv") == SensitivityAlgorithm::FullInv);
  CHECK(algorithm_by_name("Interp Full") == SensitivityAlgorithm::InterpFull);
  CHECK(algorithm_by_name("interp-full") == SensitivityAlgorithm::InterpFull);
  CHECK(algorithm_by_name("Diag Approx") == SensitivityAlgorithm::DiagApprox);
  CHECK(algorithm_by_name("diag-approx") == SensitivityAlgorithm::DiagApprox);
  CHECK(algorithm_by_name("Interp Diag") == SensitivityAlgorithm::InterpDiag);
  CHECK(algorithm_by_name("interp-diag") == SensitivityAlgorithm::InterpDiag);
  CHECK_THROWS_AS((void)algorithm_by_name("Cholesky"), UnknownAlgorithm);
  for (SensitivityAlgorithm a :
       {SensitivityAlgorithm::OneDim, SensitivityAlgorithm::FullInv,
        SensitivityAlgorithm::InterpFull, SensitivityAlgorithm::DiagApprox,
        SensitivityAlgorithm::InterpDiag}) {
    CHECK(algorithm_by_name(algorithm_name(a)) == a);
  }
}

TEST_CASE("one axis grids are required by the 1d algorithm") {
  const Density f = gaussian2d();
  const ParamVector p = gauss2d_params();
  const RectilinearGrid grid = gauss2d_grid(9);
  SensitivityConfig cfg;
  CHECK_THROWS_AS((void)compute_sensitivities(SensitivityAlgorithm::OneDim, f, grid, p,
                                              rows2({{0.0, 0.0}}), cfg),
                  InvalidParameter);
}

TEST_CASE("jacobian batches serialize with failures") {
  const Density f = gaussian2d();
  const ParamVector p = gauss2d_params();
  const RectilinearGrid grid = gauss2d_grid(33);
  SensitivityConfig cfg;
  const RowMatrixXd pts = rows2({{0.9, -0.6}, {99.0, 0.0}});
  const JacobianBatch b =
      compute_sensitivities(SensitivityAlgorithm::DiagApprox, f, grid, p, pts, cfg);

  const std::string jpath = "tmp_jac_batch.json";
  const std::string cpath = "tmp_jac_batch.csv";
  save_jacobian_batch_json(b, jpath);
  save_jacobian_batch_csv(b, cpath);

  std::ifstream in(jpath);
  nlohmann::json doc;
  in >> doc;
  CHECK(doc["params"].get<int>() == 5);
  CHECK(doc["points"].size() == 2);
  CHECK(doc["failures"].size() == 1);
  CHECK(doc["failures"][0]["point"].get<std::size_t>() == 1);

  std::ifstream cin_(cpath);
  std::string header;
  std::getline(cin_, header);
  CHECK(header.find("x0") != std::string::npos);
  std::remove(jpath.c_str());
  std::remove(cpath.c_str());
}
