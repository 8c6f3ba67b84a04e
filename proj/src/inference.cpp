// distsens: sensitivities of random-vector realizations w.r.t. distribution parameters
// SPDX-License-Identifier: MIT

#include "distsens/inference.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "distsens/errors.hpp"
#include "distsens/summation.hpp"

namespace distsens {

namespace {

constexpr std::uint64_t kResampleChild = 1000000007ull;

Eigen::VectorXd clamp_to_box(Eigen::VectorXd theta, const Eigen::VectorXd &lo,
                             const Eigen::VectorXd &hi) {
  return theta.cwiseMax(lo).cwiseMin(hi);
}

struct LossEval {
  double loss = 0.0;
  Eigen::VectorXd grad;
};

// Produces loss (and gradient) values for one parameter vector under one
// seed. All stochastic paths derive their draws from the seed alone, so the
// same (theta, seed) pair always yields the same value.
class FitEngine {
 public:
  FitEngine(const Density &f, const SampleSet &obs, const FitConfig &cfg,
            PdfParamGradient pdf_grad)
      : f_(f), obs_(obs), cfg_(cfg), pdf_grad_(std::move(pdf_grad)) {
    continuous_ = cfg.gradient_path == "continuous";
    naive_ = cfg.gradient_path == "naive-fd" || cfg.gradient_path == "naive-FD";
    if (!continuous_ && !naive_) alg_ = algorithm_by_name(cfg.gradient_path);
  }

  SampleSet draw(const ParamVector &theta, RngSeed seed) const {
    const PiecewiseConstantProposal prop =
        build_proposal(f_, cfg_.grid, theta, cfg_.proposal_safety);
    return sample(f_, prop, theta, cfg_.m_x, seed);
  }

  double loss_only(const ParamVector &theta, RngSeed seed) const {
    if (continuous_) {
      return continuous_energy_score(f_, theta, obs_, cfg_.quadrature,
                                     cfg_.normalize_density);
    }
    return energy_score(draw(theta, seed.child(0)), obs_);
  }

  LossEval loss_and_grad(const ParamVector &theta, RngSeed seed) const {
    LossEval out;
    if (continuous_) {
      out.loss = continuous_energy_score(f_, theta, obs_, cfg_.quadrature,
                                         cfg_.normalize_density);
      out.grad = continuous_energy_param_gradient(f_, pdf_grad_, theta, obs_,
                                                  cfg_.quadrature, cfg_.normalize_density);
      return out;
    }
    const SampleSet x_set = draw(theta, seed.child(0));
    out.loss = energy_score(x_set, obs_);
    if (naive_) {
      out.grad = naive_fd_param_gradient(
          f_, theta, obs_, rejection_drawer(cfg_.grid, seed.child(1), cfg_.proposal_safety),
          cfg_.m_x, cfg_.naive_fd_delta);
      return out;
    }
    const JacobianBatch jac =
        compute_sensitivities(alg_, f_, cfg_.grid, theta, x_set.points, cfg_.sensitivity);
    if (!jac.ok()) {
      throw Error(std::to_string(jac.failures.size()) + " of " +
                  std::to_string(jac.size()) + " sensitivity points failed: " +
                  jac.failures.front().message);
    }
    out.grad = energy_score_param_gradient(x_set, obs_, jac);
    return out;
  }

 private:
  const Density &f_;
  const SampleSet &obs_;
  const FitConfig &cfg_;
  PdfParamGradient pdf_grad_;
  bool continuous_ = false;
  bool naive_ = false;
  SensitivityAlgorithm alg_ = SensitivityAlgorithm::OneDim;
};

struct RestartOutcome {
  Eigen::VectorXd theta;
  Eigen::VectorXd theta0;
  double final_loss = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::pair<int, double>> trajectory;
  std::string error;
};

Eigen::VectorXd random_in_box(Rng &rng, const Eigen::VectorXd &lo,
                              const Eigen::VectorXd &hi) {
  Eigen::VectorXd theta(lo.size());
  for (Eigen::Index i = 0; i < lo.size(); ++i) theta[i] = rng.uniform(lo[i], hi[i]);
  return theta;
}

// Two-loop recursion with gamma = s.y / y.y initial scaling.
Eigen::VectorXd lbfgs_direction(const Eigen::VectorXd &grad,
                                const std::vector<Eigen::VectorXd> &s_hist,
                                const std::vector<Eigen::VectorXd> &y_hist) {
  Eigen::VectorXd q = grad;
  const std::size_t m = s_hist.size();
  std::vector<double> alpha(m);
  for (std::size_t i = m; i-- > 0;) {
    const double rho = 1.0 / y_hist[i].dot(s_hist[i]);
    alpha[i] = rho * s_hist[i].dot(q);
    q -= alpha[i] * y_hist[i];
  }
  if (m > 0) {
    const double gamma = s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    q *= gamma;
  }
  for (std::size_t i = 0; i < m; ++i) {
    const double rho = 1.0 / y_hist[i].dot(s_hist[i]);
    const double beta = rho * y_hist[i].dot(q);
    q += (alpha[i] - beta) * s_hist[i];
  }
  return q;
}

struct LineSearchResult {
  double alpha = 0.0;
  LossEval eval;
  bool ok = false;
};

// Strong Wolfe line search: bracketing plus bisection zoom. phi evaluates
// loss and gradient at theta + alpha * dir under the iteration's frozen seed.
template <typename Phi>
LineSearchResult wolfe_line_search(const Phi &phi, double phi0, double dphi0,
                                   const Eigen::VectorXd &dir) {
  constexpr double c1 = 1e-4;
  constexpr double c2 = 0.9;
  constexpr int max_expand = 12;
  constexpr int max_zoom = 25;

  auto zoom = [&](double a_lo, double phi_lo, double a_hi) -> LineSearchResult {
    for (int i = 0; i < max_zoom; ++i) {
      const double a = 0.5 * (a_lo + a_hi);
      LossEval e = phi(a);
      const double dphi = e.grad.dot(dir);
      if (e.loss > phi0 + c1 * a * dphi0 || e.loss >= phi_lo) {
        a_hi = a;
      } else {
        if (std::abs(dphi) <= -c2 * dphi0) return {a, std::move(e), true};
        if (dphi * (a_hi - a_lo) >= 0.0) a_hi = a_lo;
        a_lo = a;
        phi_lo = e.loss;
      }
      if (std::abs(a_hi - a_lo) < 1e-14) {
        // Interval collapsed; accept the low point if it decreases the loss.
        LossEval lo_eval = phi(a_lo);
        if (lo_eval.loss < phi0) return {a_lo, std::move(lo_eval), true};
        return {};
      }
    }
    LossEval lo_eval = phi(a_lo);
    if (lo_eval.loss < phi0) return {a_lo, std::move(lo_eval), true};
    return {};
  };

  double a_prev = 0.0;
  double phi_prev = phi0;
  double a = 1.0;
  for (int i = 1; i <= max_expand; ++i) {
    LossEval e = phi(a);
    const double dphi = e.grad.dot(dir);
    if (e.loss > phi0 + c1 * a * dphi0 || (i > 1 && e.loss >= phi_prev)) {
      return zoom(a_prev, phi_prev, a);
    }
    if (std::abs(dphi) <= -c2 * dphi0) return {a, std::move(e), true};
    if (dphi >= 0.0) return zoom(a, e.loss, a_prev);
    a_prev = a;
    phi_prev = e.loss;
    a *= 2.0;
  }
  return {};
}

RestartOutcome run_restart(const FitEngine &engine, const FitConfig &cfg, int restart) {
  const Eigen::Index p = cfg.box_lo.size();
  const RngSeed rs = cfg.seed.child(static_cast<std::uint64_t>(restart));

  RestartOutcome out;
  if (restart == 0 && cfg.theta_init.size() == p) {
    out.theta0 = clamp_to_box(cfg.theta_init, cfg.box_lo, cfg.box_hi);
  } else {
    Rng rng(rs.child(0));
    out.theta0 = random_in_box(rng, cfg.box_lo, cfg.box_hi);
  }
  Eigen::VectorXd theta = out.theta0;

  if (cfg.optimizer == "adam") {
    AdamOptimizer adam(p, cfg.learning_rate);
    for (int e = 0; e < cfg.epochs; ++e) {
      const LossEval le =
          engine.loss_and_grad(theta, rs.child(1 + static_cast<std::uint64_t>(e)));
      out.trajectory.emplace_back(e, le.loss);
      adam.step(theta, le.grad);
      theta = clamp_to_box(std::move(theta), cfg.box_lo, cfg.box_hi);
    }
  } else {
    // L-BFGS with the draw seed frozen per outer iteration.
    std::vector<Eigen::VectorXd> s_hist, y_hist;
    for (int t = 0; t < cfg.epochs; ++t) {
      const RngSeed is = rs.child(1 + static_cast<std::uint64_t>(t));
      const LossEval cur = engine.loss_and_grad(theta, is);
      out.trajectory.emplace_back(t, cur.loss);
      if (cur.grad.lpNorm<Eigen::Infinity>() <= cfg.lbfgs_gtol) break;

      Eigen::VectorXd dir = -lbfgs_direction(cur.grad, s_hist, y_hist);
      if (dir.dot(cur.grad) >= 0.0) {
        s_hist.clear();
        y_hist.clear();
        dir = -cur.grad;
      }
      // Trial points are clamped before evaluation so the density never sees
      // parameters outside the box; the accepted iterate below is the same
      // clamped point, so ls.eval matches it.
      auto phi = [&](double a) {
        return engine.loss_and_grad(
            clamp_to_box(theta + a * dir, cfg.box_lo, cfg.box_hi), is);
      };
      const LineSearchResult ls =
          wolfe_line_search(phi, cur.loss, cur.grad.dot(dir), dir);
      if (!ls.ok) break;  // no acceptable step under this draw; stop here

      const Eigen::VectorXd stepped = theta + ls.alpha * dir;
      const Eigen::VectorXd clamped = clamp_to_box(stepped, cfg.box_lo, cfg.box_hi);
      const bool hit_box = (clamped.array() != stepped.array()).any();
      const Eigen::VectorXd s = clamped - theta;
      const Eigen::VectorXd y = ls.eval.grad - cur.grad;
      // Curvature pairs are only meaningful for the unclamped quadratic model.
      if (!hit_box && s.dot(y) > 1e-10 * s.norm() * y.norm()) {
        s_hist.push_back(s);
        y_hist.push_back(y);
        if (static_cast<int>(s_hist.size()) > cfg.lbfgs_memory) {
          s_hist.erase(s_hist.begin());
          y_hist.erase(y_hist.begin());
        }
      }
      theta = clamped;
    }
  }

  out.theta = theta;
  // The final loss is evaluated under a seed shared by every restart, so
  // best-restart selection compares candidates on the same draws instead of
  // adding independent sampling noise to each.
  constexpr std::uint64_t kFinalLossStream = std::numeric_limits<std::uint64_t>::max();
  out.final_loss = engine.loss_only(theta, cfg.seed.child(kFinalLossStream));
  return out;
}

}  // namespace

AdamOptimizer::AdamOptimizer(Eigen::Index dim, double learning_rate, double beta1,
                             double beta2, double eps)
    : lr_(learning_rate), b1_(beta1), b2_(beta2), eps_(eps) {
  if (!(learning_rate > 0.0)) throw InvalidParameter("learning rate must be positive");
  m_ = Eigen::VectorXd::Zero(dim);
  v_ = Eigen::VectorXd::Zero(dim);
}

void AdamOptimizer::step(Eigen::VectorXd &theta, const Eigen::VectorXd &grad) {
  if (grad.size() != m_.size()) throw ShapeMismatch("gradient dimension mismatch");
  ++t_;
  m_ = b1_ * m_ + (1.0 - b1_) * grad;
  v_ = b2_ * v_ + (1.0 - b2_) * grad.cwiseProduct(grad);
  const double bc1 = 1.0 - std::pow(b1_, t_);
  const double bc2 = 1.0 - std::pow(b2_, t_);
  theta -= (lr_ / bc1) * m_.cwiseQuotient(((v_ / bc2).cwiseSqrt().array() + eps_).matrix());
}

void FitConfig::validate(Eigen::Index nparams) const {
  if (nparams < 1) throw InvalidParameter("fit needs at least one parameter");
  if (box_lo.size() != nparams || box_hi.size() != nparams) {
    throw ShapeMismatch("parameter box does not match the parameter count");
  }
  for (Eigen::Index i = 0; i < nparams; ++i) {
    if (!(box_lo[i] < box_hi[i])) throw InvalidParameter("parameter box is empty");
  }
  if (!(learning_rate > 0.0)) throw InvalidParameter("learning rate must be positive");
  if (epochs < 0) throw InvalidParameter("epoch count must be non-negative");
  if (m_x < 2) throw TooFewSamples("fit needs at least 2 model samples per draw");
  if (restarts < 1) throw InvalidParameter("need at least one restart");
  if (optimizer != "adam" && optimizer != "lbfgs") {
    throw UnknownAlgorithm("unknown optimizer '" + optimizer + "'");
  }
  if (gradient_path != "continuous" && gradient_path != "naive-fd" &&
      gradient_path != "naive-FD") {
    algorithm_by_name(gradient_path);  // throws UnknownAlgorithm
  }
  if (theta_init.size() != 0) {
    if (theta_init.size() != nparams) throw ShapeMismatch("init has wrong length");
    for (Eigen::Index i = 0; i < nparams; ++i) {
      if (theta_init[i] < box_lo[i] || theta_init[i] > box_hi[i]) {
        throw InvalidParameter("init outside the parameter box");
      }
    }
  }
  if (gradient_path == "continuous" && quadrature.size() == 0) {
    throw InvalidParameter("continuous gradient path needs a quadrature rule");
  }
  if (lbfgs_memory < 1) throw InvalidParameter("L-BFGS memory must be positive");
}

FitResult fit(const Density &f, const SampleSet &observations, const FitConfig &cfg) {
  observations.validate();
  cfg.validate(cfg.box_lo.size());

  const auto t0 = std::chrono::steady_clock::now();
  CallCounter counter;
  const Density fc = counted(f, counter);
  PdfParamGradient pg = cfg.pdf_grad ? cfg.pdf_grad : fd_pdf_param_gradient(fc);
  const FitEngine engine(fc, observations, cfg, std::move(pg));

  FitResult result;
  result.restart_losses.assign(static_cast<std::size_t>(cfg.restarts),
                               std::numeric_limits<double>::quiet_NaN());
  result.restart_errors.assign(static_cast<std::size_t>(cfg.restarts), "");

  std::vector<RestartOutcome> outcomes(static_cast<std::size_t>(cfg.restarts));
  for (int r = 0; r < cfg.restarts; ++r) {
    try {
      outcomes[static_cast<std::size_t>(r)] = run_restart(engine, cfg, r);
      result.restart_losses[static_cast<std::size_t>(r)] =
          outcomes[static_cast<std::size_t>(r)].final_loss;
    } catch (const Error &err) {
      result.restart_errors[static_cast<std::size_t>(r)] = err.what();
    }
  }

  int best = -1;
  for (int r = 0; r < cfg.restarts; ++r) {
    if (!result.restart_errors[static_cast<std::size_t>(r)].empty()) continue;
    const double loss = result.restart_losses[static_cast<std::size_t>(r)];
    if (best < 0 || loss < result.restart_losses[static_cast<std::size_t>(best)]) best = r;
  }
  if (best < 0) {
    throw NoSuccessfulRestart("all " + std::to_string(cfg.restarts) +
                              " restarts failed; first error: " +
                              result.restart_errors.front());
  }

  RestartOutcome &bo = outcomes[static_cast<std::size_t>(best)];
  result.best_restart = best;
  result.theta_opt = std::move(bo.theta);
  result.theta_init = std::move(bo.theta0);
  result.final_loss = bo.final_loss;
  result.loss_trajectory = std::move(bo.trajectory);
  result.density_evals = counter.count();
  result.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

BootstrapRun bootstrap_fit(const Density &f, const SampleSet &observations,
                           const FitConfig &cfg, int n_bootstrap, int restarts) {
  observations.validate();
  if (n_bootstrap < 1) throw InvalidParameter("need at least one bootstrap");
  if (restarts < 1) throw InvalidParameter("need at least one restart");

  BootstrapRun run;
  run.n_bootstrap = n_bootstrap;
  run.restarts = restarts;
  run.fits.reserve(static_cast<std::size_t>(n_bootstrap));

  const std::size_t m_o = observations.size();
  for (int b = 0; b < n_bootstrap; ++b) {
    const RngSeed bs = cfg.seed.child(static_cast<std::uint64_t>(b));
    Rng rng(bs.child(kResampleChild));
    SampleSet resampled = observations;
    for (std::size_t i = 0; i < m_o; ++i) {
      resampled.points.row(static_cast<Eigen::Index>(i)) =
          observations.points.row(static_cast<Eigen::Index>(rng.uniform_index(m_o)));
    }
    FitConfig bcfg = cfg;
    bcfg.seed = bs;
    bcfg.restarts = restarts;
    run.fits.push_back(fit(f, resampled, bcfg));
  }

  const Eigen::Index p = run.fits.front().theta_opt.size();
  run.q25.resize(p);
  run.median.resize(p);
  run.q75.resize(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    std::vector<double> vals;
    vals.reserve(run.fits.size());
    for (const FitResult &fr : run.fits) vals.push_back(fr.theta_opt[j]);
    run.q25[j] = quantile(vals, 0.25);
    run.median[j] = quantile(vals, 0.5);
    run.q75[j] = quantile(vals, 0.75);
  }
  return run;
}

double l1_pdf_error(const Density &f, const ParamVector &theta_hat,
                    const ParamVector &theta_true, const QuadratureRule &quad) {
  quad.validate();
  const std::size_t q = quad.size();

  auto normalized_values = [&](const ParamVector &theta) {
    Eigen::VectorXd fv(static_cast<Eigen::Index>(q));
    auto fill = [&](std::size_t, std::size_t begin, std::size_t end) {
      Eigen::VectorXd x(quad.dims());
      for (std::size_t i = begin; i < end; ++i) {
        x = quad.nodes.row(static_cast<Eigen::Index>(i)).transpose();
        fv[static_cast<Eigen::Index>(i)] = f.eval(x, theta);
      }
    };
    if (f.concurrency_safe) {
      parallel_blocks(q, 1024, fill);
    } else {
      fill(0, 0, q);
    }
    const double c = blocked_sum(q, [&](std::size_t i) {
      return quad.weights[static_cast<Eigen::Index>(i)] * fv[static_cast<Eigen::Index>(i)];
    });
    if (!std::isfinite(c) || !(c > 0.0)) {
      throw ZeroMass("quadrature mass is not finite and positive");
    }
    fv /= c;
    return fv;
  };

  const Eigen::VectorXd f_hat = normalized_values(theta_hat);
  const Eigen::VectorXd f_true = normalized_values(theta_true);
  return blocked_sum(q, [&](std::size_t i) {
    const Eigen::Index ii = static_cast<Eigen::Index>(i);
    return quad.weights[ii] * std::abs(f_hat[ii] - f_true[ii]);
  });
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw TooFewSamples("quantile of an empty set");
  if (!(q >= 0.0) || !(q <= 1.0)) throw InvalidParameter("quantile level outside [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double w = pos - static_cast<double>(lo);
  return (1.0 - w) * values[lo] + w * values[hi];
}

namespace {

nlohmann::json fit_result_to_json(const FitResult &result) {
  nlohmann::json doc;
  doc["theta_opt"] = std::vector<double>(result.theta_opt.data(),
                                         result.theta_opt.data() + result.theta_opt.size());
  doc["theta_init"] = std::vector<double>(
      result.theta_init.data(), result.theta_init.data() + result.theta_init.size());
  doc["final_loss"] = result.final_loss;
  doc["best_restart"] = result.best_restart;
  nlohmann::json traj = nlohmann::json::array();
  for (const auto &[epoch, loss] : result.loss_trajectory) {
    traj.push_back({{"epoch", epoch}, {"loss", loss}});
  }
  doc["loss_trajectory"] = std::move(traj);
  nlohmann::json restarts = nlohmann::json::array();
  for (std::size_t r = 0; r < result.restart_losses.size(); ++r) {
    nlohmann::json row;
    row["final_loss"] = result.restart_losses[r];
    row["error"] = result.restart_errors[r];
    restarts.push_back(std::move(row));
  }
  doc["restarts"] = std::move(restarts);
  doc["density_evals"] = result.density_evals;
  doc["wall_time_s"] = result.wall_time_s;
  return doc;
}

}  // namespace

void save_fit_result_json(const FitResult &result, const std::string &path) {
  nlohmann::json doc = fit_result_to_json(result);
  doc["schema"] = "distsens.fit_result/1";
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << doc.dump(2) << "\n";
  if (!out) throw Error("failed to write '" + path + "'");
}

void save_bootstrap_run_json(const BootstrapRun &run, const std::string &path) {
  nlohmann::json doc;
  doc["schema"] = "distsens.bootstrap_run/1";
  doc["n_bootstrap"] = run.n_bootstrap;
  doc["restarts"] = run.restarts;
  nlohmann::json fits = nlohmann::json::array();
  for (const FitResult &fr : run.fits) fits.push_back(fit_result_to_json(fr));
  doc["fits"] = std::move(fits);
  doc["q25"] = std::vector<double>(run.q25.data(), run.q25.data() + run.q25.size());
  doc["median"] =
      std::vector<double>(run.median.data(), run.median.data() + run.median.size());
  doc["q75"] = std::vector<double>(run.q75.data(), run.q75.data() + run.q75.size());
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << doc.dump(2) << "\n";
  if (!out) throw Error("failed to write '" + path + "'");
}

void save_bootstrap_run_csv(const BootstrapRun &run, const std::string &path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out.precision(17);
  out << "bootstrap,final_loss";
  const Eigen::Index p = run.fits.empty() ? 0 : run.fits.front().theta_opt.size();
  for (Eigen::Index j = 0; j < p; ++j) out << ",theta" << j;
  out << ",wall_time_s,density_evals\n";
  for (std::size_t b = 0; b < run.fits.size(); ++b) {
    const FitResult &fr = run.fits[b];
    out << b << "," << fr.final_loss;
    for (Eigen::Index j = 0; j < p; ++j) out << "," << fr.theta_opt[j];
    out << "," << fr.wall_time_s << "," << fr.density_evals << "\n";
  }
  if (!out) throw Error("failed to write '" + path + "'");
}

}  // namespace distsens
