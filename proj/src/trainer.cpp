#include "sosp_pg/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "sosp_pg/errors.hpp"
#include "sosp_pg/mdp.hpp"
#include "sosp_pg/parallel.hpp"
#include "sosp_pg/rng.hpp"

namespace sosp_pg {

namespace {

constexpr double kDivergenceNorm = 1e8;

Vector sphere_point(CounterRng& rng, std::size_t p, double radius) {
  Vector z(static_cast<Eigen::Index>(p));
  double norm = 0.0;
  while (norm == 0.0) {
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
    norm = z.norm();
  }
  return z * (radius / norm);
}

bool finite(const Vector& v) { return v.allFinite(); }

}  // namespace

// ---------------------------------------------------------------------------

QuadraticSaddle::QuadraticSaddle(Matrix H, CncNoise noise, double hessian_noise,
                                 std::optional<Vector> center)
    : H_(std::move(H)), noise_(noise), hessian_noise_(hessian_noise) {
  if (H_.rows() == 0 || H_.rows() != H_.cols()) {
    throw InvalidInput("quadratic saddle: H must be square and non-empty");
  }
  if (!H_.allFinite() || (H_ - H_.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw InvalidInput("quadratic saddle: H must be finite and symmetric");
  }
  if (!(noise_.radius >= 0.0) || !std::isfinite(noise_.radius)) {
    throw InvalidInput("quadratic saddle: noise radius must be finite and >= 0");
  }
  if (!(hessian_noise_ >= 0.0) || !std::isfinite(hessian_noise_)) {
    throw InvalidInput("quadratic saddle: hessian_noise must be finite and >= 0");
  }
  center_ = center.value_or(Vector::Zero(H_.rows()));
  if (center_.size() != H_.rows()) {
    throw InvalidInput("quadratic saddle: center has the wrong dimension");
  }
  top_ = sym_eig_max(H_);
  if (noise_.kind == CncNoise::Kind::OrthogonalToTop && H_.rows() < 2) {
    throw InvalidInput("quadratic saddle: orthogonal noise needs dimension >= 2");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> solver(H_, Eigen::EigenvaluesOnly);
  op_norm_ = solver.eigenvalues().cwiseAbs().maxCoeff();
}

double QuadraticSaddle::value(const Vector& theta) const {
  const Vector d = theta - center_;
  return 0.5 * d.dot(H_ * d);
}

Vector QuadraticSaddle::gradient(const Vector& theta) const { return H_ * (theta - center_); }

Vector QuadraticSaddle::noise(std::uint64_t seed) const {
  CounterRng rng(seed);
  const auto p = dim();
  if (noise_.radius == 0.0) return Vector::Zero(static_cast<Eigen::Index>(p));
  if (noise_.kind == CncNoise::Kind::Isotropic) return sphere_point(rng, p, noise_.radius);
  Vector z = Vector::Zero(static_cast<Eigen::Index>(p));
  while (z.norm() < 1e-12) {
    z = sphere_point(rng, p, 1.0);
    z -= z.dot(top_.u) * top_.u;
  }
  return z * (noise_.radius / z.norm());
}

Vector QuadraticSaddle::sample_gradient(const Vector& theta, std::uint64_t seed) const {
  return gradient(theta) + noise(seed);
}

Matrix QuadraticSaddle::sample_hessian(const Vector&, std::uint64_t seed) const {
  if (hessian_noise_ == 0.0) return H_;
  CounterRng rng = CounterRng::derive(seed, 1);
  Matrix E(H_.rows(), H_.cols());
  for (Eigen::Index i = 0; i < E.rows(); ++i) {
    for (Eigen::Index j = i; j < E.cols(); ++j) {
      E(i, j) = hessian_noise_ * (2.0 * rng.uniform() - 1.0);
      E(j, i) = E(i, j);
    }
  }
  return H_ + E;
}

double QuadraticSaddle::iota_sq() const {
  if (noise_.kind == CncNoise::Kind::OrthogonalToTop) return 0.0;
  return noise_.radius * noise_.radius / static_cast<double>(dim());
}

double QuadraticSaddle::sigma_h0() const {
  return 2.0 * op_norm_ + static_cast<double>(dim()) * hessian_noise_;
}

// ---------------------------------------------------------------------------

StronglyConcave::StronglyConcave(double zeta, Vector theta_star, double noise_sigma, double varrho)
    : zeta_(zeta), theta_star_(std::move(theta_star)), noise_sigma_(noise_sigma), varrho_(varrho) {
  if (!(zeta_ > 0.0) || !std::isfinite(zeta_)) throw InvalidInput("strongly concave: zeta must be > 0");
  if (!(varrho_ > 0.0) || !std::isfinite(varrho_)) throw InvalidInput("strongly concave: varrho must be > 0");
  if (!(noise_sigma_ >= 0.0) || !std::isfinite(noise_sigma_)) {
    throw InvalidInput("strongly concave: noise_sigma must be >= 0");
  }
  if (theta_star_.size() == 0 || !finite(theta_star_)) {
    throw InvalidInput("strongly concave: theta_star must be finite and non-empty");
  }
}

double StronglyConcave::value(const Vector& theta) const {
  return -0.5 * zeta_ * (theta - theta_star_).squaredNorm();
}

Vector StronglyConcave::gradient(const Vector& theta) const { return -zeta_ * (theta - theta_star_); }

Matrix StronglyConcave::hessian(const Vector&) const {
  return -zeta_ * Matrix::Identity(theta_star_.size(), theta_star_.size());
}

Vector StronglyConcave::sample_gradient(const Vector& theta, std::uint64_t seed) const {
  if (noise_sigma_ == 0.0) return gradient(theta);
  CounterRng rng(seed);
  return gradient(theta) + sphere_point(rng, dim(), noise_sigma_);
}

// ---------------------------------------------------------------------------

namespace {

void check_config(const TrainerConfig& c, std::size_t dim, const Vector& theta0) {
  if (!(c.alpha >= 0.0) || !std::isfinite(c.alpha)) throw ConfigError("alpha: must be finite and >= 0");
  if (!(c.epsilon > 0.0)) throw ConfigError("epsilon: must be > 0");
  if (!(c.chi > 0.0)) throw ConfigError("chi: must be > 0");
  if (c.batch_size == 0) throw ConfigError("batch_size: must be >= 1");
  if (c.report_every == 0) throw ConfigError("report_every: must be >= 1");
  if (c.kappa_hat_0 == 0) throw ConfigError("kappa_hat_0: must be >= 1");
  if (static_cast<std::size_t>(theta0.size()) != dim) {
    std::ostringstream msg;
    msg << "theta0: expected dimension " << dim << ", got " << theta0.size();
    throw ConfigError(msg.str());
  }
  if (!finite(theta0)) throw ConfigError("theta0: entries must be finite");
}

Vector step_direction(const StochasticObjective& source, const Vector& theta, std::uint64_t seed,
                      std::size_t k, std::size_t batch) {
  if (batch == 1) return source.sample_gradient(theta, trajectory_seed(seed, k));
  std::vector<Vector> draws(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    draws[b] = source.sample_gradient(theta, trajectory_seed(seed, k * batch + b));
  }
  return pairwise_sum(draws) / static_cast<double>(batch);
}

}  // namespace

RunRecord run(const StochasticObjective& source, const TrainerConfig& config, const Vector& theta0) {
  check_config(config, source.dim(), theta0);
  const auto started = std::chrono::steady_clock::now();

  RunRecord record;
  Vector theta = theta0;
  std::uint64_t varsigma = 0;
  std::size_t k = 0;

  auto classify = [&](std::size_t at) {
    ReportMode mode = config.report_mode;
    if (mode.estimated) mode.seed = trajectory_seed(config.report_mode.seed, at);
    const auto report = second_order_report(source, theta, config.epsilon, config.chi, mode);
    IterateRecord row{at, theta, source.value(theta), report.grad_norm, report.lambda_max,
                      report.region, varsigma};
    record.iterates.push_back(row);
    if (report.region == Region::L3 && !record.first_l3) record.first_l3 = at;
    // varsigma counts iterations, with an L2 iterate standing for an escape episode.
    varsigma += report.region == Region::L2 ? config.kappa_hat_0 : 1;
    return report.region;
  };

  try {
    for (; k < config.max_iters; ++k) {
      if (k % config.report_every == 0) {
        const Region region = classify(k);
        if (config.stop_at_l3 && region == Region::L3) break;
      }
      const Vector g = step_direction(source, theta, config.seed, k, config.batch_size);
      Vector next = theta + config.alpha * g;
      if (!finite(next) || next.norm() > kDivergenceNorm) {
        record.aborted_at = k + 1;
        record.abort_reason = "divergence: iterate " + std::to_string(k + 1) +
                              (finite(next) ? " has norm above 1e8" : " is not finite");
        break;
      }
      theta = std::move(next);
      record.iterations = k + 1;
    }
  } catch (const DomainError& e) {
    record.aborted_at = k;
    record.abort_reason = std::string("domain: ") + e.what();
  }

  record.final_theta = theta;
  if (!record.aborted_at) {
    try {
      ReportMode mode = config.report_mode;
      if (mode.estimated) mode.seed = trajectory_seed(config.report_mode.seed, record.iterations);
      record.final_report = second_order_report(source, theta, config.epsilon, config.chi, mode);
      if (config.max_iters > 0 && record.iterations == config.max_iters &&
          config.max_iters % config.report_every == 0) {
        const auto& r = *record.final_report;
        record.iterates.push_back({record.iterations, theta, source.value(theta), r.grad_norm,
                                   r.lambda_max, r.region, varsigma});
        if (r.region == Region::L3 && !record.first_l3) record.first_l3 = record.iterations;
      }
    } catch (const DomainError& e) {
      record.aborted_at = record.iterations;
      record.abort_reason = std::string("domain: ") + e.what();
    }
  }
  record.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return record;
}

std::vector<RunRecord> run_many(const StochasticObjective& source, const TrainerConfig& config,
                                const Vector& theta0, std::size_t runs) {
  std::vector<RunRecord> out(runs);
  parallel_for(runs, [&](std::size_t i) {
    TrainerConfig c = config;
    c.seed = trajectory_seed(config.seed, i);
    out[i] = run(source, c, theta0);
  });
  return out;
}

// ---------------------------------------------------------------------------

Prop1Result verify_prop1(const StochasticObjective& source, const Vector& theta, double alpha,
                         std::size_t trials, std::uint64_t seed, double epsilon, double ell,
                         double sigma) {
  if (trials < 2) throw InvalidInput("prop1: need at least 2 trials");
  const Vector grad = source.gradient(theta);
  const double gnorm = grad.norm();
  if (!(gnorm > epsilon)) {
    throw PreconditionError("prop1: ||grad J|| = " + std::to_string(gnorm) +
                            " is not above epsilon; the point is not in L1");
  }
  const double cap = std::min(2.0 * epsilon * epsilon / ((epsilon * epsilon + sigma * sigma) * ell),
                              2.0 / ell);
  if (!(alpha > 0.0) || !(alpha < cap)) {
    throw PreconditionError("prop1: alpha must lie in (0, " + std::to_string(cap) + ")");
  }
  const double j0 = source.value(theta);
  std::vector<double> gains(trials), dev_sq(trials);
  parallel_for(trials, [&](std::size_t i) {
    const Vector g = source.sample_gradient(theta, trajectory_seed(seed, i));
    gains[i] = source.value(theta + alpha * g) - j0;
    dev_sq[i] = (g - grad).squaredNorm();
  });
  const double n = static_cast<double>(trials);
  Prop1Result r;
  r.trials = trials;
  r.grad_norm = gnorm;
  r.empirical_mean_gain = pairwise_sum(gains) / n;
  std::vector<double> centred(trials);
  for (std::size_t i = 0; i < trials; ++i) {
    centred[i] = (gains[i] - r.empirical_mean_gain) * (gains[i] - r.empirical_mean_gain);
  }
  r.std_error = std::sqrt(pairwise_sum(centred) / (n - 1.0) / n);
  r.sigma_hat_sq = pairwise_sum(dev_sq) / n;
  r.bound = (alpha - ell * alpha * alpha / 2.0) * gnorm * gnorm -
            ell * alpha * alpha * r.sigma_hat_sq / 2.0;
  r.passes = r.empirical_mean_gain >=
             r.bound - 3.0 * r.std_error - 1e-12 * std::max(1.0, std::abs(r.bound));
  return r;
}

CoupledRun coupled_quadratic_run(const StochasticObjective& source, const Vector& theta0,
                                 double alpha, std::size_t steps, std::uint64_t seed,
                                 std::optional<std::uint64_t> escape_budget_steps) {
  if (static_cast<std::size_t>(theta0.size()) != source.dim()) {
    throw InvalidInput("coupled run: theta0 has the wrong dimension");
  }
  const Matrix h0 = source.sample_hessian(theta0, trajectory_seed(seed, 0));
  CoupledRun out;
  out.main_iterates.reserve(steps + 1);
  out.model_iterates.reserve(steps + 1);
  Vector main = theta0, model = theta0;
  out.main_iterates.push_back(main);
  out.model_iterates.push_back(model);
  for (std::size_t k = 0; k < steps; ++k) {
    const std::uint64_t s = trajectory_seed(seed, k);
    main += alpha * source.sample_gradient(main, s);
    model += alpha * (source.sample_gradient(theta0, s) + h0 * (model - theta0));
    out.main_iterates.push_back(main);
    out.model_iterates.push_back(model);
    out.max_gap = std::max(out.max_gap, (main - model).norm());
  }
  if (escape_budget_steps) out.within_escape_budget = steps <= *escape_budget_steps;
  return out;
}

EscapeResult verify_escape(const QuadraticSaddle& source, double alpha, std::size_t runs,
                           std::uint64_t seed, const EscapeSettings& settings) {
  if (runs == 0) throw InvalidInput("escape: runs must be >= 1");
  const double threshold = std::sqrt(settings.chi * settings.epsilon);
  if (!(source.lambda_max() >= threshold)) {
    throw PreconditionError("escape: lambda_max(H) is below sqrt(chi eps)");
  }
  const double iota = settings.target_iota.value_or(std::sqrt(source.iota_sq()));
  if (!(iota > 0.0)) throw PreconditionError("escape: target iota must be > 0");

  EscapeResult r;
  r.runs = runs;
  r.iota = iota;
  r.kappa_hat_0 = escape_budget(alpha, source.sigma_h0(), settings.chi, settings.epsilon);
  r.target_gain = alpha * alpha * iota * iota * threshold;
  const auto kappa = static_cast<std::size_t>(std::max<std::uint64_t>(r.kappa_hat_0, 1));
  r.step_cap = static_cast<std::size_t>(std::ceil(settings.cap_factor * static_cast<double>(kappa)));
  r.step_cap = std::max(r.step_cap, kappa);

  const Vector theta0 = source.center();
  const double j0 = source.value(theta0);
  std::vector<std::optional<std::size_t>> escaped_at(runs);
  std::vector<double> gain_at_kappa(runs), gain_at_escape(runs, 0.0);
  parallel_for(runs, [&](std::size_t i) {
    const std::uint64_t run_seed = trajectory_seed(seed, i);
    Vector theta = theta0;
    for (std::size_t j = 1; j <= r.step_cap; ++j) {
      theta += alpha * source.sample_gradient(theta, trajectory_seed(run_seed, j - 1));
      const double gain = source.value(theta) - j0;
      if (j == kappa) gain_at_kappa[i] = gain;
      if (!escaped_at[i] && gain >= r.target_gain) {
        escaped_at[i] = j;
        gain_at_escape[i] = gain;
      }
      if (escaped_at[i] && j >= kappa) break;
    }
  });

  std::vector<double> steps, gains;
  for (std::size_t i = 0; i < runs; ++i) {
    if (escaped_at[i]) {
      steps.push_back(static_cast<double>(*escaped_at[i]));
      gains.push_back(gain_at_escape[i]);
    }
  }
  r.escape_fraction = static_cast<double>(steps.size()) / static_cast<double>(runs);
  if (!steps.empty()) {
    r.mean_escape_steps = pairwise_sum(steps) / static_cast<double>(steps.size());
    r.mean_gain_at_escape = pairwise_sum(gains) / static_cast<double>(gains.size());
  }
  r.mean_gain = pairwise_sum(gain_at_kappa) / static_cast<double>(runs);
  return r;
}

TrapResult verify_trap(const StronglyConcave& source, double alpha, std::size_t runs,
                       std::uint64_t seed, double delta, const Vector& theta0, double relaxation) {
  if (runs == 0) throw InvalidInput("trap: runs must be >= 1");
  if (!(delta > 0.0 && delta < 1.0)) throw InvalidInput("trap: delta must lie in (0, 1)");
  if (static_cast<std::size_t>(theta0.size()) != source.dim()) {
    throw InvalidInput("trap: theta0 has the wrong dimension");
  }
  const double varrho = source.varrho();
  const double start_sq = (theta0 - source.theta_star()).squaredNorm();
  if (start_sq > varrho * varrho / 3.0 * (1.0 + 1e-12)) {
    throw PreconditionError("trap: theta0 lies outside B(theta_star, varrho/sqrt(3))");
  }
  // Synthetic source: ell = zeta, and zeta * varrho bounds ||grad J|| on the ball,
  // which stands in for G R_max / (1 - gamma) with gamma = 0 and R_max = 1.
  const auto caps = prop3_step_size(delta, source.zeta(), source.zeta(), varrho,
                                    source.noise_sigma(), source.zeta() * varrho, 1.0, 0.0);
  if (!(alpha > 0.0) || alpha > caps.alpha_cap) {
    throw PreconditionError("trap: alpha must lie in (0, " + std::to_string(caps.alpha_cap) + "]");
  }
  TrapResult r;
  r.runs = runs;
  r.alpha_cap = caps.alpha_cap;
  r.log_cap_rhs = caps.log_cap_rhs;
  r.relaxation = relaxation;
  r.log_cap_satisfied = caps.log_cap_satisfied(alpha, relaxation);
  r.kappa_0 = trap_budget(alpha, delta);
  r.paper_bound = 1.0 - delta * std::log(1.0 / delta);
  const auto steps = static_cast<std::size_t>(r.kappa_0);

  std::vector<double> stayed(runs, 0.0);
  const double radius_sq = varrho * varrho;
  parallel_for(runs, [&](std::size_t i) {
    const std::uint64_t run_seed = trajectory_seed(seed, i);
    Vector theta = theta0;
    for (std::size_t k = 0; k < steps; ++k) {
      theta += alpha * source.sample_gradient(theta, trajectory_seed(run_seed, k));
      if ((theta - source.theta_star()).squaredNorm() > radius_sq) return;
    }
    stayed[i] = 1.0;
  });
  r.stay_fraction = pairwise_sum(stayed) / static_cast<double>(runs);
  return r;
}

}  // namespace sosp_pg
