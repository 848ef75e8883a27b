#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sosp_pg/objective.hpp"
#include "sosp_pg/sosp.hpp"
#include "sosp_pg/types.hpp"

namespace sosp_pg {

// ---------------------------------------------------------------------------
// Synthetic sources

/// Noise added to the exact gradient of a QuadraticSaddle.
struct CncNoise {
  enum class Kind {
    Isotropic,       ///< uniform on the sphere of the given radius
    OrthogonalToTop  ///< uniform on the sphere inside the complement of u_p
  };
  Kind kind = Kind::Isotropic;
  double radius = 1.0;
};

/// J(theta) = 1/2 (theta - c)^T H (theta - c) with bounded gradient noise.
/// Hessian draws are H plus a symmetric perturbation with entries uniform on
/// [-hessian_noise, hessian_noise]; with hessian_noise = 0 the quadratic
/// model of J is exact.
class QuadraticSaddle final : public StochasticObjective {
 public:
  QuadraticSaddle(Matrix H, CncNoise noise, double hessian_noise = 0.0,
                  std::optional<Vector> center = std::nullopt);

  std::size_t dim() const override { return static_cast<std::size_t>(H_.rows()); }
  double value(const Vector& theta) const override;
  Vector gradient(const Vector& theta) const override;
  Matrix hessian(const Vector&) const override { return H_; }
  Vector sample_gradient(const Vector& theta, std::uint64_t seed) const override;
  Matrix sample_hessian(const Vector& theta, std::uint64_t seed) const override;
  std::string describe() const override { return "quadratic_saddle"; }

  const Vector& center() const { return center_; }
  const Vector& top_direction() const { return top_.u; }
  double lambda_max() const { return top_.lambda_max; }
  /// E[<noise, u_p>^2]: radius^2 / p for isotropic noise, 0 for orthogonal noise.
  double iota_sq() const;
  /// Bound on ||H_hat - H||_op: ||H_hat||_op + ||H||_op <= 2 ||H||_op + p * hessian_noise.
  double sigma_h0() const;

 private:
  Vector noise(std::uint64_t seed) const;

  Matrix H_;
  CncNoise noise_;
  double hessian_noise_;
  Vector center_;
  TopEigenpair top_;
  double op_norm_;
};

/// J(theta) = -zeta/2 ||theta - theta_star||^2 with noise uniform on the
/// sphere of radius noise_sigma (so E||noise||^2 = noise_sigma^2 and the noise
/// is bounded by noise_bound = noise_sigma).
class StronglyConcave final : public StochasticObjective {
 public:
  StronglyConcave(double zeta, Vector theta_star, double noise_sigma, double varrho);

  std::size_t dim() const override { return static_cast<std::size_t>(theta_star_.size()); }
  double value(const Vector& theta) const override;
  Vector gradient(const Vector& theta) const override;
  Matrix hessian(const Vector& theta) const override;
  Vector sample_gradient(const Vector& theta, std::uint64_t seed) const override;
  Matrix sample_hessian(const Vector& theta, std::uint64_t) const override { return hessian(theta); }
  std::string describe() const override { return "strongly_concave"; }

  double zeta() const { return zeta_; }
  double varrho() const { return varrho_; }
  double noise_sigma() const { return noise_sigma_; }
  double noise_bound() const { return noise_sigma_; }
  const Vector& theta_star() const { return theta_star_; }

 private:
  double zeta_;
  Vector theta_star_;
  double noise_sigma_;
  double varrho_;
};

// ---------------------------------------------------------------------------
// REINFORCE iteration

struct TrainerConfig {
  double alpha = 0.0;
  std::size_t max_iters = 1;
  double epsilon = 0.1;
  double chi = 1.0;
  double delta = 0.1;
  std::size_t batch_size = 1;  ///< 1 is the single-trajectory update; more averages estimates
  std::uint64_t seed = 0;
  std::size_t report_every = 1;
  std::uint64_t kappa_hat_0 = 1;  ///< varsigma increment for L2 iterates
  ReportMode report_mode = ReportMode::oracle();
  bool stop_at_l3 = false;
};

struct IterateRecord {
  std::size_t k;
  Vector theta;
  double J;
  double grad_norm;
  double lambda_max;
  Region region;
  std::uint64_t varsigma;
};

struct RunRecord {
  std::vector<IterateRecord> iterates;
  std::optional<SecondOrderReport> final_report;
  Vector final_theta;
  std::size_t iterations = 0;  ///< updates performed
  std::optional<std::size_t> aborted_at;
  std::string abort_reason;
  std::optional<std::size_t> first_l3;  ///< k of the first recorded L3 iterate
  double wall_time = 0.0;  ///< seconds; not part of any serialized artifact
};

/// theta_{k+1} = theta_k + alpha * mean of batch_size stochastic gradients.
/// Every report_every iterations the iterate is classified and the varsigma
/// process advanced. With max_iters = 0 the trace is empty and only
/// final_report is filled. Aborts on non-finite iterates, ||theta|| > 1e8, or a
/// policy that stops being a distribution.
RunRecord run(const StochasticObjective& source, const TrainerConfig& config,
              const Vector& theta0);

/// `runs` independent runs; run i uses seed trajectory_seed(config.seed, i).
std::vector<RunRecord> run_many(const StochasticObjective& source, const TrainerConfig& config,
                                const Vector& theta0, std::size_t runs);

// ---------------------------------------------------------------------------
// Local-improvement verifiers

struct Prop1Result {
  double empirical_mean_gain = 0.0;
  double std_error = 0.0;
  double bound = 0.0;  ///< (alpha - ell alpha^2/2) ||grad J||^2 - ell alpha^2 sigma_hat^2 / 2
  double grad_norm = 0.0;
  double sigma_hat_sq = 0.0;  ///< mean ||g - grad J||^2 over the trials
  std::size_t trials = 0;
  bool passes = false;
};

/// One-step gain from an L1 point. Throws PreconditionError if the point is
/// not in L1 or alpha >= min{2 eps^2/((eps^2 + sigma^2) ell), 2/ell}.
Prop1Result verify_prop1(const StochasticObjective& source, const Vector& theta, double alpha,
                         std::size_t trials, std::uint64_t seed, double epsilon, double ell,
                         double sigma);

struct CoupledRun {
  std::vector<Vector> main_iterates;
  std::vector<Vector> model_iterates;
  double max_gap = 0.0;
  bool within_escape_budget = true;
};

/// Runs theta_{k+1} = theta_k + alpha g_k(theta_k) alongside the quadratic
/// model iterate theta^_{k+1} = theta^_k + alpha (g_k(theta_0) + H^_0 (theta^_k - theta_0)),
/// with g_k drawn from the same seed for both. H^_0 is the draw-0 Hessian estimate at theta_0.
CoupledRun coupled_quadratic_run(const StochasticObjective& source, const Vector& theta0,
                                 double alpha, std::size_t steps, std::uint64_t seed,
                                 std::optional<std::uint64_t> escape_budget_steps = std::nullopt);

struct EscapeSettings {
  double epsilon = 1.0;
  double chi = 1.0;
  double cap_factor = 10.0;
  /// Target iota for the gain alpha^2 iota^2 sqrt(chi eps). Defaults to the
  /// source's own CNC constant; contrast runs pass the benchmark value.
  std::optional<double> target_iota;
};

struct EscapeResult {
  double escape_fraction = 0.0;
  double mean_escape_steps = 0.0;  ///< over escaping runs
  std::uint64_t kappa_hat_0 = 0;
  double mean_gain = 0.0;            ///< mean J(theta_{kappa_hat_0}) - J(theta_0)
  double mean_gain_at_escape = 0.0;  ///< over escaping runs
  double target_gain = 0.0;
  double iota = 0.0;
  std::size_t step_cap = 0;
  std::size_t runs = 0;
};

/// Starts each run at the saddle and records the first step whose gain
/// reaches alpha^2 iota^2 sqrt(chi eps), within cap_factor * kappa_hat_0 steps.
EscapeResult verify_escape(const QuadraticSaddle& source, double alpha, std::size_t runs,
                           std::uint64_t seed, const EscapeSettings& settings = {});

struct TrapResult {
  double stay_fraction = 0.0;
  std::uint64_t kappa_0 = 0;
  double alpha_cap = 0.0;
  double log_cap_rhs = 0.0;
  bool log_cap_satisfied = false;
  double relaxation = 1.0;
  double paper_bound = 0.0;  ///< 1 - delta log(1/delta)
  std::size_t runs = 0;
};

/// Runs kappa_0 = trap_budget(alpha, delta) steps per run from theta0 and
/// counts runs whose iterates all stay in B(theta_star, varrho). theta0 must
/// lie in B(theta_star, varrho/sqrt(3)) and alpha must respect the four-way cap.
TrapResult verify_trap(const StronglyConcave& source, double alpha, std::size_t runs,
                       std::uint64_t seed, double delta, const Vector& theta0,
                       double relaxation = 1.0);

}  // namespace sosp_pg
