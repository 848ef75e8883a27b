#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>

#include "sosp_pg/mdp.hpp"
#include "sosp_pg/policy.hpp"
#include "sosp_pg/types.hpp"

namespace sosp_pg {

/// REINFORCE estimate g(tau|theta) = (sum_t grad log pi(a_t|s_t)) * R(tau).
/// Throws DomainError if the trajectory contains a zero-probability action.
Vector pg_estimate(const Trajectory& traj, const Policy& policy, const Vector& theta,
                   double gamma);

/// Which log-probability multiplies the reward-to-go in the surrogate Phi.
enum class PhiVariant {
  /// Phi(theta) = sum_t (sum_{i>=t} gamma^i r_{i+1}) log pi(a_t|s_t). Unbiased.
  RewardToGo,
  /// Every term uses the final step's log pi(a_{h-1}|s_{h-1}). Biased; kept
  /// for comparison only.
  PrintedFixedIndex,
};

/// Single-trajectory Hessian estimate grad Phi * (grad log p(tau))^T + hess Phi.
/// Not symmetric in general.
Matrix hessian_estimate(const Trajectory& traj, const Policy& policy, const Vector& theta,
                        double gamma, PhiVariant variant = PhiVariant::RewardToGo);

struct GradEstimate {
  Vector mean;
  Vector std_error;
  double per_sample_norm_max = 0.0;  ///< max_tau ||g(tau|theta)||_2
  std::size_t n = 0;
  /// Filled when an oracle gradient is supplied: max_tau ||g(tau|theta) - grad J||_2.
  std::optional<double> max_deviation;
  /// Filled when a sigma bound is supplied. Exceeding it is a warning, not an
  /// error: grid-estimated constants are lower bounds on the true suprema.
  std::optional<double> sigma_bound;
  bool sigma_bound_warning = false;
};

struct HessianEstimate {
  Matrix raw_mean;
  Matrix symmetrized;  ///< (raw_mean + raw_mean^T) / 2
  Matrix std_error;    ///< elementwise standard error of the symmetrized samples
  std::size_t n = 0;
};

/// Mean of pg_estimate over n trajectories, trajectory i seeded with
/// trajectory_seed(seed, i). Result is independent of the thread count.
GradEstimate batch_gradient(const TabularMdp& mdp, const Policy& policy, const Vector& theta,
                            std::size_t n, std::uint64_t seed,
                            const std::optional<Vector>& oracle_gradient = std::nullopt,
                            std::optional<double> sigma_bound = std::nullopt);

HessianEstimate batch_hessian(const TabularMdp& mdp, const Policy& policy, const Vector& theta,
                              std::size_t n, std::uint64_t seed,
                              PhiVariant variant = PhiVariant::RewardToGo);

struct FisherReport {
  Matrix F;
  double lambda_min = 0.0;
};

/// F(theta) = sum_s d(s) sum_a pi(a|s) score score^T with the truncated,
/// unnormalized visitation d.
FisherReport fisher_matrix(const TabularMdp& mdp, const Policy& policy, const Vector& theta);

}  // namespace sosp_pg
