#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "sosp_pg/policy.hpp"
#include "sosp_pg/types.hpp"

namespace sosp_pg {

/// Finite MDP with deterministic rewards R(s,a), truncated at `horizon` steps.
/// Immutable once constructed; the constructor validates every invariant.
class TabularMdp {
 public:
  struct Successor {
    std::size_t state;
    double prob;
  };

  /// `transition` is indexed [s][a][s'].
  TabularMdp(std::vector<std::vector<std::vector<double>>> transition, Matrix reward, Vector rho0,
             double gamma, std::size_t horizon, double r_min, double r_max);

  std::size_t n_states() const { return n_states_; }
  std::size_t n_actions() const { return n_actions_; }
  double gamma() const { return gamma_; }
  std::size_t horizon() const { return horizon_; }
  double r_min() const { return r_min_; }
  double r_max() const { return r_max_; }
  const Matrix& reward() const { return reward_; }
  double reward(std::size_t s, std::size_t a) const {
    return reward_(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a));
  }
  const Vector& rho0() const { return rho0_; }
  double transition(std::size_t s, std::size_t a, std::size_t next) const {
    return transition_[(s * n_actions_ + a) * n_states_ + next];
  }
  /// Positive-probability successors of (s, a), in state order.
  const std::vector<Successor>& successors(std::size_t s, std::size_t a) const {
    return successors_[s * n_actions_ + a];
  }
  std::size_t max_branching() const;

  /// Same MDP with a different truncation horizon.
  TabularMdp with_horizon(std::size_t horizon) const;

 private:
  std::size_t n_states_ = 0;
  std::size_t n_actions_ = 0;
  std::vector<double> transition_;
  std::vector<std::vector<Successor>> successors_;
  Matrix reward_;
  Vector rho0_;
  double gamma_ = 0.0;
  std::size_t horizon_ = 0;
  double r_min_ = 0.0;
  double r_max_ = 0.0;
};

struct Step {
  std::size_t state;
  std::size_t action;
  double reward;  ///< r_{t+1} = R(s_t, a_t)
};

struct Trajectory {
  std::vector<Step> steps;
  std::uint64_t seed = 0;
};

/// Throws ConfigError when the policy's state/action shape does not match the MDP.
/// For the example_one family the MDP must also be the three-state example.
void check_policy_shape(const TabularMdp& mdp, const Policy& policy);

/// Seed of trajectory `index` within a batch seeded by `run_seed`.
std::uint64_t trajectory_seed(std::uint64_t run_seed, std::uint64_t index);

/// Rolls out exactly `horizon` steps: s0 ~ rho0, a_t ~ pi(.|s_t), s_{t+1} ~ P(.|s_t,a_t).
Trajectory sample_trajectory(const TabularMdp& mdp, const Policy& policy, const Vector& theta,
                             std::uint64_t seed);

/// sum_t gamma^t r_{t+1}. Throws InvalidInput on an empty trajectory.
double discounted_return(const Trajectory& traj, double gamma);

/// State-to-state kernel M(s, s') = sum_a pi(a|s) P(s'|s,a).
Matrix state_kernel(const TabularMdp& mdp, const Policy& policy, const Vector& theta);

/// Marginal state distributions mu_t for t = 0..horizon-1.
std::vector<Vector> state_marginals(const TabularMdp& mdp, const Policy& policy,
                                    const Vector& theta);

/// Truncated unnormalized discounted visitation sum_{t<h} gamma^t mu_t.
Vector occupancy(const TabularMdp& mdp, const Policy& policy, const Vector& theta);

struct ValueFunctions {
  Vector V;  ///< V_0
  Matrix Q;  ///< Q_0
  Matrix A;  ///< Q_0 - V_0 broadcast over actions
};

/// Backward induction from V_h = 0; returns the t = 0 slices.
ValueFunctions value_functions(const TabularMdp& mdp, const Policy& policy, const Vector& theta);

/// Q_t for t = 0..h-1, where Q_t is the value of the remaining h - t steps.
std::vector<Matrix> q_functions_by_time(const TabularMdp& mdp, const Policy& policy,
                                        const Vector& theta);

struct PerformanceDifference {
  double lhs;        ///< E_rho0[V^a] - E_rho0[V^b]
  double rhs;        ///< sum_s d^a(s) sum_a pi_a(a|s) A^b(s,a)
  double tolerance;  ///< 2 gamma^h R_max / (1 - gamma)
};

PerformanceDifference performance_difference_check(const TabularMdp& mdp, const Policy& policy,
                                                   const Vector& theta_a,
                                                   const Vector& theta_b);

/// The three-state example MDP: from s0, right -> s1 and left -> s2 with
/// reward 1, up loops on s0 with reward 0; s1 and s2 are absorbing with reward 0.
/// With horizon 1 its objective is exactly the closed-form piecewise J.
TabularMdp example_one_mdp(double gamma = 0.5, std::size_t horizon = 1);

/// Random MDP with at most `max_branching` successors per (s,a), rewards
/// uniform on [r_lo, r_hi] and a random initial distribution.
template <typename Rng>
TabularMdp random_mdp(Rng& rng, std::size_t n_states, std::size_t n_actions, std::size_t horizon,
                      double gamma, std::size_t max_branching, double r_lo = 0.0,
                      double r_hi = 1.0);

}  // namespace sosp_pg

#include "sosp_pg/mdp_random.ipp"
