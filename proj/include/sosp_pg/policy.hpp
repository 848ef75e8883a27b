#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sosp_pg/types.hpp"

namespace sosp_pg {

enum class PolicyFamily { TabularSoftmax, ExampleOnePiecewise };

std::string to_string(PolicyFamily family);
/// Accepts "tabular_softmax" and "example_one"; throws ConfigError otherwise.
PolicyFamily parse_policy_family(std::string_view tag);

/// Differentiable stochastic policy pi_theta(a|s) over a finite state/action
/// space. All queries are pure functions of (theta, s, a).
class Policy {
 public:
  virtual ~Policy() = default;

  virtual PolicyFamily family() const = 0;
  virtual std::size_t n_states() const = 0;
  virtual std::size_t n_actions() const = 0;
  /// Parameter dimension p.
  virtual std::size_t dim() const = 0;

  /// Distribution over actions at `state`. Throws DomainError when the
  /// family does not define a distribution at theta.
  virtual Vector action_probs(const Vector& theta, std::size_t state) const = 0;
  virtual Vector grad_prob(const Vector& theta, std::size_t state, std::size_t action) const = 0;
  virtual Matrix hessian_prob(const Vector& theta, std::size_t state, std::size_t action) const = 0;

  /// Score vector. Throws DomainError for zero-probability actions.
  virtual Vector grad_log_prob(const Vector& theta, std::size_t state, std::size_t action) const;
  virtual Matrix hessian_log_prob(const Vector& theta, std::size_t state,
                                  std::size_t action) const;

  /// Parameter coordinates that pi(.|state) depends on.
  virtual std::vector<std::size_t> block(std::size_t state) const = 0;

  /// Throws InvalidInput on wrong dimension or non-finite entries.
  void check_theta(const Vector& theta) const;

 protected:
  void check_state_action(std::size_t state, std::size_t action) const;
};

/// Softmax over one logit block per state: theta[s * n_actions + a].
class TabularSoftmax final : public Policy {
 public:
  TabularSoftmax(std::size_t n_states, std::size_t n_actions);

  PolicyFamily family() const override { return PolicyFamily::TabularSoftmax; }
  std::size_t n_states() const override { return n_states_; }
  std::size_t n_actions() const override { return n_actions_; }
  std::size_t dim() const override { return n_states_ * n_actions_; }

  Vector action_probs(const Vector& theta, std::size_t state) const override;
  Vector grad_prob(const Vector& theta, std::size_t state, std::size_t action) const override;
  Matrix hessian_prob(const Vector& theta, std::size_t state, std::size_t action) const override;
  Vector grad_log_prob(const Vector& theta, std::size_t state, std::size_t action) const override;
  Matrix hessian_log_prob(const Vector& theta, std::size_t state,
                          std::size_t action) const override;
  std::vector<std::size_t> block(std::size_t state) const override;

 private:
  std::size_t n_states_;
  std::size_t n_actions_;
};

/// The two-parameter policy of the three-state saddle example.
///
/// States: s0 = 0, s1 = 1, s2 = 2. Actions: right = 0, left = 1, up = 2.
/// At s0, on C = [0,1]^2 (closed) right has probability (1 - t1^2 + t2^2)/sqrt(2 pi)
/// and left has probability 0; off C, left has probability
/// exp(-(2 - |t|^2)/2)/sqrt(2 pi) and right has probability 0. Up takes the rest.
/// s1 always plays right and s2 always plays left (self-loops).
class ExampleOnePiecewise final : public Policy {
 public:
  static constexpr std::size_t kS0 = 0, kS1 = 1, kS2 = 2;
  static constexpr std::size_t kRight = 0, kLeft = 1, kUp = 2;

  PolicyFamily family() const override { return PolicyFamily::ExampleOnePiecewise; }
  std::size_t n_states() const override { return 3; }
  std::size_t n_actions() const override { return 3; }
  std::size_t dim() const override { return 2; }

  Vector action_probs(const Vector& theta, std::size_t state) const override;
  Vector grad_prob(const Vector& theta, std::size_t state, std::size_t action) const override;
  Matrix hessian_prob(const Vector& theta, std::size_t state, std::size_t action) const override;
  std::vector<std::size_t> block(std::size_t state) const override;

  static bool in_core(const Vector& theta);
};

std::unique_ptr<Policy> make_policy(PolicyFamily family, std::size_t n_states,
                                    std::size_t n_actions);

/// Axis-aligned box [lo, hi]^p.
struct DomainBox {
  double lo = -1.0;
  double hi = 1.0;
};

/// Grid maxima of the policy regularity quantities. These are lower bounds
/// on the true suprema over the box.
struct RegularityConstants {
  double G = 0.0;  ///< max |d/dtheta_i log pi(a|s)|
  double L = 0.0;  ///< max |d^2/dtheta_i dtheta_j log pi(a|s)|
  double U = 0.0;  ///< max |d/dtheta_i pi(a|s)|
  std::optional<double> W;  ///< max finite-difference Lipschitz ratio of the log-policy Hessian
  DomainBox domain_box;
  std::size_t grid_density = 0;
  double grid_spacing = 0.0;
};

/// Scans a grid of `grid_density` points per coordinate over each state's
/// parameter block. Points where the family is undefined are skipped, as are
/// zero-probability actions for the log-derivative maxima.
RegularityConstants estimate_regularity(const Policy& policy, DomainBox box,
                                        std::size_t grid_density, bool estimate_w = true);

}  // namespace sosp_pg
