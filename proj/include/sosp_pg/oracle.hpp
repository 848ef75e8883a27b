#pragma once

#include <cstddef>
#include <functional>

#include "sosp_pg/mdp.hpp"
#include "sosp_pg/policy.hpp"
#include "sosp_pg/types.hpp"

namespace sosp_pg {

/// Largest trajectory count the enumeration oracles accept.
inline constexpr double kEnumerationCap = 1e6;

/// Upper bound |supp rho0| * (n_actions * max_branching)^h on the number of
/// trajectories enumeration would visit.
double enumeration_size(const TabularMdp& mdp);
bool enumerable(const TabularMdp& mdp);

/// Visits every positive-probability trajectory with its probability.
/// Throws InvalidInput when the MDP exceeds kEnumerationCap.
void enumerate_trajectories(const TabularMdp& mdp, const Policy& policy, const Vector& theta,
                            const std::function<void(double, const Trajectory&)>& visit);

/// J(theta) = E_rho0[V_0] by backward induction.
double exact_objective(const TabularMdp& mdp, const Policy& policy, const Vector& theta);
/// sum_tau p(tau) R(tau).
double enumerated_objective(const TabularMdp& mdp, const Policy& policy, const Vector& theta);

/// Policy gradient theorem at finite horizon:
/// sum_t gamma^t sum_s mu_t(s) sum_a Q_t(s,a) grad pi(a|s).
Vector visitation_gradient(const TabularMdp& mdp, const Policy& policy, const Vector& theta);

struct GradientOracle {
  Vector trajectory_form;  ///< sum_tau p(tau) g(tau|theta), or central differences of J if too large
  Vector visitation_form;
  bool enumerated = false;
  double discrepancy = 0.0;  ///< max-abs difference between the two forms
};

/// Both gradient routes. Throws ConsistencyError when they differ by more
/// than `tolerance` relative to max(1, ||grad||_inf).
GradientOracle exact_gradient(const TabularMdp& mdp, const Policy& policy, const Vector& theta,
                              double tolerance = 1e-8);

/// Exact Hessian by differentiating the backward induction twice.
Matrix exact_hessian(const TabularMdp& mdp, const Policy& policy, const Vector& theta);
/// Gradient by differentiating the backward induction once.
Vector dp_gradient(const TabularMdp& mdp, const Policy& policy, const Vector& theta);

/// sum_tau p(tau) * hessian_estimate(tau); not symmetrized.
Matrix enumerated_hessian_estimate(const TabularMdp& mdp, const Policy& policy,
                                   const Vector& theta);

Vector central_difference_gradient(const std::function<double(const Vector&)>& f,
                                   const Vector& theta, double step);
/// Symmetrized central differences of a gradient field.
Matrix central_difference_hessian(const std::function<Vector(const Vector&)>& grad,
                                  const Vector& theta, double step);

struct ExampleOneValues {
  double J;
  Vector grad;
  Matrix hessian;
};

/// Closed-form objective of the three-state example (closed-set convention
/// on the boundary of [0,1]^2).
ExampleOneValues analytic_example1(const Vector& theta);

}  // namespace sosp_pg
