#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "sosp_pg/mdp.hpp"
#include "sosp_pg/policy.hpp"
#include "sosp_pg/rng.hpp"

namespace sosp_pg::testing {

inline const double kInvSqrt2Pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);

/// One state, two actions with rewards (r0, r1), horizon 1.
inline TabularMdp bandit(double r0 = 1.0, double r1 = 0.0, double gamma = 0.5) {
  Matrix R(1, 2);
  R << r0, r1;
  return TabularMdp({{{1.0}, {1.0}}}, R, Vector::Ones(1), gamma, 1, 0.0, 1.0);
}

/// One state, one action, constant reward.
inline TabularMdp single_action(double reward, double gamma, std::size_t horizon) {
  Matrix R(1, 1);
  R << reward;
  return TabularMdp({{{1.0}}}, R, Vector::Ones(1), gamma, horizon, 0.0, std::max(1.0, reward));
}

/// s0 -> s1 -> s0 deterministically (one action), starting in s0.
inline TabularMdp two_cycle(double gamma, std::size_t horizon) {
  Matrix R = Matrix::Constant(2, 1, 0.5);
  Vector rho0(2);
  rho0 << 1.0, 0.0;
  return TabularMdp({{{0.0, 1.0}}, {{1.0, 0.0}}}, R, rho0, gamma, horizon, 0.0, 1.0);
}

inline Vector random_theta(CounterRng& rng, std::size_t p, double scale = 1.0) {
  Vector t(static_cast<Eigen::Index>(p));
  for (Eigen::Index i = 0; i < t.size(); ++i) t(i) = scale * (2.0 * rng.uniform() - 1.0);
  return t;
}

inline Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

}  // namespace sosp_pg::testing
