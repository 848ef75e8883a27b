#pragma once

#include <algorithm>
#include <numeric>

namespace sosp_pg {

template <typename Rng>
TabularMdp random_mdp(Rng& rng, std::size_t n_states, std::size_t n_actions, std::size_t horizon,
                      double gamma, std::size_t max_branching, double r_lo, double r_hi) {
  auto uniform_index = [&](std::size_t n) {
    return std::min(n - 1, static_cast<std::size_t>(rng.uniform() * double(n)));
  };
  std::vector<std::vector<std::vector<double>>> p(
      n_states, std::vector<std::vector<double>>(n_actions, std::vector<double>(n_states, 0.0)));
  const std::size_t branching = std::max<std::size_t>(1, std::min(max_branching, n_states));
  for (auto& per_state : p) {
    for (auto& row : per_state) {
      std::vector<std::size_t> order(n_states);
      std::iota(order.begin(), order.end(), 0);
      for (std::size_t i = 0; i + 1 < n_states; ++i) {
        std::swap(order[i], order[i + uniform_index(n_states - i)]);
      }
      const std::size_t k = 1 + uniform_index(branching);
      double total = 0.0;
      for (std::size_t i = 0; i < k; ++i) {
        row[order[i]] = 0.05 + rng.uniform();
        total += row[order[i]];
      }
      for (double& x : row) x /= total;
    }
  }
  Matrix reward(static_cast<Eigen::Index>(n_states), static_cast<Eigen::Index>(n_actions));
  for (Eigen::Index i = 0; i < reward.size(); ++i) {
    reward.data()[i] = r_lo + (r_hi - r_lo) * rng.uniform();
  }
  Vector rho0(static_cast<Eigen::Index>(n_states));
  for (Eigen::Index i = 0; i < rho0.size(); ++i) rho0[i] = 0.05 + rng.uniform();
  rho0 /= rho0.sum();
  return TabularMdp(std::move(p), std::move(reward), std::move(rho0), gamma, horizon, r_lo, r_hi);
}

}  // namespace sosp_pg
