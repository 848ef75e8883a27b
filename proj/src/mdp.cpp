#include "sosp_pg/mdp.hpp"

#include <cmath>
#include <string>

#include "sosp_pg/errors.hpp"
#include "sosp_pg/rng.hpp"

namespace sosp_pg {
namespace {

constexpr double kMassTol = 1e-12;

std::string idx(std::initializer_list<std::size_t> parts) {
  std::string s;
  for (std::size_t p : parts) s += "[" + std::to_string(p) + "]";
  return s;
}

std::size_t sample_index(const Vector& probs, double u) {
  double acc = 0.0;
  const auto n = static_cast<std::size_t>(probs.size());
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = probs[static_cast<Eigen::Index>(i)];
    if (p <= 0.0) continue;
    last_positive = i;
    acc += p;
    if (u < acc) return i;
  }
  return last_positive;  // u landed in the rounding slack above the final cumulative sum
}

}  // namespace

TabularMdp::TabularMdp(std::vector<std::vector<std::vector<double>>> transition, Matrix reward,
                       Vector rho0, double gamma, std::size_t horizon, double r_min, double r_max)
    : n_states_(transition.size()),
      n_actions_(transition.empty() ? 0 : transition.front().size()),
      reward_(std::move(reward)),
      rho0_(std::move(rho0)),
      gamma_(gamma),
      horizon_(horizon),
      r_min_(r_min),
      r_max_(r_max) {
  if (n_states_ == 0) throw ConfigError("n_states: must be positive");
  if (n_actions_ == 0) throw ConfigError("n_actions: must be positive");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma: must lie in (0,1)");
  if (horizon == 0) throw ConfigError("horizon: must be >= 1");
  if (!(r_max > 0.0)) throw ConfigError("r_max: must be positive");
  if (!(r_min >= 0.0 && r_min <= r_max)) throw ConfigError("r_min: must satisfy 0 <= r_min <= r_max");

  transition_.assign(n_states_ * n_actions_ * n_states_, 0.0);
  successors_.resize(n_states_ * n_actions_);
  for (std::size_t s = 0; s < n_states_; ++s) {
    if (transition[s].size() != n_actions_) {
      throw ConfigError("transition" + idx({s}) + ": expected " + std::to_string(n_actions_) +
                        " actions");
    }
    for (std::size_t a = 0; a < n_actions_; ++a) {
      const auto& row = transition[s][a];
      if (row.size() != n_states_) {
        throw ConfigError("transition" + idx({s, a}) + ": expected " +
                          std::to_string(n_states_) + " entries");
      }
      double total = 0.0;
      for (std::size_t t = 0; t < n_states_; ++t) {
        if (!(row[t] >= 0.0) || !std::isfinite(row[t])) {
          throw ConfigError("transition" + idx({s, a, t}) + ": must be a nonnegative number");
        }
        total += row[t];
        transition_[(s * n_actions_ + a) * n_states_ + t] = row[t];
        if (row[t] > 0.0) successors_[s * n_actions_ + a].push_back({t, row[t]});
      }
      if (std::abs(total - 1.0) > kMassTol) {
        throw ConfigError("transition" + idx({s, a}) + ": row sums to " + std::to_string(total));
      }
    }
  }
  if (reward_.rows() != static_cast<Eigen::Index>(n_states_) ||
      reward_.cols() != static_cast<Eigen::Index>(n_actions_)) {
    throw ConfigError("reward: expected shape [n_states][n_actions]");
  }
  for (std::size_t s = 0; s < n_states_; ++s) {
    for (std::size_t a = 0; a < n_actions_; ++a) {
      const double r = this->reward(s, a);
      if (!std::isfinite(r) || r < r_min_ || r > r_max_) {
        throw ConfigError("reward" + idx({s, a}) + ": outside [r_min, r_max]");
      }
    }
  }
  if (rho0_.size() != static_cast<Eigen::Index>(n_states_)) {
    throw ConfigError("rho0: expected " + std::to_string(n_states_) + " entries");
  }
  for (std::size_t s = 0; s < n_states_; ++s) {
    if (!(rho0_[static_cast<Eigen::Index>(s)] >= 0.0)) {
      throw ConfigError("rho0" + idx({s}) + ": must be nonnegative");
    }
  }
  if (std::abs(rho0_.sum() - 1.0) > kMassTol) throw ConfigError("rho0: must sum to 1");
}

std::size_t TabularMdp::max_branching() const {
  std::size_t b = 0;
  for (const auto& succ : successors_) b = std::max(b, succ.size());
  return b;
}

TabularMdp TabularMdp::with_horizon(std::size_t horizon) const {
  TabularMdp copy = *this;
  if (horizon == 0) throw ConfigError("horizon: must be >= 1");
  copy.horizon_ = horizon;
  return copy;
}

void check_policy_shape(const TabularMdp& mdp, const Policy& policy) {
  if (policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions()) {
    throw ConfigError("policy: shape (" + std::to_string(policy.n_states()) + "," +
                      std::to_string(policy.n_actions()) + ") does not match MDP (" +
                      std::to_string(mdp.n_states()) + "," + std::to_string(mdp.n_actions()) +
                      ")");
  }
  if (policy.family() != PolicyFamily::ExampleOnePiecewise) return;
  using E = ExampleOnePiecewise;
  // Only the entries the example's policy can reach are checked.
  const struct {
    std::size_t s, a, next;
    double r;
  } required[] = {{E::kS0, E::kRight, E::kS1, 1.0}, {E::kS0, E::kLeft, E::kS2, 1.0},
                  {E::kS0, E::kUp, E::kS0, 0.0},    {E::kS1, E::kRight, E::kS1, 0.0},
                  {E::kS2, E::kLeft, E::kS2, 0.0}};
  for (const auto& e : required) {
    if (mdp.transition(e.s, e.a, e.next) != 1.0) {
      throw ConfigError("transition" + idx({e.s, e.a, e.next}) +
                        ": example_one requires a deterministic transition here");
    }
    if (mdp.reward(e.s, e.a) != e.r) {
      throw ConfigError("reward" + idx({e.s, e.a}) + ": example_one requires " +
                        std::to_string(e.r));
    }
  }
  if (mdp.rho0()[E::kS0] != 1.0) throw ConfigError("rho0: example_one starts at s0");
}

std::uint64_t trajectory_seed(std::uint64_t run_seed, std::uint64_t index) {
  return CounterRng::derive(run_seed, index).next_u64();
}

Trajectory sample_trajectory(const TabularMdp& mdp, const Policy& policy, const Vector& theta,
                             std::uint64_t seed) {
  check_policy_shape(mdp, policy);
  policy.check_theta(theta);
  CounterRng rng(seed);
  Trajectory traj;
  traj.seed = seed;
  traj.steps.reserve(mdp.horizon());
  std::size_t s = sample_index(mdp.rho0(), rng.uniform());
  for (std::size_t t = 0; t < mdp.horizon(); ++t) {
    const std::size_t a = sample_index(policy.action_probs(theta, s), rng.uniform());
    traj.steps.push_back({s, a, mdp.reward(s, a)});
    const double u = rng.uniform();
    double acc = 0.0;
    const auto& succ = mdp.successors(s, a);
    std::size_t next = succ.back().state;
    for (const auto& e : succ) {
      acc += e.prob;
      if (u < acc) {
        next = e.state;
        break;
      }
    }
    s = next;
  }
  return traj;
}

double discounted_return(const Trajectory& traj, double gamma) {
  if (traj.steps.empty()) throw InvalidInput("discounted_return: empty trajectory");
  double total = 0.0;
  double discount = 1.0;
  for (const Step& step : traj.steps) {
    total += discount * step.reward;
    discount *= gamma;
  }
  return total;
}

Matrix state_kernel(const TabularMdp& mdp, const Policy& policy, const Vector& theta) {
  check_policy_shape(mdp, policy);
  const auto n = static_cast<Eigen::Index>(mdp.n_states());
  Matrix m = Matrix::Zero(n, n);
  for (std::size_t s = 0; s < mdp.n_states(); ++s) {
    const Vector pi = policy.action_probs(theta, s);
    for (std::size_t a = 0; a < mdp.n_actions(); ++a) {
      for (const auto& e : mdp.successors(s, a)) {
        m(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(e.state)) +=
            pi[static_cast<Eigen::Index>(a)] * e.prob;
      }
    }
  }
  return m;
}

std::vector<Vector> state_marginals(const TabularMdp& mdp, const Policy& policy,
                                    const Vector& theta) {
  const Matrix m = state_kernel(mdp, policy, theta);
  std::vector<Vector> mu;
  mu.reserve(mdp.horizon());
  Vector cur = mdp.rho0();
  for (std::size_t t = 0; t < mdp.horizon(); ++t) {
    mu.push_back(cur);
    cur = (cur.transpose() * m).transpose();
  }
  return mu;
}

Vector occupancy(const TabularMdp& mdp, const Policy& policy, const Vector& theta) {
  Vector d = Vector::Zero(static_cast<Eigen::Index>(mdp.n_states()));
  double discount = 1.0;
  for (const Vector& mu : state_marginals(mdp, policy, theta)) {
    d += discount * mu;
    discount *= mdp.gamma();
  }
  return d;
}

std::vector<Matrix> q_functions_by_time(const TabularMdp& mdp, const Policy& policy,
                                        const Vector& theta) {
  check_policy_shape(mdp, policy);
  const auto S = static_cast<Eigen::Index>(mdp.n_states());
  const auto A = static_cast<Eigen::Index>(mdp.n_actions());
  std::vector<Vector> pis;
  for (std::size_t s = 0; s < mdp.n_states(); ++s) pis.push_back(policy.action_probs(theta, s));

  std::vector<Matrix> q(mdp.horizon());
  Vector v_next = Vector::Zero(S);
  for (std::size_t t = mdp.horizon(); t-- > 0;) {
    Matrix qt(S, A);
    Vector vt(S);
    for (Eigen::Index s = 0; s < S; ++s) {
      for (Eigen::Index a = 0; a < A; ++a) {
        double cont = 0.0;
        for (const auto& e : mdp.successors(std::size_t(s), std::size_t(a))) {
          cont += e.prob * v_next[static_cast<Eigen::Index>(e.state)];
        }
        qt(s, a) = mdp.reward()(s, a) + mdp.gamma() * cont;
      }
      vt[s] = pis[std::size_t(s)].dot(qt.row(s));
    }
    q[t] = std::move(qt);
    v_next = std::move(vt);
  }
  return q;
}

ValueFunctions value_functions(const TabularMdp& mdp, const Policy& policy, const Vector& theta) {
  ValueFunctions out;
  out.Q = q_functions_by_time(mdp, policy, theta).front();
  const auto S = out.Q.rows();
  out.V.resize(S);
  for (Eigen::Index s = 0; s < S; ++s) {
    out.V[s] = policy.action_probs(theta, std::size_t(s)).dot(out.Q.row(s));
  }
  out.A = out.Q.colwise() - out.V;
  return out;
}

PerformanceDifference performance_difference_check(const TabularMdp& mdp, const Policy& policy,
                                                   const Vector& theta_a,
                                                   const Vector& theta_b) {
  const ValueFunctions va = value_functions(mdp, policy, theta_a);
  const ValueFunctions vb = value_functions(mdp, policy, theta_b);
  const Vector d = occupancy(mdp, policy, theta_a);
  PerformanceDifference out{};
  out.lhs = mdp.rho0().dot(va.V) - mdp.rho0().dot(vb.V);
  out.rhs = 0.0;
  for (std::size_t s = 0; s < mdp.n_states(); ++s) {
    const Vector pi = policy.action_probs(theta_a, s);
    out.rhs += d[static_cast<Eigen::Index>(s)] * pi.dot(vb.A.row(static_cast<Eigen::Index>(s)));
  }
  out.tolerance = 2.0 * std::pow(mdp.gamma(), double(mdp.horizon())) * mdp.r_max() /
                  (1.0 - mdp.gamma());
  return out;
}

TabularMdp example_one_mdp(double gamma, std::size_t horizon) {
  using E = ExampleOnePiecewise;
  std::vector<std::vector<std::vector<double>>> p(
      3, std::vector<std::vector<double>>(3, std::vector<double>(3, 0.0)));
  p[E::kS0][E::kRight][E::kS1] = 1.0;
  p[E::kS0][E::kLeft][E::kS2] = 1.0;
  p[E::kS0][E::kUp][E::kS0] = 1.0;
  for (std::size_t a = 0; a < 3; ++a) {
    p[E::kS1][a][E::kS1] = 1.0;
    p[E::kS2][a][E::kS2] = 1.0;
  }
  Matrix r = Matrix::Zero(3, 3);
  r(E::kS0, E::kRight) = 1.0;
  r(E::kS0, E::kLeft) = 1.0;
  Vector rho0 = Vector::Zero(3);
  rho0[E::kS0] = 1.0;
  return TabularMdp(std::move(p), std::move(r), std::move(rho0), gamma, horizon, 0.0, 1.0);
}

}  // namespace sosp_pg
