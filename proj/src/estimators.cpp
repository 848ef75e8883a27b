#include "sosp_pg/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "sosp_pg/errors.hpp"
#include "sosp_pg/parallel.hpp"

namespace sosp_pg {

Vector pg_estimate(const Trajectory& traj, const Policy& policy, const Vector& theta,
                   double gamma) {
  const double ret = discounted_return(traj, gamma);
  Vector score = Vector::Zero(static_cast<Eigen::Index>(policy.dim()));
  for (const Step& step : traj.steps) score += policy.grad_log_prob(theta, step.state, step.action);
  return score * ret;
}

Matrix hessian_estimate(const Trajectory& traj, const Policy& policy, const Vector& theta,
                        double gamma, PhiVariant variant) {
  if (traj.steps.empty()) throw InvalidInput("hessian_estimate: empty trajectory");
  const std::size_t h = traj.steps.size();
  const auto p = static_cast<Eigen::Index>(policy.dim());

  // to_go[t] = sum_{i>=t} gamma^i r_{i+1}
  std::vector<double> to_go(h + 1, 0.0);
  double discount = std::pow(gamma, double(h - 1));
  for (std::size_t t = h; t-- > 0;) {
    to_go[t] = to_go[t + 1] + discount * traj.steps[t].reward;
    discount /= gamma;
  }

  Vector score_sum = Vector::Zero(p);
  Vector grad_phi = Vector::Zero(p);
  Matrix hess_phi = Matrix::Zero(p, p);
  for (std::size_t t = 0; t < h; ++t) {
    const Step& st = traj.steps[t];
    const Vector score = policy.grad_log_prob(theta, st.state, st.action);
    score_sum += score;
    if (variant == PhiVariant::RewardToGo) {
      grad_phi += to_go[t] * score;
      hess_phi += to_go[t] * policy.hessian_log_prob(theta, st.state, st.action);
    }
  }
  if (variant == PhiVariant::PrintedFixedIndex) {
    const Step& last = traj.steps.back();
    double weight = 0.0;
    for (std::size_t t = 0; t < h; ++t) weight += to_go[t];
    grad_phi = weight * policy.grad_log_prob(theta, last.state, last.action);
    hess_phi = weight * policy.hessian_log_prob(theta, last.state, last.action);
  }
  return grad_phi * score_sum.transpose() + hess_phi;
}

GradEstimate batch_gradient(const TabularMdp& mdp, const Policy& policy, const Vector& theta,
                            std::size_t n, std::uint64_t seed,
                            const std::optional<Vector>& oracle_gradient,
                            std::optional<double> sigma_bound) {
  if (n == 0) throw InvalidInput("batch_gradient: n must be >= 1");
  std::vector<Vector> samples(n);
  parallel_for(n, [&](std::size_t i) {
    const Trajectory traj = sample_trajectory(mdp, policy, theta, trajectory_seed(seed, i));
    samples[i] = pg_estimate(traj, policy, theta, mdp.gamma());
  });

  GradEstimate out;
  out.n = n;
  out.mean = pairwise_sum(samples) / double(n);
  std::vector<Vector> sq(n);
  for (std::size_t i = 0; i < n; ++i) {
    sq[i] = (samples[i] - out.mean).array().square().matrix();
    out.per_sample_norm_max = std::max(out.per_sample_norm_max, samples[i].norm());
  }
  out.std_error = Vector::Zero(out.mean.size());
  if (n > 1) {
    out.std_error = (pairwise_sum(sq) / double(n - 1) / double(n)).array().sqrt().matrix();
  }
  if (oracle_gradient) {
    double dev = 0.0;
    for (const Vector& g : samples) dev = std::max(dev, (g - *oracle_gradient).norm());
    out.max_deviation = dev;
    if (sigma_bound) {
      out.sigma_bound = sigma_bound;
      out.sigma_bound_warning = dev > *sigma_bound + 1e-9;
    }
  }
  return out;
}

HessianEstimate batch_hessian(const TabularMdp& mdp, const Policy& policy, const Vector& theta,
                              std::size_t n, std::uint64_t seed, PhiVariant variant) {
  if (n == 0) throw InvalidInput("batch_hessian: n must be >= 1");
  std::vector<Matrix> samples(n);
  parallel_for(n, [&](std::size_t i) {
    const Trajectory traj = sample_trajectory(mdp, policy, theta, trajectory_seed(seed, i));
    samples[i] = hessian_estimate(traj, policy, theta, mdp.gamma(), variant);
  });
  HessianEstimate out;
  out.n = n;
  out.raw_mean = pairwise_sum(samples) / double(n);
  out.symmetrized = 0.5 * (out.raw_mean + out.raw_mean.transpose());
  out.std_error = Matrix::Zero(out.raw_mean.rows(), out.raw_mean.cols());
  if (n > 1) {
    std::vector<Matrix> sq(n);
    for (std::size_t i = 0; i < n; ++i) {
      const Matrix sym = 0.5 * (samples[i] + samples[i].transpose());
      sq[i] = (sym - out.symmetrized).array().square().matrix();
    }
    out.std_error = (pairwise_sum(sq) / double(n - 1) / double(n)).array().sqrt().matrix();
  }
  return out;
}

FisherReport fisher_matrix(const TabularMdp& mdp, const Policy& policy, const Vector& theta) {
  const Vector d = occupancy(mdp, policy, theta);
  const auto p = static_cast<Eigen::Index>(policy.dim());
  FisherReport out;
  out.F = Matrix::Zero(p, p);
  for (std::size_t s = 0; s < mdp.n_states(); ++s) {
    const double weight = d[static_cast<Eigen::Index>(s)];
    if (weight == 0.0) continue;
    const Vector pi = policy.action_probs(theta, s);
    for (std::size_t a = 0; a < mdp.n_actions(); ++a) {
      const double pa = pi[static_cast<Eigen::Index>(a)];
      if (pa <= 0.0) continue;
      const Vector score = policy.grad_log_prob(theta, s, a);
      out.F += weight * pa * (score * score.transpose());
    }
  }
  out.F = 0.5 * (out.F + out.F.transpose());
  out.lambda_min = p == 0 ? 0.0
                          : Eigen::SelfAdjointEigenSolver<Matrix>(out.F, Eigen::EigenvaluesOnly)
                                .eigenvalues()
                                .minCoeff();
  return out;
}

}  // namespace sosp_pg
