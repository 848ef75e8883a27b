#include "sosp_pg/oracle.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "sosp_pg/errors.hpp"
#include "sosp_pg/estimators.hpp"

namespace sosp_pg {
namespace {

const double kInvSqrt2Pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);

struct Enumerator {
  const TabularMdp& mdp;
  const Policy& policy;
  const Vector& theta;
  const std::function<void(double, const Trajectory&)>& visit;
  std::vector<Vector> pis;
  Trajectory traj;

  void descend(std::size_t s, double prob) {
    if (traj.steps.size() == mdp.horizon()) {
      visit(prob, traj);
      return;
    }
    const Vector& pi = pis[s];
    for (std::size_t a = 0; a < mdp.n_actions(); ++a) {
      const double pa = pi[static_cast<Eigen::Index>(a)];
      if (pa <= 0.0) continue;
      traj.steps.push_back({s, a, mdp.reward(s, a)});
      if (traj.steps.size() == mdp.horizon()) {
        // The final transition does not change the trajectory.
        visit(prob * pa, traj);
      } else {
        for (const auto& e : mdp.successors(s, a)) descend(e.state, prob * pa * e.prob);
      }
      traj.steps.pop_back();
    }
  }
};

}  // namespace

double enumeration_size(const TabularMdp& mdp) {
  double starts = 0.0;
  for (Eigen::Index s = 0; s < mdp.rho0().size(); ++s) starts += mdp.rho0()[s] > 0.0 ? 1.0 : 0.0;
  return starts * std::pow(double(mdp.n_actions() * mdp.max_branching()), double(mdp.horizon()));
}

bool enumerable(const TabularMdp& mdp) { return enumeration_size(mdp) <= kEnumerationCap; }

void enumerate_trajectories(const TabularMdp& mdp, const Policy& policy, const Vector& theta,
                            const std::function<void(double, const Trajectory&)>& visit) {
  check_policy_shape(mdp, policy);
  if (!enumerable(mdp)) {
    throw InvalidInput("enumeration size " + std::to_string(enumeration_size(mdp)) +
                       " exceeds cap");
  }
  Enumerator en{mdp, policy, theta, visit, {}, {}};
  for (std::size_t s = 0; s < mdp.n_states(); ++s) en.pis.push_back(policy.action_probs(theta, s));
  en.traj.steps.reserve(mdp.horizon());
  for (std::size_t s = 0; s < mdp.n_states(); ++s) {
    const double p0 = mdp.rho0()[static_cast<Eigen::Index>(s)];
    if (p0 > 0.0) en.descend(s, p0);
  }
}

double exact_objective(const TabularMdp& mdp, const Policy& policy, const Vector& theta) {
  return mdp.rho0().dot(value_functions(mdp, policy, theta).V);
}

double enumerated_objective(const TabularMdp& mdp, const Policy& policy, const Vector& theta) {
  double total = 0.0;
  enumerate_trajectories(mdp, policy, theta, [&](double prob, const Trajectory& traj) {
    total += prob * discounted_return(traj, mdp.gamma());
  });
  return total;
}

Vector visitation_gradient(const TabularMdp& mdp, const Policy& policy, const Vector& theta) {
  const std::vector<Vector> mu = state_marginals(mdp, policy, theta);
  const std::vector<Matrix> q = q_functions_by_time(mdp, policy, theta);
  Vector grad = Vector::Zero(static_cast<Eigen::Index>(policy.dim()));
  double discount = 1.0;
  for (std::size_t t = 0; t < mdp.horizon(); ++t) {
    for (std::size_t s = 0; s < mdp.n_states(); ++s) {
      const double weight = discount * mu[t][static_cast<Eigen::Index>(s)];
      if (weight == 0.0) continue;
      for (std::size_t a = 0; a < mdp.n_actions(); ++a) {
        grad += weight * q[t](static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)) *
                policy.grad_prob(theta, s, a);
      }
    }
    discount *= mdp.gamma();
  }
  return grad;
}

GradientOracle exact_gradient(const TabularMdp& mdp, const Policy& policy, const Vector& theta,
                              double tolerance) {
  GradientOracle out;
  out.visitation_form = visitation_gradient(mdp, policy, theta);
  if (enumerable(mdp)) {
    out.enumerated = true;
    out.trajectory_form = Vector::Zero(static_cast<Eigen::Index>(policy.dim()));
    enumerate_trajectories(mdp, policy, theta, [&](double prob, const Trajectory& traj) {
      out.trajectory_form += prob * pg_estimate(traj, policy, theta, mdp.gamma());
    });
  } else {
    out.trajectory_form = central_difference_gradient(
        [&](const Vector& x) { return exact_objective(mdp, policy, x); }, theta, 1e-5);
  }
  out.discrepancy = (out.trajectory_form - out.visitation_form).cwiseAbs().maxCoeff();
  const double scale = std::max(1.0, out.visitation_form.cwiseAbs().maxCoeff());
  // Central differences carry O(step^2) truncation error.
  const double tol = out.enumerated ? tolerance : std::max(tolerance, 1e-6);
  if (out.discrepancy > tol * scale) {
    throw ConsistencyError("gradient oracles disagree by " + std::to_string(out.discrepancy));
  }
  return out;
}

namespace {

struct SecondOrderDp {
  double J;
  Vector grad;
  Matrix hess;
};

SecondOrderDp backward_second_order(const TabularMdp& mdp, const Policy& policy,
                                    const Vector& theta, bool with_hessian) {
  check_policy_shape(mdp, policy);
  const std::size_t S = mdp.n_states(), A = mdp.n_actions();
  const auto p = static_cast<Eigen::Index>(policy.dim());
  std::vector<Vector> pi(S);
  std::vector<std::vector<Vector>> dpi(S, std::vector<Vector>(A));
  std::vector<std::vector<Matrix>> d2pi(S, std::vector<Matrix>(A));
  for (std::size_t s = 0; s < S; ++s) {
    pi[s] = policy.action_probs(theta, s);
    for (std::size_t a = 0; a < A; ++a) {
      dpi[s][a] = policy.grad_prob(theta, s, a);
      if (with_hessian) d2pi[s][a] = policy.hessian_prob(theta, s, a);
    }
  }
  std::vector<double> v(S, 0.0), v_next(S, 0.0);
  std::vector<Vector> dv(S, Vector::Zero(p)), dv_next(S, Vector::Zero(p));
  std::vector<Matrix> d2v(S, Matrix::Zero(p, with_hessian ? p : 0));
  std::vector<Matrix> d2v_next = d2v;
  for (std::size_t t = mdp.horizon(); t-- > 0;) {
    for (std::size_t s = 0; s < S; ++s) {
      double vs = 0.0;
      Vector dvs = Vector::Zero(p);
      Matrix d2vs = Matrix::Zero(p, with_hessian ? p : 0);
      for (std::size_t a = 0; a < A; ++a) {
        double q = mdp.reward(s, a);
        Vector dq = Vector::Zero(p);
        Matrix d2q = Matrix::Zero(p, with_hessian ? p : 0);
        for (const auto& e : mdp.successors(s, a)) {
          q += mdp.gamma() * e.prob * v_next[e.state];
          dq += mdp.gamma() * e.prob * dv_next[e.state];
          if (with_hessian) d2q += mdp.gamma() * e.prob * d2v_next[e.state];
        }
        const double pa = pi[s][static_cast<Eigen::Index>(a)];
        vs += pa * q;
        dvs += q * dpi[s][a] + pa * dq;
        if (with_hessian) {
          d2vs += q * d2pi[s][a] + dpi[s][a] * dq.transpose() + dq * dpi[s][a].transpose() +
                  pa * d2q;
        }
      }
      v[s] = vs;
      dv[s] = std::move(dvs);
      if (with_hessian) d2v[s] = std::move(d2vs);
    }
    std::swap(v, v_next);
    std::swap(dv, dv_next);
    std::swap(d2v, d2v_next);
  }
  SecondOrderDp out{0.0, Vector::Zero(p), Matrix::Zero(p, p)};
  for (std::size_t s = 0; s < S; ++s) {
    const double w = mdp.rho0()[static_cast<Eigen::Index>(s)];
    out.J += w * v_next[s];
    out.grad += w * dv_next[s];
    if (with_hessian) out.hess += w * d2v_next[s];
  }
  out.hess = 0.5 * (out.hess + out.hess.transpose());
  return out;
}

}  // namespace

Vector dp_gradient(const TabularMdp& mdp, const Policy& policy, const Vector& theta) {
  return backward_second_order(mdp, policy, theta, false).grad;
}

Matrix exact_hessian(const TabularMdp& mdp, const Policy& policy, const Vector& theta) {
  return backward_second_order(mdp, policy, theta, true).hess;
}

Matrix enumerated_hessian_estimate(const TabularMdp& mdp, const Policy& policy,
                                   const Vector& theta) {
  const auto p = static_cast<Eigen::Index>(policy.dim());
  Matrix total = Matrix::Zero(p, p);
  enumerate_trajectories(mdp, policy, theta, [&](double prob, const Trajectory& traj) {
    total += prob * hessian_estimate(traj, policy, theta, mdp.gamma());
  });
  return total;
}

Vector central_difference_gradient(const std::function<double(const Vector&)>& f,
                                   const Vector& theta, double step) {
  Vector g(theta.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    Vector hi = theta, lo = theta;
    hi[i] += step;
    lo[i] -= step;
    g[i] = (f(hi) - f(lo)) / (2.0 * step);
  }
  return g;
}

Matrix central_difference_hessian(const std::function<Vector(const Vector&)>& grad,
                                  const Vector& theta, double step) {
  const auto p = theta.size();
  Matrix h(p, p);
  for (Eigen::Index j = 0; j < p; ++j) {
    Vector hi = theta, lo = theta;
    hi[j] += step;
    lo[j] -= step;
    h.col(j) = (grad(hi) - grad(lo)) / (2.0 * step);
  }
  return 0.5 * (h + h.transpose());
}

ExampleOneValues analytic_example1(const Vector& theta) {
  if (theta.size() != 2 || !theta.allFinite()) {
    throw InvalidInput("analytic_example1: theta must be a finite 2-vector");
  }
  ExampleOneValues out{0.0, Vector(2), Matrix(2, 2)};
  if (ExampleOnePiecewise::in_core(theta)) {
    out.J = kInvSqrt2Pi * (1.0 - theta[0] * theta[0] + theta[1] * theta[1]);
    out.grad << -2.0 * theta[0], 2.0 * theta[1];
    out.grad *= kInvSqrt2Pi;
    out.hessian << -2.0, 0.0, 0.0, 2.0;
    out.hessian *= kInvSqrt2Pi;
  } else {
    out.J = kInvSqrt2Pi * std::exp(-(2.0 - theta.squaredNorm()) / 2.0);
    out.grad = out.J * theta;
    out.hessian = out.J * (Matrix::Identity(2, 2) + theta * theta.transpose());
  }
  return out;
}

}  // namespace sosp_pg
