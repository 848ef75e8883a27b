#include "sosp_pg/sosp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "sosp_pg/errors.hpp"
#include "sosp_pg/estimators.hpp"
#include "sosp_pg/oracle.hpp"
#include "sosp_pg/parallel.hpp"

namespace sosp_pg {
namespace {

void require_positive(double x, const char* name) {
  if (!(x > 0.0) || !std::isfinite(x)) {
    throw InvalidInput(std::string(name) + " must be positive and finite");
  }
}

void require_delta(double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw InvalidInput("delta must lie in (0,1)");
}

void require_gamma(double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw InvalidInput("gamma must lie in (0,1)");
}

std::uint64_t saturating_floor(double x) {
  if (!(x >= 0.0)) return 0;
  if (x >= 1.8e19) return std::numeric_limits<std::uint64_t>::max();
  return static_cast<std::uint64_t>(std::floor(x));
}

}  // namespace

TopEigenpair sym_eig_max(const Matrix& h) {
  if (h.rows() != h.cols() || h.rows() == 0) throw InvalidInput("sym_eig_max: need a square matrix");
  if (!h.allFinite()) throw InvalidInput("sym_eig_max: non-finite entries");
  const Matrix sym = 0.5 * (h + h.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym);
  const Eigen::Index top = sym.rows() - 1;
  TopEigenpair out{solver.eigenvalues()[top], solver.eigenvectors().col(top)};
  out.u.normalize();
  const double scale = out.u.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < out.u.size(); ++i) {
    if (std::abs(out.u[i]) > 1e-12 * scale) {
      if (out.u[i] < 0.0) out.u = -out.u;
      break;
    }
  }
  return out;
}

std::string to_string(Region region) {
  switch (region) {
    case Region::L1:
      return "L1";
    case Region::L2:
      return "L2";
    case Region::L3:
      return "L3";
  }
  return "?";
}

Region classify_region(double grad_norm, double lambda_max, double epsilon, double chi) {
  require_positive(epsilon, "epsilon");
  require_positive(chi, "chi");
  if (grad_norm > epsilon) return Region::L1;
  if (lambda_max > std::sqrt(chi * epsilon)) return Region::L2;
  return Region::L3;
}

Region classify_region(const Vector& grad, const Matrix& hessian, double epsilon, double chi) {
  return classify_region(grad.norm(), sym_eig_max(hessian).lambda_max, epsilon, chi);
}

SecondOrderReport second_order_report(const StochasticObjective& objective, const Vector& theta,
                                      double epsilon, double chi, ReportMode mode) {
  SecondOrderReport rep;
  rep.epsilon = epsilon;
  rep.chi = chi;
  if (!mode.estimated) {
    rep.grad = objective.gradient(theta);
    rep.hessian = objective.hessian(theta);
  } else {
    if (mode.n == 0) throw InvalidInput("second_order_report: estimated mode needs n >= 1");
    std::vector<Vector> grads(mode.n);
    std::vector<Matrix> hessians(mode.n);
    parallel_for(mode.n, [&](std::size_t i) {
      const std::uint64_t seed = trajectory_seed(mode.seed, i);
      grads[i] = objective.sample_gradient(theta, seed);
      const Matrix h = objective.sample_hessian(theta, seed);
      hessians[i] = 0.5 * (h + h.transpose());
    });
    const double n = double(mode.n);
    rep.grad = pairwise_sum(grads) / n;
    rep.hessian = pairwise_sum(hessians) / n;
    std::vector<Vector> gsq(mode.n);
    std::vector<Matrix> hsq(mode.n);
    for (std::size_t i = 0; i < mode.n; ++i) {
      gsq[i] = (grads[i] - rep.grad).array().square().matrix();
      hsq[i] = (hessians[i] - rep.hessian).array().square().matrix();
    }
    const double denom = mode.n > 1 ? (n - 1.0) * n : 1.0;
    rep.grad_std_error = (pairwise_sum(gsq) / denom).array().sqrt().matrix();
    rep.hessian_std_error = (pairwise_sum(hsq) / denom).array().sqrt().matrix();
    if (mode.n == 1) {
      rep.grad_std_error->setZero();
      rep.hessian_std_error->setZero();
    }
    rep.estimated = true;
    rep.n = mode.n;
  }
  rep.grad_norm = rep.grad.norm();
  const TopEigenpair top = sym_eig_max(rep.hessian);
  rep.lambda_max = top.lambda_max;
  rep.u_p = top.u;
  rep.region = classify_region(rep.grad_norm, rep.lambda_max, epsilon, chi);
  rep.is_sosp = rep.region == Region::L3;
  return rep;
}

CncEstimate cnc_estimate(const TabularMdp& mdp, const Policy& policy, const Vector& theta,
                         const Vector& u, std::size_t n, std::uint64_t seed) {
  if (std::abs(u.norm() - 1.0) > 1e-9) throw InvalidInput("cnc_estimate: u must be a unit vector");
  if (static_cast<std::size_t>(u.size()) != policy.dim()) {
    throw InvalidInput("cnc_estimate: u has the wrong dimension");
  }
  CncEstimate out;
  if (enumerable(mdp)) {
    out.enumerated = true;
    enumerate_trajectories(mdp, policy, theta, [&](double prob, const Trajectory& traj) {
      const double proj = u.dot(pg_estimate(traj, policy, theta, mdp.gamma()));
      out.mean_sq_projection += prob * proj * proj;
    });
    return out;
  }
  if (n == 0) throw InvalidInput("cnc_estimate: n must be >= 1");
  std::vector<double> sq(n);
  parallel_for(n, [&](std::size_t i) {
    const Trajectory traj = sample_trajectory(mdp, policy, theta, trajectory_seed(seed, i));
    const double proj = u.dot(pg_estimate(traj, policy, theta, mdp.gamma()));
    sq[i] = proj * proj;
  });
  out.n = n;
  out.mean_sq_projection = pairwise_sum(sq) / double(n);
  if (n > 1) {
    std::vector<double> dev(n);
    for (std::size_t i = 0; i < n; ++i) {
      dev[i] = (sq[i] - out.mean_sq_projection) * (sq[i] - out.mean_sq_projection);
    }
    out.std_error = std::sqrt(pairwise_sum(dev) / double(n - 1) / double(n));
  }
  return out;
}

double empirical_iota(const CncEstimate& cnc, double floor) {
  const double lower = cnc.mean_sq_projection - 3.0 * cnc.std_error;
  return std::sqrt(std::max(lower, floor * floor));
}

CncClosedForm cnc_closed_form(const TabularMdp& mdp, const Policy& policy, const Vector& theta,
                              double omega, double lambda_max, double hessian_op_norm) {
  CncClosedForm out;
  enumerate_trajectories(mdp, policy, theta, [&](double prob, const Trajectory& traj) {
    std::vector<Vector> scores;
    scores.reserve(traj.steps.size());
    for (const Step& st : traj.steps) scores.push_back(policy.grad_log_prob(theta, st.state, st.action));
    double cross = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      for (std::size_t j = i + 1; j < scores.size(); ++j) cross += scores[i].dot(scores[j]);
    }
    out.c0 += prob * cross;
  });
  const double one_minus = 1.0 - mdp.gamma();
  const double rmin2 = mdp.r_min() * mdp.r_min();
  const double base = rmin2 * double(mdp.horizon()) * omega / (one_minus * one_minus);
  double coupled = base;
  if (hessian_op_norm > 0.0) {
    coupled += 2.0 * rmin2 * lambda_max * lambda_max * out.c0 /
               (one_minus * one_minus * hessian_op_norm * hessian_op_norm);
  }
  out.iota_sq = std::min(base, coupled);
  return out;
}

double smoothness_constant(double G, double L, double r_max, double gamma, std::size_t h) {
  require_gamma(gamma);
  const double hd = double(h);
  return r_max * hd * (hd * G * G + L) / (1.0 - gamma);
}

double variance_bound(double G, double r_max, double gamma) {
  require_gamma(gamma);
  return G * r_max / ((1.0 - gamma) * (1.0 - gamma));
}

double hessian_lipschitz_constant(double G, double L, double W, double r_max, double gamma) {
  require_gamma(gamma);
  const double om = 1.0 - gamma;
  double inner = std::max({L, gamma * G * G / om, L * gamma / om,
                           (G * (1.0 + gamma) + L * gamma * om) / (1.0 - gamma * gamma)});
  // W/G is unbounded as G -> 0; with G = 0 the whole term vanishes anyway.
  if (G > 0.0) inner = std::max(inner, W / G);
  return r_max * G * L / (om * om) + r_max * G * G * G * (1.0 + gamma) / (om * om * om) +
         r_max * G / om * inner;
}

double hessian_estimator_bound(double G, double L, double r_max, double gamma, std::size_t h,
                               std::size_t p) {
  require_gamma(gamma);
  const double pd = double(p), hd = double(h);
  return 2.0 * pd * std::sqrt(pd) * hd * r_max * (hd * G * G + L) / (1.0 - gamma);
}

PaperConstants paper_constants(const RegularityConstants& regularity, double r_min, double r_max,
                               double gamma, std::size_t h, std::size_t p) {
  require_gamma(gamma);
  require_positive(r_max, "r_max");
  if (h == 0 || p == 0) throw InvalidInput("h and p must be positive");
  if (r_min < 0.0) throw InvalidInput("r_min must be nonnegative");
  PaperConstants c;
  c.G = regularity.G;
  c.L = regularity.L;
  c.U = regularity.U;
  c.W = regularity.W;
  c.r_min = r_min;
  c.r_max = r_max;
  c.gamma = gamma;
  c.h = h;
  c.p = p;
  c.ell = smoothness_constant(c.G, c.L, r_max, gamma, h);
  c.sigma = variance_bound(c.G, r_max, gamma);
  c.sigma_h0 = hessian_estimator_bound(c.G, c.L, r_max, gamma, h, p);
  if (c.W) c.chi = hessian_lipschitz_constant(c.G, c.L, *c.W, r_max, gamma);
  return c;
}

double theorem_step_size(double epsilon, double chi, double r_min, double omega, double sigma,
                         double ell) {
  require_positive(epsilon, "epsilon");
  require_positive(chi, "chi");
  require_positive(r_min, "r_min");
  require_positive(omega, "omega");
  require_positive(ell, "ell");
  if (!(sigma >= 0.0)) throw InvalidInput("sigma must be nonnegative");
  const double eps2 = epsilon * epsilon;
  const double first = eps2 / (2.0 * std::sqrt(chi * epsilon) * r_min * r_min * omega * omega);
  const double second = 2.0 * eps2 / ((eps2 + sigma * sigma) * ell);
  return std::min(first, second);
}

std::uint64_t iteration_budget(double alpha, double r_max, double gamma, double iota, double chi,
                               double epsilon, double delta) {
  require_positive(alpha, "alpha");
  require_positive(r_max, "r_max");
  require_gamma(gamma);
  require_positive(iota, "iota");
  require_positive(chi, "chi");
  require_positive(epsilon, "epsilon");
  require_delta(delta);
  const double pre = 6.0 * r_max /
                     (alpha * alpha * (1.0 - gamma) * iota * iota * std::sqrt(chi * epsilon)) *
                     std::log(1.0 / delta);
  const std::uint64_t ceil_part = saturating_floor(std::ceil(pre));
  return ceil_part == std::numeric_limits<std::uint64_t>::max() ? ceil_part : ceil_part + 1;
}

std::uint64_t escape_budget(double alpha, double sigma_h0, double chi, double epsilon) {
  require_positive(alpha, "alpha");
  require_positive(chi, "chi");
  require_positive(epsilon, "epsilon");
  if (!(sigma_h0 >= 0.0)) throw InvalidInput("sigma_h0 must be nonnegative");
  if (sigma_h0 > 0.0) {
    const double bound = std::min(1.0 / sigma_h0, 1.0 / (sigma_h0 * sigma_h0));
    if (!(alpha < bound)) {
      throw PreconditionError("escape budget requires alpha < min{1/sigma_h0, 1/sigma_h0^2} = " +
                              std::to_string(bound));
    }
  }
  const double num = std::log(1.0 / (1.0 - std::sqrt(alpha) * sigma_h0));
  const double den = std::log1p(alpha * std::sqrt(chi * epsilon));
  return saturating_floor(num / den);
}

double escape_admissible_step(double sigma_h0) {
  require_positive(sigma_h0, "sigma_h0");
  return std::min(0.5 / sigma_h0, 0.25 / (sigma_h0 * sigma_h0));
}

std::uint64_t trap_budget(double alpha, double delta) {
  require_positive(alpha, "alpha");
  require_delta(delta);
  return saturating_floor(std::log(1.0 / delta) / (alpha * alpha));
}

bool Prop3StepSize::log_cap_satisfied(double alpha, double relaxation) const {
  if (!(alpha > 0.0)) return true;
  if (alpha >= 1.0) return false;
  return alpha * std::log(1.0 / alpha) <= relaxation * log_cap_rhs;
}

double Prop3StepSize::largest_step(double relaxation) const {
  // alpha log(1/alpha) increases on (0, 1/e].
  double hi = std::min(alpha_cap, std::exp(-1.0));
  if (log_cap_satisfied(hi, relaxation)) return hi;
  double lo = 0.0;
  for (int i = 0; i < 200 && lo < hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (log_cap_satisfied(mid, relaxation) ? lo : hi) = mid;
  }
  return lo;
}

Prop3StepSize prop3_step_size(double delta, double zeta, double ell, double varrho, double sigma,
                              double G, double r_max, double gamma) {
  require_positive(delta, "delta");
  require_positive(zeta, "zeta");
  require_positive(ell, "ell");
  require_positive(varrho, "varrho");
  if (!(sigma >= 0.0)) throw InvalidInput("sigma must be nonnegative");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw InvalidInput("gamma must lie in [0,1)");
  Prop3StepSize out;
  out.alpha_cap = std::min({delta, 1.0 / zeta, zeta / (ell * ell)});
  if (sigma > 0.0) out.alpha_cap = std::min(out.alpha_cap, zeta * varrho * varrho / (3.0 * sigma * sigma));
  const double om = 1.0 - gamma;
  const double denom = G * G * r_max * r_max / (om * om) + zeta * varrho * varrho + sigma * sigma;
  out.log_cap_rhs = 2.0 * zeta * std::pow(varrho, 4) / (27.0 * denom * denom);
  return out;
}

}  // namespace sosp_pg
