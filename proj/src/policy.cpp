#include "sosp_pg/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "sosp_pg/errors.hpp"

namespace sosp_pg {
namespace {

const double kInvSqrt2Pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);

std::string theta_string(const Vector& theta) {
  std::ostringstream os;
  os.precision(17);
  os << "theta=(";
  for (Eigen::Index i = 0; i < theta.size(); ++i) os << (i ? "," : "") << theta[i];
  os << ")";
  return os.str();
}

}  // namespace

std::string to_string(PolicyFamily family) {
  switch (family) {
    case PolicyFamily::TabularSoftmax:
      return "tabular_softmax";
    case PolicyFamily::ExampleOnePiecewise:
      return "example_one";
  }
  return "unknown";
}

PolicyFamily parse_policy_family(std::string_view tag) {
  if (tag == "tabular_softmax") return PolicyFamily::TabularSoftmax;
  if (tag == "example_one") return PolicyFamily::ExampleOnePiecewise;
  throw ConfigError("policy: unknown family tag '" + std::string(tag) + "'");
}

void Policy::check_theta(const Vector& theta) const {
  if (static_cast<std::size_t>(theta.size()) != dim()) {
    throw InvalidInput("theta has dimension " + std::to_string(theta.size()) + ", policy " +
                       to_string(family()) + " expects " + std::to_string(dim()));
  }
  if (!theta.allFinite()) throw InvalidInput("theta has non-finite entries");
}

void Policy::check_state_action(std::size_t state, std::size_t action) const {
  if (state >= n_states() || action >= n_actions()) {
    throw InvalidInput("state/action (" + std::to_string(state) + "," + std::to_string(action) +
                       ") out of range");
  }
}

Vector Policy::grad_log_prob(const Vector& theta, std::size_t state, std::size_t action) const {
  const double p = action_probs(theta, state)[static_cast<Eigen::Index>(action)];
  if (!(p > 0.0)) {
    throw DomainError("log-probability undefined: action " + std::to_string(action) +
                      " has probability 0 at state " + std::to_string(state) + ", " +
                      theta_string(theta));
  }
  return grad_prob(theta, state, action) / p;
}

Matrix Policy::hessian_log_prob(const Vector& theta, std::size_t state, std::size_t action) const {
  const double p = action_probs(theta, state)[static_cast<Eigen::Index>(action)];
  if (!(p > 0.0)) {
    throw DomainError("log-probability undefined: action " + std::to_string(action) +
                      " has probability 0 at state " + std::to_string(state) + ", " +
                      theta_string(theta));
  }
  const Vector g = grad_prob(theta, state, action);
  Matrix h = hessian_prob(theta, state, action) / p - (g * g.transpose()) / (p * p);
  return 0.5 * (h + h.transpose());
}

// ---------------------------------------------------------------------------
// TabularSoftmax

TabularSoftmax::TabularSoftmax(std::size_t n_states, std::size_t n_actions)
    : n_states_(n_states), n_actions_(n_actions) {
  if (n_states == 0 || n_actions == 0) throw InvalidInput("softmax policy needs S, A >= 1");
}

Vector TabularSoftmax::action_probs(const Vector& theta, std::size_t state) const {
  check_theta(theta);
  if (state >= n_states_) throw InvalidInput("state out of range");
  const auto logits = theta.segment(static_cast<Eigen::Index>(state * n_actions_),
                                    static_cast<Eigen::Index>(n_actions_));
  const double shift = logits.maxCoeff();
  Vector e = (logits.array() - shift).exp().matrix();
  return e / e.sum();
}

Vector TabularSoftmax::grad_log_prob(const Vector& theta, std::size_t state,
                                     std::size_t action) const {
  check_state_action(state, action);
  const Vector pi = action_probs(theta, state);
  Vector g = Vector::Zero(static_cast<Eigen::Index>(dim()));
  const auto off = static_cast<Eigen::Index>(state * n_actions_);
  g.segment(off, pi.size()) = -pi;
  g[off + static_cast<Eigen::Index>(action)] += 1.0;
  return g;
}

Matrix TabularSoftmax::hessian_log_prob(const Vector& theta, std::size_t state,
                                        std::size_t action) const {
  check_state_action(state, action);
  const Vector pi = action_probs(theta, state);
  Matrix h = Matrix::Zero(static_cast<Eigen::Index>(dim()), static_cast<Eigen::Index>(dim()));
  const auto off = static_cast<Eigen::Index>(state * n_actions_);
  h.block(off, off, pi.size(), pi.size()) =
      pi * pi.transpose() - Matrix(pi.asDiagonal());
  return h;
}

Vector TabularSoftmax::grad_prob(const Vector& theta, std::size_t state,
                                 std::size_t action) const {
  const double p = action_probs(theta, state)[static_cast<Eigen::Index>(action)];
  return p * grad_log_prob(theta, state, action);
}

Matrix TabularSoftmax::hessian_prob(const Vector& theta, std::size_t state,
                                    std::size_t action) const {
  const double p = action_probs(theta, state)[static_cast<Eigen::Index>(action)];
  const Vector g = grad_log_prob(theta, state, action);
  return p * (hessian_log_prob(theta, state, action) + g * g.transpose());
}

std::vector<std::size_t> TabularSoftmax::block(std::size_t state) const {
  std::vector<std::size_t> idx(n_actions_);
  for (std::size_t a = 0; a < n_actions_; ++a) idx[a] = state * n_actions_ + a;
  return idx;
}

// ---------------------------------------------------------------------------
// ExampleOnePiecewise

bool ExampleOnePiecewise::in_core(const Vector& theta) {
  return theta[0] >= 0.0 && theta[0] <= 1.0 && theta[1] >= 0.0 && theta[1] <= 1.0;
}

Vector ExampleOnePiecewise::action_probs(const Vector& theta, std::size_t state) const {
  check_theta(theta);
  Vector pi = Vector::Zero(3);
  switch (state) {
    case kS0: {
      if (in_core(theta)) {
        pi[kRight] = kInvSqrt2Pi * (1.0 - theta[0] * theta[0] + theta[1] * theta[1]);
      } else {
        pi[kLeft] = kInvSqrt2Pi * std::exp(-(2.0 - theta.squaredNorm()) / 2.0);
      }
      pi[kUp] = 1.0 - pi[kRight] - pi[kLeft];
      for (Eigen::Index a = 0; a < 3; ++a) {
        if (pi[a] < 0.0 || pi[a] > 1.0) {
          throw DomainError("example_one policy is not a distribution at " +
                            theta_string(theta));
        }
      }
      return pi;
    }
    case kS1:
      pi[kRight] = 1.0;
      return pi;
    case kS2:
      pi[kLeft] = 1.0;
      return pi;
    default:
      throw InvalidInput("state out of range for example_one policy");
  }
}

Vector ExampleOnePiecewise::grad_prob(const Vector& theta, std::size_t state,
                                      std::size_t action) const {
  check_state_action(state, action);
  check_theta(theta);
  Vector g = Vector::Zero(2);
  if (state != kS0) return g;
  Vector dp = Vector::Zero(2);  // derivative of the active branch's probability
  if (in_core(theta)) {
    dp << -2.0 * theta[0], 2.0 * theta[1];
    dp *= kInvSqrt2Pi;
    if (action == kRight) return dp;
  } else {
    dp = action_probs(theta, kS0)[kLeft] * theta;
    if (action == kLeft) return dp;
  }
  if (action == kUp) return -dp;
  return g;
}

Matrix ExampleOnePiecewise::hessian_prob(const Vector& theta, std::size_t state,
                                         std::size_t action) const {
  check_state_action(state, action);
  check_theta(theta);
  Matrix h = Matrix::Zero(2, 2);
  if (state != kS0) return h;
  Matrix d2p(2, 2);
  if (in_core(theta)) {
    d2p << -2.0, 0.0, 0.0, 2.0;
    d2p *= kInvSqrt2Pi;
    if (action == kRight) return d2p;
  } else {
    const double p2 = action_probs(theta, kS0)[kLeft];
    d2p = p2 * (Matrix::Identity(2, 2) + theta * theta.transpose());
    if (action == kLeft) return d2p;
  }
  if (action == kUp) return -d2p;
  return h;
}

std::vector<std::size_t> ExampleOnePiecewise::block(std::size_t state) const {
  if (state == kS0) return {0, 1};
  return {};
}

std::unique_ptr<Policy> make_policy(PolicyFamily family, std::size_t n_states,
                                    std::size_t n_actions) {
  switch (family) {
    case PolicyFamily::TabularSoftmax:
      return std::make_unique<TabularSoftmax>(n_states, n_actions);
    case PolicyFamily::ExampleOnePiecewise:
      if (n_states != 3 || n_actions != 3) {
        throw ConfigError("policy: example_one requires 3 states and 3 actions");
      }
      return std::make_unique<ExampleOnePiecewise>();
  }
  throw ConfigError("policy: unknown family");
}

// ---------------------------------------------------------------------------
// Regularity estimation

RegularityConstants estimate_regularity(const Policy& policy, DomainBox box,
                                        std::size_t grid_density, bool estimate_w) {
  if (!(box.lo <= box.hi) || grid_density == 0) {
    throw InvalidInput("estimate_regularity: empty box or zero grid density");
  }
  RegularityConstants out;
  out.domain_box = box;
  out.grid_density = grid_density;
  out.grid_spacing = grid_density > 1 ? (box.hi - box.lo) / double(grid_density - 1) : 0.0;
  const double mid = 0.5 * (box.lo + box.hi);
  auto coord = [&](std::size_t k) {
    return grid_density > 1 ? box.lo + out.grid_spacing * double(k) : mid;
  };

  double w_max = 0.0;
  bool w_seen = false;
  const std::size_t p = policy.dim();
  for (std::size_t s = 0; s < policy.n_states(); ++s) {
    const std::vector<std::size_t> blk = policy.block(s);
    std::size_t n_points = 1;
    for (std::size_t i = 0; i < blk.size(); ++i) {
      n_points *= grid_density;
      if (n_points > 10'000'000) throw InvalidInput("estimate_regularity: grid too large");
    }
    std::vector<std::size_t> digits(blk.size(), 0);
    for (std::size_t n = 0; n < n_points; ++n) {
      std::size_t rem = n;
      Vector theta = Vector::Constant(static_cast<Eigen::Index>(p), mid);
      for (std::size_t i = 0; i < blk.size(); ++i) {
        digits[i] = rem % grid_density;
        rem /= grid_density;
        theta[static_cast<Eigen::Index>(blk[i])] = coord(digits[i]);
      }
      Vector pi;
      try {
        pi = policy.action_probs(theta, s);
      } catch (const DomainError&) {
        continue;
      }
      for (std::size_t a = 0; a < policy.n_actions(); ++a) {
        out.U = std::max(out.U, policy.grad_prob(theta, s, a).cwiseAbs().maxCoeff());
        if (!(pi[static_cast<Eigen::Index>(a)] > 0.0)) continue;
        out.G = std::max(out.G, policy.grad_log_prob(theta, s, a).cwiseAbs().maxCoeff());
        const Matrix h = policy.hessian_log_prob(theta, s, a);
        out.L = std::max(out.L, h.cwiseAbs().maxCoeff());
        if (!estimate_w || grid_density < 2) continue;
        for (std::size_t i = 0; i < blk.size(); ++i) {
          if (digits[i] + 1 >= grid_density) continue;
          Vector nb = theta;
          nb[static_cast<Eigen::Index>(blk[i])] = coord(digits[i] + 1);
          try {
            const Vector pn = policy.action_probs(nb, s);
            if (!(pn[static_cast<Eigen::Index>(a)] > 0.0)) continue;
            const Matrix diff = policy.hessian_log_prob(nb, s, a) - h;
            const double op = Eigen::SelfAdjointEigenSolver<Matrix>(diff, Eigen::EigenvaluesOnly)
                                  .eigenvalues()
                                  .cwiseAbs()
                                  .maxCoeff();
            w_max = std::max(w_max, op / out.grid_spacing);
            w_seen = true;
          } catch (const DomainError&) {
          }
        }
      }
    }
  }
  if (estimate_w) out.W = w_seen ? w_max : 0.0;
  return out;
}

}  // namespace sosp_pg
