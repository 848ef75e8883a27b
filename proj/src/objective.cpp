#include "sosp_pg/objective.hpp"

#include "sosp_pg/errors.hpp"
#include "sosp_pg/estimators.hpp"
#include "sosp_pg/oracle.hpp"

namespace sosp_pg {

MdpObjective::MdpObjective(TabularMdp mdp, std::shared_ptr<const Policy> policy)
    : mdp_(std::move(mdp)), policy_(std::move(policy)) {
  if (!policy_) throw InvalidInput("MdpObjective: null policy");
  check_policy_shape(mdp_, *policy_);
}

double MdpObjective::value(const Vector& theta) const {
  return exact_objective(mdp_, *policy_, theta);
}

Vector MdpObjective::gradient(const Vector& theta) const {
  return visitation_gradient(mdp_, *policy_, theta);
}

Matrix MdpObjective::hessian(const Vector& theta) const {
  return exact_hessian(mdp_, *policy_, theta);
}

Vector MdpObjective::sample_gradient(const Vector& theta, std::uint64_t seed) const {
  return pg_estimate(sample_trajectory(mdp_, *policy_, theta, seed), *policy_, theta,
                     mdp_.gamma());
}

Matrix MdpObjective::sample_hessian(const Vector& theta, std::uint64_t seed) const {
  return hessian_estimate(sample_trajectory(mdp_, *policy_, theta, seed), *policy_, theta,
                          mdp_.gamma());
}

std::string MdpObjective::describe() const {
  return "mdp(" + std::to_string(mdp_.n_states()) + "x" + std::to_string(mdp_.n_actions()) +
         ", h=" + std::to_string(mdp_.horizon()) + ", " + to_string(policy_->family()) + ")";
}

ExampleOneAnalyticObjective::ExampleOneAnalyticObjective(double gamma)
    : sampler_(example_one_mdp(gamma, 1), std::make_shared<ExampleOnePiecewise>()) {}

double ExampleOneAnalyticObjective::value(const Vector& theta) const {
  return analytic_example1(theta).J;
}

Vector ExampleOneAnalyticObjective::gradient(const Vector& theta) const {
  return analytic_example1(theta).grad;
}

Matrix ExampleOneAnalyticObjective::hessian(const Vector& theta) const {
  return analytic_example1(theta).hessian;
}

Vector ExampleOneAnalyticObjective::sample_gradient(const Vector& theta,
                                                    std::uint64_t seed) const {
  return sampler_.sample_gradient(theta, seed);
}

Matrix ExampleOneAnalyticObjective::sample_hessian(const Vector& theta,
                                                   std::uint64_t seed) const {
  return sampler_.sample_hessian(theta, seed);
}

}  // namespace sosp_pg
