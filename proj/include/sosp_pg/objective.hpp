#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>

#include "sosp_pg/mdp.hpp"
#include "sosp_pg/policy.hpp"
#include "sosp_pg/types.hpp"

namespace sosp_pg {

/// An objective J to be maximized, with exact first/second-order oracles and
/// a stochastic gradient/Hessian source. A draw is identified by its seed, so
/// two calls with the same seed see the same randomness.
class StochasticObjective {
 public:
  virtual ~StochasticObjective() = default;

  virtual std::size_t dim() const = 0;
  virtual double value(const Vector& theta) const = 0;
  virtual Vector gradient(const Vector& theta) const = 0;
  virtual Matrix hessian(const Vector& theta) const = 0;
  virtual Vector sample_gradient(const Vector& theta, std::uint64_t seed) const = 0;
  virtual Matrix sample_hessian(const Vector& theta, std::uint64_t seed) const = 0;
  virtual std::string describe() const = 0;
};

/// J(theta) of a tabular MDP under a policy family. Oracles use dynamic
/// programming; samples are single REINFORCE trajectories.
class MdpObjective final : public StochasticObjective {
 public:
  MdpObjective(TabularMdp mdp, std::shared_ptr<const Policy> policy);

  std::size_t dim() const override { return policy_->dim(); }
  double value(const Vector& theta) const override;
  Vector gradient(const Vector& theta) const override;
  Matrix hessian(const Vector& theta) const override;
  Vector sample_gradient(const Vector& theta, std::uint64_t seed) const override;
  Matrix sample_hessian(const Vector& theta, std::uint64_t seed) const override;
  std::string describe() const override;

  const TabularMdp& mdp() const { return mdp_; }
  const Policy& policy() const { return *policy_; }
  std::shared_ptr<const Policy> policy_ptr() const { return policy_; }

 private:
  TabularMdp mdp_;
  std::shared_ptr<const Policy> policy_;
};

/// Closed-form objective of the three-state example; samples come from the
/// example MDP at horizon 1, where the two agree exactly.
class ExampleOneAnalyticObjective final : public StochasticObjective {
 public:
  explicit ExampleOneAnalyticObjective(double gamma = 0.5);

  std::size_t dim() const override { return 2; }
  double value(const Vector& theta) const override;
  Vector gradient(const Vector& theta) const override;
  Matrix hessian(const Vector& theta) const override;
  Vector sample_gradient(const Vector& theta, std::uint64_t seed) const override;
  Matrix sample_hessian(const Vector& theta, std::uint64_t seed) const override;
  std::string describe() const override { return "example_one_analytic"; }

 private:
  MdpObjective sampler_;
};

}  // namespace sosp_pg
