#include <gtest/gtest.h>

#include <cmath>

#include "helpers.hpp"
#include "sosp_pg/errors.hpp"
#include "sosp_pg/mdp.hpp"
#include "sosp_pg/serialize.hpp"

using namespace sosp_pg;
using namespace sosp_pg::testing;

namespace {

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(MdpValidation, RejectsBadRowsAndNamesTheIndex) {
  Matrix R = Matrix::Zero(1, 2);
  const auto msg = error_of([&] {
    TabularMdp({{{1.0}, {0.9}}}, R, Vector::Ones(1), 0.5, 1, 0.0, 1.0);
  });
  EXPECT_NE(msg.find("transition[0][1]"), std::string::npos) << msg;
}

TEST(MdpValidation, RejectsGammaHorizonRewardsAndRho) {
  Matrix R = Matrix::Zero(1, 1);
  EXPECT_THROW(TabularMdp({{{1.0}}}, R, Vector::Ones(1), 1.0, 1, 0.0, 1.0), ConfigError);
  EXPECT_THROW(TabularMdp({{{1.0}}}, R, Vector::Ones(1), 0.5, 0, 0.0, 1.0), ConfigError);
  Matrix big = Matrix::Constant(1, 1, 2.0);
  EXPECT_NE(error_of([&] { TabularMdp({{{1.0}}}, big, Vector::Ones(1), 0.5, 1, 0.0, 1.0); })
                .find("reward"),
            std::string::npos);
  EXPECT_NE(error_of([&] { TabularMdp({{{1.0}}}, R, Vector::Constant(1, 0.5), 0.5, 1, 0.0, 1.0); })
                .find("rho0"),
            std::string::npos);
}

TEST(MdpJson, RoundTripsAndNamesKeyPaths) {
  const TabularMdp m = two_cycle(0.5, 4);
  const Json j = mdp_to_json(m);
  const TabularMdp back = mdp_from_json(j);
  EXPECT_EQ(mdp_to_json(back).dump(), j.dump());

  Json bad = j;
  bad["transition"][1][0] = {0.5, 0.2};
  EXPECT_NE(error_of([&] { mdp_from_json(bad); }).find("transition[1][0]"), std::string::npos);
  Json missing = j;
  missing.erase("gamma");
  EXPECT_NE(error_of([&] { mdp_from_json(missing); }).find("gamma"), std::string::npos);
  Json extra = j;
  extra["discount"] = 0.5;
  EXPECT_NE(error_of([&] { mdp_from_json(extra); }).find("discount"), std::string::npos);
  Json shape = j;
  shape["reward"] = {{0.5}, {0.5, 0.1}};
  EXPECT_NE(error_of([&] { mdp_from_json(shape); }).find("reward[1]"), std::string::npos);
}

TEST(SampleTrajectory, SingleStateSingleActionRepeats) {
  const auto m = single_action(1.0, 0.5, 5);
  TabularSoftmax pi(1, 1);
  const auto tau = sample_trajectory(m, pi, Vector::Zero(1), 123);
  ASSERT_EQ(tau.steps.size(), 5u);
  for (const auto& s : tau.steps) {
    EXPECT_EQ(s.state, 0u);
    EXPECT_EQ(s.action, 0u);
    EXPECT_EQ(s.reward, 1.0);
  }
}

TEST(SampleTrajectory, DeterministicGivenSeed) {
  CounterRng rng(5);
  const auto m = random_mdp(rng, 3, 2, 8, 0.9, 3);
  TabularSoftmax pi(3, 2);
  const Vector theta = random_theta(rng, 6);
  const auto a = sample_trajectory(m, pi, theta, 77);
  const auto b = sample_trajectory(m, pi, theta, 77);
  ASSERT_EQ(a.steps.size(), b.steps.size());
  for (std::size_t t = 0; t < a.steps.size(); ++t) {
    EXPECT_EQ(a.steps[t].state, b.steps[t].state);
    EXPECT_EQ(a.steps[t].action, b.steps[t].action);
    EXPECT_EQ(a.steps[t].reward, m.reward(a.steps[t].state, a.steps[t].action));
  }
}

TEST(SampleTrajectory, ShapeMismatchIsConfigError) {
  const auto m = bandit();
  TabularSoftmax pi(2, 2);
  EXPECT_THROW(sample_trajectory(m, pi, Vector::Zero(4), 1), ConfigError);
}

TEST(SampleTrajectory, ExampleOneRightFrequencyAtOrigin) {
  const auto m = example_one_mdp();
  ExampleOnePiecewise pi;
  const std::size_t n = 100000;
  std::size_t right = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto tau = sample_trajectory(m, pi, Vector::Zero(2), trajectory_seed(31, i));
    right += tau.steps[0].action == ExampleOnePiecewise::kRight;
  }
  const double p = kInvSqrt2Pi;
  const double freq = double(right) / double(n);
  EXPECT_LE(std::abs(freq - p), 3.0 * std::sqrt(p * (1 - p) / n));
}

TEST(DiscountedReturn, Examples) {
  auto traj = [](std::vector<double> rs) {
    Trajectory t;
    for (double r : rs) t.steps.push_back({0, 0, r});
    return t;
  };
  EXPECT_DOUBLE_EQ(discounted_return(traj({1, 1, 1}), 0.5), 1.75);
  EXPECT_EQ(discounted_return(traj({0, 0, 0, 0}), 0.7), 0.0);
  EXPECT_NEAR(discounted_return(traj({2, 3}), 0.9), 4.7, 1e-15);
  EXPECT_THROW(discounted_return(Trajectory{}, 0.5), InvalidInput);
}

TEST(Occupancy, Examples) {
  TabularSoftmax one(1, 1);
  EXPECT_NEAR(occupancy(single_action(1.0, 0.5, 3), one, Vector::Zero(1))(0), 1.75, 1e-15);

  CounterRng rng(9);
  const auto m = random_mdp(rng, 3, 2, 1, 0.9, 3);
  TabularSoftmax pi(3, 2);
  EXPECT_LT((occupancy(m, pi, random_theta(rng, 6)) - m.rho0()).cwiseAbs().maxCoeff(), 1e-15);

  TabularSoftmax cycle_pi(2, 1);
  const Vector d = occupancy(two_cycle(0.5, 4), cycle_pi, Vector::Zero(2));
  EXPECT_NEAR(d(0), 1.25, 1e-15);
  EXPECT_NEAR(d(1), 0.625, 1e-15);
}

TEST(ValueFunctions, Examples) {
  TabularSoftmax one(1, 1);
  const auto v = value_functions(single_action(1.0, 0.5, 2), one, Vector::Zero(1));
  EXPECT_DOUBLE_EQ(v.V(0), 1.5);
  EXPECT_DOUBLE_EQ(v.Q(0, 0), 1.5);
  EXPECT_DOUBLE_EQ(v.A(0, 0), 0.0);

  CounterRng rng(4);
  const auto m = random_mdp(rng, 3, 3, 1, 0.8, 2);
  TabularSoftmax pi(3, 3);
  EXPECT_LT((value_functions(m, pi, random_theta(rng, 9)).Q - m.reward()).cwiseAbs().maxCoeff(), 1e-15);

  TabularSoftmax two(1, 2);
  const auto b = value_functions(bandit(), two, Vector::Zero(2));
  EXPECT_DOUBLE_EQ(b.V(0), 0.5);
  EXPECT_DOUBLE_EQ(b.A(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(b.A(0, 1), -0.5);
}

TEST(PerformanceDifference, IdentityAndBandit) {
  TabularSoftmax two(1, 2);
  const auto same = performance_difference_check(bandit(), two, vec({0.3, -0.2}), vec({0.3, -0.2}));
  EXPECT_NEAR(same.lhs, 0.0, 1e-15);
  EXPECT_NEAR(same.rhs, 0.0, 1e-15);

  // Logits (50, -50) make pi_a = (1, 0) to double precision.
  const auto pd = performance_difference_check(bandit(), two, vec({50, -50}), vec({0, 0}));
  EXPECT_NEAR(pd.lhs, 0.5, 1e-12);
  EXPECT_NEAR(pd.rhs, 0.5, 1e-12);
}

TEST(PerformanceDifference, LongHorizonWithinTail) {
  CounterRng rng(12);
  const auto m = random_mdp(rng, 3, 2, 30, 0.5, 3);
  TabularSoftmax pi(3, 2);
  const auto pd = performance_difference_check(m, pi, random_theta(rng, 6), random_theta(rng, 6));
  EXPECT_DOUBLE_EQ(pd.tolerance, 2.0 * std::pow(0.5, 30) * m.r_max() / 0.5);
  EXPECT_LE(std::abs(pd.lhs - pd.rhs), pd.tolerance);
}

TEST(MdpProperties, OccupancyMassCenteringAndPerformanceDifference) {
  for (std::uint64_t i = 0; i < 100; ++i) {
    CounterRng rng = CounterRng::derive(2024, i);
    const std::size_t S = 1 + i % 4, A = 1 + i % 3, h = 1 + i % 7;
    const double gamma = 0.1 + 0.85 * rng.uniform();
    const auto m = random_mdp(rng, S, A, h, gamma, 3);
    TabularSoftmax pi(S, A);
    const Vector ta = random_theta(rng, S * A, 2.0), tb = random_theta(rng, S * A, 2.0);

    const double mass = (1.0 - std::pow(gamma, double(h))) / (1.0 - gamma);
    const Vector d = occupancy(m, pi, ta);
    EXPECT_NEAR(d.sum(), mass, 1e-10);
    EXPECT_GE(d.minCoeff(), 0.0);

    const auto v = value_functions(m, pi, ta);
    for (std::size_t s = 0; s < S; ++s) {
      EXPECT_NEAR(pi.action_probs(ta, s).dot(v.A.row(Eigen::Index(s)).transpose()), 0.0, 1e-12);
    }
    const auto pd = performance_difference_check(m, pi, ta, tb);
    EXPECT_LE(std::abs(pd.lhs - pd.rhs), pd.tolerance) << "instance " << i;
  }
}

TEST(MdpProperties, SampledVisitsMatchOccupancy) {
  CounterRng rng(77);
  const auto m = random_mdp(rng, 4, 2, 6, 0.8, 3);
  TabularSoftmax pi(4, 2);
  const Vector theta = random_theta(rng, 8);
  const Vector d = occupancy(m, pi, theta);
  const double mass = d.sum();
  const std::size_t n = 100000;
  // Per trajectory, the discounted visit weight of each state over the total mass.
  Matrix w = Matrix::Zero(Eigen::Index(n), 4);
  for (std::size_t i = 0; i < n; ++i) {
    const auto tau = sample_trajectory(m, pi, theta, trajectory_seed(5, i));
    double g = 1.0;
    for (const auto& step : tau.steps) {
      w(Eigen::Index(i), Eigen::Index(step.state)) += g / mass;
      g *= m.gamma();
    }
  }
  for (Eigen::Index s = 0; s < 4; ++s) {
    const double mean = w.col(s).mean();
    const double var = (w.col(s).array() - mean).square().sum() / double(n - 1);
    const double se = std::sqrt(var / double(n));
    EXPECT_LE(std::abs(mean - d(s) / mass), 4.0 * se + 1e-15) << "state " << s;
  }
}

TEST(ExampleOneMdp, MatchesFigureAndRejectsOtherShapes) {
  const auto m = example_one_mdp();
  EXPECT_EQ(m.n_states(), 3u);
  EXPECT_EQ(m.transition(0, ExampleOnePiecewise::kRight, 1), 1.0);
  EXPECT_EQ(m.transition(0, ExampleOnePiecewise::kLeft, 2), 1.0);
  EXPECT_EQ(m.transition(0, ExampleOnePiecewise::kUp, 0), 1.0);
  EXPECT_EQ(m.reward(0, ExampleOnePiecewise::kRight), 1.0);
  EXPECT_EQ(m.reward(0, ExampleOnePiecewise::kUp), 0.0);
  ExampleOnePiecewise pi;
  EXPECT_NO_THROW(check_policy_shape(m, pi));
  CounterRng rng(1);
  EXPECT_THROW(check_policy_shape(random_mdp(rng, 3, 3, 1, 0.5, 2), pi), ConfigError);
}
