// Acceptance gate: criteria 1-10, one PASS/FAIL line each.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "../tools/commands.hpp"
#include "sosp_pg/errors.hpp"
#include "sosp_pg/estimators.hpp"
#include "sosp_pg/mdp.hpp"
#include "sosp_pg/oracle.hpp"
#include "sosp_pg/policy.hpp"
#include "sosp_pg/rng.hpp"
#include "sosp_pg/serialize.hpp"
#include "sosp_pg/sosp.hpp"
#include "sosp_pg/trainer.hpp"

using namespace sosp_pg;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigs = SOSP_PG_CONFIG_DIR;

struct Outcome {
  bool pass = false;
  std::string detail;
  /// Deterministic output of the criterion: summaries, files, and values printed at full precision.
  std::map<std::string, std::string> artifacts;
};

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct CommandRun {
  int code;
  Json summary;
};

/// Runs a CLI command with its outputs in `out_dir`; every file produced, and
/// stdout, become artifacts under `tag`.
CommandRun command(const std::string& name, const Json& config, const fs::path& out_dir,
                   const std::string& tag, Outcome& o, const std::string& format = "csv") {
  fs::remove_all(out_dir);
  cli::Options options;
  options.out_dir = out_dir;
  options.config_dir = kConfigs;
  options.format = format;
  std::ostringstream out, err;
  const int code = cli::run_command(name, config, options, out, err);
  CommandRun r{code, Json()};
  if (code == cli::kOk || code == cli::kCheckFailed) r.summary = Json::parse(out.str());
  else std::cerr << err.str();
  o.artifacts[tag + ":stdout"] = out.str();
  if (fs::exists(out_dir)) {
    for (const auto& e : fs::directory_iterator(out_dir)) {
      o.artifacts[tag + ":" + e.path().filename().string()] = slurp(e.path());
    }
  }
  return r;
}

std::size_t pick(CounterRng& rng, std::uint64_t n) { return static_cast<std::size_t>(rng.next_u64() % n); }

Json config(const std::string& name) { return read_json_file(kConfigs / name); }

// ---------------------------------------------------------------------------

Json random_oracle_config(std::size_t count, std::uint64_t seed) {
  return Json{{"command", "oracle-check"},
              {"seed", seed},
              {"random",
               {{"count", count},
                {"max_states", 4},
                {"max_actions", 3},
                {"max_horizon", 6},
                {"max_branching", 2}}}};
}

Outcome criterion1(const fs::path& work) {
  Outcome o;
  const auto r = command("oracle-check", random_oracle_config(50, 2024), work / "c1", "c1", o, "json");
  bool ok = r.code == cli::kOk;
  std::ostringstream d;
  for (const char* id : {"gradient_two_way", "gradient_finite_difference", "performance_difference"}) {
    if (r.summary.is_null()) break;
    const Json& x = r.summary["identities"][id];
    const bool pass = x["passed"].get<bool>() && x["checked"].get<std::size_t>() == 50;
    ok = ok && pass;
    d << id << " " << x["checked"] << "/50 worst/tol " << fmt("%.3g", x["worst_error_over_tolerance"].get<double>())
      << "; ";
  }
  o.pass = ok;
  o.detail = d.str() + "exit " + std::to_string(r.code);
  return o;
}

Outcome criterion2() {
  Outcome o;
  std::size_t instances = 0;
  double worst_g = 0.0, worst_h = 0.0;
  for (std::uint64_t i = 0; instances < 20; ++i) {
    CounterRng rng = CounterRng::derive(7001, i);
    const std::size_t S = 1 + pick(rng, 4), A = 2 + pick(rng, 2), h = 1 + pick(rng, 6);
    const double gamma = 0.3 + 0.65 * rng.uniform();
    const auto m = random_mdp(rng, S, A, h, gamma, 2);
    if (!enumerable(m)) continue;
    ++instances;
    TabularSoftmax pi(S, A);
    Vector theta(static_cast<Eigen::Index>(pi.dim()));
    for (Eigen::Index k = 0; k < theta.size(); ++k) theta(k) = 2.0 * rng.uniform() - 1.0;
    Vector sum_g = Vector::Zero(theta.size());
    enumerate_trajectories(m, pi, theta, [&](double p, const Trajectory& tau) {
      sum_g += p * pg_estimate(tau, pi, theta, m.gamma());
    });
    const Vector grad = dp_gradient(m, pi, theta);
    const Matrix hess = exact_hessian(m, pi, theta);
    const Matrix sum_h = enumerated_hessian_estimate(m, pi, theta);
    worst_g = std::max(worst_g, (sum_g - grad).cwiseAbs().maxCoeff());
    worst_h = std::max(worst_h, (sum_h - hess).cwiseAbs().maxCoeff());
    o.artifacts["c2:" + std::to_string(i)] = to_json(sum_g).dump() + to_json(sum_h).dump();
  }
  o.pass = worst_g <= 1e-8 && worst_h <= 1e-6;
  o.detail = std::to_string(instances) + " instances; max |sum p g - grad J| " + fmt("%.3g", worst_g) +
             " (tol 1e-8), max |sum p H0 - hess J| " + fmt("%.3g", worst_h) + " (tol 1e-6)";
  return o;
}

Outcome criterion3() {
  Outcome o;
  struct Instance {
    std::string name;
    TabularMdp mdp;
    std::shared_ptr<const Policy> policy;
    DomainBox box;
  };
  std::vector<Instance> set;
  for (const char* f : {"bandit", "cycle", "three_state"}) {
    const auto m = load_mdp(kConfigs / "mdps" / (std::string(f) + ".json"));
    set.push_back({f, m, std::make_shared<TabularSoftmax>(m.n_states(), m.n_actions()), {-1.0, 1.0}});
  }
  set.push_back({"example_one", example_one_mdp(), std::make_shared<ExampleOnePiecewise>(), {-0.25, 0.25}});
  {
    CounterRng rng(3003);
    const auto m = random_mdp(rng, 3, 2, 4, 0.7, 2);
    set.push_back({"random_3x2_h4", m, std::make_shared<TabularSoftmax>(3, 2), {-1.0, 1.0}});
  }
  bool ok = true;
  std::ostringstream d;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto& in = set[i];
    CounterRng rng = CounterRng::derive(3004, i);
    Vector theta(static_cast<Eigen::Index>(in.policy->dim()));
    for (Eigen::Index k = 0; k < theta.size(); ++k) {
      theta(k) = in.box.lo + (in.box.hi - in.box.lo) * rng.uniform();
    }
    const double G = estimate_regularity(*in.policy, in.box, 11, false).G;
    const double bound = G * in.mdp.r_max() / std::pow(1.0 - in.mdp.gamma(), 2);
    const auto est = batch_gradient(in.mdp, *in.policy, theta, 100000, trajectory_seed(3005, i),
                                    dp_gradient(in.mdp, *in.policy, theta), bound);
    const bool pass = *est.max_deviation <= bound + 1e-9;
    ok = ok && pass;
    d << in.name << " " << fmt("%.4g", *est.max_deviation) << (pass ? " <= " : " > ") << fmt("%.4g", bound)
      << "; ";
    o.artifacts["c3:" + in.name] = format_double(*est.max_deviation);
  }
  // Same check over the random family of criterion 1, for context only.
  std::size_t violations = 0;
  for (std::uint64_t i = 0; i < 50; ++i) {
    CounterRng rng = CounterRng::derive(3006, i);
    const std::size_t S = 1 + pick(rng, 4), A = 2 + pick(rng, 2), h = 1 + pick(rng, 6);
    const auto m = random_mdp(rng, S, A, h, 0.3 + 0.65 * rng.uniform(), 2);
    TabularSoftmax pi(S, A);
    Vector theta(static_cast<Eigen::Index>(pi.dim()));
    for (Eigen::Index k = 0; k < theta.size(); ++k) theta(k) = 2.0 * rng.uniform() - 1.0;
    const double G = estimate_regularity(pi, {-1.0, 1.0}, 11, false).G;
    const double bound = G * m.r_max() / std::pow(1.0 - m.gamma(), 2);
    const auto est = batch_gradient(m, pi, theta, 10000, trajectory_seed(3007, i), dp_gradient(m, pi, theta));
    violations += *est.max_deviation > bound + 1e-9;
  }
  o.artifacts["c3:family"] = std::to_string(violations);
  o.pass = ok;
  o.detail = d.str() + "random family: " + std::to_string(violations) + "/50 instances exceed the bound";
  return o;
}

Outcome criterion4() {
  Outcome o;
  const double c = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  struct Point {
    double t1, t2, J, g1, g2, lambda;
  };
  // Core [0,1]^2: J = c (1 - t1^2 + t2^2), grad c (-2 t1, 2 t2), lambda 2c.
  // Outside: J = c exp((|t|^2 - 2)/2), grad J t, lambda J (1 + |t|^2).
  const double j15 = c * std::exp(0.125), jm = c * std::exp(-0.75);
  const std::vector<Point> points = {{0.0, 0.0, c, 0.0, 0.0, 2 * c},
                                     {0.5, 0.5, c, -c, c, 2 * c},
                                     {1.5, 0.0, j15, 1.5 * j15, 0.0, 3.25 * j15},
                                     {-0.5, 0.5, jm, -0.5 * jm, 0.5 * jm, 1.5 * jm}};
  double worst = 0.0, worst_pipeline = 0.0;
  std::size_t pipeline_points = 0;
  const auto mdp = example_one_mdp();
  const ExampleOnePiecewise policy;
  for (const auto& p : points) {
    Vector theta(2);
    theta << p.t1, p.t2;
    const auto a = analytic_example1(theta);
    const double lam = sym_eig_max(a.hessian).lambda_max;
    worst = std::max({worst, std::abs(a.J - p.J), std::abs(a.grad(0) - p.g1), std::abs(a.grad(1) - p.g2),
                      std::abs(lam - p.lambda)});
    try {
      const double J = exact_objective(mdp, policy, theta);
      const Vector g = dp_gradient(mdp, policy, theta);
      worst_pipeline = std::max({worst_pipeline, std::abs(J - p.J), std::abs(g(0) - p.g1), std::abs(g(1) - p.g2)});
      ++pipeline_points;
    } catch (const DomainError&) {
      // The printed policy is not a distribution at this point.
    }
  }
  const auto origin = analytic_example1(Vector::Zero(2));
  Vector half(2);
  half << 0.5, 0.5;
  const auto at_half = analytic_example1(half);
  const Region r0 = classify_region(origin.grad, origin.hessian, 0.1, 1.0);
  const Region rh = classify_region(at_half.grad, at_half.hessian, 0.1, 1.0);
  o.pass = worst <= 1e-10 && worst_pipeline <= 1e-10 && r0 == Region::L2 && rh == Region::L1;
  o.detail = "max closed-form error " + fmt("%.3g", worst) + " (tol 1e-10); MDP pipeline at " +
             std::to_string(pipeline_points) + " points, max error " + fmt("%.3g", worst_pipeline) +
             "; origin " + to_string(r0) + ", (0.5,0.5) " + to_string(rh);
  o.artifacts["c4"] = o.detail;
  return o;
}

Outcome criterion5(const fs::path& work) {
  Outcome o;
  const double ell = smoothness_constant(1, 1, 1, 0.5, 2);
  const double sigma = variance_bound(2, 3, 0.5);
  const double chi = hessian_lipschitz_constant(1, 1, 1, 1, 0.5);
  const double sigma_h0 = hessian_estimator_bound(1, 1, 1, 0.9, 5, 2);
  const double alpha = theorem_step_size(0.1, 1, 1, 1, 10, 12);
  const auto K = iteration_budget(0.01, 1, 0.5, 1, 1, 1, 0.1);
  const auto kh = escape_budget(1e-4, 10, 1, 1);
  const auto k0 = trap_budget(0.1, 0.1);
  std::vector<std::pair<std::string, bool>> checks = {
      {"ell=" + fmt("%g", ell), ell == 12.0},
      {"sigma=" + fmt("%g", sigma), sigma == 24.0},
      {"chi=" + fmt("%.3f", chi), std::abs(chi - 62.0 / 3.0) <= 1e-12 && fmt("%.3f", chi) == "20.667"},
      {"sigma_h0=" + fmt("%.2f", sigma_h0), fmt("%.2f", sigma_h0) == "1697.06"},
      {"alpha=" + fmt("%.5e", alpha), fmt("%.5e", alpha) == "1.66650e-05"},
      {"K=" + std::to_string(K), K == 276312},
      {"kappa_hat_0=" + std::to_string(kh), kh == 1053},
      {"kappa_0=" + std::to_string(k0), k0 == 230}};
  const auto r = command("constants", config("constants_sample.json"), work / "c5", "c5", o, "json");
  checks.push_back({"cli ell", r.code == cli::kOk && r.summary["constants"]["ell"].get<double>() == 12.0});
  bool ok = true;
  std::ostringstream d;
  for (const auto& [text, pass] : checks) {
    ok = ok && pass;
    d << text << (pass ? "" : " (mismatch)") << " ";
  }
  o.pass = ok;
  o.detail = d.str();
  o.artifacts["c5"] = o.detail;
  return o;
}

Outcome criterion6() {
  Outcome o;
  const auto b = load_mdp(kConfigs / "mdps" / "bandit.json");
  auto pi = std::make_shared<TabularSoftmax>(1, 2);
  const MdpObjective source(b, pi);
  const auto reg = estimate_regularity(*pi, {-1.0, 1.0}, 21, false);
  const double ell = smoothness_constant(reg.G, reg.L, b.r_max(), b.gamma(), b.horizon());
  const double sigma = variance_bound(reg.G, b.r_max(), b.gamma());
  const double eps = 0.15;
  const double alpha = 0.5 * std::min(2 * eps * eps / ((eps * eps + sigma * sigma) * ell), 2 / ell);
  const auto r = verify_prop1(source, Vector::Zero(2), alpha, 10000, 6006, eps, ell, sigma);
  o.pass = r.passes && r.trials == 10000;
  o.detail = "bandit at (0,0), |grad J| " + fmt("%.4g", r.grad_norm) + ", eps " + fmt("%g", eps) + ", alpha " +
             fmt("%.4g", alpha) + ", mean gain " + fmt("%.5g", r.empirical_mean_gain) + " (se " +
             fmt("%.2g", r.std_error) + ") vs bound " + fmt("%.5g", r.bound);
  o.artifacts["c6"] = format_double(r.empirical_mean_gain) + " " + format_double(r.bound);
  return o;
}

Outcome criterion7(const fs::path& work) {
  Outcome o;
  const auto r = command("escape", config("escape_benchmark.json"), work / "c7", "c7", o);
  if (r.summary.is_null()) return {false, "escape command failed, exit " + std::to_string(r.code), o.artifacts};
  const double f = r.summary["escape"]["escape_fraction"].get<double>();
  const double cf = r.summary["contrast"]["escape_fraction"].get<double>();
  const double gap = r.summary["coupled"]["exact_source_max_gap"].get<double>();
  o.pass = r.code == cli::kOk && f >= 0.9 && cf <= 0.1 && gap <= 1e-12 &&
           r.summary["runs"].get<std::size_t>() == 200;
  o.detail = "escape fraction " + fmt("%.3f", f) + " (>= 0.9), orthogonal-noise fraction " + fmt("%.3f", cf) +
             " (<= 0.1), exact coupled gap " + fmt("%.3g", gap) + " (<= 1e-12), kappa_hat_0 " +
             r.summary["escape"]["kappa_hat_0"].dump() + ", gap ratio " + r.summary["coupled"]["gap_ratio"].dump();
  return o;
}

Outcome criterion8(const fs::path& work) {
  Outcome o;
  std::ostringstream d;
  bool ok = true;
  for (const char* name : {"trap_benchmark.json", "trap_log_cap.json"}) {
    const auto r = command("trap", config(name), work / ("c8_" + std::string(name)), std::string("c8:") + name, o);
    if (r.summary.is_null()) return {false, std::string(name) + " failed", o.artifacts};
    const double s = r.summary["stay_fraction"].get<double>();
    const double need = 1.0 - 0.2 * std::log(5.0) - 0.05;
    const bool pass = r.code == cli::kOk && s >= need && r.summary["runs"].get<std::size_t>() == 500;
    ok = ok && pass;
    d << "alpha " << fmt("%.4g", r.summary["alpha"].get<double>()) << " (kappa_0 " << r.summary["kappa_0"]
      << ", log cap " << (r.summary["log_cap_satisfied"].get<bool>() ? "met" : "not met") << "): stay "
      << fmt("%.3f", s) << " >= " << fmt("%.3f", need) << "; ";
  }
  o.pass = ok;
  o.detail = d.str();
  return o;
}

Outcome criterion9(const fs::path& work) {
  Outcome o;
  const auto r = command("train", config("train_example_one.json"), work / "c9", "c9", o);
  if (r.summary.is_null()) return {false, "train command failed, exit " + std::to_string(r.code), o.artifacts};
  const double frac = r.summary["l3_fraction"].get<double>();
  const auto iters = r.summary["max_iters"].get<std::size_t>();
  o.pass = r.code == cli::kOk && frac >= 0.5 && iters <= 1000000 && r.summary["runs"].get<std::size_t>() == 100 &&
           r.summary["derived"]["alpha_rule"] == "theorem";
  o.detail = "L3 fraction " + fmt("%.2f", frac) + " over " + r.summary["runs"].dump() + " runs (>= 0.5), alpha " +
             fmt("%.4g", r.summary["alpha"].get<double>()) + ", budget " + std::to_string(iters) +
             " updates (K " + r.summary["derived"]["K"].dump() + " capped at 1e6), iota " +
             fmt("%.4g", r.summary["derived"]["iota"].get<double>());
  return o;
}

using Criterion = std::function<Outcome(const fs::path&)>;

}  // namespace

int main() {
  const fs::path work = fs::temp_directory_path() / "sosp_pg_acceptance";
  const std::vector<std::pair<Criterion, double>> criteria = {
      {criterion1, 30},
      {[](const fs::path&) { return criterion2(); }, 60},
      {[](const fs::path&) { return criterion3(); }, 60},
      {[](const fs::path&) { return criterion4(); }, 1},
      {criterion5, 1},
      {[](const fs::path&) { return criterion6(); }, 60},
      {criterion7, 300},
      {criterion8, 300},
      {criterion9, 600}};

  bool all = true;
  std::vector<Outcome> first;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].first(work / "first");
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < criteria[i].second;
    const bool pass = o.pass && in_time;
    all = all && pass;
    std::cout << "criterion " << i + 1 << ": " << (pass ? "PASS" : "FAIL") << " [" << fmt("%.1f", secs) << " s, limit "
              << fmt("%g", criteria[i].second) << " s" << (in_time ? "" : ", over limit") << "] " << o.detail
              << std::endl;
    first.push_back(std::move(o));
  }

  // Criterion 10: rerun every criterion and compare its artifacts byte for byte.
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t compared = 0;
  std::vector<std::string> differing;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome again;
    try {
      again = criteria[i].first(work / "second");
    } catch (const std::exception& e) {
      differing.push_back("criterion " + std::to_string(i + 1) + " threw: " + e.what());
      continue;
    }
    if (again.artifacts.size() != first[i].artifacts.size()) {
      differing.push_back("criterion " + std::to_string(i + 1) + " artifact set");
    }
    for (const auto& [name, bytes] : first[i].artifacts) {
      ++compared;
      const auto it = again.artifacts.find(name);
      if (it == again.artifacts.end() || it->second != bytes) differing.push_back(name);
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool det = differing.empty() && compared > 0;
  all = all && det;
  std::cout << "criterion 10: " << (det ? "PASS" : "FAIL") << " [" << fmt("%.1f", secs) << " s] " << compared
            << " artifacts byte-identical across repeated runs";
  for (const auto& d : differing) std::cout << "; differs: " << d;
  std::cout << std::endl;
  fs::remove_all(work);
  return all ? 0 : 1;
}
