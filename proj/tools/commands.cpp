#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <limits>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include "sosp_pg/errors.hpp"
#include "sosp_pg/estimators.hpp"
#include "sosp_pg/mdp.hpp"
#include "sosp_pg/objective.hpp"
#include "sosp_pg/oracle.hpp"
#include "sosp_pg/parallel.hpp"
#include "sosp_pg/policy.hpp"
#include "sosp_pg/rng.hpp"
#include "sosp_pg/sosp.hpp"
#include "sosp_pg/trainer.hpp"

namespace sosp_pg::cli {

namespace {

namespace fs = std::filesystem;

/// Typed access to one JSON object; remembers which keys were read so that
/// finish() can reject the rest.
class Reader {
 public:
  Reader(const Json& j, std::string path) : j_(&j), path_(std::move(path)) {
    if (!j.is_object()) throw ConfigError(label() + ": expected an object");
  }

  bool has(const std::string& key) const { return j_->contains(key); }
  void skip(const std::string& key) { used_.insert(key); }

  const Json& raw(const std::string& key) {
    used_.insert(key);
    const auto it = j_->find(key);
    if (it == j_->end()) throw ConfigError(at(key) + ": missing");
    return *it;
  }

  double number(const std::string& key) {
    const Json& v = raw(key);
    if (!v.is_number()) throw ConfigError(at(key) + ": expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw ConfigError(at(key) + ": must be finite");
    return x;
  }
  double number(const std::string& key, double fallback) {
    used_.insert(key);
    return has(key) ? number(key) : fallback;
  }
  std::optional<double> optional_number(const std::string& key) {
    used_.insert(key);
    if (!has(key) || (*j_)[key].is_null()) return std::nullopt;
    return number(key);
  }

  std::uint64_t count(const std::string& key) {
    const Json& v = raw(key);
    if (!v.is_number_integer() || v.get<long long>() < 0) {
      throw ConfigError(at(key) + ": expected a nonnegative integer");
    }
    return v.get<std::uint64_t>();
  }
  std::uint64_t count(const std::string& key, std::uint64_t fallback) {
    used_.insert(key);
    return has(key) ? count(key) : fallback;
  }

  std::string string(const std::string& key, const std::string& fallback) {
    used_.insert(key);
    if (!has(key)) return fallback;
    const Json& v = (*j_)[key];
    if (!v.is_string()) throw ConfigError(at(key) + ": expected a string");
    return v.get<std::string>();
  }

  bool boolean(const std::string& key, bool fallback) {
    used_.insert(key);
    if (!has(key)) return fallback;
    const Json& v = (*j_)[key];
    if (!v.is_boolean()) throw ConfigError(at(key) + ": expected true or false");
    return v.get<bool>();
  }

  Vector vector(const std::string& key) { return vector_from_json(raw(key), at(key)); }
  Matrix matrix(const std::string& key) { return matrix_from_json(raw(key), at(key)); }

  Reader object(const std::string& key) { return Reader(raw(key), at(key)); }

  void finish() const {
    for (auto it = j_->begin(); it != j_->end(); ++it) {
      if (!used_.count(it.key())) throw ConfigError(at(it.key()) + ": unknown key");
    }
  }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  std::string label() const { return path_.empty() ? "config" : path_; }

  const Json* j_;
  std::string path_;
  std::set<std::string> used_;
};

double positive(Reader& r, const std::string& key, double fallback) {
  const double x = r.number(key, fallback);
  if (!(x > 0.0)) throw ConfigError(r.at(key) + ": must be > 0");
  return x;
}

double positive(Reader& r, const std::string& key) {
  const double x = r.number(key);
  if (!(x > 0.0)) throw ConfigError(r.at(key) + ": must be > 0");
  return x;
}

double unit_interval(Reader& r, const std::string& key, double fallback) {
  const double x = r.number(key, fallback);
  if (!(x > 0.0 && x < 1.0)) throw ConfigError(r.at(key) + ": must lie in (0, 1)");
  return x;
}

std::uint64_t resolve_seed(Reader& r, const Options& options) {
  const std::uint64_t from_config = r.count("seed", 0);
  return options.seed.value_or(from_config);
}

// ---------------------------------------------------------------------------
// Sources

struct Source {
  std::string kind;
  std::shared_ptr<const StochasticObjective> objective;
  std::optional<TabularMdp> mdp;
  std::shared_ptr<const Policy> policy;
  std::shared_ptr<const QuadraticSaddle> saddle;
  std::shared_ptr<const StronglyConcave> concave;
  Json echo;
};

Source build_source(Reader r, const Options& options) {
  Source src;
  src.kind = r.string("kind", "");
  src.echo["kind"] = src.kind;
  if (src.kind == "example_one") {
    const double gamma = unit_interval(r, "gamma", 0.5);
    const std::size_t horizon = r.count("horizon", 1);
    const bool analytic = r.boolean("analytic", false);
    src.mdp = example_one_mdp(gamma, horizon);
    src.policy = make_policy(PolicyFamily::ExampleOnePiecewise, 3, 3);
    if (analytic) {
      if (horizon != 1) throw ConfigError(r.at("analytic") + ": the closed form needs horizon 1");
      src.objective = std::make_shared<ExampleOneAnalyticObjective>(gamma);
    } else {
      src.objective = std::make_shared<MdpObjective>(*src.mdp, src.policy);
    }
    src.echo["gamma"] = gamma;
    src.echo["horizon"] = horizon;
    src.echo["analytic"] = analytic;
  } else if (src.kind == "mdp") {
    const Json& m = r.raw("mdp");
    if (m.is_string()) {
      fs::path path = m.get<std::string>();
      if (path.is_relative()) path = options.config_dir / path;
      src.mdp = load_mdp(path);
      src.echo["mdp"] = m;
    } else {
      src.mdp = mdp_from_json(m, r.at("mdp"));
      src.echo["mdp"] = "inline";
    }
    const std::string tag = r.string("policy", "tabular_softmax");
    src.policy = make_policy(parse_policy_family(tag), src.mdp->n_states(), src.mdp->n_actions());
    check_policy_shape(*src.mdp, *src.policy);
    src.objective = std::make_shared<MdpObjective>(*src.mdp, src.policy);
    src.echo["policy"] = tag;
  } else if (src.kind == "quadratic_saddle") {
    const Matrix H = r.matrix("H");
    const std::string noise = r.string("noise", "isotropic");
    CncNoise spec;
    if (noise == "isotropic") {
      spec.kind = CncNoise::Kind::Isotropic;
    } else if (noise == "orthogonal") {
      spec.kind = CncNoise::Kind::OrthogonalToTop;
    } else {
      throw ConfigError(r.at("noise") + ": expected \"isotropic\" or \"orthogonal\"");
    }
    spec.radius = r.number("radius", 1.0);
    const double hessian_noise = r.number("hessian_noise", 0.0);
    std::optional<Vector> center;
    if (r.has("center")) center = r.vector("center");
    auto saddle = std::make_shared<QuadraticSaddle>(H, spec, hessian_noise, center);
    src.saddle = saddle;
    src.objective = saddle;
    src.echo["H"] = to_json(H);
    src.echo["noise"] = noise;
    src.echo["radius"] = spec.radius;
    src.echo["hessian_noise"] = hessian_noise;
  } else if (src.kind == "strongly_concave") {
    const double zeta = positive(r, "zeta", 1.0);
    const double varrho = positive(r, "varrho", 1.0);
    const double noise_sigma = r.number("noise_sigma", 0.0);
    const Vector star = r.has("theta_star") ? r.vector("theta_star") : Vector(Vector::Zero(2));
    auto concave = std::make_shared<StronglyConcave>(zeta, star, noise_sigma, varrho);
    src.concave = concave;
    src.objective = concave;
    src.echo["zeta"] = zeta;
    src.echo["varrho"] = varrho;
    src.echo["noise_sigma"] = noise_sigma;
    src.echo["theta_star"] = to_json(star);
  } else {
    throw ConfigError(r.at("kind") +
                      ": expected example_one, mdp, quadratic_saddle or strongly_concave");
  }
  r.finish();
  return src;
}

Vector read_theta(Reader& r, const std::string& key, const Options& options, std::size_t dim) {
  Vector theta = options.theta ? parse_theta(*options.theta) : r.vector(key);
  if (options.theta) r.skip(key);
  if (static_cast<std::size_t>(theta.size()) != dim) {
    throw ConfigError(key + ": expected " + std::to_string(dim) + " entries, got " +
                      std::to_string(theta.size()));
  }
  return theta;
}

// ---------------------------------------------------------------------------
// Output

void prepare_out_dir(const Options& options) {
  if (!options.out_dir) return;
  std::error_code ec;
  fs::create_directories(*options.out_dir, ec);
  if (ec || !fs::is_directory(*options.out_dir)) {
    throw IoError("cannot create output directory " + options.out_dir->string());
  }
}

void write_output(const Options& options, const std::string& name, const std::string& text) {
  if (!options.out_dir) return;
  write_text_file(*options.out_dir / name, text);
}

void emit_summary(const Json& summary, const Options& options, std::ostream& out) {
  const std::string text = summary.dump(2) + "\n";
  write_output(options, "summary.json", text);
  out << text;
}

// ---------------------------------------------------------------------------
// constants

int cmd_constants(Reader& r, const Options& options, std::ostream& out) {
  RegularityConstants reg;
  reg.G = r.number("G");
  reg.L = r.number("L");
  reg.U = r.number("U", 0.0);
  reg.W = r.optional_number("W");
  if (reg.G < 0.0) throw ConfigError("G: must be >= 0");
  if (reg.L < 0.0) throw ConfigError("L: must be >= 0");
  if (reg.U < 0.0) throw ConfigError("U: must be >= 0");
  if (reg.W && *reg.W < 0.0) throw ConfigError("W: must be >= 0");
  const double gamma = r.number("gamma");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma: must lie in (0, 1), got " + format_double(gamma));
  const double r_max = positive(r, "r_max");
  const double r_min = r.number("r_min");
  if (r_min < 0.0 || r_min > r_max) throw ConfigError("r_min: must lie in [0, r_max]");
  const std::size_t h = r.count("h");
  const std::size_t p = r.count("p");
  if (h == 0) throw ConfigError("h: must be >= 1");
  if (p == 0) throw ConfigError("p: must be >= 1");
  const double epsilon = positive(r, "epsilon", 0.1);
  const double delta = unit_interval(r, "delta", 0.1);
  const auto chi_given = r.optional_number("chi");
  const auto omega = r.optional_number("omega");
  const auto iota = r.optional_number("iota");
  const auto alpha_given = r.optional_number("alpha");
  const auto zeta = r.optional_number("zeta");
  const auto varrho = r.optional_number("varrho");
  r.finish();

  PaperConstants c = paper_constants(reg, r_min, r_max, gamma, h, p);
  std::string chi_source = "missing";
  if (chi_given) {
    if (!(*chi_given > 0.0)) throw ConfigError("chi: must be > 0");
    c.chi = *chi_given;
    chi_source = "given";
  } else if (c.chi) {
    chi_source = "derived";
  }
  c.omega = omega;
  c.iota = iota;
  c.zeta = zeta;
  c.varrho = varrho;

  Json notes = Json::array();
  Json summary;
  summary["command"] = "constants";
  summary["constants"] = to_json(c);
  summary["chi_source"] = chi_source;
  summary["epsilon"] = epsilon;
  summary["delta"] = delta;

  std::optional<double> alpha = alpha_given;
  std::string alpha_source = alpha_given ? "given" : "missing";
  if (!alpha && c.chi && omega && r_min > 0.0) {
    alpha = theorem_step_size(epsilon, *c.chi, r_min, *omega, c.sigma, c.ell);
    alpha_source = "theorem";
  } else if (!alpha) {
    notes.push_back("alpha needs chi (or W), omega and r_min > 0");
  }
  summary["alpha"] = alpha ? Json(*alpha) : Json(nullptr);
  summary["alpha_source"] = alpha_source;

  summary["K"] = nullptr;
  if (alpha && c.chi && iota) {
    summary["K"] = iteration_budget(*alpha, r_max, gamma, *iota, *c.chi, epsilon, delta);
  } else {
    notes.push_back("K needs alpha, chi and iota");
  }

  summary["kappa_hat_0"] = nullptr;
  summary["alpha_escape"] = nullptr;
  if (alpha && c.chi) {
    double a = *alpha;
    const double admissible = escape_admissible_step(c.sigma_h0);
    if (!(a < std::min(1.0 / c.sigma_h0, 1.0 / (c.sigma_h0 * c.sigma_h0)))) {
      a = admissible;
      notes.push_back("alpha violates the escape condition; kappa_hat_0 uses alpha_escape");
    }
    summary["alpha_escape"] = a;
    summary["kappa_hat_0"] = escape_budget(a, c.sigma_h0, *c.chi, epsilon);
  }
  summary["kappa_0"] = alpha ? Json(trap_budget(*alpha, delta)) : Json(nullptr);
  if (zeta && varrho && alpha) {
    const auto caps = prop3_step_size(delta, *zeta, c.ell, *varrho, c.sigma, c.G, r_max, gamma);
    summary["prop3_alpha_cap"] = caps.alpha_cap;
    summary["prop3_log_cap_rhs"] = caps.log_cap_rhs;
    summary["prop3_log_cap_satisfied"] = caps.log_cap_satisfied(*alpha);
  }
  summary["notes"] = notes;
  (void)options;
  emit_summary(summary, options, out);
  return kOk;
}

// ---------------------------------------------------------------------------
// classify

int cmd_classify(Reader& r, const Options& options, std::ostream& out) {
  Source src = build_source(r.object("source"), options);
  const Vector theta = read_theta(r, "theta", options, src.objective->dim());
  const double epsilon = positive(r, "epsilon", 0.1);
  const double chi = positive(r, "chi", 1.0);
  const std::string mode_tag = r.string("mode", "oracle");
  const std::size_t n = r.count("samples", 10000);
  const std::uint64_t seed = resolve_seed(r, options);
  r.finish();
  ReportMode mode;
  if (mode_tag == "oracle") {
    mode = ReportMode::oracle();
  } else if (mode_tag == "estimated") {
    if (n == 0) throw ConfigError("samples: must be >= 1");
    mode = ReportMode::sampled(n, seed);
  } else {
    throw ConfigError("mode: expected \"oracle\" or \"estimated\"");
  }
  const auto report = second_order_report(*src.objective, theta, epsilon, chi, mode);
  Json summary;
  summary["command"] = "classify";
  summary["source"] = src.echo;
  summary["theta"] = to_json(theta);
  summary["J"] = src.objective->value(theta);
  summary["report"] = to_json(report);
  summary["region"] = to_string(report.region);
  emit_summary(summary, options, out);
  return kOk;
}

// ---------------------------------------------------------------------------
// cnc

int cmd_cnc(Reader& r, const Options& options, std::ostream& out) {
  Source src = build_source(r.object("source"), options);
  if (!src.mdp) throw ConfigError("source.kind: cnc needs an MDP source");
  const Vector theta = read_theta(r, "theta", options, src.objective->dim());
  const std::size_t n = r.count("samples", 100000);
  const std::uint64_t seed = resolve_seed(r, options);
  const double floor = positive(r, "floor", 1e-6);
  const auto omega = r.optional_number("omega");
  r.finish();
  if (n == 0) throw ConfigError("samples: must be >= 1");

  const Matrix H = src.objective->hessian(theta);
  const auto top = sym_eig_max(H);
  const auto cnc = cnc_estimate(*src.mdp, *src.policy, theta, top.u, n, seed);
  Json summary;
  summary["command"] = "cnc";
  summary["source"] = src.echo;
  summary["theta"] = to_json(theta);
  summary["lambda_max"] = top.lambda_max;
  summary["u_p"] = to_json(top.u);
  summary["mean_sq_projection"] = cnc.mean_sq_projection;
  summary["std_error"] = cnc.std_error;
  summary["n"] = cnc.n;
  summary["enumerated"] = cnc.enumerated;
  summary["iota_floor"] = floor;
  summary["iota"] = empirical_iota(cnc, floor);
  if (omega) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (H + H.transpose()), Eigen::EigenvaluesOnly);
    const double op = es.eigenvalues().cwiseAbs().maxCoeff();
    const auto closed = cnc_closed_form(*src.mdp, *src.policy, theta, *omega, top.lambda_max, op);
    summary["omega"] = *omega;
    summary["closed_form"] = {{"c0", closed.c0}, {"iota_sq", closed.iota_sq}};
  }
  emit_summary(summary, options, out);
  return kOk;
}

// ---------------------------------------------------------------------------
// oracle-check

struct IdentityTally {
  std::size_t checked = 0;
  std::size_t failed = 0;
  double worst = 0.0;  ///< largest error / tolerance ratio seen

  void record(double error, double tolerance) {
    ++checked;
    const double ratio = error / tolerance;
    if (!(ratio <= 1.0)) ++failed;
    if (!(ratio <= worst)) worst = std::isfinite(ratio) ? std::max(worst, ratio) : ratio;
  }
};

int cmd_oracle_check(Reader& r, const Options& options, std::ostream& out) {
  std::vector<std::pair<std::string, TabularMdp>> instances;
  std::uint64_t seed = resolve_seed(r, options);
  if (r.has("mdps")) {
    const Json& list = r.raw("mdps");
    if (!list.is_array()) throw ConfigError("mdps: expected an array");
    for (std::size_t i = 0; i < list.size(); ++i) {
      const std::string key = "mdps[" + std::to_string(i) + "]";
      if (list[i].is_string()) {
        fs::path path = list[i].get<std::string>();
        if (path.is_relative()) path = options.config_dir / path;
        instances.emplace_back(list[i].get<std::string>(), load_mdp(path));
      } else {
        instances.emplace_back(key, mdp_from_json(list[i], key));
      }
    }
  }
  std::size_t random_count = 0;
  std::size_t max_states = 4, max_actions = 3, max_horizon = 6, max_branching = 2;
  if (r.has("random")) {
    Reader rr = r.object("random");
    random_count = rr.count("count", 50);
    max_states = rr.count("max_states", 4);
    max_actions = rr.count("max_actions", 3);
    max_horizon = rr.count("max_horizon", 6);
    max_branching = rr.count("max_branching", 2);
    rr.finish();
    if (max_states == 0 || max_actions == 0 || max_horizon == 0 || max_branching == 0) {
      throw ConfigError("random: sizes must be >= 1");
    }
  }
  const double theta_scale = r.number("theta_scale", 1.0);
  r.finish();
  for (std::size_t i = 0; i < random_count; ++i) {
    CounterRng rng = CounterRng::derive(seed, i);
    const std::size_t S = 1 + static_cast<std::size_t>(rng.uniform() * double(max_states));
    const std::size_t A = 1 + static_cast<std::size_t>(rng.uniform() * double(max_actions));
    const std::size_t h = 1 + static_cast<std::size_t>(rng.uniform() * double(max_horizon));
    const double gamma = 0.3 + 0.65 * rng.uniform();
    instances.emplace_back("random[" + std::to_string(i) + "]",
                           random_mdp(rng, S, A, h, gamma, max_branching, 0.0, 1.0));
  }
  if (instances.empty()) throw ConfigError("mdps: give at least one MDP or a random block");

  struct InstanceResult {
    Json detail;
    std::map<std::string, IdentityTally> tallies;
  };
  std::vector<InstanceResult> results(instances.size());
  parallel_for(instances.size(), [&](std::size_t i) {
    const auto& [name, mdp] = instances[i];
    auto policy = make_policy(PolicyFamily::TabularSoftmax, mdp.n_states(), mdp.n_actions());
    CounterRng rng = CounterRng::derive(seed ^ 0x5eedULL, i);
    Vector theta(static_cast<Eigen::Index>(policy->dim())), other(theta.size());
    for (Eigen::Index k = 0; k < theta.size(); ++k) {
      theta(k) = theta_scale * (2.0 * rng.uniform() - 1.0);
      other(k) = theta_scale * (2.0 * rng.uniform() - 1.0);
    }
    auto& tallies = results[i].tallies;
    Json d;
    d["name"] = name;
    d["n_states"] = mdp.n_states();
    d["n_actions"] = mdp.n_actions();
    d["horizon"] = mdp.horizon();
    d["enumerable"] = enumerable(mdp);

    const Vector grad = dp_gradient(mdp, *policy, theta);
    const double gscale = std::max(1.0, grad.cwiseAbs().maxCoeff());
    {
      // Policy-gradient theorem: visitation form against the trajectory form.
      double err = std::numeric_limits<double>::infinity();
      try {
        const auto two = exact_gradient(mdp, *policy, theta, std::numeric_limits<double>::max());
        if (two.enumerated) {
          err = two.discrepancy / gscale;
        } else {
          err = (two.visitation_form - grad).cwiseAbs().maxCoeff() / gscale;
        }
      } catch (const std::exception&) {
      }
      tallies["gradient_two_way"].record(err, 1e-8);
      d["gradient_two_way_error"] = err;
    }
    {
      auto J = [&](const Vector& t) { return exact_objective(mdp, *policy, t); };
      const Vector fd = central_difference_gradient(J, theta, 1e-5);
      const double err = (fd - grad).cwiseAbs().maxCoeff() / gscale;
      tallies["gradient_finite_difference"].record(err, 1e-4);
      d["gradient_finite_difference_error"] = err;
    }
    {
      const auto pd = performance_difference_check(mdp, *policy, theta, other);
      const double err = std::abs(pd.lhs - pd.rhs);
      tallies["performance_difference"].record(err, pd.tolerance);
      d["performance_difference_error"] = err;
      d["performance_difference_tolerance"] = pd.tolerance;
    }
    {
      const Vector d_occ = occupancy(mdp, *policy, theta);
      const double mass = (1.0 - std::pow(mdp.gamma(), double(mdp.horizon()))) / (1.0 - mdp.gamma());
      tallies["occupancy_mass"].record(std::abs(d_occ.sum() - mass), 1e-10);
      const auto vf = value_functions(mdp, *policy, theta);
      double centring = 0.0;
      for (std::size_t s = 0; s < mdp.n_states(); ++s) {
        const Vector pi = policy->action_probs(theta, s);
        centring = std::max(centring, std::abs(pi.dot(vf.A.row(Eigen::Index(s)).transpose())));
      }
      tallies["advantage_centering"].record(centring, 1e-12);
    }
    const Matrix hess = exact_hessian(mdp, *policy, theta);
    {
      auto g = [&](const Vector& t) { return dp_gradient(mdp, *policy, t); };
      const Matrix fd = central_difference_hessian(g, theta, 1e-4);
      const double err = (fd - hess).cwiseAbs().maxCoeff();
      tallies["hessian_finite_difference"].record(err, 1e-5);
      d["hessian_finite_difference_error"] = err;
      tallies["hessian_symmetry"].record((hess - hess.transpose()).cwiseAbs().maxCoeff(), 1e-10);
    }
    if (enumerable(mdp)) {
      Vector g_sum = Vector::Zero(theta.size());
      enumerate_trajectories(mdp, *policy, theta, [&](double p, const Trajectory& tau) {
        g_sum += p * pg_estimate(tau, *policy, theta, mdp.gamma());
      });
      const double gerr = (g_sum - grad).cwiseAbs().maxCoeff();
      tallies["gradient_unbiased"].record(gerr, 1e-8);
      const Matrix h_sum = enumerated_hessian_estimate(mdp, *policy, theta);
      const double herr = (h_sum - hess).cwiseAbs().maxCoeff();
      tallies["hessian_unbiased"].record(herr, 1e-6);
      d["gradient_unbiased_error"] = gerr;
      d["hessian_unbiased_error"] = herr;
    }
    results[i].detail = std::move(d);
  });

  std::map<std::string, IdentityTally> totals;
  Json details = Json::array();
  for (const auto& res : results) {
    details.push_back(res.detail);
    for (const auto& [name, t] : res.tallies) {
      auto& total = totals[name];
      total.checked += t.checked;
      total.failed += t.failed;
      total.worst = std::max(total.worst, t.worst);
      if (!std::isfinite(t.worst)) total.worst = t.worst;
    }
  }
  bool all = true;
  Json identities;
  for (const auto& [name, t] : totals) {
    const bool passed = t.failed == 0;
    all = all && passed;
    identities[name] = {{"passed", passed},
                        {"checked", t.checked},
                        {"failed", t.failed},
                        {"worst_error_over_tolerance", std::isfinite(t.worst) ? Json(t.worst) : Json("inf")}};
  }
  Json summary;
  summary["command"] = "oracle-check";
  summary["seed"] = seed;
  summary["instances"] = instances.size();
  summary["tolerances"] = {{"gradient_two_way", "1e-8 relative"},
                           {"gradient_finite_difference", "1e-4 relative, step 1e-5"},
                           {"performance_difference", "2 gamma^h R_max / (1 - gamma)"},
                           {"occupancy_mass", "1e-10"},
                           {"advantage_centering", "1e-12"},
                           {"hessian_finite_difference", "1e-5 absolute, step 1e-4"},
                           {"hessian_symmetry", "1e-10"},
                           {"gradient_unbiased", "1e-8"},
                           {"hessian_unbiased", "1e-6"}};
  summary["identities"] = identities;
  summary["all_passed"] = all;
  summary["details"] = details;
  emit_summary(summary, options, out);
  return all ? kOk : kCheckFailed;
}

// ---------------------------------------------------------------------------
// train

int cmd_train(Reader& r, const Options& options, std::ostream& out, std::ostream& err) {
  Source src = build_source(r.object("source"), options);
  const std::size_t p = src.objective->dim();
  const Vector theta0 = read_theta(r, "theta0", options, p);
  const double epsilon = positive(r, "epsilon", 0.1);
  const double chi = positive(r, "chi", 1.0);
  const double delta = unit_interval(r, "delta", 0.1);
  const std::uint64_t seed = resolve_seed(r, options);
  const std::size_t runs = r.count("runs", 1);
  const std::size_t batch = r.count("batch_size", 1);
  const std::size_t report_every = r.count("report_every", 1);
  const bool stop_at_l3 = r.boolean("stop_at_l3", false);
  const std::string trace = r.string("trace", "first");
  const std::string report_tag = r.string("report_mode", "oracle");
  const std::size_t report_samples = r.count("report_samples", 1000);
  const auto min_l3 = r.optional_number("min_l3_fraction");
  if (runs == 0) throw ConfigError("runs: must be >= 1");
  if (batch == 0) throw ConfigError("batch_size: must be >= 1");
  if (report_every == 0) throw ConfigError("report_every: must be >= 1");
  if (trace != "first" && trace != "all" && trace != "none") {
    throw ConfigError("trace: expected \"first\", \"all\" or \"none\"");
  }

  Json derived;
  std::optional<PaperConstants> constants;
  double alpha = 0.0;
  const Json& alpha_cfg = r.raw("alpha");
  if (alpha_cfg.is_number()) {
    alpha = r.number("alpha");
    if (!(alpha >= 0.0)) throw ConfigError("alpha: must be >= 0");
    derived["alpha_rule"] = "given";
  } else {
    Reader ar = r.object("alpha");
    const std::string rule = ar.string("rule", "");
    if (rule != "theorem") throw ConfigError("alpha.rule: expected \"theorem\"");
    if (!src.mdp) throw ConfigError("alpha.rule: the theorem step size needs an MDP source");
    const double omega = positive(ar, "omega");
    const double r_min = positive(ar, "r_min", src.mdp->r_min() > 0.0 ? src.mdp->r_min() : 1.0);
    const Vector box = ar.has("box") ? ar.vector("box") : Vector((Vector(2) << -1.0, 1.0).finished());
    if (box.size() != 2 || !(box(0) < box(1))) throw ConfigError("alpha.box: expected [lo, hi] with lo < hi");
    const std::size_t density = ar.count("grid_density", 21);
    if (density < 2) throw ConfigError("alpha.grid_density: must be >= 2");
    const bool escape_cap = ar.boolean("escape_cap", true);
    ar.finish();
    const auto reg = estimate_regularity(*src.policy, DomainBox{box(0), box(1)}, density);
    constants = paper_constants(reg, r_min, src.mdp->r_max(), src.mdp->gamma(), src.mdp->horizon(), p);
    constants->omega = omega;
    const double theorem_alpha =
        theorem_step_size(epsilon, chi, r_min, omega, constants->sigma, constants->ell);
    alpha = theorem_alpha;
    bool capped = false;
    if (escape_cap && !(alpha < std::min(1.0 / constants->sigma_h0,
                                         1.0 / (constants->sigma_h0 * constants->sigma_h0)))) {
      alpha = escape_admissible_step(constants->sigma_h0);
      capped = true;
    }
    derived["alpha_rule"] = "theorem";
    derived["theorem_alpha"] = theorem_alpha;
    derived["escape_capped"] = capped;
    derived["r_min"] = r_min;
    derived["regularity"] = to_json(reg);
  }

  std::size_t max_iters = 0;
  const Json& iters_cfg = r.raw("max_iters");
  if (iters_cfg.is_number_integer()) {
    max_iters = r.count("max_iters");
    derived["max_iters_rule"] = "given";
  } else {
    Reader kr = r.object("max_iters");
    const std::string rule = kr.string("rule", "");
    if (rule != "iteration_budget") throw ConfigError("max_iters.rule: expected \"iteration_budget\"");
    if (!src.mdp) throw ConfigError("max_iters.rule: the iteration budget needs an MDP source");
    const std::uint64_t cap = kr.count("cap", 1000000);
    double iota = 0.0;
    const Json& iota_cfg = kr.raw("iota");
    if (iota_cfg.is_string() && iota_cfg.get<std::string>() == "empirical") {
      const std::size_t n = kr.count("cnc_samples", 100000);
      const double floor = positive(kr, "iota_floor", 1e-6);
      const auto top = sym_eig_max(src.objective->hessian(theta0));
      const auto cnc = cnc_estimate(*src.mdp, *src.policy, theta0, top.u, n,
                                    trajectory_seed(seed, 0xC0FFEEULL));
      iota = empirical_iota(cnc, floor);
      derived["cnc"] = {{"mean_sq_projection", cnc.mean_sq_projection},
                        {"std_error", cnc.std_error},
                        {"n", cnc.n},
                        {"enumerated", cnc.enumerated},
                        {"u_p", to_json(top.u)}};
      derived["iota_rule"] = "empirical";
    } else {
      iota = positive(kr, "iota");
      derived["iota_rule"] = "given";
    }
    kr.finish();
    if (!(alpha > 0.0)) throw ConfigError("alpha: the iteration budget needs alpha > 0");
    const std::uint64_t K = iteration_budget(alpha, src.mdp->r_max(), src.mdp->gamma(), iota, chi,
                                             epsilon, delta);
    max_iters = static_cast<std::size_t>(std::min<std::uint64_t>(K, cap));
    derived["iota"] = iota;
    derived["K"] = K;
    derived["K_cap"] = cap;
    derived["max_iters_rule"] = "iteration_budget";
    if (constants) constants->iota = iota;
  }

  std::uint64_t kappa_hat_0 = 1;
  if (r.has("kappa_hat_0") && r.raw("kappa_hat_0").is_number_integer()) {
    kappa_hat_0 = r.count("kappa_hat_0");
    derived["kappa_hat_0_rule"] = "given";
  } else {
    const std::string rule = r.string("kappa_hat_0", "derived");
    if (rule != "derived") throw ConfigError("kappa_hat_0: expected an integer or \"derived\"");
    std::optional<double> sigma_h0;
    if (constants) sigma_h0 = constants->sigma_h0;
    if (src.saddle) sigma_h0 = src.saddle->sigma_h0();
    if (!sigma_h0) {
      throw ConfigError("kappa_hat_0: cannot be derived for this source; give an integer");
    }
    if (alpha > 0.0) kappa_hat_0 = std::max<std::uint64_t>(1, escape_budget(alpha, *sigma_h0, chi, epsilon));
    derived["kappa_hat_0_rule"] = "derived";
    derived["sigma_h0"] = *sigma_h0;
  }
  r.finish();

  TrainerConfig config;
  config.alpha = alpha;
  config.max_iters = max_iters;
  config.epsilon = epsilon;
  config.chi = chi;
  config.delta = delta;
  config.batch_size = batch;
  config.seed = seed;
  config.report_every = report_every;
  config.kappa_hat_0 = kappa_hat_0;
  config.stop_at_l3 = stop_at_l3;
  if (report_tag == "estimated") {
    config.report_mode = ReportMode::sampled(report_samples, trajectory_seed(seed, 0xE571ULL));
  } else if (report_tag != "oracle") {
    throw ConfigError("report_mode: expected \"oracle\" or \"estimated\"");
  }

  const auto started = std::chrono::steady_clock::now();
  std::vector<RunRecord> records;
  if (runs == 1) {
    records.push_back(run(*src.objective, config, theta0));
  } else {
    records = run_many(*src.objective, config, theta0, runs);
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  prepare_out_dir(options);
  std::size_t with_l3 = 0;
  Json per_run = Json::array();
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& rec = records[i];
    if (rec.first_l3) ++with_l3;
    Json row;
    row["run"] = i;
    row["seed"] = runs == 1 ? seed : trajectory_seed(seed, i);
    row["iterations"] = rec.iterations;
    row["aborted_at"] = rec.aborted_at ? Json(*rec.aborted_at) : Json(nullptr);
    if (rec.aborted_at) row["abort_reason"] = rec.abort_reason;
    row["first_l3"] = rec.first_l3 ? Json(*rec.first_l3) : Json(nullptr);
    row["final_theta"] = to_json(rec.final_theta);
    row["final_region"] = rec.final_report ? Json(to_string(rec.final_report->region)) : Json(nullptr);
    row["final_J"] = rec.final_report ? Json(src.objective->value(rec.final_theta)) : Json(nullptr);
    row["final_varsigma"] = rec.iterates.empty() ? 0 : rec.iterates.back().varsigma;
    per_run.push_back(std::move(row));
    const bool write = trace == "all" || (trace == "first" && i == 0);
    if (write) {
      const std::string name = runs == 1 ? "trace.csv" : "trace_run_" + std::to_string(i) + ".csv";
      write_output(options, name, trace_csv(rec, p));
    }
  }
  if (options.format == "csv") {
    std::vector<RunRecord> traced;
    if (trace == "all") traced = records;
    else if (trace == "first") traced.push_back(records.front());
    write_output(options, "trace_long.csv", trace_long_csv(traced, p));
  }

  Json summary;
  summary["command"] = "train";
  summary["source"] = src.echo;
  summary["seed"] = seed;
  summary["runs"] = runs;
  summary["theta0"] = to_json(theta0);
  summary["alpha"] = alpha;
  summary["max_iters"] = max_iters;
  summary["batch_size"] = batch;
  summary["batch_extension"] = batch > 1;
  summary["report_every"] = report_every;
  summary["report_mode"] = report_tag;
  summary["kappa_hat_0"] = kappa_hat_0;
  summary["thresholds"] = {{"epsilon", epsilon},
                           {"chi", chi},
                           {"sqrt_chi_epsilon", std::sqrt(chi * epsilon)},
                           {"delta", delta}};
  summary["derived"] = derived;
  if (constants) summary["constants"] = to_json(*constants);
  summary["l3_fraction"] = static_cast<double>(with_l3) / static_cast<double>(runs);
  bool passed = true;
  if (min_l3) {
    passed = summary["l3_fraction"].get<double>() >= *min_l3;
    summary["check"] = {{"min_l3_fraction", *min_l3}, {"passed", passed}};
  }
  summary["per_run"] = per_run;
  emit_summary(summary, options, out);
  err << "train: wall time " << wall << " s\n";
  return passed ? kOk : kCheckFailed;
}

// ---------------------------------------------------------------------------
// escape

Json coupled_gaps(const Matrix& H, double radius, double hessian_noise, double alpha,
                  std::size_t steps, std::size_t runs, std::uint64_t seed) {
  const QuadraticSaddle source(H, CncNoise{CncNoise::Kind::Isotropic, radius}, hessian_noise);
  std::vector<double> gaps(runs);
  parallel_for(runs, [&](std::size_t i) {
    gaps[i] = coupled_quadratic_run(source, source.center(), alpha, steps, trajectory_seed(seed, i))
                  .max_gap;
  });
  return gaps;
}

int cmd_escape(Reader& r, const Options& options, std::ostream& out) {
  const Matrix H = r.has("H") ? r.matrix("H") : Matrix((Matrix(2, 2) << 1.0, 0.0, 0.0, -1.0).finished());
  const double iota = positive(r, "iota", 1.0);
  const double alpha = positive(r, "alpha", 1e-3);
  const std::size_t runs = r.count("runs", 200);
  const double epsilon = positive(r, "epsilon", 1.0);
  const double chi = positive(r, "chi", 1.0);
  const double cap_factor = positive(r, "cap_factor", 10.0);
  const bool contrast = r.boolean("contrast", true);
  const double min_fraction = r.number("min_escape_fraction", 0.9);
  const double max_contrast = r.number("max_contrast_fraction", 0.1);
  const std::uint64_t seed = resolve_seed(r, options);
  std::optional<Reader> coupled_cfg;
  if (r.has("coupled")) coupled_cfg.emplace(r.object("coupled"));
  r.finish();
  if (runs == 0) throw ConfigError("runs: must be >= 1");
  const double p = static_cast<double>(H.rows());
  // Uniform noise on the sphere of radius sqrt(p) iota has E<noise, u>^2 = iota^2 for every unit u.
  const double radius = std::sqrt(p) * iota;

  const QuadraticSaddle bench(H, CncNoise{CncNoise::Kind::Isotropic, radius});
  EscapeSettings settings{epsilon, chi, cap_factor, iota};
  const auto main = verify_escape(bench, alpha, runs, seed, settings);

  Json summary;
  summary["command"] = "escape";
  summary["H"] = to_json(H);
  summary["alpha"] = alpha;
  summary["runs"] = runs;
  summary["seed"] = seed;
  summary["thresholds"] = {{"epsilon", epsilon},
                           {"chi", chi},
                           {"sqrt_chi_epsilon", std::sqrt(chi * epsilon)},
                           {"cap_factor", cap_factor},
                           {"min_escape_fraction", min_fraction},
                           {"max_contrast_fraction", max_contrast}};
  summary["noise_radius"] = radius;
  summary["sigma_h0"] = bench.sigma_h0();
  auto escape_json = [](const EscapeResult& e) {
    return Json{{"escape_fraction", e.escape_fraction},
                {"mean_escape_steps", e.mean_escape_steps},
                {"kappa_hat_0", e.kappa_hat_0},
                {"step_cap", e.step_cap},
                {"mean_gain", e.mean_gain},
                {"mean_gain_at_escape", e.mean_gain_at_escape},
                {"target_gain", e.target_gain},
                {"iota", e.iota},
                {"runs", e.runs}};
  };
  summary["escape"] = escape_json(main);
  bool passed = main.escape_fraction >= min_fraction;
  if (contrast) {
    const QuadraticSaddle ortho(H, CncNoise{CncNoise::Kind::OrthogonalToTop, radius});
    const auto c = verify_escape(ortho, alpha, runs, trajectory_seed(seed, 0xC047ULL), settings);
    summary["contrast"] = escape_json(c);
    summary["contrast"]["noise"] = "orthogonal";
    passed = passed && c.escape_fraction <= max_contrast;
  }
  if (coupled_cfg) {
    Reader& cr = *coupled_cfg;
    const std::size_t coupled_runs = cr.count("runs", 20);
    const double hessian_noise = cr.number("hessian_noise", 0.5);
    const double exact_tol = cr.number("exact_tolerance", 1e-12);
    const double min_ratio = cr.number("min_ratio", 3.0);
    const std::size_t steps = cr.count("steps", main.kappa_hat_0);
    cr.finish();
    if (coupled_runs == 0) throw ConfigError("coupled.runs: must be >= 1");
    const std::uint64_t cseed = trajectory_seed(seed, 0xC0B1ULL);
    const Json exact = coupled_gaps(H, radius, 0.0, alpha, steps, coupled_runs, cseed);
    double exact_max = 0.0;
    for (const auto& g : exact) exact_max = std::max(exact_max, g.get<double>());
    const Json big = coupled_gaps(H, radius, hessian_noise, alpha, steps, coupled_runs, cseed);
    const Json small = coupled_gaps(H, radius, hessian_noise, alpha / 2.0, steps, coupled_runs, cseed);
    double mean_big = 0.0, mean_small = 0.0;
    for (std::size_t i = 0; i < coupled_runs; ++i) {
      mean_big += big[i].get<double>();
      mean_small += small[i].get<double>();
    }
    mean_big /= double(coupled_runs);
    mean_small /= double(coupled_runs);
    const double ratio = mean_small > 0.0 ? mean_big / mean_small : std::numeric_limits<double>::infinity();
    summary["coupled"] = {{"steps", steps},
                          {"runs", coupled_runs},
                          {"exact_source_max_gap", exact_max},
                          {"exact_tolerance", exact_tol},
                          {"hessian_noise", hessian_noise},
                          {"mean_gap_alpha", mean_big},
                          {"mean_gap_half_alpha", mean_small},
                          {"gap_ratio", std::isfinite(ratio) ? Json(ratio) : Json("inf")},
                          {"min_ratio", min_ratio}};
    passed = passed && exact_max <= exact_tol && ratio >= min_ratio;
  }
  summary["passed"] = passed;
  prepare_out_dir(options);
  emit_summary(summary, options, out);
  return passed ? kOk : kCheckFailed;
}

// ---------------------------------------------------------------------------
// trap

int cmd_trap(Reader& r, const Options& options, std::ostream& out) {
  const double zeta = positive(r, "zeta", 1.0);
  const double varrho = positive(r, "varrho", 1.0);
  const double noise_sigma = r.number("noise_sigma", 0.3);
  const double delta = unit_interval(r, "delta", 0.2);
  const std::size_t runs = r.count("runs", 500);
  const double relaxation = positive(r, "relaxation", 1.0);
  const double margin = r.number("margin", 0.05);
  const std::uint64_t seed = resolve_seed(r, options);
  const Vector star = r.has("theta_star") ? r.vector("theta_star") : Vector(Vector::Zero(2));
  Vector theta0 = star;
  if (r.has("theta0")) {
    theta0 = r.vector("theta0");
  } else {
    theta0(0) += varrho / std::sqrt(3.0);
  }
  std::optional<double> alpha_given;
  std::string alpha_rule = "cap";
  if (r.has("alpha") && !r.raw("alpha").is_string()) {
    alpha_given = positive(r, "alpha");
    alpha_rule = "given";
  } else {
    alpha_rule = r.string("alpha", "cap");
    if (alpha_rule != "cap" && alpha_rule != "log_cap") {
      throw ConfigError("alpha: expected a number, \"cap\" or \"log_cap\"");
    }
  }
  r.finish();
  if (runs == 0) throw ConfigError("runs: must be >= 1");
  if (noise_sigma < 0.0) throw ConfigError("noise_sigma: must be >= 0");
  if (theta0.size() != star.size()) throw ConfigError("theta0: dimension differs from theta_star");

  const StronglyConcave source(zeta, star, noise_sigma, varrho);
  const auto caps = prop3_step_size(delta, zeta, zeta, varrho, noise_sigma, zeta * varrho, 1.0, 0.0);
  const double alpha = alpha_given ? *alpha_given
                      : alpha_rule == "log_cap" ? caps.largest_step(relaxation)
                                                : caps.alpha_cap;
  const auto res = verify_trap(source, alpha, runs, seed, delta, theta0, relaxation);
  const double threshold = res.paper_bound - margin;
  const bool passed = res.stay_fraction >= threshold;

  Json summary;
  summary["command"] = "trap";
  summary["zeta"] = zeta;
  summary["varrho"] = varrho;
  summary["noise_sigma"] = noise_sigma;
  summary["theta_star"] = to_json(star);
  summary["theta0"] = to_json(theta0);
  summary["alpha"] = alpha;
  summary["alpha_source"] = alpha_rule;
  summary["seed"] = seed;
  summary["runs"] = runs;
  summary["stay_fraction"] = res.stay_fraction;
  summary["kappa_0"] = res.kappa_0;
  summary["alpha_cap"] = res.alpha_cap;
  summary["log_cap_rhs"] = res.log_cap_rhs;
  summary["log_cap_satisfied"] = res.log_cap_satisfied;
  summary["relaxation"] = res.relaxation;
  summary["thresholds"] = {{"delta", delta},
                           {"paper_bound", res.paper_bound},
                           {"margin", margin},
                           {"min_stay_fraction", threshold}};
  summary["passed"] = passed;
  prepare_out_dir(options);
  emit_summary(summary, options, out);
  return passed ? kOk : kCheckFailed;
}

}  // namespace

Vector parse_theta(const std::string& text) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double x = 0.0;
    try {
      x = std::stod(item, &used);
    } catch (const std::exception&) {
      throw ConfigError("theta: cannot parse \"" + item + "\"");
    }
    while (used < item.size() && std::isspace(static_cast<unsigned char>(item[used]))) ++used;
    if (used != item.size() || !std::isfinite(x)) throw ConfigError("theta: cannot parse \"" + item + "\"");
    values.push_back(x);
  }
  if (values.empty() || (!text.empty() && text.back() == ',')) {
    throw ConfigError("theta: expected comma-separated numbers");
  }
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

int run_command(const std::string& command, const Json& config, const Options& options,
                std::ostream& out, std::ostream& err) {
  try {
    if (options.format != "json" && options.format != "csv") {
      throw ConfigError("--format: expected json or csv");
    }
    if (options.threads) set_thread_count(*options.threads);
    Reader r(config, "");
    const Json& tag = r.raw("command");
    if (!tag.is_string()) throw ConfigError("command: expected a string");
    if (tag.get<std::string>() != command) {
      throw ConfigError("command: config is for \"" + tag.get<std::string>() + "\", not \"" +
                        command + "\"");
    }
    r.string("description", "");
    if (command != "train" && command != "escape" && command != "trap") prepare_out_dir(options);
    if (command == "constants") return cmd_constants(r, options, out);
    if (command == "classify") return cmd_classify(r, options, out);
    if (command == "cnc") return cmd_cnc(r, options, out);
    if (command == "oracle-check") return cmd_oracle_check(r, options, out);
    if (command == "train") return cmd_train(r, options, out, err);
    if (command == "escape") return cmd_escape(r, options, out);
    if (command == "trap") return cmd_trap(r, options, out);
    throw ConfigError("command: unknown command \"" + command + "\"");
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kIoError;
  } catch (const ConsistencyError& e) {
    err << "check failed: " << e.what() << "\n";
    return kCheckFailed;
  } catch (const std::exception& e) {
    // Config, validation, domain and precondition failures.
    err << "error: " << e.what() << "\n";
    return kConfigError;
  }
}

int run_command_file(const std::string& command, const std::filesystem::path& config_path,
                     Options options, std::ostream& out, std::ostream& err) {
  Json config;
  try {
    config = read_json_file(config_path);
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kIoError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  }
  options.config_dir = config_path.has_parent_path() ? config_path.parent_path() : fs::path(".");
  return run_command(command, config, options, out, err);
}

}  // namespace sosp_pg::cli
