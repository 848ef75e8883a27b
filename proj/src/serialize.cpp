#include "sosp_pg/serialize.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "sosp_pg/errors.hpp"

namespace sosp_pg {

namespace {

std::string key_path(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

const Json& require(const Json& j, const std::string& key, const std::string& prefix) {
  if (!j.is_object()) throw ConfigError((prefix.empty() ? "root" : prefix) + ": expected an object");
  const auto it = j.find(key);
  if (it == j.end()) throw ConfigError(key_path(prefix, key) + ": missing");
  return *it;
}

double number(const Json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path + ": expected a number");
  const double x = j.get<double>();
  if (!std::isfinite(x)) throw ConfigError(path + ": must be finite");
  return x;
}

std::size_t count(const Json& j, const std::string& path) {
  if (!j.is_number_integer() || j.get<long long>() < 0) {
    throw ConfigError(path + ": expected a nonnegative integer");
  }
  return j.get<std::size_t>();
}

void expect_array(const Json& j, const std::string& path, std::size_t size) {
  if (!j.is_array()) throw ConfigError(path + ": expected an array");
  if (j.size() != size) {
    throw ConfigError(path + ": expected " + std::to_string(size) + " entries, got " +
                      std::to_string(j.size()));
  }
}

std::string index_path(const std::string& base, std::initializer_list<std::size_t> idx) {
  std::string out = base;
  for (auto i : idx) out += "[" + std::to_string(i) + "]";
  return out;
}

}  // namespace

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

Json to_json(const Vector& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Json to_json(const Matrix& m) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    out.push_back(std::move(row));
  }
  return out;
}

Vector vector_from_json(const Json& j, const std::string& key) {
  if (!j.is_array()) throw ConfigError(key + ": expected an array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    v(static_cast<Eigen::Index>(i)) = number(j[i], index_path(key, {i}));
  }
  return v;
}

Matrix matrix_from_json(const Json& j, const std::string& key) {
  if (!j.is_array() || j.empty()) throw ConfigError(key + ": expected a non-empty array of rows");
  const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
  Matrix m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < j.size(); ++r) {
    expect_array(j[r], index_path(key, {r}), cols);
    for (std::size_t c = 0; c < cols; ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          number(j[r][c], index_path(key, {r, c}));
    }
  }
  return m;
}

TabularMdp mdp_from_json(const Json& j, const std::string& prefix) {
  static const char* kKeys[] = {"n_states", "n_actions", "transition", "reward", "rho0",
                                "gamma",    "horizon",   "r_min",      "r_max"};
  if (!j.is_object()) throw ConfigError((prefix.empty() ? "mdp" : prefix) + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : kKeys) known = known || it.key() == k;
    if (!known) throw ConfigError(key_path(prefix, it.key()) + ": unknown key");
  }
  const std::size_t S = count(require(j, "n_states", prefix), key_path(prefix, "n_states"));
  const std::size_t A = count(require(j, "n_actions", prefix), key_path(prefix, "n_actions"));
  if (S == 0) throw ConfigError(key_path(prefix, "n_states") + ": must be >= 1");
  if (A == 0) throw ConfigError(key_path(prefix, "n_actions") + ": must be >= 1");

  const std::string tkey = key_path(prefix, "transition");
  const Json& tj = require(j, "transition", prefix);
  expect_array(tj, tkey, S);
  std::vector<std::vector<std::vector<double>>> transition(S, std::vector<std::vector<double>>(A));
  for (std::size_t s = 0; s < S; ++s) {
    expect_array(tj[s], index_path(tkey, {s}), A);
    for (std::size_t a = 0; a < A; ++a) {
      expect_array(tj[s][a], index_path(tkey, {s, a}), S);
      transition[s][a].resize(S);
      for (std::size_t n = 0; n < S; ++n) {
        transition[s][a][n] = number(tj[s][a][n], index_path(tkey, {s, a, n}));
      }
    }
  }

  const std::string rkey = key_path(prefix, "reward");
  const Json& rj = require(j, "reward", prefix);
  expect_array(rj, rkey, S);
  Matrix reward(static_cast<Eigen::Index>(S), static_cast<Eigen::Index>(A));
  for (std::size_t s = 0; s < S; ++s) {
    expect_array(rj[s], index_path(rkey, {s}), A);
    for (std::size_t a = 0; a < A; ++a) {
      reward(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)) =
          number(rj[s][a], index_path(rkey, {s, a}));
    }
  }

  const std::string pkey = key_path(prefix, "rho0");
  const Json& pj = require(j, "rho0", prefix);
  expect_array(pj, pkey, S);
  const Vector rho0 = vector_from_json(pj, pkey);

  const double gamma = number(require(j, "gamma", prefix), key_path(prefix, "gamma"));
  const std::size_t horizon = count(require(j, "horizon", prefix), key_path(prefix, "horizon"));
  const double r_min = number(require(j, "r_min", prefix), key_path(prefix, "r_min"));
  const double r_max = number(require(j, "r_max", prefix), key_path(prefix, "r_max"));
  try {
    return TabularMdp(std::move(transition), std::move(reward), rho0, gamma, horizon, r_min, r_max);
  } catch (const ConfigError& e) {
    if (prefix.empty()) throw;
    throw ConfigError(prefix + "." + e.what());
  }
}

Json mdp_to_json(const TabularMdp& mdp) {
  const std::size_t S = mdp.n_states(), A = mdp.n_actions();
  Json transition = Json::array();
  for (std::size_t s = 0; s < S; ++s) {
    Json per_action = Json::array();
    for (std::size_t a = 0; a < A; ++a) {
      Json row = Json::array();
      for (std::size_t n = 0; n < S; ++n) row.push_back(mdp.transition(s, a, n));
      per_action.push_back(std::move(row));
    }
    transition.push_back(std::move(per_action));
  }
  Json out;
  out["n_states"] = S;
  out["n_actions"] = A;
  out["transition"] = std::move(transition);
  out["reward"] = to_json(mdp.reward());
  out["rho0"] = to_json(mdp.rho0());
  out["gamma"] = mdp.gamma();
  out["horizon"] = mdp.horizon();
  out["r_min"] = mdp.r_min();
  out["r_max"] = mdp.r_max();
  return out;
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return Json::parse(buf.str());
  } catch (const Json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

TabularMdp load_mdp(const std::filesystem::path& path) { return mdp_from_json(read_json_file(path)); }

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

Json to_json(const SecondOrderReport& r) {
  Json out;
  out["grad"] = to_json(r.grad);
  out["grad_norm"] = r.grad_norm;
  out["hessian"] = to_json(r.hessian);
  out["lambda_max"] = r.lambda_max;
  out["u_p"] = to_json(r.u_p);
  out["region"] = to_string(r.region);
  out["is_sosp"] = r.is_sosp;
  out["epsilon"] = r.epsilon;
  out["chi"] = r.chi;
  out["sqrt_chi_epsilon"] = std::sqrt(r.chi * r.epsilon);
  out["mode"] = r.estimated ? "estimated" : "oracle";
  if (r.estimated) out["n"] = r.n;
  if (r.grad_std_error) out["grad_std_error"] = to_json(*r.grad_std_error);
  if (r.hessian_std_error) out["hessian_std_error"] = to_json(*r.hessian_std_error);
  return out;
}

Json to_json(const PaperConstants& c) {
  Json out;
  out["G"] = c.G;
  out["L"] = c.L;
  out["U"] = c.U;
  out["W"] = c.W ? Json(*c.W) : Json(nullptr);
  out["ell"] = c.ell;
  out["sigma"] = c.sigma;
  out["chi"] = c.chi ? Json(*c.chi) : Json(nullptr);
  out["sigma_h0"] = c.sigma_h0;
  out["omega"] = c.omega ? Json(*c.omega) : Json(nullptr);
  out["zeta"] = c.zeta ? Json(*c.zeta) : Json(nullptr);
  out["varrho"] = c.varrho ? Json(*c.varrho) : Json(nullptr);
  out["iota"] = c.iota ? Json(*c.iota) : Json(nullptr);
  out["r_min"] = c.r_min;
  out["r_max"] = c.r_max;
  out["gamma"] = c.gamma;
  out["h"] = c.h;
  out["p"] = c.p;
  return out;
}

Json to_json(const RegularityConstants& r) {
  Json out;
  out["G"] = r.G;
  out["L"] = r.L;
  out["U"] = r.U;
  out["W"] = r.W ? Json(*r.W) : Json(nullptr);
  out["domain_box"] = {r.domain_box.lo, r.domain_box.hi};
  out["grid_density"] = r.grid_density;
  out["grid_spacing"] = r.grid_spacing;
  out["note"] = "grid maxima; lower bounds on the true suprema";
  return out;
}

std::string trace_csv(const RunRecord& record, std::size_t p) {
  std::ostringstream out;
  out << "k";
  for (std::size_t i = 0; i < p; ++i) out << ",theta_" << i;
  out << ",J,grad_norm,lambda_max,region,varsigma\n";
  for (const auto& row : record.iterates) {
    out << row.k;
    for (Eigen::Index i = 0; i < row.theta.size(); ++i) out << ',' << format_double(row.theta(i));
    out << ',' << format_double(row.J) << ',' << format_double(row.grad_norm) << ','
        << format_double(row.lambda_max) << ',' << to_string(row.region) << ',' << row.varsigma
        << '\n';
  }
  return out.str();
}

std::string trace_long_csv(const std::vector<RunRecord>& records, std::size_t p) {
  std::ostringstream out;
  out << "run,k,variable,value\n";
  for (std::size_t r = 0; r < records.size(); ++r) {
    for (const auto& row : records[r].iterates) {
      auto emit = [&](const std::string& name, const std::string& value) {
        out << r << ',' << row.k << ',' << name << ',' << value << '\n';
      };
      for (std::size_t i = 0; i < p && i < static_cast<std::size_t>(row.theta.size()); ++i) {
        emit("theta_" + std::to_string(i), format_double(row.theta(static_cast<Eigen::Index>(i))));
      }
      emit("J", format_double(row.J));
      emit("grad_norm", format_double(row.grad_norm));
      emit("lambda_max", format_double(row.lambda_max));
      emit("region", to_string(row.region));
      emit("varsigma", std::to_string(row.varsigma));
    }
  }
  return out.str();
}

}  // namespace sosp_pg
