#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include "../tools/commands.hpp"
#include "sosp_pg/errors.hpp"

using namespace sosp_pg;
using namespace sosp_pg::cli;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigs = SOSP_PG_CONFIG_DIR;

struct Result {
  int code;
  Json summary;
  std::string out;
  std::string err;
};

Result invoke(const std::string& command, const Json& config, Options options = {}) {
  std::ostringstream out, err;
  if (options.config_dir == ".") options.config_dir = kConfigs;
  const int code = run_command(command, config, options, out, err);
  Json summary;
  if (code == kOk || code == kCheckFailed) summary = Json::parse(out.str());
  return {code, summary, out.str(), err.str()};
}

Json load(const std::string& name) { return read_json_file(kConfigs / name); }

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("sosp_pg_test_cli_" + name);
  fs::remove_all(dir);
  return dir;
}

std::uint64_t load_json_seed(const fs::path& p) {
  return read_json_file(p)["seed"].get<std::uint64_t>();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST(CliConstants, SampleConfig) {
  const auto r = invoke("constants", load("constants_sample.json"));
  ASSERT_EQ(r.code, kOk) << r.err;
  const Json& c = r.summary["constants"];
  EXPECT_EQ(c["ell"].get<double>(), 12.0);
  EXPECT_EQ(r.summary["chi_source"], "derived");
  // G = L = W = 1, gamma = 1/2, R_max = 1.
  EXPECT_NEAR(c["chi"].get<double>(), 62.0 / 3.0, 1e-12);
  for (const char* key : {"sigma", "sigma_h0", "omega", "iota"}) EXPECT_TRUE(c.contains(key)) << key;
  for (const char* key : {"alpha", "K", "kappa_hat_0", "kappa_0"}) {
    EXPECT_TRUE(r.summary.contains(key)) << key;
  }
}

TEST(CliConstants, GammaOutOfRange) {
  Json c = load("constants_sample.json");
  c["gamma"] = 1.2;
  const auto r = invoke("constants", c);
  EXPECT_EQ(r.code, kConfigError);
  EXPECT_NE(r.err.find("gamma"), std::string::npos) << r.err;
}

TEST(CliConfig, UnknownKeyAndCommandMismatch) {
  Json c = load("constants_sample.json");
  c["epsilonn"] = 0.1;
  auto r = invoke("constants", c);
  EXPECT_EQ(r.code, kConfigError);
  EXPECT_NE(r.err.find("epsilonn"), std::string::npos) << r.err;
  r = invoke("classify", load("constants_sample.json"));
  EXPECT_EQ(r.code, kConfigError);
  EXPECT_EQ(invoke("no-such-command", Json::object()).code, kConfigError);
}

TEST(CliClassify, ExampleOne) {
  auto r = invoke("classify", load("classify_example_one.json"));
  ASSERT_EQ(r.code, kOk) << r.err;
  EXPECT_EQ(r.summary["region"], "L2");
  Options o;
  o.theta = "0.5,0.5";
  r = invoke("classify", load("classify_example_one.json"), o);
  ASSERT_EQ(r.code, kOk) << r.err;
  EXPECT_EQ(r.summary["region"], "L1");
  o.theta = "0.5,,x";
  EXPECT_EQ(invoke("classify", load("classify_example_one.json"), o).code, kConfigError);
  Json c = load("classify_example_one.json");
  c["theta"] = {0.1};
  EXPECT_EQ(invoke("classify", c).code, kConfigError);
}

TEST(CliClassify, ParseTheta) {
  EXPECT_EQ(parse_theta("1,-2.5,3e-1").size(), 3);
  EXPECT_DOUBLE_EQ(parse_theta(" 1 , 2 ")(1), 2.0);
  EXPECT_THROW(parse_theta(""), ConfigError);
  EXPECT_THROW(parse_theta("1,nan"), ConfigError);
  EXPECT_THROW(parse_theta("1;2"), ConfigError);
}

TEST(CliIo, UnwritableOutDir) {
  const fs::path base = scratch("unwritable");
  fs::create_directories(base);
  std::ofstream(base / "file") << "x";
  Options o;
  o.out_dir = base / "file" / "sub";
  EXPECT_EQ(invoke("escape", load("escape_benchmark.json"), o).code, kIoError);
  EXPECT_EQ(invoke("train", load("train_bandit.json"), o).code, kIoError);
  Json c = load("train_bandit.json");
  c["source"]["mdp"] = "mdps/missing.json";
  EXPECT_EQ(invoke("train", c).code, kIoError);
  fs::remove_all(base);
}

TEST(CliOracleCheck, BundledMdpsPass) {
  const auto r = invoke("oracle-check", load("oracle_check.json"));
  EXPECT_EQ(r.code, kOk) << r.out << r.err;
  EXPECT_TRUE(r.summary["all_passed"].get<bool>());
  for (const auto& [name, identity] : r.summary["identities"].items()) {
    EXPECT_TRUE(identity["passed"].get<bool>()) << name;
  }
}

TEST(CliTrain, ZeroIterations) {
  Json c = load("train_bandit.json");
  c["max_iters"] = 0;
  Options o;
  o.out_dir = scratch("zero_iters");
  const auto r = invoke("train", c, o);
  ASSERT_EQ(r.code, kOk) << r.err;
  EXPECT_TRUE(r.summary.contains("runs"));
  std::ifstream trace(*o.out_dir / "trace.csv");
  std::string header, row;
  ASSERT_TRUE(std::getline(trace, header));
  EXPECT_EQ(header.rfind("k,theta_0,theta_1,J,grad_norm,lambda_max,region,varsigma", 0), 0u);
  EXPECT_FALSE(std::getline(trace, row) && !row.empty());
  fs::remove_all(*o.out_dir);
}

TEST(CliTrain, BanditWritesTrace) {
  Options o;
  o.out_dir = scratch("bandit");
  o.format = "csv";
  const auto r = invoke("train", load("train_bandit.json"), o);
  ASSERT_EQ(r.code, kOk) << r.err;
  EXPECT_TRUE(fs::exists(*o.out_dir / "summary.json"));
  EXPECT_TRUE(fs::exists(*o.out_dir / "trace.csv"));
  EXPECT_TRUE(fs::exists(*o.out_dir / "trace_long.csv"));
  fs::remove_all(*o.out_dir);
}

TEST(CliEscape, DefaultBenchmark) {
  const auto r = invoke("escape", load("escape_benchmark.json"));
  ASSERT_EQ(r.code, kOk) << r.out << r.err;
  EXPECT_GE(r.summary["escape"]["escape_fraction"].get<double>(), 0.9);
  EXPECT_LE(r.summary["contrast"]["escape_fraction"].get<double>(), 0.1);
  EXPECT_LE(r.summary["coupled"]["exact_source_max_gap"].get<double>(), 1e-12);
}

TEST(CliTrap, DefaultBenchmark) {
  const auto r = invoke("trap", load("trap_benchmark.json"));
  ASSERT_EQ(r.code, kOk) << r.out << r.err;
  EXPECT_TRUE(r.summary["passed"].get<bool>());
}

TEST(CliSeed, FlagOverridesConfig) {
  Json c = load("train_bandit.json");
  c["max_iters"] = 20;
  const auto base = invoke("train", c);
  ASSERT_EQ(base.code, kOk);
  EXPECT_EQ(base.summary["seed"], 3);
  Options o;
  o.seed = 99;
  EXPECT_EQ(invoke("train", c, o).summary["seed"], 99);
}

TEST(CliBinary, SeedPrecedenceAndExitCodes) {
  const fs::path out = scratch("binary");
  fs::create_directories(out);
  const std::string tool = SOSP_PG_TOOL;
  const std::string config = (kConfigs / "train_bandit.json").string();
  auto seed_of = [&](const std::string& prefix, const std::string& flags) {
    const std::string cmd = prefix + " " + tool + " train --config " + config + " --out " +
                            out.string() + " " + flags + " > /dev/null 2>&1";
    EXPECT_EQ(std::system(cmd.c_str()), 0) << cmd;
    return load_json_seed(out / "summary.json");
  };
  EXPECT_EQ(seed_of("", ""), 3u);
  EXPECT_EQ(seed_of("SOSP_PG_SEED=77", ""), 77u);
  EXPECT_EQ(seed_of("SOSP_PG_SEED=77", "--seed 99"), 99u);
  auto status = [&](const std::string& args) {
    const int s = std::system((tool + " " + args + " > /dev/null 2>&1").c_str());
    return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
  };
  EXPECT_EQ(status("classify --config " + (kConfigs / "classify_example_one.json").string() + " --theta 1,x"), 2);
  EXPECT_EQ(status("classify"), 2);
  EXPECT_EQ(status("classify --config " + (out / "missing.json").string()), 3);
  EXPECT_EQ(status("classify --config " + (kConfigs / "classify_example_one.json").string()), 0);
  fs::remove_all(out);
}

TEST(CliDeterminism, RepeatedRunsAreByteIdentical) {
  for (const std::string name : {"train_bandit.json", "escape_benchmark.json", "trap_benchmark.json"}) {
    const Json c = load(name);
    const std::string cmd = c["command"].get<std::string>();
    Options a, b;
    a.out_dir = scratch("det_a");
    b.out_dir = scratch("det_b");
    a.format = b.format = "csv";
    ASSERT_EQ(invoke(cmd, c, a).code, kOk) << name;
    ASSERT_EQ(invoke(cmd, c, b).code, kOk) << name;
    std::size_t files = 0;
    for (const auto& entry : fs::directory_iterator(*a.out_dir)) {
      ++files;
      EXPECT_EQ(slurp(entry.path()), slurp(*b.out_dir / entry.path().filename())) << name;
    }
    EXPECT_GT(files, 0u);
    fs::remove_all(*a.out_dir);
    fs::remove_all(*b.out_dir);
  }
}
