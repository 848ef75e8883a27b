#include <cstdlib>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "commands.hpp"

namespace {

struct Flags {
  std::string config;
  std::string out;
  std::string theta;
  std::uint64_t seed = 0;
  std::size_t threads = 0;
  std::string format = "json";
};

void add_flags(CLI::App* sub, Flags& f, bool with_theta) {
  sub->add_option("--config", f.config, "experiment config (JSON)")->required();
  sub->add_option("--out", f.out, "output directory");
  sub->add_option("--seed", f.seed, "seed; overrides SOSP_PG_SEED and the config");
  sub->add_option("--threads", f.threads, "worker cap (0 = hardware concurrency)");
  sub->add_option("--format", f.format, "summary format")->check(CLI::IsMember({"json", "csv"}));
  if (with_theta) sub->add_option("--theta", f.theta, "comma-separated parameter vector");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Policy gradient with second-order stationarity diagnostics"};
  app.require_subcommand(1);
  Flags flags;
  const char* names[] = {"constants", "classify", "train", "escape", "trap", "oracle-check", "cnc"};
  const char* blurbs[] = {
      "paper constants, step size and budgets",
      "second-order report and region at a point",
      "REINFORCE runs with region timeline",
      "saddle-escape benchmark",
      "local-maximum trapping benchmark",
      "exact-oracle identity suite",
      "correlated-negative-curvature estimate",
  };
  for (std::size_t i = 0; i < std::size(names); ++i) {
    const std::string name = names[i];
    add_flags(app.add_subcommand(name, blurbs[i]), flags, name == "classify" || name == "cnc");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : sosp_pg::cli::kConfigError;
  }
  CLI::App* sub = app.get_subcommands().front();

  sosp_pg::cli::Options options;
  if (!flags.out.empty()) options.out_dir = flags.out;
  options.format = flags.format;
  if (sub->count("--threads")) options.threads = flags.threads;
  if (!flags.theta.empty()) options.theta = flags.theta;
  if (sub->count("--seed")) {
    options.seed = flags.seed;
  } else if (const char* env = std::getenv("SOSP_PG_SEED"); env && *env) {
    try {
      std::size_t used = 0;
      options.seed = std::stoull(env, &used);
      if (used != std::string(env).size()) throw std::invalid_argument(env);
    } catch (const std::exception&) {
      std::cerr << "error: SOSP_PG_SEED: expected a nonnegative integer\n";
      return sosp_pg::cli::kConfigError;
    }
  }
  return sosp_pg::cli::run_command_file(sub->get_name(), flags.config, options, std::cout,
                                        std::cerr);
}
