#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "sosp_pg/serialize.hpp"

namespace sosp_pg::cli {

enum ExitCode : int { kOk = 0, kConfigError = 2, kIoError = 3, kCheckFailed = 4 };

struct Options {
  std::optional<std::filesystem::path> out_dir;
  std::optional<std::uint64_t> seed;  ///< --seed, else SOSP_PG_SEED, else the config's seed
  std::optional<std::size_t> threads;
  std::string format = "json";  ///< json or csv
  std::optional<std::string> theta;  ///< comma-separated override for classify/cnc
  std::filesystem::path config_dir = ".";  ///< base for relative paths inside the config
};

/// Runs `command` with an already-parsed config. Writes the summary to `out`
/// and diagnostics to `err`; returns an ExitCode. Never throws.
int run_command(const std::string& command, const Json& config, const Options& options,
                std::ostream& out, std::ostream& err);

/// Reads the config file, then dispatches to run_command.
int run_command_file(const std::string& command, const std::filesystem::path& config_path,
                     Options options, std::ostream& out, std::ostream& err);

/// Parses "a,b,c" into a vector. Throws ConfigError on malformed input.
Vector parse_theta(const std::string& text);

}  // namespace sosp_pg::cli
