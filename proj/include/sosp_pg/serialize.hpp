#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"
#include "sosp_pg/mdp.hpp"
#include "sosp_pg/sosp.hpp"
#include "sosp_pg/trainer.hpp"
#include "sosp_pg/types.hpp"

namespace sosp_pg {

using Json = nlohmann::ordered_json;

/// Shortest "%.17g" rendering; round-trips every double.
std::string format_double(double x);

Json to_json(const Vector& v);
Json to_json(const Matrix& m);  ///< row-major nested arrays
Vector vector_from_json(const Json& j, const std::string& key);
Matrix matrix_from_json(const Json& j, const std::string& key);

/// Keys: n_states, n_actions, transition [s][a][s'], reward [s][a], rho0,
/// gamma, horizon, r_min, r_max. Errors are ConfigError naming the key path.
TabularMdp mdp_from_json(const Json& j, const std::string& prefix = "");
Json mdp_to_json(const TabularMdp& mdp);
TabularMdp load_mdp(const std::filesystem::path& path);

/// Throws IoError when the file cannot be read, ConfigError on bad JSON.
Json read_json_file(const std::filesystem::path& path);
/// Writes `text` atomically enough for our purposes; throws IoError.
void write_text_file(const std::filesystem::path& path, const std::string& text);

Json to_json(const SecondOrderReport& report);
Json to_json(const PaperConstants& constants);
Json to_json(const RegularityConstants& regularity);

/// Columns: k, theta_0..theta_{p-1}, J, grad_norm, lambda_max, region, varsigma.
std::string trace_csv(const RunRecord& record, std::size_t p);
/// Long format: run, k, variable, value. One row per scalar in the trace.
std::string trace_long_csv(const std::vector<RunRecord>& records, std::size_t p);

}  // namespace sosp_pg
