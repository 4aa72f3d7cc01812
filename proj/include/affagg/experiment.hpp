#ifndef AFFAGG_EXPERIMENT_HPP
#define AFFAGG_EXPERIMENT_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace affagg {

/// Invalid configuration. The message names the offending field or line.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ExperimentInfo {
    std::string name;
    std::string description;
    /// Result exercised, or "plumbing".
    std::string verifies;
};

/// All experiment kinds in a fixed order.
const std::vector<ExperimentInfo>& experiments();
std::string list_experiments();

/// Parses a JSON config file; syntax errors report line and column.
nlohmann::json load_config(const std::filesystem::path& path);
/// Applies "a.b.c=value"; value is parsed as JSON when possible, else taken as a string.
void apply_override(nlohmann::json& config, std::string_view assignment);

struct RunOptions {
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;
    std::filesystem::path out_dir = ".";
};

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct RunResult {
    /// 0 all checks pass, 1 a check failed, 2 configuration error.
    int exit_code = 0;
    std::vector<CheckResult> checks;
    std::vector<std::string> outputs;
    /// Config echo with resolved defaults, version, wall time, checks, outputs.
    nlohmann::json report;
};

inline constexpr std::string_view kVersion = "affagg 0.1.0";

/// Runs one experiment and writes its CSV/JSON outputs plus report.json into
/// options.out_dir. Configuration problems give exit_code 2; the report is
/// written in every case where the output directory is usable.
RunResult run_experiment(std::string_view kind, nlohmann::json config, const RunOptions& options);

/// Report for a run that failed before the experiment started (config file
/// unreadable, bad override). Writes report.json when possible; exit_code 2.
RunResult config_failure(std::string_view kind, const std::string& message, const RunOptions& options);

}  // namespace affagg

#endif
