#pragma once

// Front end of the hybrid-floquet tool: JSON configuration, commands and
// serialized outputs.

#include <json.hpp>

#include <stdexcept>
#include <string>
#include <vector>

namespace hf::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitAnalysis = 3;

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Every accepted key with its default value. Keys whose default is null
/// are resolved from the selected model.
nlohmann::json default_config();

/// Merges `user` into `base`, rejecting keys absent from `base`.
void merge_strict(nlohmann::json& base, const nlohmann::json& user, const std::string& path = "");

/// Applies one `--set a.b.c=value` override; the value is parsed as JSON and
/// falls back to a plain string.
void apply_set(nlohmann::json& config, const std::string& assignment);

/// Fills model-dependent nulls and validates the configuration.
nlohmann::json resolve(const nlohmann::json& merged);

/// Runs one command with an already-resolved config, writing into `out_dir`.
/// Returns the process exit code.
int run_command(const std::string& command, const nlohmann::json& config, const std::string& out_dir);

/// Entry point used by the executable.
int main(int argc, char** argv);

/// Shortest round-trip decimal form of `v`.
std::string format_number(double v);

/// RFC-4180 field quoting.
std::string csv_field(const std::string& s);

}  // namespace hf::cli
