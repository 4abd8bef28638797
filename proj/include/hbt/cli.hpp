#pragma once

// Command-line front end. The run configuration is a JSON document with the
// sections listed in fields(); every field is also a flag of the subcommands
// that use it, and --help text comes from the same table.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "hbt/correlator.hpp"
#include "hbt/estimator.hpp"
#include "hbt/photonsim.hpp"
#include "hbt/tagio.hpp"

namespace hbt::cli {

enum Command : unsigned {
  kSimulate = 1u << 0,
  kCorrelate = 1u << 1,
  kFit = 1u << 2,
  kRange = 1u << 3,
  kSnr = 1u << 4,
  kConvert = 1u << 5,
};

enum class FieldType { Number, Integer, Text };

struct Field {
  const char* section;
  const char* key;
  FieldType type;
  unsigned commands;
  /// JSON literal.
  const char* default_value;
  const char* help;
  /// Flag name when it differs from the generated one.
  const char* flag = nullptr;
};

std::span<const Field> fields();

/// `--key-with-dashes`, prefixed `ref-`/`probe-` for the detector sections.
std::string flag_name(const Field& field);

using RunConfig = nlohmann::ordered_json;

RunConfig default_config();

/// Overlays `doc` onto `config`. Unknown sections or keys and values of the
/// wrong type throw ConfigError naming `origin`.
void apply_overlay(RunConfig& config, const nlohmann::json& doc, const std::string& origin);

RunConfig load_config_file(const std::filesystem::path& path);

std::vector<std::string> preset_names();
std::optional<std::string_view> preset_text(std::string_view name);

ScenarioConfig scenario_from(const RunConfig& config);
CorrelationConfig correlation_from(const RunConfig& config);
FitOptions fit_options_from(const RunConfig& config);
Quantization quantization_from(const RunConfig& config);

/// Ground truth of a simulation run, with the effective configuration.
nlohmann::ordered_json truth_document(const ScenarioTruth& truth, const RunConfig& config);

/// Reads a binary or text tag file, telling them apart by the magic bytes.
TagFile read_any_tags(const std::filesystem::path& path);

/// Runs the command line. Exit codes: 0 success, 1 user error, 2 internal error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace hbt::cli
