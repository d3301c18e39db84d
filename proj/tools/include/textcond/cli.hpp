#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

namespace textcond::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,        // bad flags, unknown subcommand or config key, invalid value
  kInput = 2,        // missing or malformed input file, empty dataset
  kVerification = 3, // gradcheck failed
  kNumeric = 4,      // non-finite loss
};

/// Every configurable field with its default. Config files and `--a.b value`
/// overrides may only set keys present here.
nlohmann::json default_config();

/// Defaults, then the JSON file (merge patch), then overrides in order.
/// Throws std::invalid_argument on unknown keys or mistyped values.
nlohmann::json resolve_config(const std::string& config_path,
                              const std::vector<std::pair<std::string, std::string>>& overrides);

/// args excludes the program name: {"train", "--config", "run.json", ...}.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace textcond::cli
