#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace sardd {

// Entry point of the command-line tool: `sardd <simulate|train|despeckle|eval> [flags]`.
// Returns 0 on success, 2 on a usage error, 1 on any other failure; errors are
// reported on stderr.
int run_command(const std::vector<std::string>& args);
int run_command(int argc, const char* const* argv);

// Settings for `command` after layering defaults, the --config file and explicit
// flags (highest precedence). Throws HelpRequested for --help and UsageError for unknown commands, flags or
// config keys. This is what each run writes to <out>/config.json.
// Thrown by resolve_settings for --help; what() is the help text.
struct HelpRequested : std::runtime_error {
  using std::runtime_error::runtime_error;
};

nlohmann::json resolve_settings(const std::vector<std::string>& args);

}  // namespace sardd
