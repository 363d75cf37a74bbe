#pragma once

#include "rtr/config.hpp"

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace rtr::cli {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitBadConfig = 2;
constexpr int kExitDiverged = 3;

/// Subcommand names in documentation order.
const std::vector<std::string>& commands();

/// Config keys accepted by a subcommand, with defaults. Throws ConfigError for
/// an unknown subcommand.
const std::vector<ConfigKey>& schema(std::string_view command);

/// Entry point behind the `rtr` executable. Reports go to the --out path when
/// given, else to `out`; errors are written to `err` as one JSON line.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace rtr::cli
