#pragma once

#include <iosfwd>
#include <string>

#include "onsep/config.hpp"

namespace onsep::cli {

enum ExitCode : int { kSuccess = 0, kRuntimeFailure = 1, kUsageError = 2 };

/// Entry point shared by the binary and the tests. Subcommands: run, synth,
/// export-rules, import-check.
int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// One-line `key=value` rendering of a resolved configuration.
std::string describe(const OnlineConfig& cfg);

}  // namespace onsep::cli
