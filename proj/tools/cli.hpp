#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cfglab {

// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitDefended = 1;  // attack stopped or device refused
inline constexpr int kExitUsage = 2;
inline constexpr int kExitIo = 3;        // unreadable file or malformed input

/// Runs one command line (args excludes the program name). Artifacts and
/// machine-readable results go to `out` or files, messages to `err`.
int runCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cfglab
