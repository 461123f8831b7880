#pragma once

#include <iosfwd>

namespace enfc::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

/// Parses argv (argv[0] is the program name), runs one subcommand and maps
/// errors to exit codes. Messages and help text go to `out` / `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace enfc::cli
