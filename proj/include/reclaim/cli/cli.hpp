#pragma once

#include <iosfwd>

namespace reclaim::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitOperational = 1;
inline constexpr int kExitUsage = 2;

/// Parses argv (argv[0] is the program name) and executes one command
/// against the state directory selected by --dir.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace reclaim::cli
