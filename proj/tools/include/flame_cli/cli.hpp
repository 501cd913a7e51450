#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace flame::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitValidation = 4;
inline constexpr int kExitFit = 5;

// Runs one command line (args excludes the program name). Results go to
// `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace flame::cli
