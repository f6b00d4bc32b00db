#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace hiercas::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitRuntime = 3;

/// Runs the command line `args` (without the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Version string recorded in run manifests.
std::string version_string();

}  // namespace hiercas::cli
