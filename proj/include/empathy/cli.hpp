#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace empathy::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitPartial = 3;

/// Runs one subcommand. `args` excludes the program name. Usage problems
/// return 2, operational failures 1, batches with failed items 3.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace empathy::cli
