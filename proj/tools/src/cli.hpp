#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace regcl::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitNumerical = 3;
inline constexpr int kExitTopology = 4;
inline constexpr int kExitInternal = 1;

/// Runs one `regcl` invocation. `args` excludes the program name. Errors are
/// reported on `err` and mapped to exit codes; nothing is thrown.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace regcl::cli
