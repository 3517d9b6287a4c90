#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sharediff::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;

/// Entry point shared by the executable and the tests. `args` excludes the
/// program name. Results go to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sharediff::cli
