#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace avsf::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitPartial = 2;

// args excludes the program name. Machine-readable output goes to `out`,
// logs and usage text to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace avsf::cli
