#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dvcr {

// Exit codes: 0 ok, 1 runtime failure, 2 configuration or usage error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

// args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dvcr
