#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ctgrpo {

/// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;  // usage, config or input validation errors
inline constexpr int kExitRuntime = 2;  // I/O and other runtime failures

/// Runs one `ctgrpo` invocation; `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

}  // namespace ctgrpo
