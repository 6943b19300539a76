#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ham::cli {

// Exit codes shared by every subcommand.
inline constexpr int kOk = 0;
inline constexpr int kCheckFailed = 1;
inline constexpr int kUsageError = 2;

/// Runs `hamctl` with `args` (excluding the program name), writing the
/// report to `out` and diagnostics to `err`. Returns the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int main(int argc, char** argv);

}  // namespace ham::cli
