#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cardioseq::cli {

enum ExitCode : int { ok = 0, usage = 2, data = 3, numeric = 4 };

/// Runs the `cardioseq` command line. argv[0] is the program name.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Convenience overload for tests: `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cardioseq::cli
