#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace csl::cli {

/// Runs one command line. Returns the process exit code: 0 success,
/// 2 configuration or validation, 3 numerical failure, 4 I/O or format.
/// Fatal errors are written to `err` as a single JSON line.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Convenience overload; `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace csl::cli
