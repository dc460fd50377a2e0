#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace nsmkl::cli {

/// Exit status of a usage error (unknown flag, missing argument, bad value).
inline constexpr int kUsageExit = 2;

/// Runs one command line (without the program name). Reports go to `out`; failures are written to
/// `err` as a single-line JSON object {"error": {"code", "message"}}.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// 64-bit FNV-1a of a file's bytes, as 16 lowercase hex digits.
std::string file_digest(const std::string& path);

}  // namespace nsmkl::cli
