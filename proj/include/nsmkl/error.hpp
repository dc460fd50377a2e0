#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nsmkl {

enum class ErrorCode {
  io,
  parse,
  shape,
  invalid_argument,
  degenerate,
  version,
  not_converged,
  internal,
};

std::string_view to_string(ErrorCode code);

/// Every failure surfaced by the library is an Error carrying a machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool condition, ErrorCode code, const std::string& what) {
  if (!condition) fail(code, what);
}

}  // namespace nsmkl
