#include "nsmkl/error.hpp"

namespace nsmkl {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::io: return "io";
    case ErrorCode::parse: return "parse";
    case ErrorCode::shape: return "shape";
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::degenerate: return "degenerate";
    case ErrorCode::version: return "version";
    case ErrorCode::not_converged: return "not_converged";
    case ErrorCode::internal: return "internal";
  }
  return "unknown";
}

}  // namespace nsmkl
