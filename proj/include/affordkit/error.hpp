#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace affordkit {

enum class ErrorCode {
  InvalidArgument,
  OutOfRange,
  IncompleteDocument,
  InvalidMask,
  RunMismatch,
  Unsatisfiable,
  EmptyMask,
  InsufficientRecords,
  EndpointUnreachable,
  RateLimited,
  BenchmarkMismatch,
  MissingCache,
  DegenerateX,
  EmptyRange,
  SpanMismatch,
  IoError,
  ParseError,
  ConfigError,
};

std::string_view to_string(ErrorCode code);

/// Error raised by every affordkit operation. The code is stable and is what
/// the CLI reports in its machine-readable failure line.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace affordkit
