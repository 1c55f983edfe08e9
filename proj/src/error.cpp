#include "affordkit/error.hpp"

namespace affordkit {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::IncompleteDocument: return "IncompleteDocument";
    case ErrorCode::InvalidMask: return "InvalidMask";
    case ErrorCode::RunMismatch: return "RunMismatch";
    case ErrorCode::Unsatisfiable: return "Unsatisfiable";
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::InsufficientRecords: return "InsufficientRecords";
    case ErrorCode::EndpointUnreachable: return "EndpointUnreachable";
    case ErrorCode::RateLimited: return "RateLimited";
    case ErrorCode::BenchmarkMismatch: return "BenchmarkMismatch";
    case ErrorCode::MissingCache: return "MissingCache";
    case ErrorCode::DegenerateX: return "DegenerateX";
    case ErrorCode::EmptyRange: return "EmptyRange";
    case ErrorCode::SpanMismatch: return "SpanMismatch";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

}  // namespace affordkit
