#include "dsq/error.hpp"

namespace dsq {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::EmptyContext: return "EmptyContext";
    case ErrorCode::UnknownBackend: return "UnknownBackend";
    case ErrorCode::TransportError: return "TransportError";
    case ErrorCode::ReplayMiss: return "ReplayMiss";
    case ErrorCode::EmptyResults: return "EmptyResults";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::EmptyDirective: return "EmptyDirective";
    case ErrorCode::TrivialQuery: return "TrivialQuery";
    case ErrorCode::EmptyResponse: return "EmptyResponse";
    case ErrorCode::EmptyQuery: return "EmptyQuery";
    case ErrorCode::UnparseableJudgeOutput: return "UnparseableJudgeOutput";
    case ErrorCode::DegenerateInput: return "DegenerateInput";
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::TemplateError: return "TemplateError";
    case ErrorCode::StoreError: return "StoreError";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::TooManySkips: return "TooManySkips";
  }
  return "Unknown";
}

}  // namespace dsq
