#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dsq {

enum class ErrorCode {
  InvalidArgument,
  EmptyContext,
  UnknownBackend,
  TransportError,
  ReplayMiss,
  EmptyResults,
  LengthMismatch,
  EmptyDirective,
  TrivialQuery,
  EmptyResponse,
  EmptyQuery,
  UnparseableJudgeOutput,
  DegenerateInput,
  MalformedRecord,
  ConfigError,
  TemplateError,
  StoreError,
  NotFound,
  TooManySkips,
};

std::string_view to_string(ErrorCode code);

// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace dsq
