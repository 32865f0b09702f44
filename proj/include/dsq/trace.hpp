#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dsq/dialog.hpp"
#include "dsq/directive.hpp"
#include "dsq/query.hpp"
#include "dsq/responder.hpp"
#include "dsq/retrieval.hpp"
#include "dsq/topic.hpp"

namespace dsq {

enum class PipelineMode { Guided, Unguided, NoQuery };

std::string_view to_string(PipelineMode mode);
PipelineMode pipeline_mode_from_string(std::string_view text);

// Fallback reasons recorded in TraceFlags::fallbacks.
namespace fallback {
inline constexpr std::string_view kTopicAbsent = "topic_absent";
inline constexpr std::string_view kTopicError = "topic_error";
inline constexpr std::string_view kDirectiveEmpty = "directive_empty";
inline constexpr std::string_view kDirectiveError = "directive_error";
inline constexpr std::string_view kQueryError = "query_error";
inline constexpr std::string_view kRetrievalEmpty = "retrieval_empty";
inline constexpr std::string_view kRetrievalError = "retrieval_error";
}  // namespace fallback

struct TraceFlags {
  bool trivial_retry = false;
  bool trivial_query = false;
  bool instruction_mismatch = false;
  std::vector<std::string> fallbacks;
  std::vector<std::string> errors;

  bool operator==(const TraceFlags&) const = default;
};

/// Everything one pipeline turn did. turn_index is the position of the user
/// turn in the conversation; the bot reply sits at turn_index + 1.
struct TurnTrace {
  std::string session_id;
  std::size_t turn_index = 0;
  PipelineMode mode = PipelineMode::Guided;
  PipelineMode effective_mode = PipelineMode::Guided;
  std::string user_text;

  std::optional<TopicResult> topic;
  std::optional<Directive> directive;
  std::optional<QueryResult> query;
  std::optional<RetrievalOutcome> retrieval;
  ResponseResult response;

  std::map<std::string, GenerationParams> params;
  std::map<std::string, std::string> backends;
  std::map<std::string, double> timings_ms;
  TraceFlags flags;
  std::string template_version;

  /// Stage presence is monotone: directive or query => topic, retrieval => query.
  void validate() const;
  bool operator==(const TurnTrace&) const = default;
};

void to_json(nlohmann::json& j, const TurnTrace& t);
void from_json(const nlohmann::json& j, TurnTrace& t);

std::string to_jsonl_line(const TurnTrace& trace);
TurnTrace trace_from_jsonl_line(std::string_view line);

}  // namespace dsq
