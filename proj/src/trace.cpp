#include "dsq/trace.hpp"

#include "dsq/error.hpp"
#include "dsq/text.hpp"

namespace dsq {

std::string_view to_string(PipelineMode mode) {
  switch (mode) {
    case PipelineMode::Guided: return "guided";
    case PipelineMode::Unguided: return "unguided";
    case PipelineMode::NoQuery: return "noquery";
  }
  return "guided";
}

PipelineMode pipeline_mode_from_string(std::string_view value) {
  auto lower = text::to_lower(value);
  std::erase(lower, '-');
  std::erase(lower, '_');
  if (lower == "guided") return PipelineMode::Guided;
  if (lower == "unguided") return PipelineMode::Unguided;
  if (lower == "noquery") return PipelineMode::NoQuery;
  throw Error(ErrorCode::InvalidArgument, "unknown pipeline mode '" + std::string(value) + "'");
}

void TurnTrace::validate() const {
  if (directive && !topic) throw Error(ErrorCode::MalformedRecord, "directive without topic");
  if (query && !topic) throw Error(ErrorCode::MalformedRecord, "query without topic");
  if (retrieval && !query) throw Error(ErrorCode::MalformedRecord, "retrieval without query");
  if (response.grounded != response.passage_used.has_value()) {
    throw Error(ErrorCode::MalformedRecord, "grounded flag disagrees with passage_used");
  }
}

namespace {

template <typename T>
nlohmann::json nullable(const std::optional<T>& value) {
  return value ? nlohmann::json(*value) : nlohmann::json(nullptr);
}

template <typename T>
std::optional<T> read_nullable(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<T>();
}

}  // namespace

void to_json(nlohmann::json& j, const TurnTrace& t) {
  j = nlohmann::json{{"session_id", t.session_id},
                     {"turn_index", t.turn_index},
                     {"mode", to_string(t.mode)},
                     {"effective_mode", to_string(t.effective_mode)},
                     {"user_text", t.user_text},
                     {"topic", nullable(t.topic)},
                     {"directive", nullable(t.directive)},
                     {"query", nullable(t.query)},
                     {"retrieval", nullable(t.retrieval)},
                     {"response", t.response},
                     {"params", t.params},
                     {"backends", t.backends},
                     {"timings_ms", t.timings_ms},
                     {"flags",
                      {{"trivial_retry", t.flags.trivial_retry},
                       {"trivial_query", t.flags.trivial_query},
                       {"instruction_mismatch", t.flags.instruction_mismatch},
                       {"fallbacks", t.flags.fallbacks},
                       {"errors", t.flags.errors}}},
                     {"template_version", t.template_version}};
}

void from_json(const nlohmann::json& j, TurnTrace& t) {
  t.session_id = j.at("session_id").get<std::string>();
  t.turn_index = j.at("turn_index").get<std::size_t>();
  t.mode = pipeline_mode_from_string(j.at("mode").get<std::string>());
  t.effective_mode = pipeline_mode_from_string(j.at("effective_mode").get<std::string>());
  t.user_text = j.at("user_text").get<std::string>();
  t.topic = read_nullable<TopicResult>(j, "topic");
  t.directive = read_nullable<Directive>(j, "directive");
  t.query = read_nullable<QueryResult>(j, "query");
  t.retrieval = read_nullable<RetrievalOutcome>(j, "retrieval");
  t.response = j.at("response").get<ResponseResult>();
  t.params = j.value("params", std::map<std::string, GenerationParams>{});
  t.backends = j.value("backends", std::map<std::string, std::string>{});
  t.timings_ms = j.value("timings_ms", std::map<std::string, double>{});
  const auto& f = j.at("flags");
  t.flags.trivial_retry = f.value("trivial_retry", false);
  t.flags.trivial_query = f.value("trivial_query", false);
  t.flags.instruction_mismatch = f.value("instruction_mismatch", false);
  t.flags.fallbacks = f.value("fallbacks", std::vector<std::string>{});
  t.flags.errors = f.value("errors", std::vector<std::string>{});
  t.template_version = j.value("template_version", "");
  t.validate();
}

std::string to_jsonl_line(const TurnTrace& trace) {
  return nlohmann::json(trace).dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

TurnTrace trace_from_jsonl_line(std::string_view line) {
  auto doc = nlohmann::json::parse(line, nullptr, false);
  if (doc.is_discarded()) throw Error(ErrorCode::MalformedRecord, "trace line is not JSON");
  return doc.get<TurnTrace>();
}

}  // namespace dsq
