#include "dsq/query.hpp"

#include <algorithm>

#include "dsq/error.hpp"
#include "dsq/text.hpp"

namespace dsq {

std::string_view to_string(QueryMode mode) {
  return mode == QueryMode::Guided ? "guided" : "unguided";
}

QueryMode query_mode_from_string(std::string_view value) {
  auto lower = text::to_lower(value);
  if (lower == "guided") return QueryMode::Guided;
  if (lower == "unguided") return QueryMode::Unguided;
  throw Error(ErrorCode::InvalidArgument, "unknown query mode '" + std::string(value) + "'");
}

namespace {

nlohmann::json optional_json(const std::optional<std::string>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::optional<std::string> optional_from(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<std::string>();
}

std::string comparable(std::string_view s) {
  auto out = text::to_lower(text::collapse_whitespace(s));
  while (!out.empty() && (out.back() == '?' || out.back() == '.' || out.back() == '!')) {
    out.pop_back();
  }
  return std::string(text::trim(out));
}

}  // namespace

void to_json(nlohmann::json& j, const QueryResult& q) {
  j = nlohmann::json{{"text", q.text},
                     {"mode", to_string(q.mode)},
                     {"topic_used", optional_json(q.topic_used)},
                     {"directive_used", optional_json(q.directive_used)},
                     {"raw_model_output", q.raw_model_output},
                     {"trivial_retry", q.trivial_retry},
                     {"trivial", q.trivial},
                     {"instruction_mismatch", q.instruction_mismatch}};
}

void from_json(const nlohmann::json& j, QueryResult& q) {
  q.text = j.at("text").get<std::string>();
  q.mode = query_mode_from_string(j.at("mode").get<std::string>());
  q.topic_used = optional_from(j, "topic_used");
  q.directive_used = optional_from(j, "directive_used");
  q.raw_model_output = j.value("raw_model_output", "");
  q.trivial_retry = j.value("trivial_retry", false);
  q.trivial = j.value("trivial", false);
  q.instruction_mismatch = j.value("instruction_mismatch", false);
}

std::string normalize_query(std::string_view raw, std::size_t max_words) {
  auto line = text::first_nonempty_line(raw);
  for (std::string_view label : {"search query:", "query:"}) {
    if (text::starts_with_icase(line, label)) {
      line = std::string(text::trim(std::string_view(line).substr(label.size())));
      break;
    }
  }
  bool stripped = true;
  while (stripped && line.size() >= 2) {
    stripped = false;
    for (std::string_view q : {"\"", "'", "`"}) {
      if (line.starts_with(q) && line.ends_with(q)) {
        line = std::string(text::trim(std::string_view(line).substr(1, line.size() - 2)));
        stripped = true;
      }
    }
    if (line.starts_with("\xE2\x80\x9C") && line.ends_with("\xE2\x80\x9D")) {
      line = std::string(text::trim(std::string_view(line).substr(3, line.size() - 6)));
      stripped = true;
    }
  }
  line = text::collapse_whitespace(line);
  while (line.ends_with("??")) line.pop_back();
  auto words = text::split_words(line);
  if (words.size() > max_words) {
    words.resize(max_words);
    line = text::join(words, " ");
  }
  return line;
}

bool detect_instruction_mismatch(std::string_view query) {
  if (text::is_blank(query)) {
    throw Error(ErrorCode::InvalidArgument, "instruction-mismatch check needs a non-empty query");
  }
  static constexpr std::string_view kSecondPerson[] = {"you", "your", "yours", "yourself",
                                                       "yourselves"};
  for (const auto& token : text::tokenize(query)) {
    if (std::find(std::begin(kSecondPerson), std::end(kSecondPerson), token) !=
        std::end(kSecondPerson)) {
      return true;
    }
  }
  return false;
}

bool is_trivial_query(std::string_view query, const DialogContext& ctx) {
  const auto needle = comparable(query);
  if (needle.empty()) return false;
  for (const auto& turn : window(ctx)) {
    if (comparable(turn.text) == needle) return true;
  }
  return false;
}

QueryGenerator::QueryGenerator(std::shared_ptr<const BackendHub> hub,
                               std::shared_ptr<const PromptTemplates> templates, SpeakerTags tags,
                               GenerationParams params)
    : hub_(std::move(hub)),
      templates_(std::move(templates)),
      tags_(std::move(tags)),
      params_(params) {}

std::string QueryGenerator::render_prompt(const DialogContext& ctx, const TopicResult& topic,
                                          const Directive* directive, QueryMode mode) const {
  TemplateVars vars{{"transcript", render_transcript(window(ctx), tags_)}};
  if (mode == QueryMode::Guided) {
    if (!directive) throw Error(ErrorCode::InvalidArgument, "guided query needs a directive");
    if (!topic.present) throw Error(ErrorCode::InvalidArgument, "guided query needs a topic");
    vars["topic"] = topic.topic;
    vars["directive"] = directive->text;
    return templates_->render("query_guided", vars);
  }
  if (topic.present) {
    vars["topic"] = topic.topic;
    return templates_->render("query_unguided", vars);
  }
  return templates_->render("query_unguided_notopic", vars);
}

QueryResult QueryGenerator::sample(const DialogContext& ctx, const TopicResult& topic,
                                   const Directive* directive, QueryMode mode,
                                   const GenerationParams& params) const {
  auto prompt = render_prompt(ctx, topic, directive, mode);
  QueryResult result;
  result.mode = mode;
  if (topic.present) result.topic_used = topic.topic;
  if (mode == QueryMode::Guided) result.directive_used = directive->text;
  result.raw_model_output =
      hub_->generate({std::move(prompt), params, std::string(backend_ids::kQuery)});
  result.text = normalize_query(result.raw_model_output,
                                static_cast<std::size_t>(params.max_tokens));
  if (result.text.empty()) throw Error(ErrorCode::EmptyQuery, "query model returned nothing");
  result.instruction_mismatch = detect_instruction_mismatch(result.text);
  result.trivial = is_trivial_query(result.text, ctx);
  return result;
}

QueryResult QueryGenerator::generate_once(const DialogContext& ctx, const TopicResult& topic,
                                          const Directive* directive, QueryMode mode,
                                          const GenerationParams& params) const {
  auto result = sample(ctx, topic, directive, mode, params);
  if (result.trivial) {
    throw Error(ErrorCode::TrivialQuery, "query repeats a context turn: " + result.text);
  }
  return result;
}

QueryResult QueryGenerator::generate(const DialogContext& ctx, const TopicResult& topic,
                                     const Directive* directive, QueryMode mode) const {
  auto result = sample(ctx, topic, directive, mode, params_);
  if (!result.trivial) return result;
  auto retry_params = params_;
  retry_params.temperature = kRetryTemperature;
  auto retried = sample(ctx, topic, directive, mode, retry_params);
  retried.trivial_retry = true;
  return retried;
}

}  // namespace dsq
