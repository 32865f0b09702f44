#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "dsq/backends.hpp"
#include "dsq/dialog.hpp"
#include "dsq/directive.hpp"
#include "dsq/templates.hpp"
#include "dsq/topic.hpp"

namespace dsq {

enum class QueryMode { Guided, Unguided };

std::string_view to_string(QueryMode mode);
QueryMode query_mode_from_string(std::string_view text);

struct QueryResult {
  std::string text;
  QueryMode mode = QueryMode::Guided;
  std::optional<std::string> topic_used;
  std::optional<std::string> directive_used;
  std::string raw_model_output;
  // The first sample repeated a context turn and was resampled.
  bool trivial_retry = false;
  // The kept query still repeats a context turn.
  bool trivial = false;
  bool instruction_mismatch = false;

  bool operator==(const QueryResult&) const = default;
};

void to_json(nlohmann::json& j, const QueryResult& q);
void from_json(const nlohmann::json& j, QueryResult& q);

/// First line, "Search query:"/"Query:" label removed, wrapping quotes
/// stripped, whitespace collapsed, repeated trailing '?' reduced to one,
/// capped at max_words words.
std::string normalize_query(std::string_view raw, std::size_t max_words = 40);

/// Second-person conversational phrasing ("How long have you been ...?"),
/// i.e. a question to the user rather than a search query. Empty input throws.
bool detect_instruction_mismatch(std::string_view query);

/// True when the query repeats one of the windowed context turns.
bool is_trivial_query(std::string_view query, const DialogContext& ctx);

class QueryGenerator {
 public:
  static constexpr double kRetryTemperature = 0.9;

  QueryGenerator(std::shared_ptr<const BackendHub> hub,
                 std::shared_ptr<const PromptTemplates> templates, SpeakerTags tags = {},
                 GenerationParams params = GenerationParams::for_query());

  std::string render_prompt(const DialogContext& ctx, const TopicResult& topic,
                            const Directive* directive, QueryMode mode) const;

  /// One sample. Throws TrivialQuery when the result repeats a context turn,
  /// EmptyQuery when nothing usable came back.
  QueryResult generate_once(const DialogContext& ctx, const TopicResult& topic,
                            const Directive* directive, QueryMode mode,
                            const GenerationParams& params) const;

  /// Samples, resamples once at kRetryTemperature on a trivial query, and
  /// keeps the second sample (flagged) if it is trivial as well.
  QueryResult generate(const DialogContext& ctx, const TopicResult& topic,
                       const Directive* directive, QueryMode mode) const;

  const GenerationParams& params() const { return params_; }

 private:
  QueryResult sample(const DialogContext& ctx, const TopicResult& topic,
                     const Directive* directive, QueryMode mode,
                     const GenerationParams& params) const;

  std::shared_ptr<const BackendHub> hub_;
  std::shared_ptr<const PromptTemplates> templates_;
  SpeakerTags tags_;
  GenerationParams params_;
};

}  // namespace dsq
