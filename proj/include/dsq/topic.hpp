#pragma once

#include <memory>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "dsq/backends.hpp"
#include "dsq/dialog.hpp"
#include "dsq/templates.hpp"

namespace dsq {

struct TopicResult {
  static constexpr std::size_t kMaxWords = 10;
  static constexpr std::string_view kNoTopicSentinel = "NONE";

  std::string topic;
  bool present = false;
  std::string raw_model_output;

  static TopicResult absent(std::string raw = {});
  /// Throws InvalidArgument when topic is blank or longer than kMaxWords.
  static TopicResult of(std::string topic, std::string raw = {});

  /// present <=> non-empty topic, and at most kMaxWords words.
  void validate() const;

  bool operator==(const TopicResult&) const = default;
};

void to_json(nlohmann::json& j, const TopicResult& t);
void from_json(const nlohmann::json& j, TopicResult& t);

/// First non-empty line, minus a leading "Topic:" label, surrounding quotes
/// and a trailing period, truncated to ten words. "NONE" and empty output
/// yield an absent topic; raw output is kept either way.
TopicResult parse_topic_output(std::string_view raw);

class TopicTracker {
 public:
  TopicTracker(std::shared_ptr<const BackendHub> hub,
               std::shared_ptr<const PromptTemplates> templates, SpeakerTags tags = {},
               GenerationParams params = GenerationParams::for_query());

  std::string render_prompt(const DialogContext& ctx) const;
  TopicResult track(const DialogContext& ctx) const;

  const GenerationParams& params() const { return params_; }

 private:
  std::shared_ptr<const BackendHub> hub_;
  std::shared_ptr<const PromptTemplates> templates_;
  SpeakerTags tags_;
  GenerationParams params_;
};

}  // namespace dsq
