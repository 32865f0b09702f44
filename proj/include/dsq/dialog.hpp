#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace dsq {

enum class Speaker { User, Bot };

std::string_view to_string(Speaker speaker);
Speaker speaker_from_string(std::string_view text);

struct Turn {
  Speaker speaker = Speaker::User;
  std::string text;
  std::size_t index = 0;

  bool operator==(const Turn&) const = default;
};

/// Ordered two-party conversation history plus the number of most recent
/// turns that prompts get to see.
///
/// Construction validates that every turn has non-blank text and that turn
/// indices run 0, 1, 2, ... without gaps.
class DialogContext {
 public:
  static constexpr std::size_t kDefaultWindow = 6;

  DialogContext() = default;
  explicit DialogContext(std::vector<Turn> turns, std::size_t window_limit = kDefaultWindow);

  /// Builds a context from (speaker, text) pairs, assigning indices in order.
  static DialogContext from_pairs(
      const std::vector<std::pair<Speaker, std::string>>& pairs,
      std::size_t window_limit = kDefaultWindow);

  const std::vector<Turn>& turns() const noexcept { return turns_; }
  std::size_t window_limit() const noexcept { return window_limit_; }
  bool empty() const noexcept { return turns_.empty(); }
  std::size_t size() const noexcept { return turns_.size(); }

  /// Returns a copy with one more turn appended (index = size()).
  DialogContext with_turn(Speaker speaker, std::string text) const;
  DialogContext with_window(std::size_t window_limit) const;

  bool operator==(const DialogContext&) const = default;

 private:
  std::vector<Turn> turns_;
  std::size_t window_limit_ = kDefaultWindow;
};

struct GenerationParams {
  double top_p = 0.9;
  double temperature = 0.7;
  int max_tokens = 40;

  static GenerationParams for_query() { return {0.9, 0.7, 40}; }
  static GenerationParams for_response() { return {0.9, 0.7, 100}; }

  /// Throws InvalidArgument unless top_p in (0,1], temperature >= 0, max_tokens > 0.
  void validate() const;

  bool operator==(const GenerationParams&) const = default;
};

struct SpeakerTags {
  std::string user = "User";
  std::string bot = "Bot";

  bool operator==(const SpeakerTags&) const = default;
};

/// Last min(window_limit, size) turns, in order. Throws EmptyContext.
std::vector<Turn> window(const DialogContext& ctx);

/// "<tag>: <text>" per turn joined by '\n', no trailing newline.
std::string render_transcript(std::span<const Turn> turns, std::string_view user_tag,
                              std::string_view bot_tag);
std::string render_transcript(std::span<const Turn> turns, const SpeakerTags& tags = {});

/// Inverse of render_transcript for tags that never occur inside turn text.
std::vector<Turn> parse_transcript(std::string_view transcript, std::string_view user_tag,
                                   std::string_view bot_tag);

// Canonical conversation JSON: {"turns":[{"speaker":"user"|"bot","text":...}]}.
// Optional per-turn "target": true marks user turns selected for evaluation.
struct Conversation {
  std::string id;
  std::vector<Turn> turns;
  std::vector<std::size_t> target_turns;

  bool operator==(const Conversation&) const = default;
};

nlohmann::json to_json(const Conversation& conversation);
Conversation conversation_from_json(const nlohmann::json& doc);

/// Accepts a single conversation object, {"conversations":[...]}, or JSONL.
std::vector<Conversation> load_conversations(const std::string& path);

void to_json(nlohmann::json& j, const GenerationParams& p);
void from_json(const nlohmann::json& j, GenerationParams& p);

}  // namespace dsq
