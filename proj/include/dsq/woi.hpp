#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dsq/backends.hpp"
#include "dsq/dialog.hpp"
#include "dsq/templates.hpp"

namespace dsq::woi {

// Dataset input is ParlAI-style JSONL: each line is {"<conversation id>": {
// "dialog_history": [{"action", "text", "context"?}, ...]}}. Actions used:
//   "Apprentice => Wizard"   user utterance
//   "Wizard => Apprentice"   bot utterance
//   "Wizard => SearchAgent"  search query issued before the next bot utterance
// Other actions (search results, persona lines) are not turns and are ignored,
// as are unknown fields.

struct WoiTurn {
  std::string conversation_id;
  std::size_t turn_index = 0;  // position among the conversation's utterances
  Speaker speaker = Speaker::User;
  std::string text;
  std::optional<std::string> gold_query;  // bot turns only
  std::optional<std::string> gold_selected_content;

  bool operator==(const WoiTurn&) const = default;
};

struct WoiConversation {
  std::string id;
  std::vector<WoiTurn> turns;
};

struct Dataset {
  std::vector<WoiConversation> conversations;

  std::size_t conversation_count() const { return conversations.size(); }
  std::size_t turn_count() const;
};

/// Reads one JSONL file, or every *.jsonl / *.json file in a directory in name
/// order. Malformed records throw MalformedRecord naming file and line.
Dataset ingest(const std::filesystem::path& path);
Dataset parse_jsonl(std::string_view content, std::string_view source = "<input>");

/// An annotated bot turn with the utterances that preceded it.
struct SearchTurn {
  WoiTurn turn;
  std::vector<Turn> context;

  /// Most recent user utterance in the context, if any.
  std::optional<std::string> previous_user_text() const;
  /// Stable across runs and input order: derived from conversation id and turn index.
  std::string example_id() const;
};

/// Bot turns carrying a gold query, in dataset order.
std::vector<SearchTurn> select_search_turns(const Dataset& dataset);

/// True when the utterance asks the bot for information or an opinion. May
/// throw; the turn is then dropped.
using IntentHook = std::function<bool(std::string_view utterance)>;

/// Interrogatives, auxiliary-verb questions and request phrases.
bool heuristic_is_request(std::string_view utterance);

/// Asks the "intent" backend with the intent template; expects yes or no.
IntentHook make_backend_intent_hook(std::shared_ptr<const BackendHub> hub,
                                    std::shared_ptr<const PromptTemplates> templates);

/// Keeps turns whose preceding user utterance is not a request. Turns without
/// a preceding user utterance are dropped.
std::vector<SearchTurn> filter_passive(const std::vector<SearchTurn>& turns,
                                       const IntentHook& is_request = heuristic_is_request);

struct FinetuneExample {
  std::string example_id;
  std::string conversation_id;
  std::size_t turn_index = 0;
  std::string context;
  std::string input_topic_prompt;
  std::string target_topic;
  std::string silver_directive;
  std::string input_query_prompt;
  std::string target_query;

  /// All silver fields are non-empty.
  void validate() const;
  bool operator==(const FinetuneExample&) const = default;
};

void to_json(nlohmann::json& j, const FinetuneExample& e);
void from_json(const nlohmann::json& j, FinetuneExample& e);

struct FinetuneOptions {
  std::size_t sample_size = 20000;
  std::uint64_t seed = 17;
  std::size_t parallelism = 8;
  double max_skip_ratio = 0.05;
  std::size_t window_limit = DialogContext::kDefaultWindow;
  SpeakerTags tags;
  // Backend id that serves the topic and query roles.
  std::string teacher = std::string(backend_ids::kTeacher);
};

struct FinetuneResult {
  std::vector<FinetuneExample> examples;  // in sample order
  std::size_t population = 0;
  std::size_t sampled = 0;
  std::size_t skipped = 0;
  std::vector<std::string> warnings;
};

/// Ids of the sample: the sample_size ids with the smallest seeded hash,
/// ordered by that hash. Independent of input order.
std::vector<std::string> sample_ids(const std::vector<std::string>& ids, std::size_t sample_size,
                                    std::uint64_t seed);

/// Silver labels per sampled turn: teacher topic, commonsense directive,
/// teacher guided query. Failed examples are skipped and counted; more than
/// max_skip_ratio skips throws.
FinetuneResult build_finetune_set(const std::vector<SearchTurn>& turns,
                                  std::shared_ptr<const BackendHub> hub,
                                  std::shared_ptr<const PromptTemplates> templates,
                                  const FinetuneOptions& options = {});

std::string to_jsonl(const std::vector<FinetuneExample>& examples);
std::vector<FinetuneExample> examples_from_jsonl(std::string_view content);

}  // namespace dsq::woi
