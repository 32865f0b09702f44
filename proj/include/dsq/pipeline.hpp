#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dsq/config.hpp"
#include "dsq/dialog.hpp"
#include "dsq/directive.hpp"
#include "dsq/query.hpp"
#include "dsq/responder.hpp"
#include "dsq/retrieval.hpp"
#include "dsq/templates.hpp"
#include "dsq/topic.hpp"
#include "dsq/trace.hpp"

namespace dsq {

// Stage names used for hooks, timings, params and backend ids in traces.
namespace stage {
inline constexpr std::string_view kTopic = "topic";
inline constexpr std::string_view kDirective = "directive";
inline constexpr std::string_view kQuery = "query";
inline constexpr std::string_view kRetrieval = "retrieval";
inline constexpr std::string_view kResponse = "response";
}  // namespace stage

/// Runs one turn: topic -> directive -> query -> retrieval -> response.
///
/// Failures before the response stage never reach the caller. They degrade
/// the turn instead:
///   topic absent or failed     -> no query, ungrounded reply
///   directive empty or failed  -> unguided query
///   query failed               -> no query, ungrounded reply
///   retrieval empty or failed  -> ungrounded reply
/// Only a responder failure, or an exception thrown by a stage hook, escapes.
class Pipeline {
 public:
  using Clock = std::function<std::chrono::steady_clock::time_point()>;
  /// Called before each stage that is about to run, outside the fallback
  /// handling; an exception thrown here aborts the turn.
  using StageHook = std::function<void(std::string_view stage)>;

  Pipeline(std::shared_ptr<const BackendHub> hub, std::shared_ptr<const PromptTemplates> templates,
           PipelineConfig config);

  /// Builds backends and templates from the config.
  static Pipeline from_config(const PipelineConfig& config, std::shared_ptr<HttpClient> http);

  /// ctx must end with the user turn being answered.
  TurnTrace run_turn(const DialogContext& ctx, const std::string& session_id,
                     std::optional<PipelineMode> mode = std::nullopt) const;

  void set_stage_hook(StageHook hook) { hook_ = std::move(hook); }
  void set_clock(Clock clock) { clock_ = std::move(clock); }

  const PipelineConfig& config() const { return config_; }
  const std::shared_ptr<const BackendHub>& hub() const { return hub_; }
  const std::shared_ptr<const PromptTemplates>& templates() const { return templates_; }

 private:
  std::shared_ptr<const BackendHub> hub_;
  std::shared_ptr<const PromptTemplates> templates_;
  PipelineConfig config_;
  TopicTracker topic_;
  DirectiveGenerator directive_;
  QueryGenerator query_;
  Retriever retriever_;
  Responder responder_;
  StageHook hook_;
  Clock clock_;
};

struct ReplayOptions {
  std::optional<PipelineMode> mode;
  // Source bot turns stay in the context; otherwise each generated reply
  // replaces the source bot turn that follows its user turn.
  bool use_gold_context = true;
  std::string session_id;  // defaults to the conversation id
};

/// One trace per target user turn (all user turns when none are marked).
std::vector<TurnTrace> replay_conversation(const Conversation& conversation,
                                           const Pipeline& pipeline,
                                           const ReplayOptions& options = {});

}  // namespace dsq
