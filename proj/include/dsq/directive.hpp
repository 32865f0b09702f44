#pragma once

#include <memory>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "dsq/backends.hpp"
#include "dsq/dialog.hpp"
#include "dsq/templates.hpp"
#include "dsq/topic.hpp"

namespace dsq {

struct SituationNarrative {
  std::string narrative;
  std::string role_instruction;
  std::optional<std::string> topic;

  bool operator==(const SituationNarrative&) const = default;
};

/// The commonsense model's next-turn response. It is never shown to the user;
/// it tells the query generator what information is worth looking up.
struct Directive {
  std::string text;
  SituationNarrative narrative_used;

  bool operator==(const Directive&) const = default;
};

void to_json(nlohmann::json& j, const SituationNarrative& n);
void from_json(const nlohmann::json& j, SituationNarrative& n);
void to_json(nlohmann::json& j, const Directive& d);
void from_json(const nlohmann::json& j, Directive& d);

class DirectiveGenerator {
 public:
  DirectiveGenerator(std::shared_ptr<const BackendHub> hub,
                     std::shared_ptr<const PromptTemplates> templates, SpeakerTags names = {},
                     GenerationParams params = GenerationParams::for_response());

  SituationNarrative build_narrative(const TopicResult& topic) const;

  /// "<narrative> <sep> <role instruction> <sep> turn <turn> turn ..."
  std::string render_prompt(const DialogContext& ctx, const SituationNarrative& narrative) const;

  /// Throws EmptyDirective when the model produces nothing.
  Directive generate(const DialogContext& ctx, const TopicResult& topic) const;

  const GenerationParams& params() const { return params_; }

 private:
  std::shared_ptr<const BackendHub> hub_;
  std::shared_ptr<const PromptTemplates> templates_;
  SpeakerTags names_;
  GenerationParams params_;
};

}  // namespace dsq
