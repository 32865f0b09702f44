#include "dsq/directive.hpp"

#include "dsq/error.hpp"
#include "dsq/text.hpp"

namespace dsq {

void to_json(nlohmann::json& j, const SituationNarrative& n) {
  j = nlohmann::json{{"narrative", n.narrative}, {"role_instruction", n.role_instruction}};
  j["topic"] = n.topic ? nlohmann::json(*n.topic) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, SituationNarrative& n) {
  n.narrative = j.at("narrative").get<std::string>();
  n.role_instruction = j.at("role_instruction").get<std::string>();
  n.topic.reset();
  if (j.contains("topic") && !j["topic"].is_null()) n.topic = j["topic"].get<std::string>();
}

void to_json(nlohmann::json& j, const Directive& d) {
  j = nlohmann::json{{"text", d.text}, {"narrative_used", d.narrative_used}};
}

void from_json(const nlohmann::json& j, Directive& d) {
  d.text = j.at("text").get<std::string>();
  d.narrative_used = j.at("narrative_used").get<SituationNarrative>();
}

DirectiveGenerator::DirectiveGenerator(std::shared_ptr<const BackendHub> hub,
                                       std::shared_ptr<const PromptTemplates> templates,
                                       SpeakerTags names, GenerationParams params)
    : hub_(std::move(hub)),
      templates_(std::move(templates)),
      names_(std::move(names)),
      params_(params) {}

SituationNarrative DirectiveGenerator::build_narrative(const TopicResult& topic) const {
  TemplateVars vars{{"bot_name", names_.bot}, {"user_name", names_.user}};
  SituationNarrative out;
  if (topic.present) {
    vars["topic"] = topic.topic;
    out.narrative = templates_->render("narrative_topic", vars);
    out.topic = topic.topic;
  } else {
    out.narrative = templates_->render("narrative_generic", vars);
  }
  out.role_instruction = templates_->render("role_instruction", vars);
  return out;
}

std::string DirectiveGenerator::render_prompt(const DialogContext& ctx,
                                              const SituationNarrative& narrative) const {
  std::vector<std::string> history;
  for (const auto& turn : window(ctx)) history.push_back(turn.text);
  return templates_->render("directive", {{"narrative", narrative.narrative},
                                          {"role_instruction", narrative.role_instruction},
                                          {"history", text::join(history, " <turn> ")}});
}

Directive DirectiveGenerator::generate(const DialogContext& ctx, const TopicResult& topic) const {
  auto narrative = build_narrative(topic);
  auto raw = hub_->generate({render_prompt(ctx, narrative), params_,
                             std::string(backend_ids::kCosmo)});
  auto line = text::first_nonempty_line(raw);
  if (line.empty()) throw Error(ErrorCode::EmptyDirective, "commonsense model returned nothing");
  return {std::move(line), std::move(narrative)};
}

}  // namespace dsq
