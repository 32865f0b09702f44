#include "dsq/responder.hpp"

#include "dsq/error.hpp"
#include "dsq/text.hpp"

namespace dsq {

void to_json(nlohmann::json& j, const ResponseResult& r) {
  j = nlohmann::json{{"text", r.text}, {"grounded", r.grounded}};
  j["passage_used"] = r.passage_used ? nlohmann::json(*r.passage_used) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, ResponseResult& r) {
  r.text = j.at("text").get<std::string>();
  r.grounded = j.at("grounded").get<bool>();
  r.passage_used.reset();
  if (j.contains("passage_used") && !j["passage_used"].is_null()) {
    r.passage_used = j["passage_used"].get<Passage>();
  }
  if (r.grounded != r.passage_used.has_value()) {
    throw Error(ErrorCode::MalformedRecord, "grounded flag disagrees with passage_used");
  }
}

Responder::Responder(std::shared_ptr<const BackendHub> hub,
                     std::shared_ptr<const PromptTemplates> templates, SpeakerTags tags,
                     GenerationParams params)
    : hub_(std::move(hub)),
      templates_(std::move(templates)),
      tags_(std::move(tags)),
      params_(params) {}

std::string Responder::render_grounded_prompt(const DialogContext& ctx,
                                              const Passage& passage) const {
  return templates_->render(
      "response_grounded",
      {{"passage", std::string(text::utf8_prefix(passage.text, kPassageBudget))},
       {"transcript", render_transcript(window(ctx), tags_)},
       {"bot_tag", tags_.bot}});
}

std::string Responder::render_ungrounded_prompt(const DialogContext& ctx) const {
  return templates_->render("response_ungrounded",
                            {{"transcript", render_transcript(window(ctx), tags_)},
                             {"bot_tag", tags_.bot}});
}

ResponseResult Responder::respond(const DialogContext& ctx,
                                  const RetrievalOutcome* outcome) const {
  ResponseResult result;
  std::string prompt;
  if (outcome && outcome->selected) {
    prompt = render_grounded_prompt(ctx, *outcome->selected);
    result.grounded = true;
    result.passage_used = outcome->selected;
  } else {
    prompt = render_ungrounded_prompt(ctx);
  }
  auto raw = hub_->generate({std::move(prompt), params_, std::string(backend_ids::kResponder)});
  // Models sometimes echo the speaker tag the prompt ends with.
  std::string_view body = raw;
  const auto tag = tags_.bot + ":";
  if (body.starts_with(tag)) body = text::trim(body.substr(tag.size()));
  if (text::is_blank(body)) throw Error(ErrorCode::EmptyResponse, "responder returned nothing");
  result.text = std::string(body);
  return result;
}

}  // namespace dsq
