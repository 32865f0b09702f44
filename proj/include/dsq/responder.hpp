#pragma once

#include <memory>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "dsq/backends.hpp"
#include "dsq/dialog.hpp"
#include "dsq/retrieval.hpp"
#include "dsq/templates.hpp"

namespace dsq {

struct ResponseResult {
  std::string text;
  bool grounded = false;
  std::optional<Passage> passage_used;

  bool operator==(const ResponseResult&) const = default;
};

void to_json(nlohmann::json& j, const ResponseResult& r);
void from_json(const nlohmann::json& j, ResponseResult& r);

class Responder {
 public:
  static constexpr std::size_t kPassageBudget = 1200;

  Responder(std::shared_ptr<const BackendHub> hub,
            std::shared_ptr<const PromptTemplates> templates, SpeakerTags tags = {},
            GenerationParams params = GenerationParams::for_response());

  std::string render_grounded_prompt(const DialogContext& ctx, const Passage& passage) const;
  std::string render_ungrounded_prompt(const DialogContext& ctx) const;

  /// Grounded on outcome->selected when there is one; otherwise the plain
  /// no-search reply. Throws EmptyResponse on empty model output.
  ResponseResult respond(const DialogContext& ctx, const RetrievalOutcome* outcome) const;

  const GenerationParams& params() const { return params_; }

 private:
  std::shared_ptr<const BackendHub> hub_;
  std::shared_ptr<const PromptTemplates> templates_;
  SpeakerTags tags_;
  GenerationParams params_;
};

}  // namespace dsq
