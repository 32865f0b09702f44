#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace dsq {

using TemplateVars = std::map<std::string, std::string, std::less<>>;

/// Substitutes every `{{name}}` placeholder. Values are inserted verbatim and
/// never rescanned. Unknown or unterminated placeholders throw TemplateError.
std::string render_template(std::string_view tmpl, const TemplateVars& vars);

/// Names of the placeholders a template references, in order of appearance.
std::vector<std::string> template_placeholders(std::string_view tmpl);

/// Versioned prompt assets: `<asset_dir>/templates/<version>/<name>.txt`.
/// One trailing newline is dropped from each file.
class PromptTemplates {
 public:
  static constexpr std::string_view kDefaultVersion = "v1";

  static PromptTemplates load(const std::filesystem::path& asset_dir,
                              std::string_view version = kDefaultVersion);
  /// Uses $DSQ_ASSET_DIR, then the compiled-in asset directory.
  static PromptTemplates load_default(std::string_view version = kDefaultVersion);
  static std::filesystem::path default_asset_dir();

  static PromptTemplates from_map(std::map<std::string, std::string, std::less<>> templates,
                                  std::string version);

  const std::string& version() const noexcept { return version_; }
  bool contains(std::string_view name) const;
  const std::string& raw(std::string_view name) const;
  std::string render(std::string_view name, const TemplateVars& vars) const;

 private:
  std::map<std::string, std::string, std::less<>> templates_;
  std::string version_;
};

// Names every template set must provide.
inline constexpr std::string_view kRequiredTemplates[] = {
    "topic",           "narrative_topic",      "narrative_generic",
    "role_instruction", "directive",           "query_guided",
    "query_unguided",  "query_unguided_notopic", "response_grounded",
    "response_ungrounded", "judge_query",      "judge_response",
    "judge_retry",     "judge_preference",     "judge_preference_tiebreak",
    "judge_choice_retry", "intent",
};

}  // namespace dsq
