#include "dsq/templates.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "dsq/error.hpp"
#include "dsq/text.hpp"

#ifndef DSQ_DEFAULT_ASSET_DIR
#define DSQ_DEFAULT_ASSET_DIR "assets"
#endif

namespace dsq {

namespace {

template <typename OnLiteral, typename OnName>
void scan_template(std::string_view tmpl, OnLiteral&& on_literal, OnName&& on_name) {
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    auto open = tmpl.find("{{", pos);
    if (open == std::string_view::npos) {
      on_literal(tmpl.substr(pos));
      return;
    }
    on_literal(tmpl.substr(pos, open - pos));
    auto close = tmpl.find("}}", open + 2);
    if (close == std::string_view::npos) {
      throw Error(ErrorCode::TemplateError, "unterminated placeholder at offset " +
                                                std::to_string(open));
    }
    auto name = text::trim(tmpl.substr(open + 2, close - open - 2));
    if (name.empty()) throw Error(ErrorCode::TemplateError, "empty placeholder");
    on_name(name);
    pos = close + 2;
  }
}

}  // namespace

std::string render_template(std::string_view tmpl, const TemplateVars& vars) {
  std::string out;
  out.reserve(tmpl.size());
  scan_template(
      tmpl, [&](std::string_view lit) { out.append(lit); },
      [&](std::string_view name) {
        auto it = vars.find(name);
        if (it == vars.end()) {
          throw Error(ErrorCode::TemplateError, "no value for placeholder '" +
                                                    std::string(name) + "'");
        }
        out.append(it->second);
      });
  return out;
}

std::vector<std::string> template_placeholders(std::string_view tmpl) {
  std::vector<std::string> names;
  scan_template(
      tmpl, [](std::string_view) {}, [&](std::string_view name) { names.emplace_back(name); });
  return names;
}

PromptTemplates PromptTemplates::load(const std::filesystem::path& asset_dir,
                                      std::string_view version) {
  const auto dir = asset_dir / "templates" / std::string(version);
  if (!std::filesystem::is_directory(dir)) {
    throw Error(ErrorCode::TemplateError, "template directory not found: " + dir.string());
  }
  std::map<std::string, std::string, std::less<>> templates;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() != ".txt") continue;
    std::ifstream in(entry.path(), std::ios::binary);
    std::stringstream buffer;
    buffer << in.rdbuf();
    auto body = buffer.str();
    if (!body.empty() && body.back() == '\n') body.pop_back();
    templates.emplace(entry.path().stem().string(), std::move(body));
  }
  return from_map(std::move(templates), std::string(version));
}

std::filesystem::path PromptTemplates::default_asset_dir() {
  if (const char* env = std::getenv("DSQ_ASSET_DIR"); env && *env) return env;
  return DSQ_DEFAULT_ASSET_DIR;
}

PromptTemplates PromptTemplates::load_default(std::string_view version) {
  return load(default_asset_dir(), version);
}

PromptTemplates PromptTemplates::from_map(
    std::map<std::string, std::string, std::less<>> templates, std::string version) {
  for (auto name : kRequiredTemplates) {
    auto it = templates.find(name);
    if (it == templates.end()) {
      throw Error(ErrorCode::TemplateError, "template set '" + version + "' lacks '" +
                                                std::string(name) + "'");
    }
    template_placeholders(it->second);  // validates syntax
  }
  PromptTemplates out;
  out.templates_ = std::move(templates);
  out.version_ = std::move(version);
  return out;
}

bool PromptTemplates::contains(std::string_view name) const {
  return templates_.find(name) != templates_.end();
}

const std::string& PromptTemplates::raw(std::string_view name) const {
  auto it = templates_.find(name);
  if (it == templates_.end()) {
    throw Error(ErrorCode::TemplateError, "unknown template '" + std::string(name) + "'");
  }
  return it->second;
}

std::string PromptTemplates::render(std::string_view name, const TemplateVars& vars) const {
  return render_template(raw(name), vars);
}

}  // namespace dsq
