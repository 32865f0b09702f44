#include "dsq/topic.hpp"

#include "dsq/error.hpp"
#include "dsq/text.hpp"

namespace dsq {

TopicResult TopicResult::absent(std::string raw) { return {"", false, std::move(raw)}; }

TopicResult TopicResult::of(std::string topic, std::string raw) {
  TopicResult result{std::move(topic), true, std::move(raw)};
  result.validate();
  return result;
}

void TopicResult::validate() const {
  if (!present) {
    if (!topic.empty()) throw Error(ErrorCode::InvalidArgument, "absent topic must be empty");
    return;
  }
  if (text::is_blank(topic)) throw Error(ErrorCode::InvalidArgument, "present topic is blank");
  if (text::split_words(topic).size() > kMaxWords) {
    throw Error(ErrorCode::InvalidArgument, "topic exceeds ten words");
  }
}

void to_json(nlohmann::json& j, const TopicResult& t) {
  j = nlohmann::json{{"topic", t.topic}, {"present", t.present},
                     {"raw_model_output", t.raw_model_output}};
}

void from_json(const nlohmann::json& j, TopicResult& t) {
  t.topic = j.at("topic").get<std::string>();
  t.present = j.at("present").get<bool>();
  t.raw_model_output = j.value("raw_model_output", "");
  t.validate();
}

namespace {

std::string strip_quotes(std::string s) {
  static constexpr std::string_view kPairs[][2] = {
      {"\"", "\""}, {"'", "'"}, {"`", "`"}, {"\xE2\x80\x9C", "\xE2\x80\x9D"}};
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& pair : kPairs) {
      if (s.size() >= pair[0].size() + pair[1].size() && s.starts_with(pair[0]) &&
          s.ends_with(pair[1])) {
        s = std::string(text::trim(
            std::string_view(s).substr(pair[0].size(), s.size() - pair[0].size() - pair[1].size())));
        changed = true;
      }
    }
  }
  return s;
}

}  // namespace

TopicResult parse_topic_output(std::string_view raw) {
  auto line = text::first_nonempty_line(raw);
  if (text::starts_with_icase(line, "topic:")) line = std::string(text::trim(line.substr(6)));
  line = strip_quotes(std::move(line));
  if (!line.empty() && line.back() == '.') line.pop_back();
  line = strip_quotes(std::string(text::trim(line)));

  auto words = text::split_words(line);
  if (words.empty()) return TopicResult::absent(std::string(raw));
  if (words.size() > TopicResult::kMaxWords) words.resize(TopicResult::kMaxWords);
  auto topic = text::join(words, " ");
  if (text::to_lower(topic) == text::to_lower(TopicResult::kNoTopicSentinel)) {
    return TopicResult::absent(std::string(raw));
  }
  return TopicResult::of(std::move(topic), std::string(raw));
}

TopicTracker::TopicTracker(std::shared_ptr<const BackendHub> hub,
                           std::shared_ptr<const PromptTemplates> templates, SpeakerTags tags,
                           GenerationParams params)
    : hub_(std::move(hub)),
      templates_(std::move(templates)),
      tags_(std::move(tags)),
      params_(params) {}

std::string TopicTracker::render_prompt(const DialogContext& ctx) const {
  auto turns = window(ctx);
  return templates_->render("topic", {{"transcript", render_transcript(turns, tags_)}});
}

TopicResult TopicTracker::track(const DialogContext& ctx) const {
  auto prompt = render_prompt(ctx);
  auto raw = hub_->generate({prompt, params_, std::string(backend_ids::kTopic)});
  return parse_topic_output(raw);
}

}  // namespace dsq
