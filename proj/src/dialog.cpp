#include "dsq/dialog.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "dsq/error.hpp"
#include "dsq/text.hpp"

namespace dsq {

std::string_view to_string(Speaker speaker) {
  return speaker == Speaker::User ? "user" : "bot";
}

Speaker speaker_from_string(std::string_view text) {
  auto lower = text::to_lower(text::trim(text));
  if (lower == "user") return Speaker::User;
  if (lower == "bot") return Speaker::Bot;
  throw Error(ErrorCode::InvalidArgument, "unknown speaker '" + std::string(text) + "'");
}

DialogContext::DialogContext(std::vector<Turn> turns, std::size_t window_limit)
    : turns_(std::move(turns)), window_limit_(window_limit) {
  if (window_limit_ == 0) {
    throw Error(ErrorCode::InvalidArgument, "window_limit must be positive");
  }
  for (std::size_t i = 0; i < turns_.size(); ++i) {
    if (turns_[i].index != i) {
      throw Error(ErrorCode::InvalidArgument,
                  "turn indices must be contiguous from 0; got " +
                      std::to_string(turns_[i].index) + " at position " + std::to_string(i));
    }
    if (text::is_blank(turns_[i].text)) {
      throw Error(ErrorCode::InvalidArgument, "turn " + std::to_string(i) + " has blank text");
    }
  }
}

DialogContext DialogContext::from_pairs(
    const std::vector<std::pair<Speaker, std::string>>& pairs, std::size_t window_limit) {
  std::vector<Turn> turns;
  turns.reserve(pairs.size());
  for (const auto& [speaker, body] : pairs) {
    turns.push_back({speaker, body, turns.size()});
  }
  return DialogContext(std::move(turns), window_limit);
}

DialogContext DialogContext::with_turn(Speaker speaker, std::string body) const {
  auto turns = turns_;
  turns.push_back({speaker, std::move(body), turns_.size()});
  return DialogContext(std::move(turns), window_limit_);
}

DialogContext DialogContext::with_window(std::size_t window_limit) const {
  return DialogContext(turns_, window_limit);
}

void GenerationParams::validate() const {
  if (!(top_p > 0.0 && top_p <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "top_p must lie in (0,1]");
  }
  if (!(temperature >= 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "temperature must be non-negative");
  }
  if (max_tokens <= 0) {
    throw Error(ErrorCode::InvalidArgument, "max_tokens must be positive");
  }
}

std::vector<Turn> window(const DialogContext& ctx) {
  if (ctx.empty()) throw Error(ErrorCode::EmptyContext, "dialog context has no turns");
  const auto& turns = ctx.turns();
  auto n = std::min(ctx.window_limit(), turns.size());
  return {turns.end() - static_cast<std::ptrdiff_t>(n), turns.end()};
}

std::string render_transcript(std::span<const Turn> turns, std::string_view user_tag,
                              std::string_view bot_tag) {
  if (turns.empty()) throw Error(ErrorCode::EmptyContext, "cannot render an empty transcript");
  std::string out;
  for (std::size_t i = 0; i < turns.size(); ++i) {
    if (i) out.push_back('\n');
    out.append(turns[i].speaker == Speaker::User ? user_tag : bot_tag);
    out.append(": ");
    out.append(turns[i].text);
  }
  return out;
}

std::string render_transcript(std::span<const Turn> turns, const SpeakerTags& tags) {
  return render_transcript(turns, tags.user, tags.bot);
}

std::vector<Turn> parse_transcript(std::string_view transcript, std::string_view user_tag,
                                   std::string_view bot_tag) {
  std::vector<Turn> turns;
  const std::string user_prefix = std::string(user_tag) + ": ";
  const std::string bot_prefix = std::string(bot_tag) + ": ";
  std::size_t pos = 0;
  while (pos <= transcript.size()) {
    auto nl = transcript.find('\n', pos);
    auto line = transcript.substr(pos, nl == std::string_view::npos ? std::string_view::npos
                                                                    : nl - pos);
    if (line.starts_with(user_prefix)) {
      turns.push_back({Speaker::User, std::string(line.substr(user_prefix.size())), turns.size()});
    } else if (line.starts_with(bot_prefix)) {
      turns.push_back({Speaker::Bot, std::string(line.substr(bot_prefix.size())), turns.size()});
    } else if (!turns.empty()) {
      // Turn text with embedded newlines continues on the next line.
      turns.back().text.push_back('\n');
      turns.back().text.append(line);
    } else {
      throw Error(ErrorCode::MalformedRecord, "transcript line without a speaker tag");
    }
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  return turns;
}

nlohmann::json to_json(const Conversation& conversation) {
  nlohmann::json doc;
  if (!conversation.id.empty()) doc["id"] = conversation.id;
  auto& turns = doc["turns"] = nlohmann::json::array();
  for (const auto& turn : conversation.turns) {
    nlohmann::json t{{"speaker", to_string(turn.speaker)}, {"text", turn.text}};
    if (std::find(conversation.target_turns.begin(), conversation.target_turns.end(),
                  turn.index) != conversation.target_turns.end()) {
      t["target"] = true;
    }
    turns.push_back(std::move(t));
  }
  return doc;
}

Conversation conversation_from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("turns") || !doc["turns"].is_array()) {
    throw Error(ErrorCode::MalformedRecord, "conversation must be an object with a 'turns' array");
  }
  Conversation conversation;
  if (doc.contains("id")) {
    conversation.id = doc["id"].is_string() ? doc["id"].get<std::string>() : doc["id"].dump();
  }
  for (const auto& t : doc["turns"]) {
    if (!t.is_object() || !t.contains("speaker") || !t.contains("text") ||
        !t["text"].is_string()) {
      throw Error(ErrorCode::MalformedRecord,
                  "turn " + std::to_string(conversation.turns.size()) +
                      " needs 'speaker' and 'text'");
    }
    Turn turn{speaker_from_string(t["speaker"].get<std::string>()), t["text"].get<std::string>(),
              conversation.turns.size()};
    if (text::is_blank(turn.text)) {
      throw Error(ErrorCode::MalformedRecord,
                  "turn " + std::to_string(turn.index) + " has blank text");
    }
    if (t.value("target", false)) conversation.target_turns.push_back(turn.index);
    conversation.turns.push_back(std::move(turn));
  }
  return conversation;
}

std::vector<Conversation> load_conversations(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::NotFound, "cannot open " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string content = buffer.str();

  std::vector<Conversation> out;
  auto doc = nlohmann::json::parse(content, nullptr, false);
  if (!doc.is_discarded()) {
    if (doc.is_object() && doc.contains("conversations")) {
      for (const auto& c : doc["conversations"]) out.push_back(conversation_from_json(c));
    } else {
      out.push_back(conversation_from_json(doc));
    }
  } else {
    std::istringstream lines(content);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(lines, line)) {
      ++line_no;
      if (text::is_blank(line)) continue;
      auto record = nlohmann::json::parse(line, nullptr, false);
      if (record.is_discarded()) {
        throw Error(ErrorCode::MalformedRecord, path + ":" + std::to_string(line_no) +
                                                    ": invalid JSON");
      }
      out.push_back(conversation_from_json(record));
    }
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i].id.empty()) out[i].id = "conv-" + std::to_string(i);
  }
  return out;
}

void to_json(nlohmann::json& j, const GenerationParams& p) {
  j = nlohmann::json{{"top_p", p.top_p}, {"temperature", p.temperature},
                     {"max_tokens", p.max_tokens}};
}

void from_json(const nlohmann::json& j, GenerationParams& p) {
  p.top_p = j.at("top_p").get<double>();
  p.temperature = j.at("temperature").get<double>();
  p.max_tokens = j.at("max_tokens").get<int>();
}

}  // namespace dsq
