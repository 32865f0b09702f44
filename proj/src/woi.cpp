#include "dsq/woi.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "dsq/directive.hpp"
#include "dsq/error.hpp"
#include "dsq/query.hpp"
#include "dsq/text.hpp"
#include "dsq/topic.hpp"

namespace dsq::woi {

namespace {

constexpr std::string_view kUserAction = "Apprentice => Wizard";
constexpr std::string_view kBotAction = "Wizard => Apprentice";
constexpr std::string_view kSearchAction = "Wizard => SearchAgent";

[[noreturn]] void malformed(std::string_view source, std::size_t line, const std::string& what) {
  throw Error(ErrorCode::MalformedRecord,
              std::string(source) + ":" + std::to_string(line) + ": " + what);
}

// Sentences the wizard marked as used. selected_contents may carry a leading
// "nothing selected" row ahead of one row per retrieved document.
std::optional<std::string> selected_content(const nlohmann::json& context) {
  if (!context.is_object()) return std::nullopt;
  auto sel = context.find("selected_contents");
  auto docs = context.find("contents");
  if (sel == context.end() || docs == context.end() || !sel->is_array() || !docs->is_array()) {
    return std::nullopt;
  }
  const std::size_t offset = sel->size() == docs->size() + 1 ? 1 : 0;
  std::vector<std::string> picked;
  for (std::size_t d = 0; d < docs->size() && d + offset < sel->size(); ++d) {
    const auto& flags = (*sel)[d + offset];
    const auto& doc = (*docs)[d];
    if (!flags.is_array() || !doc.is_object() || !doc.contains("content")) continue;
    const auto& sentences = doc["content"];
    if (!sentences.is_array()) continue;
    for (std::size_t s = 0; s < flags.size() && s < sentences.size(); ++s) {
      if (flags[s].is_boolean() && flags[s].get<bool>() && sentences[s].is_string()) {
        picked.push_back(sentences[s].get<std::string>());
      }
    }
  }
  if (picked.empty()) return std::nullopt;
  return text::join(picked, " ");
}

WoiConversation parse_conversation(const std::string& id, const nlohmann::json& body,
                                   std::string_view source, std::size_t line) {
  if (!body.is_object()) malformed(source, line, "conversation " + id + " is not an object");
  auto history = body.find("dialog_history");
  if (history == body.end() || !history->is_array()) {
    malformed(source, line, "conversation " + id + " has no dialog_history array");
  }
  WoiConversation conv{id, {}};
  std::optional<std::string> pending_query;
  for (std::size_t i = 0; i < history->size(); ++i) {
    const auto& entry = (*history)[i];
    if (!entry.is_object() || !entry.contains("action") || !entry["action"].is_string()) {
      malformed(source, line, "dialog_history[" + std::to_string(i) + "] has no action");
    }
    const auto action = entry["action"].get<std::string>();
    const bool is_turn = action == kUserAction || action == kBotAction;
    if (!is_turn && action != kSearchAction) continue;
    if (!entry.contains("text") || !entry["text"].is_string()) {
      malformed(source, line, "dialog_history[" + std::to_string(i) + "] has no text");
    }
    auto text = std::string(text::trim(entry["text"].get<std::string>()));
    if (action == kSearchAction) {
      if (!text.empty()) pending_query = std::move(text);
      continue;
    }
    WoiTurn turn;
    turn.conversation_id = id;
    turn.turn_index = conv.turns.size();
    turn.speaker = action == kUserAction ? Speaker::User : Speaker::Bot;
    turn.text = std::move(text);
    if (turn.speaker == Speaker::Bot) {
      turn.gold_query = std::exchange(pending_query, std::nullopt);
      if (entry.contains("context")) turn.gold_selected_content = selected_content(entry["context"]);
    }
    conv.turns.push_back(std::move(turn));
  }
  return conv;
}

std::string seeded_key(std::uint64_t seed, const std::string& id) {
  return sha256_hex(std::to_string(seed) + ":" + id);
}

bool starts_with_word(std::string_view lower, std::string_view word) {
  if (!lower.starts_with(word)) return false;
  if (lower.size() == word.size()) return true;
  const char next = lower[word.size()];
  return !std::isalnum(static_cast<unsigned char>(next)) && next != '\'';
}

}  // namespace

std::size_t Dataset::turn_count() const {
  std::size_t n = 0;
  for (const auto& c : conversations) n += c.turns.size();
  return n;
}

Dataset parse_jsonl(std::string_view content, std::string_view source) {
  Dataset ds;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < content.size()) {
    auto end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    const auto line = content.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (text::is_blank(line)) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) malformed(source, line_no, "not a JSON object");
    if (j.contains("dialog_history")) {
      const auto id = j.value("conversation_id", std::string(source) + "#" + std::to_string(line_no));
      ds.conversations.push_back(parse_conversation(id, j, source, line_no));
      continue;
    }
    for (const auto& [id, body] : j.items()) {
      ds.conversations.push_back(parse_conversation(id, body, source, line_no));
    }
  }
  return ds;
}

Dataset ingest(const std::filesystem::path& path) {
  std::vector<std::filesystem::path> files;
  if (std::filesystem::is_directory(path)) {
    for (const auto& e : std::filesystem::directory_iterator(path)) {
      const auto ext = e.path().extension();
      if (e.is_regular_file() && (ext == ".jsonl" || ext == ".json")) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(path);
  }
  Dataset ds;
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    if (!in) throw Error(ErrorCode::NotFound, "cannot open " + f.string());
    std::stringstream buf;
    buf << in.rdbuf();
    auto part = parse_jsonl(buf.str(), f.string());
    for (auto& c : part.conversations) ds.conversations.push_back(std::move(c));
  }
  spdlog::info("ingested {} conversations, {} turns", ds.conversation_count(), ds.turn_count());
  return ds;
}

std::optional<std::string> SearchTurn::previous_user_text() const {
  for (auto it = context.rbegin(); it != context.rend(); ++it) {
    if (it->speaker == Speaker::User) return it->text;
  }
  return std::nullopt;
}

std::string SearchTurn::example_id() const {
  return sha256_hex(turn.conversation_id + '\x1f' + std::to_string(turn.turn_index)).substr(0, 16);
}

std::vector<SearchTurn> select_search_turns(const Dataset& dataset) {
  std::vector<SearchTurn> out;
  for (const auto& conv : dataset.conversations) {
    std::vector<Turn> context;
    for (const auto& t : conv.turns) {
      if (t.gold_query) out.push_back({t, context});
      if (!text::is_blank(t.text)) context.push_back({t.speaker, t.text, context.size()});
    }
  }
  return out;
}

bool heuristic_is_request(std::string_view utterance) {
  const auto lower = text::to_lower(text::collapse_whitespace(utterance));
  if (lower.find('?') != std::string::npos) return true;

  static constexpr std::string_view kOpeners[] = {
      "what",  "who",    "whom",  "whose", "where", "when",  "why",   "how",    "which",
      "do",    "does",   "did",   "is",    "are",   "was",   "were",  "can",    "could",
      "would", "will",   "should", "shall", "may",  "have",  "has",   "tell",   "explain",
      "describe", "recommend", "suggest", "show", "give", "name"};
  for (auto w : kOpeners) {
    if (starts_with_word(lower, w)) return true;
  }
  static constexpr std::string_view kPhrases[] = {
      "tell me",        "can you",          "could you",      "would you",
      "do you know",    "please",           "i want to know", "i'd like to know",
      "i would like to know", "i wonder",   "let me know",    "any idea",
      "your opinion",   "what do you think", "have you heard", "recommend",
      "any suggestions", "explain"};
  for (auto p : kPhrases) {
    if (lower.find(p) != std::string::npos) return true;
  }
  return false;
}

IntentHook make_backend_intent_hook(std::shared_ptr<const BackendHub> hub,
                                    std::shared_ptr<const PromptTemplates> templates) {
  return [hub = std::move(hub), templates = std::move(templates)](std::string_view utterance) {
    const auto prompt = templates->render("intent", {{"utterance", std::string(utterance)}});
    const auto raw = hub->generate(
        {prompt, GenerationParams{0.9, 0.7, 5}, std::string(backend_ids::kIntent)});
    const auto answer = text::to_lower(text::first_nonempty_line(raw));
    if (starts_with_word(answer, "yes")) return true;
    if (starts_with_word(answer, "no")) return false;
    throw Error(ErrorCode::MalformedRecord, "intent backend answered '" + raw + "'");
  };
}

std::vector<SearchTurn> filter_passive(const std::vector<SearchTurn>& turns,
                                       const IntentHook& is_request) {
  std::vector<SearchTurn> kept;
  for (const auto& t : turns) {
    const auto user = t.previous_user_text();
    if (!user) continue;
    try {
      if (!is_request(*user)) kept.push_back(t);
    } catch (const std::exception& e) {
      spdlog::warn("intent hook failed on {} turn {}: {}; turn excluded", t.turn.conversation_id,
                   t.turn.turn_index, e.what());
    }
  }
  return kept;
}

void FinetuneExample::validate() const {
  if (text::is_blank(target_topic) || text::is_blank(silver_directive) ||
      text::is_blank(target_query)) {
    throw Error(ErrorCode::InvalidArgument, "finetune example " + example_id +
                                                " has an empty silver field");
  }
}

void to_json(nlohmann::json& j, const FinetuneExample& e) {
  j = {{"example_id", e.example_id},
       {"conversation_id", e.conversation_id},
       {"turn_index", e.turn_index},
       {"context", e.context},
       {"input_topic_prompt", e.input_topic_prompt},
       {"target_topic", e.target_topic},
       {"silver_directive", e.silver_directive},
       {"input_query_prompt", e.input_query_prompt},
       {"target_query", e.target_query}};
}

void from_json(const nlohmann::json& j, FinetuneExample& e) {
  j.at("example_id").get_to(e.example_id);
  j.at("conversation_id").get_to(e.conversation_id);
  j.at("turn_index").get_to(e.turn_index);
  j.at("context").get_to(e.context);
  j.at("input_topic_prompt").get_to(e.input_topic_prompt);
  j.at("target_topic").get_to(e.target_topic);
  j.at("silver_directive").get_to(e.silver_directive);
  j.at("input_query_prompt").get_to(e.input_query_prompt);
  j.at("target_query").get_to(e.target_query);
}

std::vector<std::string> sample_ids(const std::vector<std::string>& ids, std::size_t sample_size,
                                    std::uint64_t seed) {
  std::vector<std::pair<std::string, std::string>> keyed;
  keyed.reserve(ids.size());
  for (const auto& id : ids) keyed.emplace_back(seeded_key(seed, id), id);
  std::sort(keyed.begin(), keyed.end());
  keyed.erase(std::unique(keyed.begin(), keyed.end()), keyed.end());
  if (keyed.size() > sample_size) keyed.resize(sample_size);
  std::vector<std::string> out;
  for (auto& [_, id] : keyed) out.push_back(std::move(id));
  return out;
}

FinetuneResult build_finetune_set(const std::vector<SearchTurn>& turns,
                                  std::shared_ptr<const BackendHub> hub,
                                  std::shared_ptr<const PromptTemplates> templates,
                                  const FinetuneOptions& options) {
  FinetuneResult result;
  std::vector<const SearchTurn*> usable;
  for (const auto& t : turns) {
    if (t.context.empty()) {
      result.warnings.push_back(t.turn.conversation_id + " turn " +
                                std::to_string(t.turn.turn_index) +
                                " has no preceding utterances; not sampled");
      spdlog::warn("{}", result.warnings.back());
    } else {
      usable.push_back(&t);
    }
  }
  result.population = usable.size();
  if (options.sample_size > usable.size()) {
    result.warnings.push_back("sample size " + std::to_string(options.sample_size) +
                              " exceeds population " + std::to_string(usable.size()) +
                              "; using every turn");
    spdlog::warn("{}", result.warnings.back());
  }

  std::map<std::string, const SearchTurn*> by_id;
  std::vector<std::string> ids;
  for (const auto* t : usable) {
    auto id = t->example_id();
    if (by_id.emplace(id, t).second) ids.push_back(std::move(id));
  }
  const auto chosen = sample_ids(ids, options.sample_size, options.seed);
  result.sampled = chosen.size();

  auto teacher_hub =
      hub->rerouted({{std::string(backend_ids::kTopic), options.teacher},
                     {std::string(backend_ids::kQuery), options.teacher}});
  const TopicTracker tracker(teacher_hub, templates, options.tags);
  const DirectiveGenerator directives(teacher_hub, templates, options.tags);
  const QueryGenerator queries(teacher_hub, templates, options.tags);

  std::vector<std::optional<FinetuneExample>> slots(chosen.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < chosen.size(); i = next++) {
      const auto& st = *by_id.at(chosen[i]);
      try {
        const DialogContext ctx(st.context, options.window_limit);
        FinetuneExample ex;
        ex.example_id = chosen[i];
        ex.conversation_id = st.turn.conversation_id;
        ex.turn_index = st.turn.turn_index;
        ex.context = render_transcript(window(ctx), options.tags);
        ex.input_topic_prompt = tracker.render_prompt(ctx);
        const auto topic = tracker.track(ctx);
        if (!topic.present) throw Error(ErrorCode::EmptyResults, "teacher found no topic");
        ex.target_topic = topic.topic;
        const auto directive = directives.generate(ctx, topic);
        ex.silver_directive = directive.text;
        ex.input_query_prompt = queries.render_prompt(ctx, topic, &directive, QueryMode::Guided);
        ex.target_query = queries.generate(ctx, topic, &directive, QueryMode::Guided).text;
        ex.validate();
        slots[i] = std::move(ex);
      } catch (const std::exception& e) {
        spdlog::warn("skipping {} turn {}: {}", st.turn.conversation_id, st.turn.turn_index,
                     e.what());
      }
    }
  };
  const std::size_t workers = std::clamp<std::size_t>(options.parallelism, 1, 64);
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < std::min(workers, chosen.size()); ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();

  for (auto& s : slots) {
    if (s) {
      result.examples.push_back(std::move(*s));
    } else {
      ++result.skipped;
    }
  }
  if (result.sampled > 0 &&
      static_cast<double>(result.skipped) > options.max_skip_ratio * result.sampled) {
    throw Error(ErrorCode::TooManySkips,
                std::to_string(result.skipped) + " of " + std::to_string(result.sampled) +
                    " examples failed");
  }
  return result;
}

std::string to_jsonl(const std::vector<FinetuneExample>& examples) {
  std::string out;
  for (const auto& e : examples) {
    out += nlohmann::json(e).dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
    out += '\n';
  }
  return out;
}

std::vector<FinetuneExample> examples_from_jsonl(std::string_view content) {
  std::vector<FinetuneExample> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < content.size()) {
    auto end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    const auto line = content.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (text::is_blank(line)) continue;
    try {
      out.push_back(nlohmann::json::parse(line).get<FinetuneExample>());
    } catch (const nlohmann::json::exception& e) {
      malformed("<export>", line_no, e.what());
    }
  }
  return out;
}

}  // namespace dsq::woi
