#include "dsq/eval/judge.hpp"

#include <fstream>
#include <map>

#include <spdlog/spdlog.h>

#include "dsq/error.hpp"
#include "dsq/eval/stats.hpp"
#include "dsq/parallel.hpp"
#include "dsq/text.hpp"

namespace dsq::eval {

namespace {

bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }

struct NumberToken {
  long value;
  std::size_t end;
};

// First run of digits not glued to a letter, a decimal point or a minus sign.
std::optional<NumberToken> first_integer_token(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    if (!is_digit(s[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < s.size() && is_digit(s[j])) ++j;
    const bool glued_before = i > 0 && (is_alpha(s[i - 1]) || s[i - 1] == '-' || s[i - 1] == '.');
    const bool glued_after =
        j < s.size() && (is_alpha(s[j]) || (s[j] == '.' && j + 1 < s.size() && is_digit(s[j + 1])));
    if (!glued_before && !glued_after) {
      if (j - i > 6) return std::nullopt;
      return NumberToken{std::stol(std::string(s.substr(i, j - i))), j};
    }
    i = j;
  }
  return std::nullopt;
}

std::string ask(const BackendHub& hub, const JudgeOptions& options, std::string prompt) {
  return hub.generate({std::move(prompt), options.params, options.judge_id});
}

bool flip_for(const std::string& item_id) {
  const auto h = sha256_hex(item_id);
  return (std::stoi(h.substr(0, 2), nullptr, 16) & 1) != 0;
}

}  // namespace

std::string_view to_string(ItemKind kind) { return kind == ItemKind::Query ? "query" : "response"; }

ItemKind item_kind_from_string(std::string_view text) {
  const auto s = text::to_lower(text);
  if (s == "query" || s == "queries") return ItemKind::Query;
  if (s == "response" || s == "responses") return ItemKind::Response;
  throw Error(ErrorCode::InvalidArgument, "unknown item kind '" + std::string(text) + "'");
}

void from_json(const nlohmann::json& j, EvalItem& item) {
  j.at("item_id").get_to(item.item_id);
  j.at("context").get_to(item.context);
  j.at("candidate").get_to(item.candidate);
  item.system_id = j.value("system_id", "");
  if (j.contains("passage") && j["passage"].is_string()) item.passage = j["passage"].get<std::string>();
}

void to_json(nlohmann::json& j, const EvalItem& item) {
  j = {{"item_id", item.item_id},
       {"context", item.context},
       {"candidate", item.candidate},
       {"system_id", item.system_id}};
  if (item.passage) j["passage"] = *item.passage;
}

std::vector<EvalItem> load_items(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::NotFound, "cannot open " + path.string());
  std::vector<EvalItem> items;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::is_blank(line)) continue;
    try {
      items.push_back(nlohmann::json::parse(line).get<EvalItem>());
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::MalformedRecord,
                  path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return items;
}

void to_json(nlohmann::json& j, const JudgeScore& s) {
  j = {{"item_id", s.item_id},
       {"kind", to_string(s.kind)},
       {"raw_score", s.raw_score},
       {"judge_backend_id", s.judge_backend_id},
       {"rationale_text", s.rationale_text ? nlohmann::json(*s.rationale_text) : nlohmann::json(nullptr)},
       {"retried", s.retried}};
}

std::optional<int> parse_judge_score(std::string_view output) {
  auto tok = first_integer_token(output);
  if (!tok || tok->value < 1 || tok->value > 10) return std::nullopt;
  return static_cast<int>(tok->value);
}

std::optional<std::string> judge_rationale(std::string_view output) {
  auto tok = first_integer_token(output);
  if (!tok) return std::nullopt;
  auto rest = output.substr(tok->end);
  if (rest.starts_with("/10")) rest.remove_prefix(3);
  std::size_t i = 0;
  // Skip separators such as ".", ":", "-" and dashes (multi-byte included).
  while (i < rest.size() && !std::isalnum(static_cast<unsigned char>(rest[i])) && rest[i] != '(' &&
         rest[i] != '"') {
    ++i;
  }
  auto r = text::trim(rest.substr(i));
  if (r.empty()) return std::nullopt;
  return std::string(r);
}

std::vector<JudgeScore> judge_absolute(const std::vector<EvalItem>& items, ItemKind kind,
                                       const BackendHub& hub, const PromptTemplates& templates,
                                       const JudgeOptions& options) {
  std::vector<JudgeScore> scores(items.size());
  parallel_for(items.size(), options.parallelism, [&](std::size_t i) {
    const auto& item = items[i];
    TemplateVars vars{{"context", item.context}, {"candidate", item.candidate}};
    std::string prompt;
    if (kind == ItemKind::Query) {
      prompt = templates.render("judge_query", vars);
    } else {
      vars["passage"] = item.passage.value_or("(none)");
      prompt = templates.render("judge_response", vars);
    }
    JudgeScore s{item.item_id, kind, 0, options.judge_id, std::nullopt, false};
    auto out = ask(hub, options, prompt);
    auto parsed = parse_judge_score(out);
    if (!parsed) {
      s.retried = true;
      out = ask(hub, options, templates.render("judge_retry", {{"prompt", prompt}}));
      parsed = parse_judge_score(out);
    }
    if (!parsed) {
      throw Error(ErrorCode::UnparseableJudgeOutput,
                  "item " + item.item_id + ": judge replied '" + out + "'");
    }
    s.raw_score = *parsed;
    s.rationale_text = judge_rationale(out);
    scores[i] = std::move(s);
  });
  return scores;
}

double judge_aggregate(const std::vector<JudgeScore>& scores) {
  std::vector<double> values;
  for (const auto& s : scores) values.push_back(s.raw_score);
  return round1(mean(values) * 10.0);
}

std::string_view to_string(PreferenceAspect aspect) {
  switch (aspect) {
    case PreferenceAspect::Relevant: return "relevant";
    case PreferenceAspect::Specific: return "specific";
    case PreferenceAspect::Overall: return "overall";
  }
  return "overall";
}

PreferenceAspect preference_aspect_from_string(std::string_view text) {
  const auto s = text::to_lower(text);
  if (s == "relevant" || s == "relevance") return PreferenceAspect::Relevant;
  if (s == "specific" || s == "specificity") return PreferenceAspect::Specific;
  if (s == "overall") return PreferenceAspect::Overall;
  throw Error(ErrorCode::InvalidArgument, "unknown preference aspect '" + std::string(text) + "'");
}

std::string_view aspect_description(PreferenceAspect aspect) {
  switch (aspect) {
    case PreferenceAspect::Relevant: return "more relevant to the conversation";
    case PreferenceAspect::Specific: return "more specific";
    case PreferenceAspect::Overall: return "better overall for continuing the conversation";
  }
  return "better overall for continuing the conversation";
}

std::vector<PreferencePair> pair_items(const std::vector<EvalItem>& a,
                                       const std::vector<EvalItem>& b) {
  std::map<std::string, const EvalItem*> by_id;
  for (const auto& item : b) by_id.emplace(item.item_id, &item);
  std::vector<PreferencePair> pairs;
  for (const auto& item : a) {
    auto it = by_id.find(item.item_id);
    if (it == by_id.end()) {
      spdlog::warn("item {} has no counterpart; skipped", item.item_id);
      continue;
    }
    pairs.push_back({item.item_id, item.context, item.candidate, it->second->candidate,
                     item.system_id, it->second->system_id});
  }
  if (pairs.size() != b.size()) {
    spdlog::warn("{} of {} items in the second file were paired", pairs.size(), b.size());
  }
  return pairs;
}

void to_json(nlohmann::json& j, const PreferenceJudgment& p) {
  j = {{"item_id", p.item_id},
       {"system_a_id", p.system_a_id},
       {"system_b_id", p.system_b_id},
       {"winner", p.winner == Winner::A ? "A" : "B"},
       {"aspect", to_string(p.aspect)},
       {"position_swapped", p.position_swapped},
       {"tiebreak", p.tiebreak}};
}

std::optional<int> parse_choice(std::string_view output) {
  auto tok = first_integer_token(output);
  if (!tok || (tok->value != 1 && tok->value != 2)) return std::nullopt;
  return static_cast<int>(tok->value);
}

std::vector<PreferenceJudgment> judge_preference(const std::vector<PreferencePair>& pairs,
                                                 PreferenceAspect aspect, const BackendHub& hub,
                                                 const PromptTemplates& templates,
                                                 const JudgeOptions& options) {
  std::vector<PreferenceJudgment> out(pairs.size());
  parallel_for(pairs.size(), options.parallelism, [&](std::size_t i) {
    const auto& p = pairs[i];
    // Returns true when the candidate shown first wins.
    auto first_wins = [&](std::string_view tmpl, const std::string& first,
                          const std::string& second) {
      const auto prompt = templates.render(tmpl, {{"aspect_description", std::string(aspect_description(aspect))},
                                                  {"context", p.context},
                                                  {"candidate_1", first},
                                                  {"candidate_2", second}});
      auto reply = ask(hub, options, prompt);
      auto choice = parse_choice(reply);
      if (!choice) {
        reply = ask(hub, options, templates.render("judge_choice_retry", {{"prompt", prompt}}));
        choice = parse_choice(reply);
      }
      if (!choice) {
        throw Error(ErrorCode::UnparseableJudgeOutput,
                    "item " + p.item_id + ": judge replied '" + reply + "'");
      }
      return *choice == 1;
    };

    PreferenceJudgment j{p.item_id, p.system_a_id, p.system_b_id, Winner::A, aspect, false, false};
    const bool a_wins_forward = first_wins("judge_preference", p.candidate_a, p.candidate_b);
    const bool b_wins_backward = first_wins("judge_preference", p.candidate_b, p.candidate_a);
    if (a_wins_forward != b_wins_backward) {
      j.winner = a_wins_forward ? Winner::A : Winner::B;
    } else {
      j.tiebreak = true;
      const bool a_first = (p.candidate_a <= p.candidate_b) != flip_for(p.item_id);
      const auto& first = a_first ? p.candidate_a : p.candidate_b;
      const auto& second = a_first ? p.candidate_b : p.candidate_a;
      const bool first_won = first_wins("judge_preference_tiebreak", first, second);
      j.winner = (first_won == a_first) ? Winner::A : Winner::B;
      j.position_swapped = !a_first;
    }
    out[i] = std::move(j);
  });
  return out;
}

nlohmann::json PreferenceTally::to_json() const {
  return {{"a_wins", a_wins},
          {"b_wins", b_wins},
          {"tiebreaks", tiebreaks},
          {"a_percent", a_percent},
          {"b_percent", b_percent}};
}

PreferenceTally tally_preferences(const std::vector<PreferenceJudgment>& judgments) {
  if (judgments.empty()) throw Error(ErrorCode::DegenerateInput, "no judgments to tally");
  PreferenceTally t;
  for (const auto& j : judgments) {
    (j.winner == Winner::A ? t.a_wins : t.b_wins) += 1;
    if (j.tiebreak) ++t.tiebreaks;
  }
  const double n = static_cast<double>(judgments.size());
  t.a_percent = round1(100.0 * static_cast<double>(t.a_wins) / n);
  t.b_percent = round1(100.0 * static_cast<double>(t.b_wins) / n);
  return t;
}

std::vector<double> rank_responses(const std::vector<EvalItem>& items, const BackendHub& hub,
                                   std::string_view ranker_id) {
  std::vector<double> scores;
  scores.reserve(items.size());
  for (const auto& item : items) {
    scores.push_back(hub.rerank({item.context, {item.candidate}}, ranker_id).at(0));
  }
  return scores;
}

double rank_aggregate(const std::vector<double>& scores) { return round1(mean(scores) * 100.0); }

}  // namespace dsq::eval
