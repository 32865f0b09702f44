#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dsq/backends.hpp"
#include "dsq/templates.hpp"

namespace dsq::eval {

enum class ItemKind { Query, Response };

std::string_view to_string(ItemKind kind);
ItemKind item_kind_from_string(std::string_view text);

/// One candidate to evaluate. Candidate files are JSONL of these fields.
struct EvalItem {
  std::string item_id;
  std::string context;
  std::string candidate;
  std::string system_id;
  std::optional<std::string> passage;  // responses only
};

void from_json(const nlohmann::json& j, EvalItem& item);
void to_json(nlohmann::json& j, const EvalItem& item);
std::vector<EvalItem> load_items(const std::filesystem::path& path);

struct JudgeScore {
  std::string item_id;
  ItemKind kind = ItemKind::Query;
  int raw_score = 0;  // 1..10
  std::string judge_backend_id;
  std::optional<std::string> rationale_text;
  bool retried = false;

  bool operator==(const JudgeScore&) const = default;
};

void to_json(nlohmann::json& j, const JudgeScore& s);

/// First integer token of the output when it lies in [1,10]. A number glued
/// to a letter or preceded by a minus sign is not a token.
std::optional<int> parse_judge_score(std::string_view output);

/// Text following the score, trimmed of separators; empty -> nullopt.
std::optional<std::string> judge_rationale(std::string_view output);

struct JudgeOptions {
  std::string judge_id = std::string(backend_ids::kJudge);
  GenerationParams params{1.0, 0.0, 64};
  std::size_t parallelism = 8;
};

/// Scores every item; output order follows input order. An unparseable reply
/// is retried once with the retry prompt, then UnparseableJudgeOutput.
std::vector<JudgeScore> judge_absolute(const std::vector<EvalItem>& items, ItemKind kind,
                                       const BackendHub& hub, const PromptTemplates& templates,
                                       const JudgeOptions& options = {});

/// Mean raw score x 10, one decimal.
double judge_aggregate(const std::vector<JudgeScore>& scores);

// ---------------------------------------------------------------------------

enum class PreferenceAspect { Relevant, Specific, Overall };
enum class Winner { A, B };

std::string_view to_string(PreferenceAspect aspect);
PreferenceAspect preference_aspect_from_string(std::string_view text);
std::string_view aspect_description(PreferenceAspect aspect);

struct PreferencePair {
  std::string item_id;
  std::string context;
  std::string candidate_a;
  std::string candidate_b;
  std::string system_a_id;
  std::string system_b_id;
};

/// Pairs the items of two candidate files on item_id, keeping the order of
/// the first file. Items missing from either side are dropped with a warning.
std::vector<PreferencePair> pair_items(const std::vector<EvalItem>& a,
                                       const std::vector<EvalItem>& b);

struct PreferenceJudgment {
  std::string item_id;
  std::string system_a_id;
  std::string system_b_id;
  Winner winner = Winner::A;
  PreferenceAspect aspect = PreferenceAspect::Overall;
  // The deciding presentation showed candidate B first.
  bool position_swapped = false;
  bool tiebreak = false;

  bool operator==(const PreferenceJudgment&) const = default;
};

void to_json(nlohmann::json& j, const PreferenceJudgment& p);

/// First token that is exactly 1 or 2.
std::optional<int> parse_choice(std::string_view output);

/// Each pair is judged with A first and with B first. When the two verdicts
/// name different candidates, a tie-break prompt decides; its presentation
/// order is fixed per item (by item id and candidate text), so swapping A and
/// B in the input yields the mirrored judgment.
std::vector<PreferenceJudgment> judge_preference(const std::vector<PreferencePair>& pairs,
                                                 PreferenceAspect aspect, const BackendHub& hub,
                                                 const PromptTemplates& templates,
                                                 const JudgeOptions& options = {});

struct PreferenceTally {
  std::size_t a_wins = 0;
  std::size_t b_wins = 0;
  std::size_t tiebreaks = 0;
  double a_percent = 0.0;  // one decimal
  double b_percent = 0.0;

  nlohmann::json to_json() const;
};

PreferenceTally tally_preferences(const std::vector<PreferenceJudgment>& judgments);

// ---------------------------------------------------------------------------

/// One score per item from the ranking backend, scored as (context, candidate).
std::vector<double> rank_responses(const std::vector<EvalItem>& items, const BackendHub& hub,
                                   std::string_view ranker_id = backend_ids::kRanker);

/// Mean score x 100, one decimal.
double rank_aggregate(const std::vector<double>& scores);

}  // namespace dsq::eval
