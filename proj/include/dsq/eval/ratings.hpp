#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dsq/eval/judge.hpp"

namespace dsq::eval {

inline constexpr int kRatingMin = 1;
inline constexpr int kRatingMax = 5;

inline constexpr std::string_view kQueryAspects[] = {"Relevance", "Specificity", "Usefulness",
                                                     "Interestingness"};
inline constexpr std::string_view kResponseAspects[] = {"Engagement", "Informativeness",
                                                        "Coherence"};

/// Canonical aspect name for a full name or its short form (Rel, Spe, Use,
/// Int, Eng, Info, Coh), case-insensitive. Empty when unknown.
std::string canonical_aspect(std::string_view name);

struct RatingSheet {
  std::string item_id;
  std::string rater_id;
  std::string system_id;
  ItemKind kind = ItemKind::Query;
  std::map<std::string, int> aspects;
};

struct RejectedRow {
  std::string locator;  // file:line
  std::string reason;
};

struct RatingsReport {
  std::vector<RatingSheet> sheets;
  std::vector<RejectedRow> rejected;
  // system_id ("" when the files carry none) -> aspect -> mean over sheets
  std::map<std::string, std::map<std::string, double>> aspect_means;
  // system_id -> item_id -> mean over aspects of the per-aspect rater mean
  std::map<std::string, std::map<std::string, double>> item_overall;

  nlohmann::json to_json() const;
  std::string to_table() const;
};

/// Wide CSV: item_id, rater_id, optional system_id, then one column per
/// aspect. A file whose aspect columns are unknown or mix query and response
/// aspects is rejected (throws). A row with a missing, non-integer or
/// out-of-range value is rejected and reported with its locator.
RatingsReport ingest_ratings(const std::vector<std::filesystem::path>& files);

}  // namespace dsq::eval
