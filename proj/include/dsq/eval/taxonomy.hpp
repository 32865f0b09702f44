#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace dsq::eval {

enum class ErrorCategory { IncorrectTopic, TrivialQuery, InstructionMismatch, Other };
enum class Phase { ZeroShot, Finetuned };

inline constexpr std::array<ErrorCategory, 4> kErrorCategories = {
    ErrorCategory::IncorrectTopic, ErrorCategory::TrivialQuery,
    ErrorCategory::InstructionMismatch, ErrorCategory::Other};

std::string_view to_string(ErrorCategory c);
std::string_view to_string(Phase p);
ErrorCategory error_category_from_string(std::string_view text);
Phase phase_from_string(std::string_view text);

struct ErrorLabel {
  std::string item_id;
  ErrorCategory category = ErrorCategory::Other;
  Phase phase = Phase::ZeroShot;
};

struct PhaseBreakdown {
  std::size_t total = 0;
  std::map<ErrorCategory, std::size_t> counts;
  std::map<ErrorCategory, double> percent;  // one decimal
};

struct TaxonomyReport {
  std::map<Phase, PhaseBreakdown> phases;
  // 1 - finetuned/zero-shot, as a percentage to one decimal. Only for
  // categories present in both phases with a non-zero zero-shot count.
  std::map<ErrorCategory, double> reduction_percent;

  nlohmann::json to_json() const;
  std::string to_table() const;
};

/// Throws InvalidArgument on empty input.
TaxonomyReport taxonomy_report(const std::vector<ErrorLabel>& labels);

/// CSV with columns item_id, category, phase.
std::vector<ErrorLabel> read_labels_csv(const std::filesystem::path& path);

}  // namespace dsq::eval
