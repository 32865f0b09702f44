#include "dsq/eval/ratings.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include "dsq/error.hpp"
#include "dsq/eval/csv.hpp"
#include "dsq/eval/stats.hpp"
#include "dsq/text.hpp"

namespace dsq::eval {

namespace {

struct AspectName {
  std::string_view full;
  std::string_view short_form;
};

constexpr AspectName kAspectNames[] = {
    {"Relevance", "Rel"},   {"Specificity", "Spe"},    {"Usefulness", "Use"},
    {"Interestingness", "Int"}, {"Engagement", "Eng"}, {"Informativeness", "Info"},
    {"Coherence", "Coh"}};

bool is_query_aspect(std::string_view a) {
  return std::find(std::begin(kQueryAspects), std::end(kQueryAspects), a) != std::end(kQueryAspects);
}

std::string fmt2(double v) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(2);
  os << v;
  return os.str();
}

}  // namespace

std::string canonical_aspect(std::string_view name) {
  const auto lower = text::to_lower(text::trim(name));
  for (const auto& a : kAspectNames) {
    if (lower == text::to_lower(a.full) || lower == text::to_lower(a.short_form)) {
      return std::string(a.full);
    }
  }
  return {};
}

RatingsReport ingest_ratings(const std::vector<std::filesystem::path>& files) {
  RatingsReport report;
  for (const auto& path : files) {
    const auto table = read_csv(path);
    const auto where = path.string();
    std::optional<std::size_t> item_col, rater_col, system_col;
    std::vector<std::pair<std::size_t, std::string>> aspect_cols;
    for (std::size_t c = 0; c < table.header.size(); ++c) {
      const auto h = text::to_lower(table.header[c]);
      if (h == "item_id") {
        item_col = c;
      } else if (h == "rater_id") {
        rater_col = c;
      } else if (h == "system_id") {
        system_col = c;
      } else {
        auto aspect = canonical_aspect(table.header[c]);
        if (aspect.empty()) {
          throw Error(ErrorCode::MalformedRecord,
                      where + ": unknown aspect column '" + table.header[c] + "'");
        }
        aspect_cols.emplace_back(c, std::move(aspect));
      }
    }
    if (!item_col || !rater_col) {
      throw Error(ErrorCode::MalformedRecord, where + ": needs item_id and rater_id columns");
    }
    if (aspect_cols.empty()) throw Error(ErrorCode::MalformedRecord, where + ": no aspect columns");
    const bool query_kind = is_query_aspect(aspect_cols.front().second);
    for (const auto& [_, a] : aspect_cols) {
      if (is_query_aspect(a) != query_kind) {
        throw Error(ErrorCode::MalformedRecord,
                    where + ": mixes query and response aspects ('" + a + "')");
      }
    }

    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      const auto& row = table.rows[r];
      const auto locator = where + ":" + std::to_string(table.row_lines[r]);
      if (row.size() != table.header.size()) {
        report.rejected.push_back({locator, "expected " + std::to_string(table.header.size()) +
                                                " fields, got " + std::to_string(row.size())});
        continue;
      }
      RatingSheet sheet;
      sheet.item_id = std::string(text::trim(row[*item_col]));
      sheet.rater_id = std::string(text::trim(row[*rater_col]));
      if (system_col) sheet.system_id = std::string(text::trim(row[*system_col]));
      sheet.kind = query_kind ? ItemKind::Query : ItemKind::Response;
      std::string problem;
      if (sheet.item_id.empty() || sheet.rater_id.empty()) problem = "empty item_id or rater_id";
      for (const auto& [c, aspect] : aspect_cols) {
        if (!problem.empty()) break;
        const auto cell = text::trim(row[c]);
        int value = 0;
        const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
        if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size()) {
          problem = aspect + " value '" + std::string(cell) + "' is not an integer";
        } else if (value < kRatingMin || value > kRatingMax) {
          problem = aspect + " value " + std::to_string(value) + " outside [1,5]";
        } else {
          sheet.aspects[aspect] = value;
        }
      }
      if (!problem.empty()) {
        report.rejected.push_back({locator, problem});
        continue;
      }
      report.sheets.push_back(std::move(sheet));
    }
  }

  // system -> aspect -> values; system -> item -> aspect -> values
  std::map<std::string, std::map<std::string, std::vector<double>>> by_aspect;
  std::map<std::string, std::map<std::string, std::map<std::string, std::vector<double>>>> by_item;
  for (const auto& s : report.sheets) {
    for (const auto& [a, v] : s.aspects) {
      by_aspect[s.system_id][a].push_back(v);
      by_item[s.system_id][s.item_id][a].push_back(v);
    }
  }
  for (const auto& [sys, aspects] : by_aspect) {
    for (const auto& [a, values] : aspects) report.aspect_means[sys][a] = mean(values);
  }
  for (const auto& [sys, items] : by_item) {
    for (const auto& [item, aspects] : items) {
      std::vector<double> means;
      for (const auto& [_, values] : aspects) means.push_back(mean(values));
      report.item_overall[sys][item] = mean(means);
    }
  }
  return report;
}

nlohmann::json RatingsReport::to_json() const {
  auto rejected_json = nlohmann::json::array();
  for (const auto& r : rejected) rejected_json.push_back({{"locator", r.locator}, {"reason", r.reason}});
  return {{"sheet_count", sheets.size()},
          {"rejected", rejected_json},
          {"aspect_means", aspect_means},
          {"item_overall", item_overall}};
}

std::string RatingsReport::to_table() const {
  std::ostringstream os;
  for (const auto& [sys, aspects] : aspect_means) {
    os << (sys.empty() ? std::string("(all)") : sys);
    for (const auto& [a, m] : aspects) os << "  " << a << "=" << fmt2(m);
    os << '\n';
  }
  os << sheets.size() << " sheets, " << rejected.size() << " rejected rows\n";
  for (const auto& r : rejected) os << "  rejected " << r.locator << ": " << r.reason << '\n';
  return os.str();
}

}  // namespace dsq::eval
