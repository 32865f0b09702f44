#include "dsq/eval/taxonomy.hpp"

#include <algorithm>
#include <sstream>

#include "dsq/error.hpp"
#include "dsq/eval/csv.hpp"
#include "dsq/eval/stats.hpp"
#include "dsq/text.hpp"

namespace dsq::eval {

namespace {

std::string squash(std::string_view s) {
  std::string out;
  for (char c : text::to_lower(s)) {
    if (c != '_' && c != '-' && c != ' ') out += c;
  }
  return out;
}

std::string fmt1(double v) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(1);
  os << v;
  return os.str();
}

}  // namespace

std::string_view to_string(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::IncorrectTopic: return "IncorrectTopic";
    case ErrorCategory::TrivialQuery: return "TrivialQuery";
    case ErrorCategory::InstructionMismatch: return "InstructionMismatch";
    case ErrorCategory::Other: return "Other";
  }
  return "Other";
}

std::string_view to_string(Phase p) { return p == Phase::ZeroShot ? "ZeroShot" : "Finetuned"; }

ErrorCategory error_category_from_string(std::string_view text) {
  const auto s = squash(text);
  for (auto c : kErrorCategories) {
    if (s == squash(to_string(c))) return c;
  }
  if (s == "queryinstructionmismatch") return ErrorCategory::InstructionMismatch;
  throw Error(ErrorCode::InvalidArgument, "unknown error category '" + std::string(text) + "'");
}

Phase phase_from_string(std::string_view text) {
  const auto s = squash(text);
  if (s == "zeroshot") return Phase::ZeroShot;
  if (s == "finetuned") return Phase::Finetuned;
  throw Error(ErrorCode::InvalidArgument, "unknown phase '" + std::string(text) + "'");
}

TaxonomyReport taxonomy_report(const std::vector<ErrorLabel>& labels) {
  if (labels.empty()) throw Error(ErrorCode::InvalidArgument, "no error labels");
  TaxonomyReport report;
  for (const auto& l : labels) {
    auto& phase = report.phases[l.phase];
    ++phase.total;
    ++phase.counts[l.category];
  }
  for (auto& [_, phase] : report.phases) {
    for (auto c : kErrorCategories) {
      const auto n = phase.counts[c];
      phase.percent[c] = round1(100.0 * static_cast<double>(n) / static_cast<double>(phase.total));
    }
  }
  if (report.phases.size() == 2) {
    const auto& zs = report.phases[Phase::ZeroShot].counts;
    const auto& ft = report.phases[Phase::Finetuned].counts;
    for (auto c : kErrorCategories) {
      if (zs.at(c) == 0) continue;
      report.reduction_percent[c] =
          round1(100.0 * (1.0 - static_cast<double>(ft.at(c)) / static_cast<double>(zs.at(c))));
    }
  }
  return report;
}

nlohmann::json TaxonomyReport::to_json() const {
  nlohmann::json j = {{"phases", nlohmann::json::object()},
                      {"reduction_percent", nlohmann::json::object()}};
  for (const auto& [p, b] : phases) {
    nlohmann::json pj = {{"total", b.total}, {"counts", nlohmann::json::object()},
                         {"percent", nlohmann::json::object()}};
    for (auto c : kErrorCategories) {
      pj["counts"][std::string(to_string(c))] = b.counts.at(c);
      pj["percent"][std::string(to_string(c))] = b.percent.at(c);
    }
    j["phases"][std::string(to_string(p))] = pj;
  }
  for (const auto& [c, r] : reduction_percent) j["reduction_percent"][std::string(to_string(c))] = r;
  return j;
}

std::string TaxonomyReport::to_table() const {
  std::ostringstream os;
  os << "category              ";
  for (const auto& [p, _] : phases) os << "  " << to_string(p);
  if (!reduction_percent.empty()) os << "  reduction";
  os << '\n';
  for (auto c : kErrorCategories) {
    auto name = std::string(to_string(c));
    os << name << std::string(22 - std::min<std::size_t>(22, name.size()), ' ');
    for (const auto& [p, b] : phases) {
      auto cell = fmt1(b.percent.at(c)) + "%";
      os << "  " << std::string(std::max<std::size_t>(to_string(p).size(), cell.size()) - cell.size(), ' ')
         << cell;
    }
    if (!reduction_percent.empty()) {
      auto it = reduction_percent.find(c);
      auto cell = it == reduction_percent.end() ? std::string("-") : fmt1(it->second) + "%";
      os << "  " << std::string(9 - std::min<std::size_t>(9, cell.size()), ' ') << cell;
    }
    os << '\n';
  }
  for (const auto& [p, b] : phases) os << to_string(p) << " n=" << b.total << '\n';
  return os.str();
}

std::vector<ErrorLabel> read_labels_csv(const std::filesystem::path& path) {
  const auto table = read_csv(path);
  auto column = [&](std::string_view name) {
    auto it = std::find(table.header.begin(), table.header.end(), name);
    if (it == table.header.end()) {
      throw Error(ErrorCode::MalformedRecord, path.string() + ": missing column " + std::string(name));
    }
    return static_cast<std::size_t>(it - table.header.begin());
  };
  const auto id_col = column("item_id");
  const auto cat_col = column("category");
  const auto phase_col = column("phase");
  std::vector<ErrorLabel> labels;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const auto locator = path.string() + ":" + std::to_string(table.row_lines[r]);
    if (row.size() != table.header.size()) {
      throw Error(ErrorCode::MalformedRecord, locator + ": expected " +
                                                  std::to_string(table.header.size()) + " fields");
    }
    try {
      labels.push_back({std::string(text::trim(row[id_col])),
                        error_category_from_string(text::trim(row[cat_col])),
                        phase_from_string(text::trim(row[phase_col]))});
    } catch (const Error& e) {
      throw Error(ErrorCode::MalformedRecord, locator + ": " + e.what());
    }
  }
  return labels;
}

}  // namespace dsq::eval
