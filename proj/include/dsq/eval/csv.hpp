#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace dsq::eval {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> row_lines;  // 1-based source line of each row
};

/// RFC 4180 style: comma separated, double-quoted fields with "" escapes and
/// embedded newlines. Blank lines are skipped. Header cells are trimmed.
CsvTable parse_csv(std::string_view content);
CsvTable read_csv(const std::filesystem::path& path);

}  // namespace dsq::eval
