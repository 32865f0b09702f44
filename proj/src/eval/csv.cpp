#include "dsq/eval/csv.hpp"

#include <fstream>
#include <sstream>

#include "dsq/error.hpp"
#include "dsq/text.hpp"

namespace dsq::eval {

CsvTable parse_csv(std::string_view content) {
  CsvTable table;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any = false;
  std::size_t line = 1;
  std::size_t row_start = 1;

  auto end_row = [&] {
    row.push_back(std::move(field));
    field.clear();
    const bool blank = row.size() == 1 && text::is_blank(row[0]) && !any;
    if (!blank) {
      if (table.header.empty()) {
        for (auto& h : row) h = std::string(text::trim(h));
        table.header = std::move(row);
      } else {
        table.rows.push_back(std::move(row));
        table.row_lines.push_back(row_start);
      }
    }
    row.clear();
    any = false;
  };

  for (std::size_t i = 0; i < content.size(); ++i) {
    const char c = content[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < content.size() && content[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n') {
      if (!field.empty() && field.back() == '\r') field.pop_back();
      end_row();
      ++line;
      row_start = line;
    } else {
      field += c;
    }
  }
  if (quoted) {
    throw Error(ErrorCode::MalformedRecord,
                "unterminated quote starting on line " + std::to_string(row_start));
  }
  if (!field.empty() || !row.empty() || any) end_row();
  return table;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::NotFound, "cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse_csv(buf.str());
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

}  // namespace dsq::eval
