#include "authaudit/csv.hpp"

#include <stdexcept>

#include "authaudit/binary_io.hpp"

namespace authaudit {

std::size_t CsvTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw std::invalid_argument("CSV is missing column '" + std::string(name) + "'");
}

CsvTable parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool row_has_content = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        quoted = true;
        row_has_content = true;
        break;
      case ',':
        row.push_back(std::move(field));
        field.clear();
        row_has_content = true;
        break;
      case '\r':
        break;
      case '\n':
        if (row_has_content || !field.empty()) {
          row.push_back(std::move(field));
          rows.push_back(std::move(row));
        }
        field.clear();
        row.clear();
        row_has_content = false;
        break;
      default:
        field += c;
        row_has_content = true;
    }
  }
  if (quoted) throw FormatError("CSV: unterminated quoted field");
  if (row_has_content || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  CsvTable table;
  if (rows.empty()) return table;
  table.header = std::move(rows.front());
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != table.header.size()) {
      throw FormatError("CSV: row " + std::to_string(r) + " has " + std::to_string(rows[r].size()) +
                        " fields, expected " + std::to_string(table.header.size()));
    }
    table.rows.push_back(std::move(rows[r]));
  }
  return table;
}

CsvTable read_csv(const std::filesystem::path& path) { return parse_csv(read_text(path)); }

namespace {
std::string escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void append_row(std::string& out, const std::vector<std::string>& row) {
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) out += ',';
    out += escape(row[i]);
  }
  out += '\n';
}
}  // namespace

std::string format_csv(const CsvTable& table) {
  std::string out;
  append_row(out, table.header);
  for (const auto& row : table.rows) append_row(out, row);
  return out;
}

void write_csv(const std::filesystem::path& path, const CsvTable& table) {
  write_text(path, format_csv(table));
}

}  // namespace authaudit
