#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace authaudit {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Index of a header column; throws when absent.
  std::size_t column(std::string_view name) const;
};

CsvTable parse_csv(std::string_view text);
CsvTable read_csv(const std::filesystem::path& path);
std::string format_csv(const CsvTable& table);
void write_csv(const std::filesystem::path& path, const CsvTable& table);

}  // namespace authaudit
