#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tsfm {

// Shortest decimal text that round-trips the exact 64-bit value.
std::string format_double(double v);
std::optional<double> parse_double(std::string_view s);
std::optional<int64_t> parse_int(std::string_view s);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(std::string_view name) const;  // -1 if absent
};

// Comma separation, no quoting; the formats this project defines never embed
// commas.
CsvTable read_csv(const std::filesystem::path& path);
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

}  // namespace tsfm
