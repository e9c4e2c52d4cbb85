#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace ebmc::csv {

/// Shortest decimal form that round-trips exactly.
std::string format_double(double value);
double parse_double(std::string_view text);
long long parse_int(std::string_view text);

std::vector<std::string> split(std::string_view line, char sep = ',');

struct Table {
  std::vector<std::string> comments;  // leading "# " lines, without the marker
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index by name; throws IoError if absent.
  std::size_t column(const std::string& name) const;
};

/// Reads a comma-separated file whose first non-comment line is the header.
Table read(const std::filesystem::path& path);

}  // namespace ebmc::csv
