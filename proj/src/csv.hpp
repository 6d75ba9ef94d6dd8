// Minimal RFC-4180 style CSV reader for the dataset loaders.
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace loadshift::detail {

struct CsvTable {
  std::filesystem::path source;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column position, or nullopt when absent (header match ignores surrounding spaces).
  [[nodiscard]] std::optional<std::size_t> find(const std::string& column) const;
  /// Column position; throws std::runtime_error naming the file when absent.
  [[nodiscard]] std::size_t require(const std::string& column) const;
};

CsvTable read_csv(const std::filesystem::path& path);
std::vector<std::string> split_csv_line(const std::string& line);
/// Parses a numeric cell; blank cells read as `blank_value`.
double parse_number(const std::string& cell, const CsvTable& table, std::size_t row,
                    const std::string& column, double blank_value = 0.0);

}  // namespace loadshift::detail
