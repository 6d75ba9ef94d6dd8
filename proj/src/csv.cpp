#include "csv.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <stdexcept>

namespace loadshift::detail {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

}  // namespace

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cell.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(cell));
      cell.clear();
    } else if (c != '\r') {
      cell.push_back(c);
    }
  }
  out.push_back(trim(cell));
  return out;
}

std::optional<std::size_t> CsvTable::find(const std::string& column) const {
  const auto it = std::find(header.begin(), header.end(), column);
  if (it == header.end()) return std::nullopt;
  return static_cast<std::size_t>(it - header.begin());
}

std::size_t CsvTable::require(const std::string& column) const {
  if (auto idx = find(column)) return *idx;
  throw std::runtime_error(source.string() + ": missing column '" + column + "'");
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  CsvTable table;
  table.source = path;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto cells = split_csv_line(line);
    if (!have_header) {
      if (!cells.empty() && cells[0].size() >= 3 &&
          static_cast<unsigned char>(cells[0][0]) == 0xEF) {
        cells[0] = cells[0].substr(3);  // UTF-8 byte order mark
      }
      table.header = std::move(cells);
      have_header = true;
      continue;
    }
    cells.resize(std::max(cells.size(), table.header.size()));
    table.rows.push_back(std::move(cells));
  }
  if (!have_header) throw std::runtime_error(path.string() + ": empty CSV file");
  return table;
}

double parse_number(const std::string& cell, const CsvTable& table, std::size_t row,
                    const std::string& column, double blank_value) {
  if (cell.empty()) return blank_value;
  double value = 0.0;
  const auto* begin = cell.data();
  const auto* end = cell.data() + cell.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) {
    throw std::runtime_error(table.source.string() + ": row " + std::to_string(row + 1) +
                             ", column '" + column + "': not a number ('" + cell + "')");
  }
  return value;
}

}  // namespace loadshift::detail
