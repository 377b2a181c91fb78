#pragma once

// Small header+cells CSV table used by the CLI for human-facing artifacts
// (sweep grids, aggregate summaries, certificate records). Unlike the numeric
// matrix CSVs in the core library these carry a header row and string cells.
// Cells must not contain commas or newlines; we fail loudly instead of quoting.

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace certibias::table {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw std::runtime_error("table has no column named '" + name + "'");
  }

  bool has_column(const std::string& name) const {
    for (const std::string& h : header)
      if (h == name) return true;
    return false;
  }
};

inline void check_cell(const std::string& cell) {
  if (cell.find(',') != std::string::npos || cell.find('\n') != std::string::npos)
    throw std::runtime_error("table cell may not contain a comma or newline: '" + cell + "'");
}

inline void write_table(const std::string& path, const std::vector<std::string>& header,
                        const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  for (std::size_t i = 0; i < header.size(); ++i) {
    check_cell(header[i]);
    if (i) out << ',';
    out << header[i];
  }
  out << '\n';
  for (const auto& row : rows) {
    if (row.size() != header.size())
      throw std::runtime_error("table row width " + std::to_string(row.size()) +
                               " does not match header width " + std::to_string(header.size()));
    for (std::size_t i = 0; i < row.size(); ++i) {
      check_cell(row[i]);
      if (i) out << ',';
      out << row[i];
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path);
}

inline Table read_table(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  Table t;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() && in.peek() == std::ifstream::traits_type::eof()) break;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (first) {
      t.header = std::move(cells);
      first = false;
    } else {
      if (cells.size() != t.header.size())
        throw std::runtime_error(path + ": row width " + std::to_string(cells.size()) +
                                 " does not match header width " +
                                 std::to_string(t.header.size()));
      t.rows.push_back(std::move(cells));
    }
  }
  if (first) throw std::runtime_error(path + ": empty table");
  return t;
}

}  // namespace certibias::table
