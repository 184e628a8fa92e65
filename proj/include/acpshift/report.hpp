#pragma once

#include <array>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "acpshift/csv.hpp"
#include "acpshift/errors.hpp"

namespace acpshift {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const {
    for (std::size_t j = 0; j < header.size(); ++j)
      if (header[j] == name) return static_cast<int>(j);
    return -1;
  }
};

inline CsvTable read_csv_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw IoError(path + ": empty file");
  t.header = split_csv_line(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != t.header.size())
      throw IoError(path + ": row with " + std::to_string(cells.size()) + " cells, header has " +
                    std::to_string(t.header.size()));
    t.rows.push_back(std::move(cells));
  }
  return t;
}

inline void write_csv_table(const CsvTable& t, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  for (std::size_t j = 0; j < t.header.size(); ++j)
    out << (j ? "," : "") << t.header[j];
  out << '\n';
  for (const auto& row : t.rows) {
    for (std::size_t j = 0; j < row.size(); ++j) out << (j ? "," : "") << row[j];
    out << '\n';
  }
}

inline const std::array<std::string, 4>& report_panel_columns() {
  static const std::array<std::string, 4> cols{"n", "N", "alpha_signal", "zeta"};
  return cols;
}

// Splits a sweep table into the four one-parameter panels (ARE vs n, N,
// alpha, zeta). A row lands in the panel of the single column on which it
// departs from the modal (base) value; rows at the base point belong to every
// panel, and rows varying several columns go to the first varying one.
inline std::map<std::string, CsvTable> split_report_panels(const CsvTable& input) {
  if (input.column("are") < 0) throw IoError("input table lacks an 'are' column");
  std::array<int, 4> col_idx{};
  const auto& cols = report_panel_columns();
  for (std::size_t c = 0; c < cols.size(); ++c) {
    col_idx[c] = input.column(cols[c]);
    if (col_idx[c] < 0) throw IoError("input table lacks a '" + cols[c] + "' column");
  }

  std::array<std::string, 4> modal;
  for (std::size_t c = 0; c < cols.size(); ++c) {
    std::map<std::string, int> counts;
    for (const auto& row : input.rows) ++counts[row[col_idx[c]]];
    int best = -1;
    for (const auto& [value, count] : counts)
      if (count > best) {
        best = count;
        modal[c] = value;
      }
  }

  std::map<std::string, CsvTable> panels;
  for (const auto& name : cols) panels[name] = CsvTable{input.header, {}};
  for (const auto& row : input.rows) {
    std::vector<int> varying;
    for (std::size_t c = 0; c < cols.size(); ++c)
      if (row[col_idx[c]] != modal[c]) varying.push_back(static_cast<int>(c));
    if (varying.empty()) {
      for (const auto& name : cols) panels[name].rows.push_back(row);
    } else {
      panels[cols[varying.front()]].rows.push_back(row);
    }
  }
  return panels;
}

}  // namespace acpshift
