#pragma once

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "acpshift/data.hpp"
#include "acpshift/errors.hpp"

namespace acpshift {

// Locale-independent double formatting (shortest round-trip).
inline std::string format_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& cell, const std::string& where) {
  double v = 0.0;
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  const auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc() || res.ptr != end)
    throw IoError(where + ": cannot parse number '" + cell + "'");
  return v;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  cells.push_back(cur);
  return cells;
}

// Reads the dataset format: header `r,y,x1,...,xp,yhat`, empty cell = missing.
inline std::vector<RawRow> read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw IoError(path + ": empty file");
  const auto header = split_csv_line(line);
  if (header.size() < 4 || header.front() != "r" || header[1] != "y" || header.back() != "yhat")
    throw IoError(path + ": expected header r,y,x1,...,xp,yhat");
  const int p = static_cast<int>(header.size()) - 3;
  for (int j = 0; j < p; ++j) {
    if (header[2 + j] != "x" + std::to_string(j + 1))
      throw IoError(path + ": covariate column " + std::to_string(j + 3) +
                    " must be named x" + std::to_string(j + 1));
  }

  std::vector<RawRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    const std::string where = path + ":" + std::to_string(lineno);
    if (static_cast<int>(cells.size()) != p + 3)
      throw IoError(where + ": expected " + std::to_string(p + 3) + " cells, found " +
                    std::to_string(cells.size()));
    RawRow row;
    row.r = parse_double(cells[0], where);
    if (!cells[1].empty()) row.y = parse_double(cells[1], where);
    row.x.resize(p);
    for (int j = 0; j < p; ++j) {
      if (cells[2 + j].empty()) throw IoError(where + ": empty covariate cell x" + std::to_string(j + 1));
      row.x[j] = parse_double(cells[2 + j], where);
    }
    if (!cells.back().empty()) row.yhat = parse_double(cells.back(), where);
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Dataset load_dataset(const std::string& path) {
  return validate_dataset(read_dataset_csv(path));
}

inline void write_dataset_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << "r,y";
  for (int j = 0; j < data.p; ++j) out << ",x" << (j + 1);
  out << ",yhat\n";
  for (const auto& o : data.obs) {
    out << o.r << ',';
    if (o.y) out << format_double(*o.y);
    for (int j = 0; j < data.p; ++j) out << ',' << format_double(o.x[j]);
    out << ',';
    if (o.yhat) out << format_double(*o.yhat);
    out << '\n';
  }
}

}  // namespace acpshift
