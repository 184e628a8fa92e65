#pragma once

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "acpshift/errors.hpp"

namespace acpshift {

// Flat sectioned key-value config:  [section] / key = value / '#' comments.
class ConfigFile {
 public:
  static ConfigFile parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    return parse_stream(in, path);
  }

  static ConfigFile parse_string(const std::string& text) {
    std::istringstream in(text);
    return parse_stream(in, "<string>");
  }

  bool has(const std::string& section, const std::string& key) const {
    const auto s = sections_.find(section);
    return s != sections_.end() && s->second.count(key) > 0;
  }

  std::string get_string(const std::string& section, const std::string& key) const {
    return entry(section, key).value;
  }
  std::string get_string(const std::string& section, const std::string& key,
                         const std::string& fallback) const {
    return has(section, key) ? get_string(section, key) : fallback;
  }

  double get_double(const std::string& section, const std::string& key) const {
    const Entry& e = entry(section, key);
    return to_double(e.value, e.line);
  }
  double get_double(const std::string& section, const std::string& key, double fallback) const {
    return has(section, key) ? get_double(section, key) : fallback;
  }

  long get_int(const std::string& section, const std::string& key) const {
    const Entry& e = entry(section, key);
    return to_int(e.value, e.line);
  }
  long get_int(const std::string& section, const std::string& key, long fallback) const {
    return has(section, key) ? get_int(section, key) : fallback;
  }

  bool get_bool(const std::string& section, const std::string& key, bool fallback) const {
    if (!has(section, key)) return fallback;
    const Entry& e = entry(section, key);
    if (e.value == "true" || e.value == "1" || e.value == "yes") return true;
    if (e.value == "false" || e.value == "0" || e.value == "no") return false;
    throw ConfigError("line " + std::to_string(e.line) + ": '" + e.value + "' is not a boolean");
  }

  std::vector<std::string> get_list(const std::string& section, const std::string& key) const {
    const Entry& e = entry(section, key);
    std::vector<std::string> items;
    std::string cur;
    for (char c : e.value + ",") {
      if (c == ',') {
        const std::string t = trim(cur);
        if (!t.empty()) items.push_back(t);
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    if (items.empty())
      throw ConfigError("line " + std::to_string(e.line) + ": empty list for '" + key + "'");
    return items;
  }

  std::vector<double> get_list_double(const std::string& section, const std::string& key) const {
    const Entry& e = entry(section, key);
    std::vector<double> out;
    for (const auto& item : get_list(section, key)) out.push_back(to_double(item, e.line));
    return out;
  }

  std::vector<long> get_list_int(const std::string& section, const std::string& key) const {
    const Entry& e = entry(section, key);
    std::vector<long> out;
    for (const auto& item : get_list(section, key)) out.push_back(to_int(item, e.line));
    return out;
  }

 private:
  struct Entry {
    std::string value;
    int line = 0;
  };

  template <class Stream>
  static ConfigFile parse_stream(Stream& in, const std::string& origin) {
    ConfigFile cfg;
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const std::string t = trim(line);
      if (t.empty()) continue;
      if (t.front() == '[') {
        if (t.back() != ']')
          throw ConfigError(origin + " line " + std::to_string(lineno) + ": unterminated section");
        section = trim(t.substr(1, t.size() - 2));
        continue;
      }
      const auto eq = t.find('=');
      if (eq == std::string::npos)
        throw ConfigError(origin + " line " + std::to_string(lineno) + ": expected key = value");
      const std::string key = trim(t.substr(0, eq));
      const std::string value = trim(t.substr(eq + 1));
      if (key.empty())
        throw ConfigError(origin + " line " + std::to_string(lineno) + ": empty key");
      cfg.sections_[section][key] = Entry{value, lineno};
    }
    return cfg;
  }

  const Entry& entry(const std::string& section, const std::string& key) const {
    const auto s = sections_.find(section);
    if (s == sections_.end() || !s->second.count(key))
      throw ConfigError("missing config key [" + section + "] " + key);
    return s->second.at(key);
  }

  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  static double to_double(const std::string& s, int line) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
      throw ConfigError("line " + std::to_string(line) + ": '" + s + "' is not a number");
    return v;
  }

  static long to_int(const std::string& s, int line) {
    long v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
      throw ConfigError("line " + std::to_string(line) + ": '" + s + "' is not an integer");
    return v;
  }

  std::map<std::string, std::map<std::string, Entry>> sections_;
};

}  // namespace acpshift
