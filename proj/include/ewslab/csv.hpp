// Copyright 2026 The ews-lab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "ewslab/error.hpp"

namespace ewslab::csv {

using Row = std::vector<std::string>;

struct Table {
  Row header;
  std::vector<Row> rows;

  // Index of a header column, or -1.
  int column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return static_cast<int>(i);
    }
    return -1;
  }

  int require_column(std::string_view name) const {
    int c = column(name);
    if (c < 0) {
      throw Error(ErrorCode::kMissingColumn, "column '" + std::string(name) + "' not found");
    }
    return c;
  }
};

// Splits one CSV record. Supports double-quoted fields with "" escapes; no
// embedded newlines.
inline Row split_line(std::string_view line) {
  Row out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else {
      field.push_back(c);
    }
  }
  out.push_back(std::move(field));
  return out;
}

inline Table parse(std::istream& in, const std::string& source) {
  Table t;
  std::string line;
  bool first = true;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (first) {
      // tolerate a UTF-8 BOM
      if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
      t.header = split_line(line);
      first = false;
      continue;
    }
    if (line.empty()) continue;
    Row r = split_line(line);
    if (r.size() != t.header.size()) {
      throw Error(ErrorCode::kTypeMismatch, source + ":" + std::to_string(lineno) +
                                                ": expected " + std::to_string(t.header.size()) +
                                                " fields, got " + std::to_string(r.size()));
    }
    t.rows.push_back(std::move(r));
  }
  if (first) throw Error(ErrorCode::kMissingColumn, source + ": missing header row");
  return t;
}

inline Table read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  return parse(in, path);
}

inline std::string escape(std::string_view field) {
  if (field.find_first_of(",\"") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline void write_row(std::ostream& out, const Row& row) {
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) out << ',';
    out << escape(row[i]);
  }
  out << '\n';
}

// Fixed 17-significant-digit rendering; round-trips every double.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  // from_chars rejects a leading '+', which some exporters emit
  if (s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

inline bool parse_int(std::string_view s, long long& out) {
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace ewslab::csv
