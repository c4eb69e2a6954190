/*
 * Copyright 2026 The balsub Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// CSV ingestion and export of categorical data sets.
//
// Dialect: UTF-8, comma delimiter, mandatory header row, RFC 4180 quoting
// ("" escapes a quote inside a quoted field; quoted fields may span lines).
// Categorical values are coded 0, 1, ... in order of first appearance.

#pragma once

#include <charconv>
#include <fstream>
#include <iterator>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "balsub/dataset.hpp"

namespace balsub {

/// Which columns to read. An empty categorical list means "every column
/// except the response".
struct CsvSchema {
  std::vector<std::string> categorical;
  std::optional<std::string> response;
};

namespace detail {

// Splits CSV text into records of fields.
class CsvReader {
 public:
  explicit CsvReader(std::string_view text) : text_(text) {
    if (text_.starts_with("\xEF\xBB\xBF")) text_.remove_prefix(3);
  }

  // Returns false at end of input.
  bool next(std::vector<std::string>& fields) {
    fields.clear();
    if (pos_ >= text_.size()) return false;
    std::string field;
    bool quoted = false;
    bool was_quoted = false;
    while (pos_ < text_.size()) {
      const char c = text_[pos_++];
      if (quoted) {
        if (c == '"') {
          if (pos_ < text_.size() && text_[pos_] == '"') {
            field.push_back('"');
            ++pos_;
          } else {
            quoted = false;
          }
        } else {
          field.push_back(c);
        }
        continue;
      }
      if (c == '"' && field.empty() && !was_quoted) {
        quoted = was_quoted = true;
      } else if (c == ',') {
        fields.push_back(std::move(field));
        field.clear();
        was_quoted = false;
      } else if (c == '\n' || c == '\r') {
        if (c == '\r' && pos_ < text_.size() && text_[pos_] == '\n') ++pos_;
        break;
      } else {
        field.push_back(c);
      }
    }
    if (quoted) throw DataError("unterminated quoted field on line " + std::to_string(line_ + 1));
    fields.push_back(std::move(field));
    ++line_;
    return true;
  }

  std::size_t line() const noexcept { return line_; }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 0;
};

inline bool is_blank(const std::vector<std::string>& fields) {
  return fields.size() == 1 && fields[0].empty();
}

inline double parse_number(std::string_view s, std::size_t line) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size()) {
    throw DataError("non-numeric response value '" + std::string(s) + "' on line " +
                    std::to_string(line));
  }
  return v;
}

inline std::string quote_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace detail

/// Parses CSV text held in memory.
inline Dataset parse_csv(std::string_view text, const CsvSchema& schema) {
  detail::CsvReader reader(text);
  std::vector<std::string> header;
  if (!reader.next(header) || detail::is_blank(header)) throw DataError("missing header row");

  std::unordered_map<std::string, std::size_t> position;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (!position.emplace(header[c], c).second) {
      throw DataError("duplicate column name '" + header[c] + "'");
    }
  }
  auto locate = [&](const std::string& name) {
    auto it = position.find(name);
    if (it == position.end()) throw DataError("column '" + name + "' not found in header");
    return it->second;
  };

  std::optional<std::size_t> response_col;
  if (schema.response) response_col = locate(*schema.response);

  std::vector<std::size_t> cat_cols;
  std::vector<std::string> names;
  if (schema.categorical.empty()) {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (c == response_col) continue;
      cat_cols.push_back(c);
      names.push_back(header[c]);
    }
  } else {
    for (const auto& name : schema.categorical) {
      const std::size_t c = locate(name);
      if (c == response_col) throw DataError("column '" + name + "' is both categorical and response");
      cat_cols.push_back(c);
      names.push_back(name);
    }
  }
  if (cat_cols.empty()) throw DataError("no categorical columns");

  const std::size_t p = cat_cols.size();
  std::vector<std::vector<Level>> cols(p);
  std::vector<std::vector<std::string>> labels(p);
  std::vector<std::unordered_map<std::string, Level>> dictionaries(p);
  std::vector<double> y;

  std::vector<std::string> fields;
  while (reader.next(fields)) {
    if (detail::is_blank(fields)) continue;
    const std::size_t line = reader.line();
    if (fields.size() != header.size()) {
      throw DataError("ragged row on line " + std::to_string(line) + ": expected " +
                      std::to_string(header.size()) + " fields, found " +
                      std::to_string(fields.size()));
    }
    for (std::size_t j = 0; j < p; ++j) {
      std::string& cell = fields[cat_cols[j]];
      if (cell.empty()) {
        throw DataError("empty value in column '" + names[j] + "' on line " + std::to_string(line));
      }
      auto [it, inserted] = dictionaries[j].try_emplace(cell, static_cast<Level>(labels[j].size()));
      if (inserted) labels[j].push_back(cell);
      cols[j].push_back(it->second);
    }
    if (response_col) y.push_back(detail::parse_number(fields[*response_col], line));
  }
  if (cols[0].empty()) throw DataError("no data rows");

  std::vector<std::uint32_t> q(p);
  for (std::size_t j = 0; j < p; ++j) {
    q[j] = static_cast<std::uint32_t>(labels[j].size());
    if (q[j] < 2) {
      throw DataError("degenerate covariate: column '" + names[j] + "' has " +
                      std::to_string(q[j]) + " distinct value(s)");
    }
  }
  std::optional<std::vector<double>> response;
  if (response_col) response = std::move(y);
  return Dataset(LevelSpec(std::move(q)), std::move(cols), std::move(labels), std::move(names),
                 std::move(response));
}

inline Dataset ingest_csv(const std::string& path, const CsvSchema& schema = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_csv(text, schema);
}

/// Writes the data set (or the given rows of it, in order) with the
/// original labels. The response, when present, is the last column.
inline void write_csv(std::ostream& out, const Dataset& data,
                      std::optional<std::span<const std::size_t>> rows = std::nullopt,
                      const std::string& response_name = "y") {
  const auto& names = data.names();
  for (std::size_t j = 0; j < names.size(); ++j) {
    if (j) out << ',';
    out << detail::quote_field(names[j]);
  }
  if (data.has_response()) out << ',' << detail::quote_field(response_name);
  out << '\n';
  auto emit = [&](std::size_t i) {
    for (std::size_t j = 0; j < data.dims(); ++j) {
      if (j) out << ',';
      out << detail::quote_field(data.label(i, j));
    }
    if (data.has_response()) out << ',' << detail::format_number(data.response()[i]);
    out << '\n';
  };
  if (rows) {
    for (std::size_t i : *rows) emit(i);
  } else {
    for (std::size_t i = 0; i < data.size(); ++i) emit(i);
  }
}

}  // namespace balsub
