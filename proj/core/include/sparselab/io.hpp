// Copyright 2026 The sparselab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace sparselab {

/// Shortest decimal text that parses back to the same value ('.' decimal).
std::string format_real(double v);
std::string format_real(float v);

/// Writes `content` to a sibling temp file and renames it over `path`, so
/// readers never observe a partial file. Throws std::runtime_error on I/O
/// failure.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::string read_file(const std::filesystem::path& path);

std::vector<std::string> split(std::string_view text, char sep);

/// Flat key=value configuration, always kept sorted by key.
using KeyValues = std::map<std::string, std::string>;

/// One "key=value" per line, sorted keys, trailing newline.
std::string format_key_values(const KeyValues& kv);

/// Inverse of format_key_values. Blank lines and lines starting with '#'
/// are ignored; a line without '=' throws std::runtime_error.
KeyValues parse_key_values(std::string_view text);

/// Comma-separated table with a header row.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  /// Throws std::invalid_argument if the cell count differs from the header.
  void add_row(std::vector<std::string> cells);
  std::size_t row_count() const noexcept { return rows_.size(); }
  std::string str() const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

}  // namespace sparselab
