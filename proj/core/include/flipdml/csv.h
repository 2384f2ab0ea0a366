/*
* Copyright 2026 The flipdml Authors.
*
* Licensed under the Apache License, Version 2.0 (the "License");
* you may not use this file except in compliance with the License.
* You may obtain a copy of the License at
*
*     https://www.apache.org/licenses/LICENSE-2.0
*
* Unless required by applicable law or agreed to in writing, software
* distributed under the License is distributed on an "AS IS" BASIS,
* WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
* See the License for the specific language governing permissions and
* limitations under the License.
* ============================================================================
*/
// Minimal CSV table I/O (RFC 4180 quoting, header row required).

#ifndef FLIPDML_CSV_H_
#define FLIPDML_CSV_H_

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace flipdml {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Index of a header column, or nullopt.
  std::optional<std::size_t> Find(std::string_view name) const;
  // Index of a header column; throws ConfigError naming the column.
  std::size_t Require(std::string_view name) const;
};

CsvTable ReadCsv(const std::filesystem::path& path);
CsvTable ParseCsv(std::string_view text);

void WriteCsvRow(std::ostream& out, const std::vector<std::string>& fields);
void WriteCsv(const std::filesystem::path& path, const CsvTable& table);

// Fixed-precision decimal rendering used by every table writer, so that
// outputs are byte-stable across runs.
std::string FormatNumber(double value, int digits = 6);

// True for "", "NA", "NaN" and "." (missing-value markers).
bool IsMissingToken(std::string_view token);

// Parses a finite double; throws ValidationError with `context` otherwise.
double ParseDouble(std::string_view token, std::string_view context);

}  // namespace flipdml

#endif  // FLIPDML_CSV_H_
