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
#include "report.h"

#include <fstream>
#include <sstream>

#include "flipdml/csv.h"
#include "flipdml/errors.h"

namespace flipdml::tools {

namespace {

std::ofstream OpenOutput(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write output file " + path.string());
  return out;
}

std::string EscapeCell(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '|') out += '\\';
    out += c;
  }
  return out;
}

}  // namespace

std::string Stars(double p) {
  if (!(p >= 0.0)) return "";
  if (p < 0.01) return "***";
  if (p < 0.05) return "**";
  if (p < 0.1) return "*";
  return "";
}

std::string RenderMarkdown(const Table& table) {
  std::ostringstream out;
  if (!table.title.empty()) out << "## " << table.title << "\n\n";
  out << "|";
  for (const auto& h : table.header) out << " " << EscapeCell(h) << " |";
  out << "\n|";
  for (std::size_t i = 0; i < table.header.size(); ++i) out << " --- |";
  out << "\n";
  for (const auto& row : table.rows) {
    out << "|";
    for (const auto& cell : row) out << " " << EscapeCell(cell) << " |";
    out << "\n";
  }
  if (!table.notes.empty()) {
    out << "\n";
    for (const auto& note : table.notes) out << "_" << note << "_\n";
  }
  return out.str();
}

std::vector<std::string> WriteTable(const std::filesystem::path& dir, const std::string& name,
                                    const Table& table, Format format) {
  std::vector<std::string> written;
  {
    auto out = OpenOutput(dir / (name + ".csv"));
    WriteCsvRow(out, table.header);
    for (const auto& row : table.rows) WriteCsvRow(out, row);
    written.push_back(name + ".csv");
  }
  if (format == Format::kMarkdown) written.push_back(WriteMarkdown(dir, name, RenderMarkdown(table)));
  return written;
}

std::string WriteMarkdown(const std::filesystem::path& dir, const std::string& name,
                          const std::string& text) {
  auto out = OpenOutput(dir / (name + ".md"));
  out << text;
  return name + ".md";
}

}  // namespace flipdml::tools
