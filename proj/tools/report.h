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
// Output tables: CSV always, optionally a markdown rendering alongside.

#ifndef FLIPDML_TOOLS_REPORT_H_
#define FLIPDML_TOOLS_REPORT_H_

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace flipdml::tools {

enum class Format { kCsv, kMarkdown };

struct Table {
  Table() = default;
  Table(std::string t, std::vector<std::string> h) : title(std::move(t)), header(std::move(h)) {}

  std::string title;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> notes;  // markdown only
};

// "***" for p < 0.01, "**" for p < 0.05, "*" for p < 0.1.
std::string Stars(double p);

std::string RenderMarkdown(const Table& table);

// Writes <dir>/<name>.csv and, for kMarkdown, <dir>/<name>.md. Returns the
// file names written (relative to dir).
std::vector<std::string> WriteTable(const std::filesystem::path& dir, const std::string& name,
                                    const Table& table, Format format);
// Writes a prepared markdown document as <dir>/<name>.md.
std::string WriteMarkdown(const std::filesystem::path& dir, const std::string& name,
                          const std::string& text);

}  // namespace flipdml::tools

#endif  // FLIPDML_TOOLS_REPORT_H_
