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
// Batch pipeline behind the flipdml command-line tool.

#ifndef FLIPDML_TOOLS_PIPELINE_H_
#define FLIPDML_TOOLS_PIPELINE_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "report.h"

namespace flipdml::tools {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitValidation = 3;
inline constexpr int kExitEstimation = 4;

// Environment variable overriding the configured output directory.
inline constexpr const char* kOutputDirEnv = "FLIPDML_OUT";

const std::vector<std::string>& Subcommands();

struct RunOptions {
  std::string subcommand;
  std::filesystem::path config;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;  // wins over the environment
  std::optional<int> threads;
  std::optional<Format> format;
};

// Runs one subcommand and writes its tables plus manifest.json. Errors are
// reported on `log`; the return value is the process exit code.
int Run(const RunOptions& options, std::ostream& log);

}  // namespace flipdml::tools

#endif  // FLIPDML_TOOLS_PIPELINE_H_
