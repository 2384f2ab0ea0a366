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
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "pipeline.h"

int main(int argc, char** argv) {
  using flipdml::tools::Format;
  CLI::App app{"flipdml: scale diagnostics, treatment-effect estimation and engagement measures"};
  app.set_version_flag("--version", std::string("flipdml ") + FLIPDML_VERSION);
  app.require_subcommand(1);
  app.fallthrough();

  flipdml::tools::RunOptions options;
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
  int threads = 0;
  std::string format;
  app.add_option("--config", config, "Pipeline config (JSON)")->required();
  auto* seed_opt = app.add_option("--seed", seed, "Master seed (overrides the config)");
  auto* out_opt = app.add_option("--out", out, "Output directory (overrides FLIPDML_OUT and the config)");
  auto* threads_opt = app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  auto* format_opt = app.add_option("--format", format, "Table format")->check(CLI::IsMember({"csv", "md"}));

  const char* help[] = {"Reliability, factor fits and item selection per scale",
                        "Polychoric correlations, KMO/Bartlett and retention criteria",
                        "Scale means per respondent",
                        "OLS baselines and DML treatment-effect estimates",
                        "Treated/control mean comparisons per sample",
                        "Engagement measures from event logs and quartile summaries",
                        "Generate a synthetic cohort with ground truth",
                        "Monte Carlo bias/coverage study on synthetic cohorts"};
  for (std::size_t i = 0; i < flipdml::tools::Subcommands().size(); ++i) {
    app.add_subcommand(flipdml::tools::Subcommands()[i], help[i]);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    if (e.get_name() == "ExtrasError" || e.get_name() == "RequiredError") std::cerr << app.help();
    return flipdml::tools::kExitConfig;
  }

  options.subcommand = app.get_subcommands().front()->get_name();
  options.config = config;
  if (*seed_opt) options.seed = seed;
  if (*out_opt) options.out = out;
  if (*threads_opt) options.threads = threads;
  if (*format_opt) options.format = format == "md" ? Format::kMarkdown : Format::kCsv;
  return flipdml::tools::Run(options, std::cerr);
}
