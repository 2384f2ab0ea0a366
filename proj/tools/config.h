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
// Pipeline configuration file (JSON). Relative paths resolve against the
// directory holding the config file.
//
//   {
//     "dataset": "data.csv",
//     "schema": "schema.json",            // path or inline schema object
//     "seed": 42,
//     "output_dir": "out",
//     "threads": 1,
//     "format": "csv",                    // or "md"
//     "samples": [{"name": "A", "required_outcomes": ["exam"]}],
//     "estimate": {"outcomes": [], "folds": 5, "repetitions": 100,
//                  "cv_folds": 10, "grid_points": 50, "clip": 0.01,
//                  "cv_rule": "minimum", "ols": ["ols1", "ols2", "ols3"],
//                  "dml": ["dml_interactive", "dml_partially_linear"],
//                  "hc": "HC1"},
//     "item_analysis": {"item_total": 0.3, "loading": 0.4, "restarts": 10,
//                       "wording_drops": {"scale": ["item"]}},
//     "pca": {"replications": 1000, "percentile": 0.95},
//     "usage": {"dir": "usage", "exam": "2024-07-15T08:00:00Z",
//               "cutoffs": [19.5, 27, 35.5]},
//     "simulate": {"spec": "cohort.json", "n": 420},
//     "benchmark": {"spec": "cohort.json", "replications": 100,
//                   "estimators": ["naive", "dml_interactive"],
//                   "folds": 5, "repetitions": 1, ...}
//   }

#ifndef FLIPDML_TOOLS_CONFIG_H_
#define FLIPDML_TOOLS_CONFIG_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flipdml/datamodel.h"
#include "flipdml/dml.h"
#include "flipdml/inference.h"
#include "flipdml/psychometrics.h"
#include "flipdml/simulator.h"
#include "flipdml/usage.h"
#include "report.h"

namespace flipdml::tools {

struct EstimateSettings {
  std::vector<std::string> outcomes;  // empty: every schema outcome
  dml::DmlConfig dml;
  std::vector<inference::OlsVariant> ols{inference::OlsVariant::kAllItems, inference::OlsVariant::kScaleMeans,
                                         inference::OlsVariant::kPrincipalComponents};
  std::vector<dml::DmlModel> models{dml::DmlModel::kInteractive, dml::DmlModel::kPartiallyLinear};
  inference::HcType hc = inference::HcType::kHC1;
};

struct ItemSettings {
  psych::ItemThresholds thresholds;
  int restarts = 10;
  std::map<std::string, std::vector<std::string>> wording_drops;
};

struct PcaSettings {
  int replications = 1000;
  double percentile = 0.95;
};

struct UsageSettings {
  std::optional<std::filesystem::path> dir;
  std::optional<usage::Timestamp> exam;
  std::optional<std::vector<double>> cutoffs;
};

struct SpecSource {
  std::optional<std::filesystem::path> path;
  std::optional<nlohmann::json> inline_spec;
  std::optional<int> n;

  sim::CohortSpec Resolve() const;  // default spec when neither is set
};

struct BenchmarkSettings {
  SpecSource spec;
  int replications = 100;
  std::vector<sim::Estimator> estimators{sim::Estimator::kNaive, sim::Estimator::kOls,
                                         sim::Estimator::kInteractive, sim::Estimator::kPartiallyLinear,
                                         sim::Estimator::kOracleInteractive};
  dml::DmlConfig dml;
};

struct PipelineConfig {
  std::filesystem::path base_dir;
  std::optional<std::filesystem::path> dataset;
  std::optional<std::filesystem::path> schema_path;
  std::optional<data::Schema> schema_inline;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> output_dir;
  std::optional<int> threads;
  std::optional<Format> format;
  std::vector<data::SampleSpec> samples;
  EstimateSettings estimate;
  ItemSettings item_analysis;
  PcaSettings pca;
  UsageSettings usage;
  SpecSource simulate;
  BenchmarkSettings benchmark;

  nlohmann::json raw;     // as parsed
  std::string canonical;  // sorted-key dump used for the config hash

  data::Schema LoadSchema() const;
  data::Dataset LoadDataset() const;
};

// Throws ConfigError naming the offending field.
PipelineConfig ParsePipelineConfig(const std::string& text, const std::filesystem::path& base_dir);
PipelineConfig LoadPipelineConfig(const std::filesystem::path& path);

std::string Sha256Hex(const std::string& bytes);

const char* CvRuleName(learners::CvRule rule);
const char* HcName(inference::HcType hc);

}  // namespace flipdml::tools

#endif  // FLIPDML_TOOLS_CONFIG_H_
