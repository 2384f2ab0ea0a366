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
// Observation tables, scale definitions, design matrices and analysis
// samples.
//
// A Dataset is immutable once created. Reverse-coded Likert items are stored
// polarity-aligned (sign-flipped on load), outcomes may be missing (NaN), and
// every other column must be complete.

#ifndef FLIPDML_DATAMODEL_H_
#define FLIPDML_DATAMODEL_H_

#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace flipdml::data {

inline constexpr int kLikertMin = -3;
inline constexpr int kLikertMax = 3;

enum class Questionnaire { kFirst, kSecond };

struct ScaleDefinition {
  std::string name;
  std::vector<std::string> items;
  std::vector<bool> reversed;  // one flag per item
  Questionnaire questionnaire = Questionnaire::kFirst;
  // Non-reducible scales (e.g. one that fails unidimensionality) keep their
  // raw items in the reduced OLS designs.
  bool reducible = true;
};

enum class ColumnType { kReal, kCategorical };

struct CovariateSpec {
  std::string name;
  ColumnType type = ColumnType::kReal;
  // Categorical only. Empty `levels` means sorted observed levels; empty
  // `reference` means the first level.
  std::vector<std::string> levels;
  std::string reference;
};

struct Schema {
  std::string id_column = "id";
  std::string treatment_column = "d";
  std::vector<std::string> outcomes;
  std::vector<CovariateSpec> covariates;
  std::vector<ScaleDefinition> scales;

  std::vector<std::string> ItemColumns() const;
  // Covariate columns followed by every item column, in declaration order.
  std::vector<std::string> AnalysisColumns() const;
  const ScaleDefinition& Scale(std::string_view name) const;
  const CovariateSpec* Covariate(std::string_view name) const;
  // Throws ConfigError for scales with fewer than two items, mismatched
  // polarity flags, overlapping item sets or duplicated column names.
  void Validate() const;
};

Schema SchemaFromJson(std::string_view json_text);
Schema LoadSchema(const std::filesystem::path& path);
std::string SchemaToJson(const Schema& schema);

class Dataset {
 public:
  using NumericColumns = std::map<std::string, Eigen::VectorXd, std::less<>>;
  using CategoricalColumns =
      std::map<std::string, std::vector<std::string>, std::less<>>;

  // Validates and takes ownership of polarity-aligned columns. Throws
  // ValidationError on a broken invariant (non-binary or single-valued
  // treatment, duplicate ids, out-of-range Likert codes, missing values
  // outside outcome columns) and ConfigError on absent columns.
  static Dataset Create(Schema schema, std::vector<std::string> ids,
                        Eigen::VectorXd treatment, NumericColumns numeric,
                        CategoricalColumns categorical);

  Eigen::Index rows() const { return static_cast<Eigen::Index>(ids_.size()); }
  const Schema& schema() const { return schema_; }
  const std::vector<std::string>& ids() const { return ids_; }
  const Eigen::VectorXd& treatment() const { return treatment_; }
  Eigen::Index CountTreated() const;

  bool HasNumeric(std::string_view name) const;
  bool HasCategorical(std::string_view name) const;
  const Eigen::VectorXd& Numeric(std::string_view name) const;
  const std::vector<std::string>& Categorical(std::string_view name) const;
  const NumericColumns& numeric_columns() const { return numeric_; }
  const CategoricalColumns& categorical_columns() const { return categorical_; }

  // n x q block of a scale's (aligned) item responses.
  Eigen::MatrixXd ItemMatrix(const ScaleDefinition& scale) const;

  Dataset Subset(std::span<const Eigen::Index> rows) const;

 private:
  Dataset() = default;

  Schema schema_;
  std::vector<std::string> ids_;
  Eigen::VectorXd treatment_;
  NumericColumns numeric_;
  CategoricalColumns categorical_;
};

// Reads a header-row CSV laid out per `schema`. Reverse-coded items are
// sign-flipped so that every item points in its construct's direction.
Dataset LoadDataset(const std::filesystem::path& path, const Schema& schema);
Dataset ParseDataset(std::string_view csv_text, const Schema& schema);

// Writes the dataset back in the raw CSV layout LoadDataset expects
// (reverse-coded items flipped back to their questionnaire polarity).
void WriteDataset(const std::filesystem::path& path, const Dataset& ds);

struct EncodedColumn {
  std::string source;
  std::string level;  // empty for numeric sources
};

struct DesignMatrix {
  Eigen::MatrixXd matrix;
  std::vector<std::string> labels;
  std::vector<EncodedColumn> encoding;                // one per column
  std::map<std::string, std::string> reference_levels;  // per categorical
  std::map<std::string, std::vector<std::string>> levels;
  bool standardized = false;
  Eigen::VectorXd center;  // set when standardized
  Eigen::VectorXd scale;
};

// Numeric columns pass through; categorical columns become one dummy per
// non-reference level. Column order is input order, then level order. With
// `standardize`, every column is centered and scaled to unit sample
// variance; a constant column is a ValidationError naming it.
DesignMatrix BuildDesignMatrix(const Dataset& ds,
                               std::span<const std::string> columns,
                               bool standardize);

// Recovers the categorical level of `source` in `row` from its dummies.
std::string DecodeLevel(const DesignMatrix& design, std::string_view source,
                        Eigen::Index row);

struct SampleSpec {
  std::string name;
  std::vector<std::string> required_outcomes;
};

struct Sample {
  Dataset data;
  Eigen::Index treated = 0;
  Eigen::Index control = 0;
  Eigen::Index dropped = 0;
};

// Listwise exclusion of rows missing any required outcome.
Sample SelectSample(const Dataset& ds, const SampleSpec& spec);

// Row indices with a non-missing value in every listed column.
std::vector<Eigen::Index> CompleteRows(const Dataset& ds,
                                       std::span<const std::string> columns);

}  // namespace flipdml::data

#endif  // FLIPDML_DATAMODEL_H_
