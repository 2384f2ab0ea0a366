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
#include "flipdml/datamodel.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "flipdml/csv.h"
#include "flipdml/errors.h"

namespace flipdml::data {

namespace {

using json = nlohmann::json;

std::string RowLabel(Eigen::Index row, const std::vector<std::string>& ids) {
  std::string label = "row " + std::to_string(row + 1);
  if (static_cast<std::size_t>(row) < ids.size()) {
    label += " (id " + ids[static_cast<std::size_t>(row)] + ")";
  }
  return label;
}

template <typename T>
T Get(const json& j, const char* key, const T& fallback) {
  if (!j.contains(key)) return fallback;
  return j.at(key).get<T>();
}

}  // namespace

std::vector<std::string> Schema::ItemColumns() const {
  std::vector<std::string> out;
  for (const auto& s : scales) out.insert(out.end(), s.items.begin(), s.items.end());
  return out;
}

std::vector<std::string> Schema::AnalysisColumns() const {
  std::vector<std::string> out;
  for (const auto& c : covariates) out.push_back(c.name);
  const auto items = ItemColumns();
  out.insert(out.end(), items.begin(), items.end());
  return out;
}

const ScaleDefinition& Schema::Scale(std::string_view name) const {
  for (const auto& s : scales) {
    if (s.name == name) return s;
  }
  throw ConfigError("unknown scale '" + std::string(name) + "'");
}

const CovariateSpec* Schema::Covariate(std::string_view name) const {
  for (const auto& c : covariates) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

void Schema::Validate() const {
  if (id_column.empty()) throw ConfigError("schema.id must be set");
  if (treatment_column.empty()) throw ConfigError("schema.treatment must be set");
  std::set<std::string> seen{id_column, treatment_column};
  auto claim = [&](const std::string& name, const std::string& what) {
    if (name.empty()) throw ConfigError(what + " has an empty column name");
    if (!seen.insert(name).second) {
      throw ConfigError("column '" + name + "' is used more than once (" + what + ")");
    }
  };
  for (const auto& o : outcomes) claim(o, "outcome");
  for (const auto& c : covariates) {
    claim(c.name, "covariate");
    if (c.type == ColumnType::kCategorical && !c.reference.empty() &&
        !c.levels.empty() &&
        std::find(c.levels.begin(), c.levels.end(), c.reference) == c.levels.end()) {
      throw ConfigError("covariate '" + c.name + "': reference level '" +
                        c.reference + "' is not among its levels");
    }
  }
  std::set<std::string> scale_names;
  for (const auto& s : scales) {
    if (!scale_names.insert(s.name).second) {
      throw ConfigError("duplicate scale '" + s.name + "'");
    }
    if (s.items.size() < 2) {
      throw ConfigError("scale '" + s.name + "' needs at least 2 items");
    }
    if (s.reversed.size() != s.items.size()) {
      throw ConfigError("scale '" + s.name + "': polarity flags do not match items");
    }
    for (const auto& item : s.items) claim(item, "item of scale " + s.name);
  }
}

Schema SchemaFromJson(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("schema: ") + e.what());
  }
  Schema schema;
  try {
    schema.id_column = Get<std::string>(j, "id", "id");
    schema.treatment_column = Get<std::string>(j, "treatment", "d");
    schema.outcomes = Get<std::vector<std::string>>(j, "outcomes", {});
    for (const auto& c : j.value("covariates", json::array())) {
      CovariateSpec spec;
      if (c.is_string()) {
        spec.name = c.get<std::string>();
      } else {
        spec.name = c.at("name").get<std::string>();
        const auto type = Get<std::string>(c, "type", "real");
        if (type == "categorical") {
          spec.type = ColumnType::kCategorical;
        } else if (type != "real") {
          throw ConfigError("covariate '" + spec.name + "': unknown type '" + type + "'");
        }
        spec.levels = Get<std::vector<std::string>>(c, "levels", {});
        spec.reference = Get<std::string>(c, "reference", "");
      }
      schema.covariates.push_back(std::move(spec));
    }
    for (const auto& s : j.value("scales", json::array())) {
      ScaleDefinition scale;
      scale.name = s.at("name").get<std::string>();
      scale.items = s.at("items").get<std::vector<std::string>>();
      const auto reversed = Get<std::vector<std::string>>(s, "reversed", {});
      for (const auto& r : reversed) {
        if (std::find(scale.items.begin(), scale.items.end(), r) == scale.items.end()) {
          throw ConfigError("scale '" + scale.name + "': reversed item '" + r +
                            "' is not one of its items");
        }
      }
      for (const auto& item : scale.items) {
        scale.reversed.push_back(std::find(reversed.begin(), reversed.end(), item) !=
                                 reversed.end());
      }
      const auto q = Get<std::string>(s, "questionnaire", "first");
      if (q == "first") {
        scale.questionnaire = Questionnaire::kFirst;
      } else if (q == "second") {
        scale.questionnaire = Questionnaire::kSecond;
      } else {
        throw ConfigError("scale '" + scale.name + "': questionnaire must be first or second");
      }
      scale.reducible = Get<bool>(s, "reducible", true);
      schema.scales.push_back(std::move(scale));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("schema: ") + e.what());
  }
  schema.Validate();
  return schema;
}

Schema LoadSchema(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open schema '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return SchemaFromJson(buffer.str());
}

std::string SchemaToJson(const Schema& schema) {
  json j;
  j["id"] = schema.id_column;
  j["treatment"] = schema.treatment_column;
  j["outcomes"] = schema.outcomes;
  j["covariates"] = json::array();
  for (const auto& c : schema.covariates) {
    json cj{{"name", c.name},
            {"type", c.type == ColumnType::kCategorical ? "categorical" : "real"}};
    if (!c.levels.empty()) cj["levels"] = c.levels;
    if (!c.reference.empty()) cj["reference"] = c.reference;
    j["covariates"].push_back(cj);
  }
  j["scales"] = json::array();
  for (const auto& s : schema.scales) {
    std::vector<std::string> reversed;
    for (std::size_t i = 0; i < s.items.size(); ++i) {
      if (s.reversed[i]) reversed.push_back(s.items[i]);
    }
    j["scales"].push_back({{"name", s.name},
                           {"items", s.items},
                           {"reversed", reversed},
                           {"questionnaire",
                            s.questionnaire == Questionnaire::kFirst ? "first" : "second"},
                           {"reducible", s.reducible}});
  }
  return j.dump(2);
}

Dataset Dataset::Create(Schema schema, std::vector<std::string> ids,
                        Eigen::VectorXd treatment, NumericColumns numeric,
                        CategoricalColumns categorical) {
  schema.Validate();
  const auto n = static_cast<Eigen::Index>(ids.size());
  if (n == 0) throw ValidationError("dataset has no rows");
  if (treatment.size() != n) {
    throw ValidationError("treatment column length does not match ids");
  }
  std::set<std::string> unique_ids;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!unique_ids.insert(ids[static_cast<std::size_t>(i)]).second) {
      throw ValidationError("duplicate student id '" + ids[static_cast<std::size_t>(i)] +
                            "' at " + RowLabel(i, ids));
    }
  }
  Eigen::Index treated = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (treatment[i] != 0.0 && treatment[i] != 1.0) {
      throw ValidationError("treatment '" + schema.treatment_column +
                            "' is not binary at " + RowLabel(i, ids));
    }
    treated += treatment[i] == 1.0;
  }
  if (treated == 0 || treated == n) {
    throw ValidationError("treatment '" + schema.treatment_column +
                          "' must contain both 0 and 1");
  }

  auto require_numeric = [&](const std::string& name) -> const Eigen::VectorXd& {
    auto it = numeric.find(name);
    if (it == numeric.end()) throw ConfigError("missing column '" + name + "'");
    if (it->second.size() != n) {
      throw ValidationError("column '" + name + "' has the wrong length");
    }
    return it->second;
  };
  for (const auto& o : schema.outcomes) require_numeric(o);
  for (const auto& c : schema.covariates) {
    if (c.type == ColumnType::kReal) {
      const auto& col = require_numeric(c.name);
      for (Eigen::Index i = 0; i < n; ++i) {
        if (!std::isfinite(col[i])) {
          throw ValidationError("covariate '" + c.name + "' missing at " + RowLabel(i, ids));
        }
      }
    } else {
      auto it = categorical.find(c.name);
      if (it == categorical.end()) throw ConfigError("missing column '" + c.name + "'");
      if (static_cast<Eigen::Index>(it->second.size()) != n) {
        throw ValidationError("column '" + c.name + "' has the wrong length");
      }
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto& v = it->second[static_cast<std::size_t>(i)];
        if (IsMissingToken(v)) {
          throw ValidationError("covariate '" + c.name + "' missing at " + RowLabel(i, ids));
        }
        if (!c.levels.empty() &&
            std::find(c.levels.begin(), c.levels.end(), v) == c.levels.end()) {
          throw ValidationError("covariate '" + c.name + "' has undeclared level '" + v +
                                "' at " + RowLabel(i, ids));
        }
      }
    }
  }
  for (const auto& item : schema.ItemColumns()) {
    const auto& col = require_numeric(item);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double v = col[i];
      if (!std::isfinite(v) || v != std::round(v) || v < kLikertMin || v > kLikertMax) {
        throw ValidationError("item '" + item + "' has out-of-range Likert code at " +
                              RowLabel(i, ids));
      }
    }
  }

  Dataset ds;
  ds.schema_ = std::move(schema);
  ds.ids_ = std::move(ids);
  ds.treatment_ = std::move(treatment);
  ds.numeric_ = std::move(numeric);
  ds.categorical_ = std::move(categorical);
  return ds;
}

Eigen::Index Dataset::CountTreated() const {
  return static_cast<Eigen::Index>((treatment_.array() == 1.0).count());
}

bool Dataset::HasNumeric(std::string_view name) const {
  return numeric_.find(name) != numeric_.end();
}

bool Dataset::HasCategorical(std::string_view name) const {
  return categorical_.find(name) != categorical_.end();
}

const Eigen::VectorXd& Dataset::Numeric(std::string_view name) const {
  auto it = numeric_.find(name);
  if (it == numeric_.end()) {
    throw ConfigError("no numeric column '" + std::string(name) + "'");
  }
  return it->second;
}

const std::vector<std::string>& Dataset::Categorical(std::string_view name) const {
  auto it = categorical_.find(name);
  if (it == categorical_.end()) {
    throw ConfigError("no categorical column '" + std::string(name) + "'");
  }
  return it->second;
}

Eigen::MatrixXd Dataset::ItemMatrix(const ScaleDefinition& scale) const {
  Eigen::MatrixXd out(rows(), static_cast<Eigen::Index>(scale.items.size()));
  for (std::size_t j = 0; j < scale.items.size(); ++j) {
    out.col(static_cast<Eigen::Index>(j)) = Numeric(scale.items[j]);
  }
  return out;
}

Dataset Dataset::Subset(std::span<const Eigen::Index> rows) const {
  Dataset out;
  out.schema_ = schema_;
  const auto m = static_cast<Eigen::Index>(rows.size());
  out.ids_.reserve(rows.size());
  out.treatment_.resize(m);
  for (Eigen::Index k = 0; k < m; ++k) {
    const Eigen::Index r = rows[static_cast<std::size_t>(k)];
    out.ids_.push_back(ids_[static_cast<std::size_t>(r)]);
    out.treatment_[k] = treatment_[r];
  }
  for (const auto& [name, col] : numeric_) {
    Eigen::VectorXd sub(m);
    for (Eigen::Index k = 0; k < m; ++k) sub[k] = col[rows[static_cast<std::size_t>(k)]];
    out.numeric_.emplace(name, std::move(sub));
  }
  for (const auto& [name, col] : categorical_) {
    std::vector<std::string> sub;
    sub.reserve(rows.size());
    for (auto r : rows) sub.push_back(col[static_cast<std::size_t>(r)]);
    out.categorical_.emplace(name, std::move(sub));
  }
  return out;
}

Dataset ParseDataset(std::string_view csv_text, const Schema& schema) {
  schema.Validate();
  const CsvTable table = ParseCsv(csv_text);
  const auto n = static_cast<Eigen::Index>(table.rows.size());
  const std::size_t id_col = table.Require(schema.id_column);
  const std::size_t d_col = table.Require(schema.treatment_column);

  std::vector<std::string> ids;
  ids.reserve(table.rows.size());
  for (const auto& row : table.rows) ids.push_back(row[id_col]);

  Eigen::VectorXd treatment(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& tok = table.rows[static_cast<std::size_t>(i)][d_col];
    if (IsMissingToken(tok)) {
      throw ValidationError("treatment missing at " + RowLabel(i, ids));
    }
    treatment[i] = ParseDouble(tok, "treatment at " + RowLabel(i, ids));
  }

  Dataset::NumericColumns numeric;
  Dataset::CategoricalColumns categorical;
  auto read_numeric = [&](const std::string& name, bool allow_missing, double sign) {
    const std::size_t col = table.Require(name);
    Eigen::VectorXd values(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& tok = table.rows[static_cast<std::size_t>(i)][col];
      if (IsMissingToken(tok)) {
        if (!allow_missing) {
          throw ValidationError("column '" + name + "' missing at " + RowLabel(i, ids));
        }
        values[i] = std::numeric_limits<double>::quiet_NaN();
      } else {
        values[i] = sign * ParseDouble(tok, "column '" + name + "' at " + RowLabel(i, ids));
      }
    }
    numeric.emplace(name, std::move(values));
  };
  for (const auto& o : schema.outcomes) read_numeric(o, true, 1.0);
  for (const auto& c : schema.covariates) {
    if (c.type == ColumnType::kReal) {
      read_numeric(c.name, false, 1.0);
    } else {
      const std::size_t col = table.Require(c.name);
      std::vector<std::string> values;
      values.reserve(table.rows.size());
      for (const auto& row : table.rows) values.push_back(row[col]);
      categorical.emplace(c.name, std::move(values));
    }
  }
  for (const auto& s : schema.scales) {
    for (std::size_t j = 0; j < s.items.size(); ++j) {
      read_numeric(s.items[j], false, s.reversed[j] ? -1.0 : 1.0);
    }
  }
  return Dataset::Create(schema, std::move(ids), std::move(treatment), std::move(numeric),
                         std::move(categorical));
}

Dataset LoadDataset(const std::filesystem::path& path, const Schema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open dataset '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return ParseDataset(buffer.str(), schema);
}

void WriteDataset(const std::filesystem::path& path, const Dataset& ds) {
  const Schema& schema = ds.schema();
  CsvTable table;
  table.header.push_back(schema.id_column);
  table.header.push_back(schema.treatment_column);
  for (const auto& o : schema.outcomes) table.header.push_back(o);
  for (const auto& c : schema.covariates) table.header.push_back(c.name);
  std::vector<double> item_sign;
  for (const auto& s : schema.scales) {
    for (std::size_t j = 0; j < s.items.size(); ++j) {
      table.header.push_back(s.items[j]);
      item_sign.push_back(s.reversed[j] ? -1.0 : 1.0);
    }
  }
  const auto items = schema.ItemColumns();
  for (Eigen::Index i = 0; i < ds.rows(); ++i) {
    std::vector<std::string> row;
    row.push_back(ds.ids()[static_cast<std::size_t>(i)]);
    row.push_back(ds.treatment()[i] == 1.0 ? "1" : "0");
    for (const auto& o : schema.outcomes) row.push_back(FormatNumber(ds.Numeric(o)[i], 6));
    for (const auto& c : schema.covariates) {
      if (c.type == ColumnType::kReal) {
        row.push_back(FormatNumber(ds.Numeric(c.name)[i], 6));
      } else {
        row.push_back(ds.Categorical(c.name)[static_cast<std::size_t>(i)]);
      }
    }
    for (std::size_t j = 0; j < items.size(); ++j) {
      const double v = item_sign[j] * ds.Numeric(items[j])[i];
      row.push_back(std::to_string(static_cast<int>(v)));
    }
    table.rows.push_back(std::move(row));
  }
  WriteCsv(path, table);
}

DesignMatrix BuildDesignMatrix(const Dataset& ds, std::span<const std::string> columns,
                               bool standardize) {
  DesignMatrix design;
  std::vector<Eigen::VectorXd> built;
  const Eigen::Index n = ds.rows();
  for (const auto& name : columns) {
    if (ds.HasNumeric(name)) {
      const auto& col = ds.Numeric(name);
      if (!col.allFinite()) {
        throw ValidationError("design column '" + name + "' has missing values");
      }
      built.push_back(col);
      design.labels.push_back(name);
      design.encoding.push_back({name, ""});
      continue;
    }
    if (!ds.HasCategorical(name)) {
      throw ConfigError("design column '" + name + "' does not exist");
    }
    const auto& values = ds.Categorical(name);
    const CovariateSpec* spec = ds.schema().Covariate(name);
    std::vector<std::string> levels;
    if (spec && !spec->levels.empty()) {
      levels = spec->levels;
    } else {
      std::set<std::string> observed(values.begin(), values.end());
      levels.assign(observed.begin(), observed.end());
    }
    std::string reference = spec && !spec->reference.empty() ? spec->reference : levels.front();
    design.reference_levels[name] = reference;
    design.levels[name] = levels;
    for (const auto& level : levels) {
      if (level == reference) continue;
      Eigen::VectorXd dummy(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        dummy[i] = values[static_cast<std::size_t>(i)] == level ? 1.0 : 0.0;
      }
      built.push_back(std::move(dummy));
      design.labels.push_back(name + "=" + level);
      design.encoding.push_back({name, level});
    }
  }
  design.matrix.resize(n, static_cast<Eigen::Index>(built.size()));
  for (std::size_t j = 0; j < built.size(); ++j) {
    design.matrix.col(static_cast<Eigen::Index>(j)) = built[j];
  }
  if (standardize) {
    if (n < 2) throw ValidationError("standardization needs at least two rows");
    const Eigen::Index p = design.matrix.cols();
    design.center = design.matrix.colwise().mean().transpose();
    design.scale.resize(p);
    for (Eigen::Index j = 0; j < p; ++j) {
      design.matrix.col(j).array() -= design.center[j];
      const double sd = std::sqrt(design.matrix.col(j).squaredNorm() / static_cast<double>(n - 1));
      if (!(sd > 0.0)) {
        throw ValidationError("design column '" + design.labels[static_cast<std::size_t>(j)] +
                              "' is constant and cannot be standardized");
      }
      design.scale[j] = sd;
      design.matrix.col(j) /= sd;
    }
    design.standardized = true;
  }
  return design;
}

std::string DecodeLevel(const DesignMatrix& design, std::string_view source, Eigen::Index row) {
  auto ref = design.reference_levels.find(std::string(source));
  if (ref == design.reference_levels.end()) {
    throw ConfigError("'" + std::string(source) + "' is not a categorical design source");
  }
  for (std::size_t j = 0; j < design.encoding.size(); ++j) {
    const auto& enc = design.encoding[j];
    if (enc.source != source || enc.level.empty()) continue;
    const auto col = static_cast<Eigen::Index>(j);
    double v = design.matrix(row, col);
    if (design.standardized) v = v * design.scale[col] + design.center[col];
    if (v > 0.5) return enc.level;
  }
  return ref->second;
}

std::vector<Eigen::Index> CompleteRows(const Dataset& ds, std::span<const std::string> columns) {
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < ds.rows(); ++i) {
    bool complete = true;
    for (const auto& c : columns) {
      if (ds.HasNumeric(c) && !std::isfinite(ds.Numeric(c)[i])) {
        complete = false;
        break;
      }
    }
    if (complete) keep.push_back(i);
  }
  return keep;
}

Sample SelectSample(const Dataset& ds, const SampleSpec& spec) {
  for (const auto& o : spec.required_outcomes) {
    if (!ds.HasNumeric(o)) {
      throw ConfigError("sample " + spec.name + ": unknown outcome column '" + o + "'");
    }
  }
  const auto keep = CompleteRows(ds, spec.required_outcomes);
  if (keep.empty()) {
    throw ValidationError("sample " + spec.name + " is empty after listwise exclusion");
  }
  Sample sample{ds.Subset(keep), 0, 0, ds.rows() - static_cast<Eigen::Index>(keep.size())};
  sample.treated = sample.data.CountTreated();
  sample.control = sample.data.rows() - sample.treated;
  return sample;
}

}  // namespace flipdml::data
