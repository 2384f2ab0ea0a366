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
#include "config.h"

#include <fstream>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>

#include "flipdml/errors.h"

namespace flipdml::tools {

namespace {

using json = nlohmann::json;

void CheckKeys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError("config field '" + where + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok |= key == a;
    if (!ok) throw ConfigError("config field '" + where + "." + key + "' is not recognized");
  }
}

template <typename T>
std::optional<T> Get(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config field '" + where + "." + key + "' has the wrong type");
  }
}

std::filesystem::path Resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

learners::CvRule ParseCvRule(const std::string& s, const std::string& where) {
  if (s == "minimum") return learners::CvRule::kMinimum;
  if (s == "one_se") return learners::CvRule::kOneStandardError;
  throw ConfigError("config field '" + where + ".cv_rule' must be 'minimum' or 'one_se'");
}

void ParseDml(const json& j, const std::string& where, dml::DmlConfig* cfg) {
  if (auto v = Get<int>(j, "folds", where)) cfg->folds = *v;
  if (auto v = Get<int>(j, "repetitions", where)) cfg->repetitions = *v;
  if (auto v = Get<int>(j, "cv_folds", where)) cfg->cv_folds = *v;
  if (auto v = Get<int>(j, "grid_points", where)) cfg->grid_points = *v;
  if (auto v = Get<double>(j, "clip", where)) cfg->clip = *v;
  if (auto v = Get<std::string>(j, "cv_rule", where)) cfg->cv_rule = ParseCvRule(*v, where);
  try {
    cfg->Validate();
  } catch (const ConfigError& e) {
    throw ConfigError("config field '" + where + "': " + e.what());
  }
}

SpecSource ParseSpecSource(const json& j, const std::string& where, const std::filesystem::path& base) {
  SpecSource s;
  if (j.contains("spec")) {
    const auto& spec = j.at("spec");
    if (spec.is_string()) {
      s.path = Resolve(base, spec.get<std::string>());
    } else if (spec.is_object()) {
      s.inline_spec = spec;
    } else {
      throw ConfigError("config field '" + where + ".spec' must be a path or an object");
    }
  }
  s.n = Get<int>(j, "n", where);
  return s;
}

}  // namespace

sim::CohortSpec SpecSource::Resolve() const {
  sim::CohortSpec spec;
  if (path) {
    spec = sim::LoadCohortSpec(*path);
  } else if (inline_spec) {
    spec = sim::CohortSpecFromJson(inline_spec->dump());
  } else {
    spec = sim::DefaultCohortSpec();
  }
  if (n) spec.n = *n;
  spec.Validate();
  return spec;
}

data::Schema PipelineConfig::LoadSchema() const {
  if (schema_inline) return *schema_inline;
  if (!schema_path) throw ConfigError("config field 'schema' is required for this subcommand");
  return data::LoadSchema(*schema_path);
}

data::Dataset PipelineConfig::LoadDataset() const {
  if (!dataset) throw ConfigError("config field 'dataset' is required for this subcommand");
  if (!std::filesystem::exists(*dataset)) {
    throw ConfigError("config field 'dataset': file not found: " + dataset->string());
  }
  return data::LoadDataset(*dataset, LoadSchema());
}

PipelineConfig ParsePipelineConfig(const std::string& text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  CheckKeys(j,
            {"dataset", "schema", "seed", "output_dir", "threads", "format", "samples", "estimate",
             "item_analysis", "pca", "usage", "simulate", "benchmark"},
            "");
  PipelineConfig cfg;
  cfg.base_dir = base_dir;
  cfg.raw = j;
  cfg.canonical = j.dump();

  if (auto v = Get<std::string>(j, "dataset", "")) cfg.dataset = Resolve(base_dir, *v);
  if (j.contains("schema")) {
    const auto& s = j.at("schema");
    if (s.is_string()) {
      cfg.schema_path = Resolve(base_dir, s.get<std::string>());
    } else if (s.is_object()) {
      cfg.schema_inline = data::SchemaFromJson(s.dump());
    } else {
      throw ConfigError("config field 'schema' must be a path or an object");
    }
  }
  if (j.contains("seed")) {
    const auto& s = j.at("seed");
    if (!s.is_number_unsigned()) throw ConfigError("config field 'seed' must be a non-negative integer");
    cfg.seed = s.get<std::uint64_t>();
  }
  if (auto v = Get<std::string>(j, "output_dir", "")) cfg.output_dir = Resolve(base_dir, *v);
  if (auto v = Get<int>(j, "threads", "")) {
    if (*v < 1) throw ConfigError("config field 'threads' must be at least 1");
    cfg.threads = *v;
  }
  if (auto v = Get<std::string>(j, "format", "")) {
    if (*v == "csv") {
      cfg.format = Format::kCsv;
    } else if (*v == "md") {
      cfg.format = Format::kMarkdown;
    } else {
      throw ConfigError("config field 'format' must be 'csv' or 'md'");
    }
  }
  if (j.contains("samples")) {
    if (!j.at("samples").is_array()) throw ConfigError("config field 'samples' must be an array");
    for (const auto& sj : j.at("samples")) {
      CheckKeys(sj, {"name", "required_outcomes"}, "samples[]");
      data::SampleSpec s;
      s.name = Get<std::string>(sj, "name", "samples[]").value_or("");
      if (s.name.empty()) throw ConfigError("config field 'samples[].name' is required");
      s.required_outcomes = Get<std::vector<std::string>>(sj, "required_outcomes", "samples[]").value_or(
          std::vector<std::string>{});
      cfg.samples.push_back(std::move(s));
    }
  }
  if (j.contains("estimate")) {
    const auto& ej = j.at("estimate");
    CheckKeys(ej, {"outcomes", "folds", "repetitions", "cv_folds", "grid_points", "clip", "cv_rule", "ols", "dml", "hc"},
              "estimate");
    auto& e = cfg.estimate;
    e.outcomes = Get<std::vector<std::string>>(ej, "outcomes", "estimate").value_or(std::vector<std::string>{});
    ParseDml(ej, "estimate", &e.dml);
    if (auto v = Get<std::vector<std::string>>(ej, "ols", "estimate")) {
      e.ols.clear();
      for (const auto& name : *v) {
        if (name == "ols1") {
          e.ols.push_back(inference::OlsVariant::kAllItems);
        } else if (name == "ols2") {
          e.ols.push_back(inference::OlsVariant::kScaleMeans);
        } else if (name == "ols3") {
          e.ols.push_back(inference::OlsVariant::kPrincipalComponents);
        } else {
          throw ConfigError("config field 'estimate.ols' has unknown variant '" + name + "'");
        }
      }
    }
    if (auto v = Get<std::vector<std::string>>(ej, "dml", "estimate")) {
      e.models.clear();
      for (const auto& name : *v) {
        if (name == dml::DmlModelName(dml::DmlModel::kInteractive)) {
          e.models.push_back(dml::DmlModel::kInteractive);
        } else if (name == dml::DmlModelName(dml::DmlModel::kPartiallyLinear)) {
          e.models.push_back(dml::DmlModel::kPartiallyLinear);
        } else {
          throw ConfigError("config field 'estimate.dml' has unknown model '" + name + "'");
        }
      }
    }
    if (auto v = Get<std::string>(ej, "hc", "estimate")) {
      if (*v == "HC0") {
        e.hc = inference::HcType::kHC0;
      } else if (*v == "HC1") {
        e.hc = inference::HcType::kHC1;
      } else if (*v == "HC3") {
        e.hc = inference::HcType::kHC3;
      } else {
        throw ConfigError("config field 'estimate.hc' must be HC0, HC1 or HC3");
      }
    }
  }
  if (j.contains("item_analysis")) {
    const auto& ij = j.at("item_analysis");
    CheckKeys(ij, {"item_total", "loading", "restarts", "wording_drops"}, "item_analysis");
    auto& it = cfg.item_analysis;
    if (auto v = Get<double>(ij, "item_total", "item_analysis")) it.thresholds.item_total = *v;
    if (auto v = Get<double>(ij, "loading", "item_analysis")) it.thresholds.loading = *v;
    if (auto v = Get<int>(ij, "restarts", "item_analysis")) {
      if (*v < 1) throw ConfigError("config field 'item_analysis.restarts' must be at least 1");
      it.restarts = *v;
    }
    if (auto v = Get<std::map<std::string, std::vector<std::string>>>(ij, "wording_drops", "item_analysis")) {
      it.wording_drops = *v;
    }
  }
  if (j.contains("pca")) {
    const auto& pj = j.at("pca");
    CheckKeys(pj, {"replications", "percentile"}, "pca");
    if (auto v = Get<int>(pj, "replications", "pca")) {
      if (*v < 1) throw ConfigError("config field 'pca.replications' must be at least 1");
      cfg.pca.replications = *v;
    }
    if (auto v = Get<double>(pj, "percentile", "pca")) {
      if (!(*v > 0.0 && *v < 1.0)) throw ConfigError("config field 'pca.percentile' must lie in (0, 1)");
      cfg.pca.percentile = *v;
    }
  }
  if (j.contains("usage")) {
    const auto& uj = j.at("usage");
    CheckKeys(uj, {"dir", "exam", "cutoffs"}, "usage");
    if (auto v = Get<std::string>(uj, "dir", "usage")) cfg.usage.dir = Resolve(base_dir, *v);
    if (auto v = Get<std::string>(uj, "exam", "usage")) {
      try {
        cfg.usage.exam = usage::ParseTimestamp(*v);
      } catch (const ValidationError&) {
        throw ConfigError("config field 'usage.exam' is not an ISO-8601 UTC timestamp");
      }
    }
    cfg.usage.cutoffs = Get<std::vector<double>>(uj, "cutoffs", "usage");
  }
  if (j.contains("simulate")) {
    const auto& sj = j.at("simulate");
    CheckKeys(sj, {"spec", "n"}, "simulate");
    cfg.simulate = ParseSpecSource(sj, "simulate", base_dir);
  }
  cfg.benchmark.dml.repetitions = 1;
  if (j.contains("benchmark")) {
    const auto& bj = j.at("benchmark");
    CheckKeys(bj, {"spec", "n", "replications", "estimators", "folds", "repetitions", "cv_folds", "grid_points", "clip",
                   "cv_rule"},
              "benchmark");
    cfg.benchmark.spec = ParseSpecSource(bj, "benchmark", base_dir);
    if (auto v = Get<int>(bj, "replications", "benchmark")) {
      if (*v < 1) throw ConfigError("config field 'benchmark.replications' must be at least 1");
      cfg.benchmark.replications = *v;
    }
    if (auto v = Get<std::vector<std::string>>(bj, "estimators", "benchmark")) {
      cfg.benchmark.estimators.clear();
      for (const auto& name : *v) {
        try {
          cfg.benchmark.estimators.push_back(sim::EstimatorFromName(name));
        } catch (const ConfigError& e) {
          throw ConfigError(std::string("config field 'benchmark.estimators': ") + e.what());
        }
      }
    }
    ParseDml(bj, "benchmark", &cfg.benchmark.dml);
  }
  return cfg;
}

PipelineConfig LoadPipelineConfig(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return ParsePipelineConfig(buffer.str(), path.parent_path());
}

std::string Sha256Hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 failed");
  }
  std::ostringstream out;
  for (unsigned int i = 0; i < length; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int{digest[i]};
  return out.str();
}

const char* CvRuleName(learners::CvRule rule) {
  return rule == learners::CvRule::kMinimum ? "minimum" : "one_se";
}

const char* HcName(inference::HcType hc) {
  switch (hc) {
    case inference::HcType::kHC0:
      return "HC0";
    case inference::HcType::kHC1:
      return "HC1";
    case inference::HcType::kHC3:
      return "HC3";
  }
  return "?";
}

}  // namespace flipdml::tools
