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
#include "flipdml/simulator.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <set>

#include <Eigen/Cholesky>
#include <nlohmann/json.hpp>

#include "flipdml/bivariate_normal.h"
#include "flipdml/csv.h"
#include "flipdml/errors.h"
#include "flipdml/inference.h"
#include "flipdml/parallel.h"
#include "flipdml/random.h"

namespace flipdml::sim {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using json = nlohmann::json;

double Logistic(double t) { return 1.0 / (1.0 + std::exp(-t)); }

// Independent streams per model component, so changing one part of a spec
// leaves the draws of the others untouched.
enum Stream : std::uint64_t {
  kFactorStream = 1,
  kItemStream,
  kCovariateStream,
  kTreatmentStream,
  kNoiseStream,
  kDropoutStream,
  kUsageStream,
};

std::vector<const CovariateSim*> RealCovariates(const CohortSpec& spec) {
  std::vector<const CovariateSim*> out;
  for (const auto& c : spec.covariates) {
    if (c.type == data::ColumnType::kReal) out.push_back(&c);
  }
  return out;
}

std::string ItemName(const ScaleSpec& s, std::size_t j) { return s.name + "_" + std::to_string(j + 1); }

double Uniqueness(const ScaleSpec& s, std::size_t j) {
  return s.uniquenesses.empty() ? 1.0 - s.loadings[j] * s.loadings[j] : s.uniquenesses[j];
}

void CheckCoefficients(const CohortSpec& spec, const Coefficients& coefs, const std::string& where) {
  for (const auto& [key, value] : coefs) {
    if (!std::isfinite(value)) throw ConfigError(where + ": coefficient '" + key + "' is not finite");
    bool found = false;
    for (const auto& c : spec.covariates) {
      if (c.type == data::ColumnType::kReal && key == c.name) found = true;
      if (c.type == data::ColumnType::kCategorical) {
        for (std::size_t l = 1; l < c.levels.size(); ++l) found |= key == c.name + "=" + c.levels[l];
      }
    }
    for (const auto& s : spec.scales) found |= key == s.name;
    if (!found) throw ConfigError(where + ": unknown term '" + key + "'");
  }
}

// Ordered keys checked against an allow list.
void CheckKeys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }) == allowed.end()) {
      throw ConfigError(where + ": unknown field '" + key + "'");
    }
  }
}

template <typename T>
void Read(const json& j, const char* key, T* out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    *out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + " has the wrong type");
  }
}

data::Questionnaire ParseQuestionnaire(const std::string& s) {
  if (s == "first") return data::Questionnaire::kFirst;
  if (s == "second") return data::Questionnaire::kSecond;
  throw ConfigError("questionnaire must be 'first' or 'second'");
}

json CoefficientsJson(const Coefficients& c) {
  json j = json::object();
  for (const auto& [k, v] : c) j[k] = v;
  return j;
}

}  // namespace

std::vector<std::string> CohortSpec::Validate() const {
  std::vector<std::string> warnings;
  if (n < 4) throw ConfigError("cohort.n must be at least 4");
  if (thresholds.size() != 6) throw ConfigError("cohort.thresholds needs 6 cutpoints for 7 categories");
  for (std::size_t k = 1; k < thresholds.size(); ++k) {
    if (!(thresholds[k] > thresholds[k - 1])) throw ConfigError("cohort.thresholds must be strictly increasing");
  }
  for (std::size_t k = 0; k <= thresholds.size(); ++k) {
    const double lo = k == 0 ? 0.0 : NormalCdf(thresholds[k - 1]);
    const double hi = k == thresholds.size() ? 1.0 : NormalCdf(thresholds[k]);
    if (hi - lo < 1e-3) {
      warnings.push_back("Likert category " + std::to_string(static_cast<int>(k) - 3) +
                         " has probability below 0.001 and will be nearly empty");
    }
  }
  if (scales.empty()) throw ConfigError("cohort.scales must not be empty");
  std::set<std::string> names;
  for (const auto& s : scales) {
    if (s.name.empty() || !names.insert(s.name).second) throw ConfigError("scale names must be unique and non-empty");
    if (s.loadings.size() < 2) throw ConfigError("scale '" + s.name + "' needs at least two items");
    if (!s.uniquenesses.empty() && s.uniquenesses.size() != s.loadings.size()) {
      throw ConfigError("scale '" + s.name + "': uniquenesses do not match loadings");
    }
    if (!s.reversed.empty() && s.reversed.size() != s.loadings.size()) {
      throw ConfigError("scale '" + s.name + "': reversed flags do not match loadings");
    }
    for (std::size_t j = 0; j < s.loadings.size(); ++j) {
      if (!(Uniqueness(s, j) > 0.0) || !std::isfinite(s.loadings[j])) {
        throw ConfigError("scale '" + s.name + "': item " + std::to_string(j + 1) +
                          " needs a finite loading and a positive uniqueness");
      }
    }
  }
  const double k = static_cast<double>(scales.size());
  if (!(factor_correlation < 1.0) || !(factor_correlation > -1.0 / std::max(k - 1.0, 1.0))) {
    throw ConfigError("cohort.factor_correlation does not give a positive definite factor correlation");
  }
  for (const auto& c : covariates) {
    if (c.name.empty() || !names.insert(c.name).second) throw ConfigError("covariate names must be unique");
    if (c.type == data::ColumnType::kReal) {
      if (!(c.sd > 0.0)) throw ConfigError("covariate '" + c.name + "' needs sd > 0");
    } else {
      if (c.levels.size() < 2 || c.levels.size() != c.probabilities.size()) {
        throw ConfigError("covariate '" + c.name + "' needs at least two levels with one probability each");
      }
      double total = 0.0;
      for (double p : c.probabilities) {
        if (!(p > 0.0)) throw ConfigError("covariate '" + c.name + "' has a non-positive level probability");
        total += p;
      }
      if (std::fabs(total - 1.0) > 1e-6) throw ConfigError("covariate '" + c.name + "' probabilities must sum to 1");
    }
  }
  const auto real = RealCovariates(*this);
  CheckCoefficients(*this, treatment.coefficients, "treatment");
  CheckCoefficients(*this, outcome.coefficients, "outcome");
  if (outcome.nonlinear != 0.0 && real.size() < 2) {
    throw ConfigError("outcome.nonlinear needs at least two continuous covariates");
  }
  if (outcome.tau_slope != 0.0 && real.empty()) throw ConfigError("outcome.tau_slope needs a continuous covariate");
  if (!(outcome.noise_sd >= 0.0)) throw ConfigError("outcome.noise_sd must be non-negative");
  if (outcome.name.empty() || !names.insert(outcome.name).second) throw ConfigError("outcome.name must be unique");
  for (const auto& stage : dropout) {
    if (stage.outcome.empty() || !names.insert(stage.outcome).second) {
      throw ConfigError("dropout outcome names must be unique");
    }
    if (stage.slope != 0.0 && real.empty()) throw ConfigError("dropout slope needs a continuous covariate");
  }
  if (usage.enabled) {
    if (usage.videos < 1 || usage.segments < 1 || usage.quizzes < 0 || usage.questions < 1 || usage.sessions < 0 ||
        usage.relevant_questions < 1) {
      throw ConfigError("usage: catalog sizes must be positive");
    }
    if (!(usage.catch_up >= 0.0 && usage.catch_up <= 1.0) || !(usage.replay >= 0.0 && usage.replay <= 1.0)) {
      throw ConfigError("usage: catch_up and replay must be probabilities");
    }
  }
  return warnings;
}

data::Schema CohortSpec::MakeSchema() const {
  data::Schema schema;
  schema.outcomes.push_back(outcome.name);
  for (const auto& stage : dropout) schema.outcomes.push_back(stage.outcome);
  for (const auto& c : covariates) {
    data::CovariateSpec cs;
    cs.name = c.name;
    cs.type = c.type;
    if (c.type == data::ColumnType::kCategorical) {
      cs.levels = c.levels;
      cs.reference = c.levels.front();
    }
    schema.covariates.push_back(cs);
  }
  for (const auto& s : scales) {
    data::ScaleDefinition def;
    def.name = s.name;
    def.questionnaire = s.questionnaire;
    def.reducible = s.reducible;
    for (std::size_t j = 0; j < s.loadings.size(); ++j) {
      def.items.push_back(ItemName(s, j));
      def.reversed.push_back(!s.reversed.empty() && s.reversed[j]);
    }
    schema.scales.push_back(def);
  }
  return schema;
}

CohortSpec CohortSpecFromJson(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("cohort spec is not valid JSON: ") + e.what());
  }
  CheckKeys(j, {"n", "seed", "factor_correlation", "thresholds", "scales", "covariates", "treatment", "outcome",
                "dropout", "usage"},
            "cohort");
  CohortSpec spec;
  Read(j, "n", &spec.n, "cohort");
  Read(j, "seed", &spec.seed, "cohort");
  Read(j, "factor_correlation", &spec.factor_correlation, "cohort");
  Read(j, "thresholds", &spec.thresholds, "cohort");
  if (j.contains("scales")) {
    for (const auto& sj : j.at("scales")) {
      CheckKeys(sj, {"name", "loadings", "uniquenesses", "reversed", "questionnaire", "reducible"},
                "cohort.scales");
      ScaleSpec s;
      Read(sj, "name", &s.name, "cohort.scales");
      Read(sj, "loadings", &s.loadings, "cohort.scales");
      Read(sj, "uniquenesses", &s.uniquenesses, "cohort.scales");
      Read(sj, "reversed", &s.reversed, "cohort.scales");
      std::string q = "first";
      Read(sj, "questionnaire", &q, "cohort.scales");
      s.questionnaire = ParseQuestionnaire(q);
      Read(sj, "reducible", &s.reducible, "cohort.scales");
      spec.scales.push_back(std::move(s));
    }
  }
  if (j.contains("covariates")) {
    for (const auto& cj : j.at("covariates")) {
      CheckKeys(cj, {"name", "type", "mean", "sd", "levels", "probabilities"}, "cohort.covariates");
      CovariateSim c;
      Read(cj, "name", &c.name, "cohort.covariates");
      std::string type = "real";
      Read(cj, "type", &type, "cohort.covariates");
      if (type == "categorical") {
        c.type = data::ColumnType::kCategorical;
      } else if (type != "real") {
        throw ConfigError("cohort.covariates.type must be 'real' or 'categorical'");
      }
      Read(cj, "mean", &c.mean, "cohort.covariates");
      Read(cj, "sd", &c.sd, "cohort.covariates");
      Read(cj, "levels", &c.levels, "cohort.covariates");
      Read(cj, "probabilities", &c.probabilities, "cohort.covariates");
      spec.covariates.push_back(std::move(c));
    }
  }
  if (j.contains("treatment")) {
    const auto& tj = j.at("treatment");
    CheckKeys(tj, {"intercept", "coefficients"}, "cohort.treatment");
    Read(tj, "intercept", &spec.treatment.intercept, "cohort.treatment");
    Read(tj, "coefficients", &spec.treatment.coefficients, "cohort.treatment");
  }
  if (j.contains("outcome")) {
    const auto& oj = j.at("outcome");
    CheckKeys(oj, {"name", "intercept", "coefficients", "nonlinear", "noise_sd", "tau", "tau_slope"},
              "cohort.outcome");
    auto& o = spec.outcome;
    Read(oj, "name", &o.name, "cohort.outcome");
    Read(oj, "intercept", &o.intercept, "cohort.outcome");
    Read(oj, "coefficients", &o.coefficients, "cohort.outcome");
    Read(oj, "nonlinear", &o.nonlinear, "cohort.outcome");
    Read(oj, "noise_sd", &o.noise_sd, "cohort.outcome");
    Read(oj, "tau", &o.tau, "cohort.outcome");
    Read(oj, "tau_slope", &o.tau_slope, "cohort.outcome");
  }
  if (j.contains("dropout")) {
    for (const auto& dj : j.at("dropout")) {
      CheckKeys(dj, {"outcome", "intercept", "treatment", "slope"}, "cohort.dropout");
      DropoutStage d;
      Read(dj, "outcome", &d.outcome, "cohort.dropout");
      Read(dj, "intercept", &d.intercept, "cohort.dropout");
      Read(dj, "treatment", &d.treatment, "cohort.dropout");
      Read(dj, "slope", &d.slope, "cohort.dropout");
      spec.dropout.push_back(std::move(d));
    }
  }
  if (j.contains("usage")) {
    const auto& uj = j.at("usage");
    CheckKeys(uj, {"enabled", "videos", "segments", "quizzes", "questions", "sessions", "relevant_questions",
                   "catch_up", "replay"},
              "cohort.usage");
    auto& u = spec.usage;
    u.enabled = true;
    Read(uj, "enabled", &u.enabled, "cohort.usage");
    Read(uj, "videos", &u.videos, "cohort.usage");
    Read(uj, "segments", &u.segments, "cohort.usage");
    Read(uj, "quizzes", &u.quizzes, "cohort.usage");
    Read(uj, "questions", &u.questions, "cohort.usage");
    Read(uj, "sessions", &u.sessions, "cohort.usage");
    Read(uj, "relevant_questions", &u.relevant_questions, "cohort.usage");
    Read(uj, "catch_up", &u.catch_up, "cohort.usage");
    Read(uj, "replay", &u.replay, "cohort.usage");
  }
  spec.Validate();
  return spec;
}

CohortSpec LoadCohortSpec(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open cohort spec " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return CohortSpecFromJson(text);
}

std::string CohortSpecToJson(const CohortSpec& spec) {
  json j;
  j["n"] = spec.n;
  j["seed"] = spec.seed;
  j["factor_correlation"] = spec.factor_correlation;
  j["thresholds"] = spec.thresholds;
  j["scales"] = json::array();
  for (const auto& s : spec.scales) {
    json sj{{"name", s.name}, {"loadings", s.loadings},
            {"questionnaire", s.questionnaire == data::Questionnaire::kFirst ? "first" : "second"}};
    if (!s.uniquenesses.empty()) sj["uniquenesses"] = s.uniquenesses;
    if (!s.reversed.empty()) sj["reversed"] = s.reversed;
    if (!s.reducible) sj["reducible"] = false;
    j["scales"].push_back(sj);
  }
  j["covariates"] = json::array();
  for (const auto& c : spec.covariates) {
    if (c.type == data::ColumnType::kReal) {
      j["covariates"].push_back({{"name", c.name}, {"type", "real"}, {"mean", c.mean}, {"sd", c.sd}});
    } else {
      j["covariates"].push_back(
          {{"name", c.name}, {"type", "categorical"}, {"levels", c.levels}, {"probabilities", c.probabilities}});
    }
  }
  j["treatment"] = {{"intercept", spec.treatment.intercept},
                    {"coefficients", CoefficientsJson(spec.treatment.coefficients)}};
  const auto& o = spec.outcome;
  j["outcome"] = {{"name", o.name},         {"intercept", o.intercept}, {"coefficients", CoefficientsJson(o.coefficients)},
                  {"nonlinear", o.nonlinear}, {"noise_sd", o.noise_sd}, {"tau", o.tau},
                  {"tau_slope", o.tau_slope}};
  j["dropout"] = json::array();
  for (const auto& d : spec.dropout) {
    j["dropout"].push_back(
        {{"outcome", d.outcome}, {"intercept", d.intercept}, {"treatment", d.treatment}, {"slope", d.slope}});
  }
  const auto& u = spec.usage;
  j["usage"] = {{"enabled", u.enabled},   {"videos", u.videos},     {"segments", u.segments},
                {"quizzes", u.quizzes},   {"questions", u.questions}, {"sessions", u.sessions},
                {"relevant_questions", u.relevant_questions}, {"catch_up", u.catch_up},
                {"replay", u.replay}};
  return j.dump(2) + "\n";
}

CohortSpec DefaultCohortSpec() {
  CohortSpec spec;
  spec.n = 420;
  const std::vector<std::pair<const char*, int>> layout{
      {"self_efficacy", 6},     {"intrinsic_value", 5},   {"extrinsic_value", 5}, {"test_anxiety", 4},
      {"effort_regulation", 5}, {"help_seeking", 4},      {"peer_learning", 5},   {"time_management", 5},
      {"elaboration", 4},       {"critical_thinking", 5}, {"metacognition", 5},   {"organization", 5},
      {"rehearsal", 4},         {"flipped_attitude", 5}};
  const double pattern[] = {0.75, 0.7, 0.65, 0.6, 0.7, 0.55};
  for (std::size_t s = 0; s < layout.size(); ++s) {
    ScaleSpec scale;
    scale.name = layout[s].first;
    scale.questionnaire = s < 7 ? data::Questionnaire::kFirst : data::Questionnaire::kSecond;
    scale.reducible = scale.name != "rehearsal";
    for (int j = 0; j < layout[s].second; ++j) {
      scale.loadings.push_back(pattern[(s + static_cast<std::size_t>(j)) % 6]);
      scale.reversed.push_back(s % 3 == 0 && j == 1);
    }
    spec.scales.push_back(std::move(scale));
  }
  spec.covariates = {{"age", data::ColumnType::kReal, 21.0, 2.5, {}, {}},
                     {"gpa", data::ColumnType::kReal, 2.4, 0.6, {}, {}},
                     {"gender", data::ColumnType::kCategorical, 0.0, 1.0, {"female", "male"}, {0.45, 0.55}}};

  // Centre the scale terms so the intercept sets the treated share.
  double mean_code = -3.0;
  for (double t : spec.thresholds) mean_code += 1.0 - NormalCdf(t);
  spec.treatment.coefficients = {{"age", 0.25}, {"gpa", -0.3}, {"self_efficacy", 0.3}, {"test_anxiety", -0.25}};
  spec.treatment.intercept = std::log(218.0 / 202.0) - (0.3 - 0.25) * mean_code;

  spec.outcome.name = "exam";
  spec.outcome.intercept = 20.0;
  spec.outcome.coefficients = {{"gpa", 3.0}, {"age", -0.5}, {"self_efficacy", 2.0}, {"effort_regulation", 1.5},
                               {"gender=male", 0.5}};
  spec.outcome.noise_sd = 6.0;
  spec.outcome.tau = 2.0;
  spec.dropout = {{"exam_b", 2.5, -0.5, 0.3}, {"exam_c", 2.0, 0.3, 0.0}};
  spec.usage.enabled = true;
  return spec;
}

SyntheticCohort GenerateCohort(const CohortSpec& spec) {
  struct {
    VectorXd propensity, mu0, mu1, y0, y1;
    MatrixXd factors, continuous_items, nonlinear_basis;
    std::optional<usage::UsageLogs> usage;
    std::vector<std::string> warnings;
  } out;
  out.warnings = spec.Validate();
  const Index n = spec.n;
  const Index k = static_cast<Index>(spec.scales.size());
  const data::Schema schema = spec.MakeSchema();

  // Latent factors with equal correlations.
  MatrixXd r = MatrixXd::Constant(k, k, spec.factor_correlation);
  r.diagonal().setOnes();
  const MatrixXd chol = Eigen::LLT<MatrixXd>(r).matrixL();
  {
    Rng rng(DeriveSeed(spec.seed, kFactorStream));
    out.factors = StandardNormalMatrix(n, k, rng) * chol.transpose();
  }

  data::Dataset::NumericColumns numeric;
  data::Dataset::CategoricalColumns categorical;
  Index total_items = 0;
  for (const auto& s : spec.scales) total_items += static_cast<Index>(s.loadings.size());
  out.continuous_items.resize(n, total_items);
  MatrixXd scale_means(n, k);
  {
    Rng rng(DeriveSeed(spec.seed, kItemStream));
    const MatrixXd noise = StandardNormalMatrix(n, total_items, rng);
    Index col = 0;
    for (Index s = 0; s < k; ++s) {
      const ScaleSpec& scale = spec.scales[static_cast<std::size_t>(s)];
      scale_means.col(s).setZero();
      for (std::size_t j = 0; j < scale.loadings.size(); ++j, ++col) {
        const double l = scale.loadings[j];
        const double psi = Uniqueness(scale, j);
        const double sd = std::sqrt(l * l + psi);
        VectorXd z = (l * out.factors.col(s) + std::sqrt(psi) * noise.col(col)) / sd;
        out.continuous_items.col(col) = z;
        VectorXd code(n);
        for (Index i = 0; i < n; ++i) {
          int c = data::kLikertMin;
          for (double t : spec.thresholds) c += z[i] > t;
          code[i] = c;
        }
        scale_means.col(s) += code;
        numeric.emplace(ItemName(scale, j), std::move(code));
      }
      scale_means.col(s) /= static_cast<double>(scale.loadings.size());
    }
  }

  // Covariates; models use the standardized draw of real covariates.
  std::map<std::string, VectorXd> standardized;
  {
    Rng rng(DeriveSeed(spec.seed, kCovariateStream));
    std::normal_distribution<double> normal;
    for (const auto& c : spec.covariates) {
      if (c.type == data::ColumnType::kReal) {
        VectorXd z(n), x(n);
        for (Index i = 0; i < n; ++i) {
          z[i] = normal(rng);
          x[i] = c.mean + c.sd * z[i];
        }
        standardized[c.name] = z;
        numeric.emplace(c.name, std::move(x));
      } else {
        std::discrete_distribution<int> pick(c.probabilities.begin(), c.probabilities.end());
        std::vector<std::string> values(static_cast<std::size_t>(n));
        for (auto& v : values) v = c.levels[static_cast<std::size_t>(pick(rng))];
        categorical.emplace(c.name, std::move(values));
      }
    }
  }

  auto linear = [&](const Coefficients& coefs) {
    VectorXd eta = VectorXd::Zero(n);
    for (const auto& [key, beta] : coefs) {
      if (auto it = standardized.find(key); it != standardized.end()) {
        eta += beta * it->second;
        continue;
      }
      bool done = false;
      for (Index s = 0; s < k && !done; ++s) {
        if (spec.scales[static_cast<std::size_t>(s)].name == key) {
          eta += beta * scale_means.col(s);
          done = true;
        }
      }
      if (done) continue;
      const auto eq = key.find('=');
      const auto& values = categorical.at(key.substr(0, eq));
      const std::string level = key.substr(eq + 1);
      for (Index i = 0; i < n; ++i) eta[i] += values[static_cast<std::size_t>(i)] == level ? beta : 0.0;
    }
    return eta;
  };

  const auto real = RealCovariates(spec);
  const VectorXd x1 = real.empty() ? VectorXd::Zero(n) : standardized.at(real[0]->name);
  if (real.size() >= 2) {
    const VectorXd& x2 = standardized.at(real[1]->name);
    out.nonlinear_basis.resize(n, 3);
    out.nonlinear_basis.col(0) = (std::numbers::pi * x1.array()).sin();
    out.nonlinear_basis.col(1) = x2.array().square() - 1.0;
    out.nonlinear_basis.col(2) = x1.cwiseProduct(x2);
  }

  out.propensity = (spec.treatment.intercept + linear(spec.treatment.coefficients).array())
                       .unaryExpr([](double t) { return Logistic(t); });
  VectorXd d(n);
  {
    Rng rng(DeriveSeed(spec.seed, kTreatmentStream));
    std::uniform_real_distribution<double> u;
    for (Index i = 0; i < n; ++i) d[i] = u(rng) < out.propensity[i] ? 1.0 : 0.0;
  }

  const OutcomeModel& om = spec.outcome;
  VectorXd h = om.intercept + linear(om.coefficients).array();
  if (om.nonlinear != 0.0) h += om.nonlinear * out.nonlinear_basis.rowwise().sum();
  const VectorXd tau = om.tau + om.tau_slope * x1.array();
  VectorXd eps(n);
  {
    Rng rng(DeriveSeed(spec.seed, kNoiseStream));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Index i = 0; i < n; ++i) eps[i] = om.noise_sd * normal(rng);
  }
  out.mu0 = h;
  out.mu1 = h + tau;
  out.y0 = h + eps;
  out.y1 = out.y0 + tau;
  VectorXd y(n);
  for (Index i = 0; i < n; ++i) y[i] = d[i] == 1.0 ? out.y1[i] : out.y0[i];
  numeric.emplace(om.name, y);

  {
    Rng rng(DeriveSeed(spec.seed, kDropoutStream));
    std::uniform_real_distribution<double> u;
    std::vector<bool> retained(static_cast<std::size_t>(n), true);
    for (const auto& stage : spec.dropout) {
      VectorXd col(n);
      for (Index i = 0; i < n; ++i) {
        const double p = Logistic(stage.intercept + stage.treatment * d[i] + stage.slope * x1[i]);
        const double draw = u(rng);
        retained[static_cast<std::size_t>(i)] = retained[static_cast<std::size_t>(i)] && draw < p;
        col[i] = retained[static_cast<std::size_t>(i)] ? y[i] : std::numeric_limits<double>::quiet_NaN();
      }
      numeric.emplace(stage.outcome, std::move(col));
    }
  }

  std::vector<std::string> ids(static_cast<std::size_t>(n));
  const int width = static_cast<int>(std::to_string(n).size());
  for (Index i = 0; i < n; ++i) {
    std::string num = std::to_string(i + 1);
    ids[static_cast<std::size_t>(i)] = "s" + std::string(static_cast<std::size_t>(width) - num.size(), '0') + num;
  }

  if (spec.usage.enabled) {
    const UsageSim& us = spec.usage;
    usage::UsageLogs logs;
    Rng rng(DeriveSeed(spec.seed, kUsageStream));
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> unif;
    constexpr usage::Timestamp kDay = 86400;
    const usage::Timestamp start = usage::ParseTimestamp("2024-04-08T08:00:00Z");
    for (int v = 0; v < us.videos; ++v) {
      logs.videos.push_back({"v" + std::to_string(v + 1), us.segments, start + (v + 1) * 7 * kDay});
    }
    logs.exam = start + (us.videos + 2) * 7 * kDay;
    for (int q = 0; q < us.quizzes; ++q) logs.quizzes.push_back({"q" + std::to_string(q + 1), us.questions});
    for (int s = 0; s < us.sessions; ++s) {
      logs.sessions.push_back({"c" + std::to_string(s + 1), us.relevant_questions});
    }
    auto when = [&](usage::Timestamp from, usage::Timestamp to) {
      return from + static_cast<usage::Timestamp>(unif(rng) * static_cast<double>(to - from));
    };
    for (Index i = 0; i < n; ++i) {
      const std::string& id = ids[static_cast<std::size_t>(i)];
      const double z = normal(rng);
      const double e = NormalCdf(z);
      const double late = unif(rng) * std::min(1.0, 2.0 * us.catch_up);
      const double points = std::clamp(std::round(2.0 * (22.0 + 8.0 * z + 4.0 * normal(rng))) / 2.0, 0.0, 45.0);
      logs.students.push_back({id, points});
      for (const auto& video : logs.videos) {
        if (unif(rng) >= 0.15 + 0.8 * e) continue;
        logs.video_events.push_back({id, video.id, std::nullopt, video.due - 2 * kDay});
        const double share = std::clamp(e + 0.15 * normal(rng), 0.0, 1.0);
        const auto watched = static_cast<Index>(std::round(share * video.segments));
        const auto order = RandomPermutation(video.segments, rng);
        for (Index s = 0; s < watched; ++s) {
          const int segment = static_cast<int>(order[static_cast<std::size_t>(s)]);
          const usage::Timestamp t =
              unif(rng) < late ? when(video.due + 1, logs.exam) : when(video.due - 3 * kDay, video.due);
          logs.video_events.push_back({id, video.id, segment, t});
          if (unif(rng) < us.replay) logs.video_events.push_back({id, video.id, segment, when(t, logs.exam)});
        }
      }
      std::binomial_distribution<int> quiz_answers(us.questions, 0.4 + 0.6 * e);
      for (std::size_t q = 0; q < logs.quizzes.size(); ++q) {
        if (unif(rng) >= e) continue;
        const int answered = quiz_answers(rng);
        const usage::Timestamp due = start + static_cast<usage::Timestamp>(q + 1) * 7 * kDay;
        logs.quiz_events.push_back({id, logs.quizzes[q].id, answered, static_cast<double>(answered),
                                    when(due - 3 * kDay, due)});
      }
      std::binomial_distribution<int> clicks(us.relevant_questions, 0.3 + 0.7 * e);
      for (const auto& session : logs.sessions) {
        if (unif(rng) >= 0.3 + 0.6 * e) continue;
        logs.clicker_events.push_back({id, session.id, clicks(rng)});
      }
    }
    out.usage = std::move(logs);
  }

  return SyntheticCohort{
      data::Dataset::Create(schema, std::move(ids), std::move(d), std::move(numeric), std::move(categorical)),
      std::move(out.propensity), std::move(out.mu0), std::move(out.mu1), std::move(out.y0), std::move(out.y1),
      std::move(out.factors), std::move(out.continuous_items), std::move(out.nonlinear_basis),
      std::move(out.usage), std::move(out.warnings)};
}

double OracleAte(const SyntheticCohort& cohort) { return (cohort.y1 - cohort.y0).mean(); }

void ExportCohort(const SyntheticCohort& cohort, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  data::WriteDataset(dir / "data.csv", cohort.data);
  {
    std::ofstream out(dir / "schema.json", std::ios::binary);
    if (!out) throw ConfigError("cannot write " + (dir / "schema.json").string());
    out << data::SchemaToJson(cohort.data.schema());
  }
  {
    std::ofstream out(dir / "truth.csv", std::ios::binary);
    if (!out) throw ConfigError("cannot write " + (dir / "truth.csv").string());
    std::vector<std::string> header{"id", "d", "propensity", "mu0", "mu1", "y0", "y1"};
    for (const auto& s : cohort.data.schema().scales) header.push_back("factor:" + s.name);
    WriteCsvRow(out, header);
    for (Index i = 0; i < cohort.data.rows(); ++i) {
      std::vector<std::string> row{cohort.data.ids()[static_cast<std::size_t>(i)],
                                   FormatNumber(cohort.data.treatment()[i], 0),
                                   FormatNumber(cohort.propensity[i], 8),
                                   FormatNumber(cohort.mu0[i], 8),
                                   FormatNumber(cohort.mu1[i], 8),
                                   FormatNumber(cohort.y0[i], 8),
                                   FormatNumber(cohort.y1[i], 8)};
      for (Index s = 0; s < cohort.factors.cols(); ++s) row.push_back(FormatNumber(cohort.factors(i, s), 8));
      WriteCsvRow(out, row);
    }
  }
  if (cohort.usage) usage::WriteUsageLogs(*cohort.usage, dir / "usage");
}

const char* EstimatorName(Estimator e) {
  switch (e) {
    case Estimator::kNaive:
      return "naive";
    case Estimator::kOls:
      return "ols";
    case Estimator::kInteractive:
      return "dml_interactive";
    case Estimator::kPartiallyLinear:
      return "dml_partially_linear";
    case Estimator::kOracleInteractive:
      return "aipw_oracle";
  }
  return "?";
}

Estimator EstimatorFromName(std::string_view name) {
  for (Estimator e : {Estimator::kNaive, Estimator::kOls, Estimator::kInteractive, Estimator::kPartiallyLinear,
                      Estimator::kOracleInteractive}) {
    if (name == EstimatorName(e)) return e;
  }
  throw ConfigError("unknown estimator '" + std::string(name) + "'");
}

BenchmarkResult RunBenchmark(const CohortSpec& spec, const BenchmarkOptions& options) {
  if (options.replications < 1) throw ConfigError("benchmark needs at least one replication");
  if (options.estimators.empty()) throw ConfigError("benchmark needs at least one estimator");
  spec.Validate();
  options.dml.Validate();

  const std::size_t reps = static_cast<std::size_t>(options.replications);
  const std::size_t m = options.estimators.size();
  BenchmarkResult result;
  result.replications.resize(reps);

  ParallelFor(reps, options.threads, [&](std::size_t r) {
    CohortSpec rep_spec = spec;
    rep_spec.seed = DeriveSeed(options.seed, r);
    const SyntheticCohort cohort = GenerateCohort(rep_spec);
    Replication& rep = result.replications[r];
    rep.seed = rep_spec.seed;
    rep.oracle_ate = OracleAte(cohort);
    rep.estimates.resize(m);
    const data::Dataset& ds = cohort.data;
    const auto& schema = ds.schema();
    const std::string& outcome = schema.outcomes.front();
    const VectorXd& y = ds.Numeric(outcome);
    std::vector<std::string> covariates;
    for (const auto& c : schema.covariates) covariates.push_back(c.name);
    const std::vector<std::string> features = schema.AnalysisColumns();
    dml::DmlConfig cfg = options.dml;
    cfg.seed = DeriveSeed(rep_spec.seed, 1000);
    cfg.threads = 1;

    for (std::size_t e = 0; e < m; ++e) {
      ReplicationEstimate& res = rep.estimates[e];
      try {
        switch (options.estimators[e]) {
          case Estimator::kNaive: {
            const auto diff = inference::NaiveDifference(y, ds.treatment());
            res = {true, diff.estimate, diff.se};
            break;
          }
          case Estimator::kOls: {
            const auto fit = inference::FitOlsRobust(ds, covariates, outcome, inference::OlsVariant::kAllItems,
                                                     schema.scales);
            res = {true, fit.effect, fit.effect_se};
            break;
          }
          case Estimator::kInteractive: {
            cfg.model = dml::DmlModel::kInteractive;
            const auto est = dml::EstimateAteInteractive(ds, features, outcome, cfg);
            res = {true, est.estimate, est.se};
            break;
          }
          case Estimator::kPartiallyLinear: {
            cfg.model = dml::DmlModel::kPartiallyLinear;
            const auto est = dml::EstimateAtePartiallyLinear(ds, features, outcome, cfg);
            res = {true, est.estimate, est.se};
            break;
          }
          case Estimator::kOracleInteractive: {
            const dml::FixedLearner g0(cohort.mu0), g1(cohort.mu1), prop(cohort.propensity);
            dml::NuisanceSet set;
            set.outcome_control = &g0;
            set.outcome_treated = &g1;
            set.propensity = &prop;
            dml::DmlConfig oracle_cfg = cfg;
            oracle_cfg.model = dml::DmlModel::kInteractive;
            oracle_cfg.repetitions = 1;
            const auto est = dml::EstimateInteractive(y, ds.treatment(), set, oracle_cfg);
            res = {true, est.estimate, est.se};
            break;
          }
        }
      } catch (const Error&) {
        res = {};
      }
    }
  });

  for (std::size_t e = 0; e < m; ++e) {
    BenchmarkRow row;
    row.estimator = EstimatorName(options.estimators[e]);
    row.replications = options.replications;
    std::vector<double> est, err;
    double covered = 0.0, se_sum = 0.0, oracle_sum = 0.0;
    for (std::size_t r = 0; r < reps; ++r) {
      const ReplicationEstimate& res = result.replications[r].estimates[e];
      const double oracle = result.replications[r].oracle_ate;
      if (!res.ok) {
        ++row.failures;
        continue;
      }
      est.push_back(res.estimate);
      err.push_back(res.estimate - oracle);
      oracle_sum += oracle;
      se_sum += res.se;
      covered += std::fabs(res.estimate - oracle) <= dml::kNormalQuantile975 * res.se ? 1.0 : 0.0;
    }
    row.failure_rate = static_cast<double>(row.failures) / options.replications;
    const double ok = static_cast<double>(est.size());
    if (est.empty()) {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      row.mean_estimate = row.mean_oracle = row.bias = row.sd = row.rmse = row.coverage = row.mean_se = nan;
    } else {
      double sum = 0.0, sq = 0.0, bias = 0.0;
      for (std::size_t k = 0; k < est.size(); ++k) {
        sum += est[k];
        bias += err[k];
        sq += err[k] * err[k];
      }
      row.mean_estimate = sum / ok;
      row.mean_oracle = oracle_sum / ok;
      row.bias = bias / ok;
      row.rmse = std::sqrt(sq / ok);
      double var = 0.0;
      for (double v : est) var += (v - row.mean_estimate) * (v - row.mean_estimate);
      row.sd = est.size() > 1 ? std::sqrt(var / (ok - 1.0)) : 0.0;
      row.coverage = covered / ok;
      row.mean_se = se_sum / ok;
    }
    result.rows.push_back(row);
  }
  return result;
}

}  // namespace flipdml::sim
