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
// Synthetic cohorts with known ground truth: correlated latent factors
// measured by Likert items, observed covariates, confounded treatment,
// potential outcomes, nested outcome dropout and engagement logs. Used to
// validate the estimators and the scale diagnostics.
//
// Generative model, for unit i:
//   F_i ~ N(0, R) with unit variances and equal correlations between scales
//   z_ij = (l_j F_is + e_ij) / sqrt(l_j^2 + psi_j),  e_ij ~ N(0, psi_j)
//   item_ij = -3 + #{thresholds < z_ij}     (reverse-coded items negated)
//   m_i = logistic(a + sum gamma_c x_ic + sum gamma_s mean_is)
//   y0_i = h(x_i) + eps_i,  y1_i = y0_i + tau + slope * x_i1
//   y_i = d_i y1_i + (1 - d_i) y0_i
// Continuous covariates enter the models in standardized form. The noise
// eps_i is shared by both potential outcomes.

#ifndef FLIPDML_SIMULATOR_H_
#define FLIPDML_SIMULATOR_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "flipdml/datamodel.h"
#include "flipdml/dml.h"
#include "flipdml/usage.h"

namespace flipdml::sim {

struct ScaleSpec {
  std::string name;
  std::vector<double> loadings;
  std::vector<double> uniquenesses;  // default 1 - l^2
  std::vector<bool> reversed;        // default all false
  data::Questionnaire questionnaire = data::Questionnaire::kFirst;
  bool reducible = true;
};

struct CovariateSim {
  std::string name;
  data::ColumnType type = data::ColumnType::kReal;
  double mean = 0.0;  // real: mean + sd * N(0, 1)
  double sd = 1.0;
  std::vector<std::string> levels;  // categorical
  std::vector<double> probabilities;
};

// Linear predictor terms. Keys are continuous covariate names, "name=level"
// for categorical levels, or scale names (the scale's item mean).
using Coefficients = std::map<std::string, double>;

struct TreatmentModel {
  double intercept = 0.0;
  Coefficients coefficients;
};

struct OutcomeModel {
  std::string name = "y";
  double intercept = 0.0;
  Coefficients coefficients;
  // Weight of the nonlinear part sin(pi x1) + (x2^2 - 1) + x1 x2 over the
  // first two continuous covariates.
  double nonlinear = 0.0;
  double noise_sd = 1.0;
  double tau = 0.5;
  double tau_slope = 0.0;  // effect heterogeneity along the first covariate
};

// Outcome `outcome` repeats y on units retained at this stage; retention is
// logistic(intercept + treatment * d + slope * x1) among units retained at
// the previous stage.
struct DropoutStage {
  std::string outcome;
  double intercept = 3.0;
  double treatment = 0.0;
  double slope = 0.0;
};

struct UsageSim {
  bool enabled = false;
  int videos = 12;
  int segments = 60;
  int quizzes = 8;
  int questions = 5;
  int sessions = 12;
  int relevant_questions = 4;
  // Probability that a watched segment is first played after the video's
  // due time (but before the exam).
  double catch_up = 0.1;
  double replay = 0.1;  // probability of a duplicate event per watched segment
};

struct CohortSpec {
  int n = 420;
  std::uint64_t seed = 0;
  double factor_correlation = 0.3;
  std::vector<double> thresholds{-2.0, -1.3, -0.6, 0.0, 0.6, 1.3};
  std::vector<ScaleSpec> scales;
  std::vector<CovariateSim> covariates;
  TreatmentModel treatment;
  OutcomeModel outcome;
  std::vector<DropoutStage> dropout;
  UsageSim usage;

  // Throws ConfigError. Returns warnings (e.g. categories the thresholds
  // make very unlikely).
  std::vector<std::string> Validate() const;
  data::Schema MakeSchema() const;
};

CohortSpec CohortSpecFromJson(std::string_view json_text);
CohortSpec LoadCohortSpec(const std::filesystem::path& path);
std::string CohortSpecToJson(const CohortSpec& spec);

// 14 scales with 67 items, three covariates, n = 420 and a treated share
// near 218/420.
CohortSpec DefaultCohortSpec();

struct SyntheticCohort {
  data::Dataset data;
  Eigen::VectorXd propensity;
  Eigen::VectorXd mu0;  // E[y0 | x]
  Eigen::VectorXd mu1;
  Eigen::VectorXd y0;
  Eigen::VectorXd y1;
  Eigen::MatrixXd factors;           // n x scales
  Eigen::MatrixXd continuous_items;  // standardized item scores before discretization
  // Nonlinear outcome terms sin(pi x1), x2^2 - 1, x1 x2 (n x 3; empty
  // without two continuous covariates).
  Eigen::MatrixXd nonlinear_basis;
  std::optional<usage::UsageLogs> usage;
  std::vector<std::string> warnings;
};

SyntheticCohort GenerateCohort(const CohortSpec& spec);

// Sample mean of y1 - y0.
double OracleAte(const SyntheticCohort& cohort);

// Writes data.csv, schema.json, truth.csv and (when present) usage/ logs.
void ExportCohort(const SyntheticCohort& cohort, const std::filesystem::path& dir);

enum class Estimator { kNaive, kOls, kInteractive, kPartiallyLinear, kOracleInteractive };

const char* EstimatorName(Estimator e);
Estimator EstimatorFromName(std::string_view name);  // throws ConfigError

struct BenchmarkOptions {
  std::vector<Estimator> estimators{Estimator::kNaive, Estimator::kOls, Estimator::kInteractive,
                                    Estimator::kPartiallyLinear, Estimator::kOracleInteractive};
  int replications = 100;
  std::uint64_t seed = 0;
  int threads = 1;
  dml::DmlConfig dml;  // seed and threads are set per replication
};

struct BenchmarkRow {
  std::string estimator;
  int replications = 0;
  int failures = 0;
  double failure_rate = 0.0;
  double mean_estimate = 0.0;
  double mean_oracle = 0.0;
  double bias = 0.0;  // mean of estimate - oracle ATE
  double sd = 0.0;    // of the estimates
  double rmse = 0.0;  // of estimate - oracle ATE
  double coverage = 0.0;  // share of 95% intervals covering the oracle ATE
  double mean_se = 0.0;
};

struct ReplicationEstimate {
  bool ok = false;
  double estimate = 0.0;
  double se = 0.0;
};

struct Replication {
  std::uint64_t seed = 0;
  double oracle_ate = 0.0;
  std::vector<ReplicationEstimate> estimates;  // one per estimator
};

struct BenchmarkResult {
  std::vector<BenchmarkRow> rows;
  std::vector<Replication> replications;
};

// Replication r simulates the spec with seed DeriveSeed(options.seed, r)
// and applies every estimator to the first outcome over all covariates and
// items. Estimator failures are counted, not fatal.
BenchmarkResult RunBenchmark(const CohortSpec& spec, const BenchmarkOptions& options);

}  // namespace flipdml::sim

#endif  // FLIPDML_SIMULATOR_H_
