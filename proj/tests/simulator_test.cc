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

#include <cmath>
#include <filesystem>

#include "flipdml/bivariate_normal.h"
#include "flipdml/csv.h"
#include "flipdml/errors.h"
#include "flipdml/psychometrics.h"
#include "gtest/gtest.h"

namespace flipdml::sim {
namespace {

using Eigen::Index;
using Eigen::VectorXd;

CohortSpec SmallSpec(int n, std::uint64_t seed) {
  CohortSpec spec;
  spec.n = n;
  spec.seed = seed;
  spec.scales = {{"s1", {0.7, 0.7, 0.7}, {0.51, 0.51, 0.51}, {}, data::Questionnaire::kFirst, true},
                 {"s2", {0.8, 0.6, 0.5, 0.7}, {}, {false, true, false, false},
                  data::Questionnaire::kSecond, true}};
  spec.covariates = {{"x1", data::ColumnType::kReal, 10.0, 2.0, {}, {}},
                     {"x2", data::ColumnType::kReal, 0.0, 1.0, {}, {}},
                     {"g", data::ColumnType::kCategorical, 0, 1, {"a", "b", "c"}, {0.2, 0.3, 0.5}}};
  spec.treatment.coefficients = {{"x1", 0.6}, {"s1", 0.3}, {"g=c", -0.4}};
  spec.outcome.coefficients = {{"x1", 1.0}, {"x2", 0.5}, {"s2", 0.4}};
  spec.outcome.tau = 0.5;
  return spec;
}

TEST(CohortSpecTest, DefaultShape) {
  const CohortSpec spec = DefaultCohortSpec();
  EXPECT_NO_THROW(spec.Validate());
  EXPECT_EQ(spec.n, 420);
  EXPECT_EQ(spec.scales.size(), 14u);
  std::size_t items = 0, raw = 0;
  for (const auto& s : spec.scales) {
    items += s.loadings.size();
    raw += !s.reducible;
  }
  EXPECT_EQ(items, 67u);
  EXPECT_EQ(raw, 1u);
  const data::Schema schema = spec.MakeSchema();
  EXPECT_EQ(schema.ItemColumns().size(), 67u);
  EXPECT_EQ(schema.outcomes, (std::vector<std::string>{"exam", "exam_b", "exam_c"}));
}

TEST(CohortSpecTest, JsonRoundTripAndStrictKeys) {
  const CohortSpec spec = DefaultCohortSpec();
  const std::string text = CohortSpecToJson(spec);
  EXPECT_EQ(CohortSpecToJson(CohortSpecFromJson(text)), text);
  EXPECT_THROW(CohortSpecFromJson(R"({"n": 10, "sclaes": []})"), ConfigError);
  EXPECT_THROW(CohortSpecFromJson("[1, 2"), ConfigError);
}

TEST(CohortSpecTest, ValidationRules) {
  CohortSpec spec = SmallSpec(100, 1);
  spec.thresholds = {-2, -1, 0, 0, 1, 2};
  EXPECT_THROW(spec.Validate(), ConfigError);
  spec = SmallSpec(100, 1);
  spec.thresholds = {-9, -8.5, -8, 0, 1, 2};
  EXPECT_FALSE(spec.Validate().empty());
  spec = SmallSpec(100, 1);
  spec.treatment.coefficients["unknown"] = 1.0;
  EXPECT_THROW(spec.Validate(), ConfigError);
  spec = SmallSpec(100, 1);
  spec.scales[0].loadings = {1.2, 0.7, 0.7};
  spec.scales[0].uniquenesses.clear();
  EXPECT_THROW(spec.Validate(), ConfigError);
}

TEST(GenerateCohortTest, SameSeedSameCohort) {
  const SyntheticCohort a = GenerateCohort(SmallSpec(300, 7));
  const SyntheticCohort b = GenerateCohort(SmallSpec(300, 7));
  const SyntheticCohort c = GenerateCohort(SmallSpec(300, 8));
  EXPECT_EQ(a.data.treatment(), b.data.treatment());
  EXPECT_EQ(a.data.numeric_columns(), b.data.numeric_columns());
  EXPECT_EQ(a.data.categorical_columns(), b.data.categorical_columns());
  EXPECT_EQ(a.y0, b.y0);
  EXPECT_NE(a.y0, c.y0);
}

TEST(GenerateCohortTest, ObservedOutcomeFollowsTreatment) {
  const SyntheticCohort c = GenerateCohort(SmallSpec(500, 2));
  const VectorXd& y = c.data.Numeric("y");
  const VectorXd& d = c.data.treatment();
  for (Index i = 0; i < y.size(); ++i) EXPECT_EQ(y[i], d[i] == 1.0 ? c.y1[i] : c.y0[i]);
  EXPECT_DOUBLE_EQ(OracleAte(c), 0.5);
}

TEST(GenerateCohortTest, NoConfoundingGivesHalfTreated) {
  CohortSpec spec = SmallSpec(2000, 3);
  spec.treatment = {};
  const SyntheticCohort c = GenerateCohort(spec);
  const double share = static_cast<double>(c.data.CountTreated()) / 2000.0;
  EXPECT_LT(std::fabs(share - 0.5), 3.0 * std::sqrt(0.25 / 2000.0));
}

TEST(GenerateCohortTest, ZeroEffect) {
  CohortSpec spec = SmallSpec(1000, 4);
  spec.outcome.tau = 0.0;
  const SyntheticCohort c = GenerateCohort(spec);
  EXPECT_EQ(OracleAte(c), 0.0);
  EXPECT_EQ(c.y1, c.y0);
}

TEST(GenerateCohortTest, HeterogeneousEffectAverages) {
  CohortSpec spec = SmallSpec(50000, 5);
  spec.outcome.tau_slope = 0.8;
  const SyntheticCohort c = GenerateCohort(spec);
  const VectorXd z = (c.data.Numeric("x1").array() - 10.0) / 2.0;
  EXPECT_NEAR(OracleAte(c), 0.5 + 0.8 * z.mean(), 1e-9);
  EXPECT_NEAR(OracleAte(c), 0.5, 0.02);
}

TEST(GenerateCohortTest, LikertMarginalsFollowThresholds) {
  const CohortSpec spec = SmallSpec(4000, 6);
  const SyntheticCohort c = GenerateCohort(spec);
  for (const char* item : {"s1_1", "s2_1", "s2_3"}) {
    const VectorXd& v = c.data.Numeric(item);
    for (int code = -3; code <= 3; ++code) {
      const std::size_t k = static_cast<std::size_t>(code + 3);
      const double lo = k == 0 ? 0.0 : NormalCdf(spec.thresholds[k - 1]);
      const double hi = k == 6 ? 1.0 : NormalCdf(spec.thresholds[k]);
      const double p = hi - lo;
      const double observed = (v.array() == code).cast<double>().mean();
      EXPECT_LT(std::fabs(observed - p), 3.0 * std::sqrt(p * (1 - p) / 4000.0)) << item << " " << code;
    }
  }
}

TEST(GenerateCohortTest, ReverseItemsStoredAligned) {
  const SyntheticCohort c = GenerateCohort(SmallSpec(2000, 9));
  const auto& scale = c.data.schema().Scale("s2");
  EXPECT_TRUE(scale.reversed[1]);
  const Eigen::MatrixXd block = c.data.ItemMatrix(scale);
  const Eigen::MatrixXd r = psych::Correlation(block);
  EXPECT_GT(r(0, 1), 0.2);
}

TEST(GenerateCohortTest, ContinuousItemsReproduceOmega) {
  const SyntheticCohort c = GenerateCohort(SmallSpec(5000, 10));
  const Eigen::MatrixXd items = c.continuous_items.leftCols(3);
  const auto fit = psych::FitUnidimensionalCfa(items, psych::CfaModel::kCongeneric);
  EXPECT_NEAR(psych::McDonaldOmega(fit), 4.41 / 5.94, 0.02);
}

TEST(GenerateCohortTest, TreatmentStrengthWidensPropensities) {
  double previous = 0.0;
  for (double scale : {0.0, 0.5, 1.0, 2.0}) {
    CohortSpec spec = SmallSpec(2000, 11);
    spec.treatment.coefficients = {{"x1", scale}, {"x2", -scale}};
    const SyntheticCohort c = GenerateCohort(spec);
    const double spread = c.propensity.maxCoeff() - c.propensity.minCoeff();
    EXPECT_GE(spread, previous);
    previous = spread;
    EXPECT_GT(c.propensity.minCoeff(), 0.0);
    EXPECT_LT(c.propensity.maxCoeff(), 1.0);
  }
  EXPECT_GT(previous, 0.9);
}

TEST(GenerateCohortTest, DropoutIsNested) {
  CohortSpec spec = SmallSpec(3000, 12);
  spec.dropout = {{"y_b", 1.5, -0.5, 0.0}, {"y_c", 1.0, 0.0, 0.3}};
  const SyntheticCohort c = GenerateCohort(spec);
  const VectorXd& y = c.data.Numeric("y");
  const VectorXd& b = c.data.Numeric("y_b");
  const VectorXd& cc = c.data.Numeric("y_c");
  Index kept_b = 0, kept_c = 0;
  for (Index i = 0; i < y.size(); ++i) {
    if (!std::isnan(cc[i])) {
      EXPECT_FALSE(std::isnan(b[i]));
      EXPECT_EQ(cc[i], y[i]);
      ++kept_c;
    }
    if (!std::isnan(b[i])) ++kept_b;
  }
  EXPECT_LT(kept_c, kept_b);
  EXPECT_LT(kept_b, y.size());
}

TEST(ExportTest, WritesReloadableFiles) {
  CohortSpec spec = SmallSpec(60, 13);
  spec.usage.enabled = true;
  spec.usage.videos = 3;
  const SyntheticCohort c = GenerateCohort(spec);
  const auto dir = std::filesystem::temp_directory_path() / "flipdml_export_test";
  std::filesystem::remove_all(dir);
  ExportCohort(c, dir);
  for (const char* f : {"data.csv", "schema.json", "truth.csv", "usage/students.csv", "usage/videos.csv"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  }
  const data::Dataset back = data::LoadDataset(dir / "data.csv", data::LoadSchema(dir / "schema.json"));
  ASSERT_EQ(back.numeric_columns().size(), c.data.numeric_columns().size());
  for (const auto& [name, col] : c.data.numeric_columns()) {
    // Values are written with six decimals.
    EXPECT_LE((back.numeric_columns().at(name) - col).cwiseAbs().maxCoeff(), 5e-7) << name;
  }
  EXPECT_EQ(ReadCsv(dir / "truth.csv").rows.size(), 60u);
  std::filesystem::remove_all(dir);
}

TEST(EstimatorNameTest, RoundTrip) {
  for (Estimator e : {Estimator::kNaive, Estimator::kOls, Estimator::kInteractive,
                      Estimator::kPartiallyLinear, Estimator::kOracleInteractive}) {
    EXPECT_EQ(EstimatorFromName(EstimatorName(e)), e);
  }
  EXPECT_THROW(EstimatorFromName("lasso"), ConfigError);
}

TEST(BenchmarkTest, ZeroReplicationsIsAnError) {
  BenchmarkOptions o;
  o.replications = 0;
  EXPECT_THROW(RunBenchmark(SmallSpec(100, 1), o), ConfigError);
}

TEST(BenchmarkTest, DeterministicAcrossThreads) {
  BenchmarkOptions o;
  o.estimators = {Estimator::kNaive, Estimator::kOls, Estimator::kInteractive};
  o.replications = 4;
  o.seed = 99;
  o.dml.repetitions = 1;
  o.dml.grid_points = 10;
  const BenchmarkResult a = RunBenchmark(SmallSpec(300, 0), o);
  o.threads = 3;
  const BenchmarkResult b = RunBenchmark(SmallSpec(300, 0), o);
  ASSERT_EQ(a.rows.size(), 3u);
  for (std::size_t k = 0; k < a.rows.size(); ++k) {
    EXPECT_EQ(a.rows[k].estimator, b.rows[k].estimator);
    EXPECT_EQ(a.rows[k].mean_estimate, b.rows[k].mean_estimate);
    EXPECT_EQ(a.rows[k].coverage, b.rows[k].coverage);
  }
  EXPECT_EQ(a.replications.size(), 4u);
  EXPECT_EQ(a.replications[2].seed, b.replications[2].seed);
}

TEST(BenchmarkTest, OracleAipwCoversAndNaiveIsBiased) {
  CohortSpec spec = SmallSpec(2000, 0);
  spec.treatment.coefficients = {{"x1", 0.8}, {"s1", 0.4}};
  spec.outcome.coefficients = {{"x1", 2.0}, {"s1", 1.0}};
  BenchmarkOptions o;
  o.estimators = {Estimator::kNaive, Estimator::kOracleInteractive};
  o.replications = 500;
  o.seed = 2024;
  const BenchmarkResult r = RunBenchmark(spec, o);
  const BenchmarkRow& naive = r.rows[0];
  const BenchmarkRow& oracle = r.rows[1];
  EXPECT_EQ(oracle.failures, 0);
  EXPECT_LT(std::fabs(oracle.bias), 0.02);
  EXPECT_GE(oracle.coverage, 0.92);
  EXPECT_LE(oracle.coverage, 0.98);
  EXPECT_GE(std::fabs(naive.bias), 5.0 * std::fabs(oracle.bias));
}

}  // namespace
}  // namespace flipdml::sim
