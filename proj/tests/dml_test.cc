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
#include "flipdml/dml.h"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <set>
#include <vector>

#include "flipdml/errors.h"
#include "flipdml/random.h"
#include "flipdml/simulator.h"
#include "gtest/gtest.h"

namespace flipdml::dml {
namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

RepetitionEstimate Rep(double estimate, double se) {
  RepetitionEstimate r;
  r.estimate = estimate;
  r.se = se;
  return r;
}

TEST(AggregateTest, SingleRepetitionUnchanged) {
  const std::vector<RepetitionEstimate> reps{Rep(1.3, 0.2)};
  const AteEstimate a = AggregateRepetitions(reps);
  EXPECT_EQ(a.estimate, 1.3);
  EXPECT_EQ(a.se, 0.2);
  EXPECT_NEAR(a.ci_low, 1.3 - kNormalQuantile975 * 0.2, 1e-15);
  EXPECT_NEAR(a.ci_high, 1.3 + kNormalQuantile975 * 0.2, 1e-15);
}

TEST(AggregateTest, IdenticalRepetitions) {
  const std::vector<RepetitionEstimate> reps(5, Rep(-0.4, 0.05));
  const AteEstimate a = AggregateRepetitions(reps);
  EXPECT_EQ(a.estimate, -0.4);
  EXPECT_EQ(a.se, 0.05);
}

TEST(AggregateTest, MedianRuleByDirectEvaluation) {
  const std::vector<RepetitionEstimate> reps{Rep(1, 0.1), Rep(2, 0.1), Rep(3, 0.1)};
  // Inflated SEs are sqrt(0.01 + 1), 0.1 and sqrt(0.01 + 1); their median is
  // sqrt(1.01).
  std::vector<double> inflated;
  for (const auto& r : reps) inflated.push_back(std::hypot(r.se, r.estimate - 2.0));
  std::sort(inflated.begin(), inflated.end());
  const AteEstimate a = AggregateRepetitions(reps);
  EXPECT_EQ(a.estimate, 2.0);
  EXPECT_NEAR(a.se, inflated[1], 1e-15);
  EXPECT_NEAR(a.se, 1.004987562112089, 1e-12);
}

TEST(AggregateTest, EmptyIsAnError) {
  EXPECT_THROW(AggregateRepetitions({}), EstimationError);
}

struct Toy {
  MatrixXd x;
  VectorXd d;
  VectorXd m;
};

Toy MakeToy(int n, std::uint64_t seed) {
  Rng rng(seed);
  Toy t;
  t.x = StandardNormalMatrix(n, 3, rng);
  t.m = (1.0 + (-(0.8 * t.x.col(0) - 0.5 * t.x.col(1))).array().exp()).inverse();
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  t.d.resize(n);
  for (int i = 0; i < n; ++i) t.d[i] = unif(rng) < t.m[i] ? 1.0 : 0.0;
  return t;
}

DmlConfig SmallConfig(int repetitions = 3) {
  DmlConfig c;
  c.repetitions = repetitions;
  c.seed = 42;
  c.grid_points = 15;
  c.cv_folds = 5;
  return c;
}

TEST(InteractiveTest, OracleNuisancesRecoverExactEffect) {
  const Toy t = MakeToy(200, 1);
  const VectorXd y = 1.7 * t.d;
  const FixedLearner g0(VectorXd::Zero(200)), g1(VectorXd::Constant(200, 1.7)),
      m(VectorXd::Constant(200, 0.5));
  NuisanceSet ns;
  ns.outcome_control = &g0;
  ns.outcome_treated = &g1;
  ns.propensity = &m;
  const AteEstimate a = EstimateInteractive(y, t.d, ns, SmallConfig());
  EXPECT_NEAR(a.estimate, 1.7, 1e-14);
  EXPECT_NEAR(a.se, 0.0, 1e-14);
}

TEST(InteractiveTest, DegeneratePropensityViolatesOverlap) {
  const Toy t = MakeToy(200, 2);
  const VectorXd y = t.d;
  const FixedLearner g(VectorXd::Zero(200)), m(VectorXd::Ones(200));
  NuisanceSet ns;
  ns.outcome_control = &g;
  ns.outcome_treated = &g;
  ns.propensity = &m;
  EXPECT_THROW(EstimateInteractive(y, t.d, ns, SmallConfig()), EstimationError);
}

TEST(InteractiveTest, ManyClippedPropensitiesWarn) {
  const Toy t = MakeToy(300, 3);
  VectorXd m = t.m;
  for (Index i = 0; i < 60; ++i) m[i] = t.d[i] == 1.0 ? 0.999 : 0.001;
  const VectorXd y = t.d + t.x.col(0);
  const FixedLearner g0(t.x.col(0)), g1((t.x.col(0).array() + 1.0).matrix()), pm(m);
  NuisanceSet ns;
  ns.outcome_control = &g0;
  ns.outcome_treated = &g1;
  ns.propensity = &pm;
  const AteEstimate a = EstimateInteractive(y, t.d, ns, SmallConfig(1));
  ASSERT_EQ(a.warnings.size(), 1u);
  EXPECT_NE(a.warnings[0].find("overlap"), std::string::npos);
  EXPECT_NEAR(a.repetitions[0].clipped_share, 0.2, 1e-12);
}

TEST(PartiallyLinearTest, OracleNuisancesRecoverEffect) {
  const Toy t = MakeToy(250, 4);
  const VectorXd h = 2.0 * t.x.col(0) - t.x.col(2);
  const VectorXd y = 0.8 * t.d + h;
  const FixedLearner l((0.8 * t.m + h).eval()), m(t.m);
  NuisanceSet ns;
  ns.outcome = &l;
  ns.propensity = &m;
  DmlConfig c = SmallConfig();
  c.model = DmlModel::kPartiallyLinear;
  const AteEstimate a = EstimatePartiallyLinear(y, t.d, ns, c);
  EXPECT_NEAR(a.estimate, 0.8, 1e-12);
}

TEST(PartiallyLinearTest, ConstantTreatmentIsAnError) {
  const Toy t = MakeToy(100, 5);
  const FixedLearner l(VectorXd::Zero(100)), m(VectorXd::Constant(100, 0.5));
  NuisanceSet ns;
  ns.outcome = &l;
  ns.propensity = &m;
  EXPECT_THROW(EstimatePartiallyLinear(t.x.col(0), VectorXd::Ones(100), ns, SmallConfig()),
               EstimationError);
}

// Records every (train, test) call so the cross-fitting partition can be
// checked after the fact.
class SpyLearner final : public NuisanceLearner {
 public:
  double Tune(std::span<const Index>, const VectorXd&, std::uint64_t) const override { return 0; }
  VectorXd FitPredict(std::span<const Index> train, std::span<const Index> test,
                      const VectorXd& target, double) const override {
    std::lock_guard<std::mutex> lock(mutex_);
    calls_.push_back({{train.begin(), train.end()}, {test.begin(), test.end()}});
    double mean = 0.0;
    for (Index r : train) mean += target[r];
    mean /= static_cast<double>(train.size());
    return VectorXd::Constant(static_cast<Index>(test.size()), std::clamp(mean, 0.2, 0.8));
  }
  struct Call {
    std::vector<Index> train, test;
  };
  const std::vector<Call>& calls() const { return calls_; }

 private:
  mutable std::mutex mutex_;
  mutable std::vector<Call> calls_;
};

TEST(CrossFittingTest, PredictionsNeverUseOwnObservation) {
  const Toy t = MakeToy(103, 6);
  const VectorXd y = t.d + t.x.col(1);
  SpyLearner g0, g1, m;
  NuisanceSet ns;
  ns.outcome_control = &g0;
  ns.outcome_treated = &g1;
  ns.propensity = &m;
  const DmlConfig c = SmallConfig(2);
  EstimateInteractive(y, t.d, ns, c);
  for (const SpyLearner* spy : {&g0, &g1, &m}) {
    ASSERT_EQ(spy->calls().size(), static_cast<std::size_t>(c.folds * c.repetitions));
    std::vector<int> tested(103 * c.repetitions, 0);
    for (std::size_t k = 0; k < spy->calls().size(); ++k) {
      const auto& call = spy->calls()[k];
      const std::set<Index> train(call.train.begin(), call.train.end());
      for (Index i : call.test) {
        EXPECT_EQ(train.count(i), 0u);
        ++tested[static_cast<std::size_t>(k / c.folds) * 103 + static_cast<std::size_t>(i)];
      }
    }
    for (int v : tested) EXPECT_EQ(v, 1);
  }
  for (const auto& call : g1.calls()) {
    for (Index i : call.train) EXPECT_EQ(t.d[i], 1.0);
  }
  for (const auto& call : g0.calls()) {
    for (Index i : call.train) EXPECT_EQ(t.d[i], 0.0);
  }
}

TEST(CrossFittingTest, RepetitionFoldsPartition) {
  DmlConfig c = SmallConfig();
  c.folds = 4;
  const std::vector<int> a = RepetitionFolds(50, c, 0);
  const std::vector<int> b = RepetitionFolds(50, c, 1);
  ASSERT_EQ(a.size(), 50u);
  std::vector<int> sizes(4, 0);
  for (int f : a) ++sizes[f];
  for (int s : sizes) EXPECT_TRUE(s == 12 || s == 13);
  EXPECT_NE(a, b);
  EXPECT_EQ(a, RepetitionFolds(50, c, 0));
}

class DatasetDmlTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    sim::CohortSpec spec;
    spec.n = 400;
    spec.seed = 8;
    spec.scales = {{"s1", {0.7, 0.7, 0.6}, {}, {}, data::Questionnaire::kFirst, true},
                   {"s2", {0.6, 0.8, 0.7, 0.5}, {}, {}, data::Questionnaire::kFirst, true}};
    spec.covariates = {{"x1", data::ColumnType::kReal, 0.0, 1.0, {}, {}},
                       {"x2", data::ColumnType::kReal, 0.0, 1.0, {}, {}},
                       {"group", data::ColumnType::kCategorical, 0, 1, {"a", "b"}, {0.5, 0.5}}};
    spec.treatment.coefficients = {{"x1", 0.5}, {"s1", 0.3}};
    spec.outcome.coefficients = {{"x1", 1.0}, {"x2", -0.5}, {"s2", 0.5}, {"group=b", 0.3}};
    spec.outcome.tau = 0.5;
    spec.dropout = {{"passed", 2.0, 0.0, 0.0}};
    cohort_ = new sim::SyntheticCohort(sim::GenerateCohort(spec));
  }
  static void TearDownTestSuite() { delete cohort_; }
  static std::vector<std::string> Columns() {
    return cohort_->data.schema().AnalysisColumns();
  }
  static sim::SyntheticCohort* cohort_;
};

sim::SyntheticCohort* DatasetDmlTest::cohort_ = nullptr;

TEST_F(DatasetDmlTest, ScoreIsOrthogonalAtEstimate) {
  const auto cols = Columns();
  for (DmlModel model : {DmlModel::kInteractive, DmlModel::kPartiallyLinear}) {
    DmlConfig c = SmallConfig(3);
    c.model = model;
    const AteEstimate a = model == DmlModel::kInteractive
                              ? EstimateAteInteractive(cohort_->data, cols, "y", c)
                              : EstimateAtePartiallyLinear(cohort_->data, cols, "y", c);
    EXPECT_LT(a.max_abs_mean_score, 1e-8);
    for (const auto& r : a.repetitions) EXPECT_LT(std::fabs(r.mean_score), 1e-8);
    EXPECT_EQ(a.repetitions.size(), 3u);
    EXPECT_NEAR(a.ci_high - a.estimate, kNormalQuantile975 * a.se, 1e-12);
    EXPECT_GT(a.se, 0.0);
    EXPECT_LT(std::fabs(a.estimate - 0.5), 5 * a.se);
  }
}

TEST_F(DatasetDmlTest, BitIdenticalAcrossRunsAndThreads) {
  const auto cols = Columns();
  DmlConfig c = SmallConfig(4);
  const AteEstimate a = EstimateAteInteractive(cohort_->data, cols, "y", c);
  const AteEstimate b = EstimateAteInteractive(cohort_->data, cols, "y", c);
  c.threads = 4;
  const AteEstimate p = EstimateAteInteractive(cohort_->data, cols, "y", c);
  for (const AteEstimate* other : {&b, &p}) {
    EXPECT_EQ(a.estimate, other->estimate);
    EXPECT_EQ(a.se, other->se);
    ASSERT_EQ(a.repetitions.size(), other->repetitions.size());
    for (std::size_t r = 0; r < a.repetitions.size(); ++r) {
      EXPECT_EQ(a.repetitions[r].estimate, other->repetitions[r].estimate);
    }
  }
}

TEST_F(DatasetDmlTest, BinaryOutcomeOnProbabilityScale) {
  const auto& ds = cohort_->data;
  const VectorXd& passed = ds.Numeric("passed");
  data::Dataset::NumericColumns numeric = ds.numeric_columns();
  VectorXd binary = passed;
  for (Index i = 0; i < binary.size(); ++i) {
    if (!std::isnan(binary[i])) binary[i] = binary[i] > 0.0 ? 1.0 : 0.0;
  }
  numeric["passed"] = binary;
  const data::Dataset bin = data::Dataset::Create(ds.schema(), ds.ids(), ds.treatment(), numeric,
                                                  ds.categorical_columns());
  const AteEstimate a = EstimateAteInteractive(bin, Columns(), "passed", SmallConfig(2));
  EXPECT_GE(a.estimate, -1.0);
  EXPECT_LE(a.estimate, 1.0);
  EXPECT_LT(a.n, ds.rows());
}

TEST(DmlConfigTest, ValidationNamesField) {
  DmlConfig c;
  c.folds = 1;
  EXPECT_THROW(c.Validate(), ConfigError);
  c = DmlConfig{};
  c.clip = 0.5;
  EXPECT_THROW(c.Validate(), ConfigError);
  c = DmlConfig{};
  c.repetitions = 0;
  EXPECT_THROW(c.Validate(), ConfigError);
  EXPECT_NO_THROW(DmlConfig{}.Validate());
  EXPECT_EQ(DmlConfig{}.folds, 5);
  EXPECT_EQ(DmlConfig{}.repetitions, 100);
  EXPECT_EQ(DmlConfig{}.cv_folds, 10);
  EXPECT_EQ(DmlConfig{}.clip, 0.01);
}

}  // namespace
}  // namespace flipdml::dml
