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
#include "flipdml/inference.h"

#include <cmath>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "flipdml/errors.h"
#include "flipdml/random.h"
#include "flipdml/simulator.h"
#include "gtest/gtest.h"

namespace flipdml::inference {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Instance {
  MatrixXd x;
  VectorXd d;
  VectorXd y;
};

Instance RandomInstance(int n, int p, std::uint64_t seed, bool heteroskedastic) {
  Rng rng(seed);
  Instance out;
  out.x = StandardNormalMatrix(n, p, rng);
  std::bernoulli_distribution coin(0.4);
  out.d.resize(n);
  for (int i = 0; i < n; ++i) out.d[i] = coin(rng) ? 1.0 : 0.0;
  const VectorXd e = StandardNormalMatrix(n, 1, rng).col(0);
  out.y = 1.5 * out.d + out.x * VectorXd::LinSpaced(p, -1.0, 1.0);
  for (int i = 0; i < n; ++i) {
    out.y[i] += heteroskedastic ? e[i] * (0.5 + std::fabs(out.x(i, 0))) : e[i];
  }
  return out;
}

// (Z'Z)^-1 Z' diag(w e^2) Z (Z'Z)^-1 with Z = [1 d X].
MatrixXd SandwichOracle(const Instance& in, HcType hc, VectorXd* beta) {
  const Eigen::Index n = in.x.rows(), k = in.x.cols() + 2;
  MatrixXd z(n, k);
  z << VectorXd::Ones(n), in.d, in.x;
  const MatrixXd bread = (z.transpose() * z).inverse();
  *beta = bread * z.transpose() * in.y;
  const VectorXd e = in.y - z * *beta;
  MatrixXd meat = MatrixXd::Zero(k, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    double w = e[i] * e[i];
    if (hc == HcType::kHC3) {
      const double h = z.row(i) * bread * z.row(i).transpose();
      w /= (1 - h) * (1 - h);
    }
    meat += w * z.row(i).transpose() * z.row(i);
  }
  MatrixXd v = bread * meat * bread;
  if (hc == HcType::kHC1) v *= static_cast<double>(n) / static_cast<double>(n - k);
  return v;
}

TEST(OlsRobustTest, MatchesBruteForceSandwich) {
  const Instance in = RandomInstance(60, 4, 1, true);
  for (HcType hc : {HcType::kHC0, HcType::kHC1, HcType::kHC3}) {
    VectorXd beta;
    const MatrixXd v = SandwichOracle(in, hc, &beta);
    const OlsResult r = FitOlsRobust(in.x, in.d, in.y, hc);
    EXPECT_NEAR(r.effect, beta[1], 1e-8);
    EXPECT_NEAR(r.effect_se, std::sqrt(v(1, 1)), 1e-8);
    EXPECT_LT((r.coefficients - beta).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT((r.covariance - v).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(OlsRobustTest, ResidualsOrthogonalAndCovariancePsd) {
  const Instance in = RandomInstance(80, 5, 2, true);
  const OlsResult r = FitOlsRobust(in.x, in.d, in.y);
  EXPECT_LT(std::fabs(r.residuals.sum()), 1e-8);
  EXPECT_LT(std::fabs(r.residuals.dot(in.d)), 1e-8);
  EXPECT_LT((in.x.transpose() * r.residuals).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_TRUE(r.covariance.isApprox(r.covariance.transpose()));
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(r.covariance);
  EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-12);
  ASSERT_EQ(r.labels.size(), 7u);
  EXPECT_EQ(r.labels[1], "d");
}

TEST(OlsRobustTest, ExactEffectLeavesNoResidual) {
  const Instance in = RandomInstance(30, 3, 3, false);
  const VectorXd y = 2.0 * in.d;
  const OlsResult r = FitOlsRobust(in.x, in.d, y);
  EXPECT_NEAR(r.effect, 2.0, 1e-10);
  EXPECT_LT(r.residuals.cwiseAbs().maxCoeff(), 1e-10);
}

TEST(OlsRobustTest, InvariantToCovariateReparameterization) {
  const Instance in = RandomInstance(70, 3, 4, true);
  MatrixXd a(3, 3);
  a << 2, 1, 0, 0, 1, -1, 1, 0, 3;
  const OlsResult base = FitOlsRobust(in.x, in.d, in.y);
  const OlsResult mixed = FitOlsRobust(in.x * a, in.d, in.y);
  EXPECT_NEAR(base.effect, mixed.effect, 1e-10);
  EXPECT_NEAR(base.effect_se, mixed.effect_se, 1e-10);
}

TEST(OlsRobustTest, RobustApproachesClassicalUnderHomoskedasticity) {
  const Instance in = RandomInstance(5000, 3, 5, false);
  const OlsResult r = FitOlsRobust(in.x, in.d, in.y, HcType::kHC0);
  MatrixXd z(5000, 5);
  z << VectorXd::Ones(5000), in.d, in.x;
  const double sigma2 = r.residuals.squaredNorm() / (5000 - 5);
  const double classical = std::sqrt(sigma2 * (z.transpose() * z).inverse()(1, 1));
  EXPECT_NEAR(r.effect_se / classical, 1.0, 0.1);
}

TEST(OlsRobustTest, TooManyParametersPointsToDml) {
  const Instance in = RandomInstance(10, 8, 6, false);
  try {
    FitOlsRobust(in.x, in.d, in.y);
    FAIL();
  } catch (const EstimationError& e) {
    EXPECT_NE(std::string(e.what()).find("DML"), std::string::npos) << e.what();
  }
}

class OlsVariantTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    sim::CohortSpec spec = sim::DefaultCohortSpec();
    spec.seed = 17;
    cohort_ = new sim::SyntheticCohort(sim::GenerateCohort(spec));
  }
  static void TearDownTestSuite() { delete cohort_; }
  static const std::vector<std::string>& Covariates() {
    static const std::vector<std::string> c{"age", "gpa", "gender"};
    return c;
  }
  static sim::SyntheticCohort* cohort_;
};

sim::SyntheticCohort* OlsVariantTest::cohort_ = nullptr;

TEST_F(OlsVariantTest, DesignWidths) {
  const auto& scales = cohort_->data.schema().scales;
  ASSERT_EQ(scales.size(), 14u);
  ASSERT_EQ(cohort_->data.schema().ItemColumns().size(), 67u);
  const auto all = BuildOlsDesign(cohort_->data, Covariates(), scales, OlsVariant::kAllItems);
  EXPECT_EQ(all.matrix.cols(), 3 + 67);
  for (OlsVariant v : {OlsVariant::kScaleMeans, OlsVariant::kPrincipalComponents}) {
    const auto design = BuildOlsDesign(cohort_->data, Covariates(), scales, v);
    EXPECT_EQ(design.matrix.cols(), 3 + 13 + 4) << OlsVariantName(v);
  }
}

TEST_F(OlsVariantTest, ScaleMeanColumnsAreItemMeans) {
  const auto& scales = cohort_->data.schema().scales;
  const auto design = BuildOlsDesign(cohort_->data, Covariates(), scales, OlsVariant::kScaleMeans);
  const VectorXd mean = cohort_->data.ItemMatrix(scales[0]).rowwise().mean();
  bool found = false;
  for (Eigen::Index c = 0; c < design.matrix.cols(); ++c) {
    if (design.encoding[c].source == scales[0].name) {
      EXPECT_LT((design.matrix.col(c) - mean).cwiseAbs().maxCoeff(), 1e-12);
      found = true;
    }
  }
  EXPECT_TRUE(found);
}

TEST_F(OlsVariantTest, EffectInvariantToReferenceLevel) {
  const auto& ds = cohort_->data;
  data::Schema swapped = ds.schema();
  for (auto& c : swapped.covariates) {
    if (c.name == "gender") c.reference = "male";
  }
  const data::Dataset other = data::Dataset::Create(swapped, ds.ids(), ds.treatment(),
                                                    ds.numeric_columns(), ds.categorical_columns());
  for (OlsVariant v : {OlsVariant::kAllItems, OlsVariant::kScaleMeans}) {
    const OlsResult a = FitOlsRobust(ds, Covariates(), "exam", v, ds.schema().scales);
    const OlsResult b = FitOlsRobust(other, Covariates(), "exam", v, swapped.scales);
    EXPECT_NEAR(a.effect, b.effect, 1e-9);
    EXPECT_NEAR(a.effect_se, b.effect_se, 1e-9);
  }
}

TEST_F(OlsVariantTest, MissingOutcomesAreExcluded) {
  const auto& ds = cohort_->data;
  const OlsResult r = FitOlsRobust(ds, Covariates(), "exam_c", OlsVariant::kScaleMeans,
                                   ds.schema().scales);
  const VectorXd& y = ds.Numeric("exam_c");
  EXPECT_EQ(r.n, (y.array() == y.array()).count());
  EXPECT_LT(r.n, ds.rows());
}

TEST(FirstPrincipalComponentTest, SignFollowsFirstItem) {
  Rng rng(9);
  const VectorXd f = StandardNormalMatrix(200, 1, rng).col(0);
  MatrixXd items(200, 3);
  items.col(0) = -f + 0.3 * StandardNormalMatrix(200, 1, rng).col(0);
  items.col(1) = -f + 0.3 * StandardNormalMatrix(200, 1, rng).col(0);
  items.col(2) = -f + 0.3 * StandardNormalMatrix(200, 1, rng).col(0);
  const VectorXd pc = FirstPrincipalComponent(items);
  const double c = (pc.array() - pc.mean()).matrix().dot((items.col(0).array() - items.col(0).mean()).matrix());
  EXPECT_GT(c, 0.0);
  EXPECT_NEAR(pc.mean(), 0.0, 1e-10);
}

TEST(WelchTest, HandComputedOracle) {
  const std::vector<double> a{0, 0, 1, 1}, b{1, 1, 2, 2};
  // Both variances 1/3; se^2 = 2 * (1/3) / 4; df = (1/6)^2 / (2 * (1/12)^2 / 3).
  const double se = std::sqrt(1.0 / 6.0);
  const double t = -1.0 / se;
  const double df = (1.0 / 36.0) / (2.0 * (1.0 / 144.0) / 3.0);
  const double p = 2.0 * boost::math::cdf(boost::math::students_t(df), t);
  const MeanTestResult r = WelchMeanTest(a, b);
  EXPECT_DOUBLE_EQ(r.mean_a, 0.5);
  EXPECT_DOUBLE_EQ(r.mean_b, 1.5);
  EXPECT_NEAR(r.t, t, 1e-12);
  EXPECT_NEAR(r.df, 6.0, 1e-12);
  EXPECT_NEAR(df, 6.0, 1e-12);
  EXPECT_NEAR(r.p, p, 1e-12);
}

TEST(WelchTest, IdenticalSamples) {
  const std::vector<double> a{1.0, 2.0, 4.0, 7.0};
  const MeanTestResult r = WelchMeanTest(a, a);
  EXPECT_EQ(r.t, 0.0);
  EXPECT_NEAR(r.p, 1.0, 1e-15);
}

TEST(WelchTest, SwapAndAffineInvariance) {
  Rng rng(10);
  const VectorXd a = StandardNormalMatrix(25, 1, rng).col(0);
  const VectorXd b = (StandardNormalMatrix(40, 1, rng).col(0).array() * 2.0 + 0.6).matrix();
  const std::vector<double> va(a.data(), a.data() + a.size()), vb(b.data(), b.data() + b.size());
  const MeanTestResult r = WelchMeanTest(va, vb);
  const MeanTestResult s = WelchMeanTest(vb, va);
  EXPECT_NEAR(r.t, -s.t, 1e-12);
  EXPECT_NEAR(r.p, s.p, 1e-12);
  std::vector<double> ta, tb;
  for (double v : va) ta.push_back(-3.0 * v + 10.0);
  for (double v : vb) tb.push_back(-3.0 * v + 10.0);
  const MeanTestResult u = WelchMeanTest(ta, tb);
  EXPECT_NEAR(std::fabs(u.t), std::fabs(r.t), 1e-10);
  EXPECT_NEAR(u.p, r.p, 1e-10);
  EXPECT_GE(r.p, 0.0);
  EXPECT_LE(r.p, 1.0);
}

TEST(WelchTest, DegenerateInputs) {
  const std::vector<double> one{1.0}, two{2.0, 2.0}, three{2.0, 2.0, 2.0};
  EXPECT_THROW(WelchMeanTest(one, two), Error);
  EXPECT_THROW(WelchMeanTest(two, three), Error);
}

TEST(ChiSquareTest, MatchesHandComputedTable) {
  // Group 0: a a a b ; group 1: a b b b c c.
  const std::vector<std::string> v{"a", "a", "a", "b", "a", "b", "b", "b", "c", "c"};
  VectorXd g(10);
  g << 0, 0, 0, 0, 1, 1, 1, 1, 1, 1;
  const double obs[2][3] = {{3, 1, 0}, {1, 3, 2}};
  const double rows[2] = {4, 6}, cols[3] = {4, 4, 2};
  double stat = 0.0;
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 3; ++c) {
      const double e = rows[r] * cols[c] / 10.0;
      stat += (obs[r][c] - e) * (obs[r][c] - e) / e;
    }
  }
  const ChiSquareResult r = ChiSquareHomogeneity(v, g);
  EXPECT_NEAR(r.statistic, stat, 1e-12);
  EXPECT_EQ(r.df, 2.0);
  EXPECT_NEAR(r.p, boost::math::cdf(boost::math::complement(boost::math::chi_squared(2.0), stat)), 1e-12);
  ASSERT_EQ(r.levels.size(), 3u);
  EXPECT_DOUBLE_EQ(r.share_a[0], 0.75);
  EXPECT_DOUBLE_EQ(r.share_b[2], 2.0 / 6.0);
}

TEST(NaiveDifferenceTest, UnpooledStandardError) {
  VectorXd y(6), d(6);
  y << 1, 2, 3, 5, 7, 9;
  d << 0, 0, 0, 1, 1, 1;
  const DifferenceInMeans r = NaiveDifference(y, d);
  EXPECT_DOUBLE_EQ(r.estimate, 5.0);
  EXPECT_NEAR(r.se, std::sqrt(1.0 / 3.0 + 4.0 / 3.0), 1e-12);
}

}  // namespace
}  // namespace flipdml::inference
