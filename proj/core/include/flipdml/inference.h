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
// Classical baselines: regression adjustment with heteroskedasticity-robust
// (sandwich) standard errors and two-sample comparison tests.

#ifndef FLIPDML_INFERENCE_H_
#define FLIPDML_INFERENCE_H_

#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "flipdml/datamodel.h"

namespace flipdml::inference {

enum class HcType { kHC0, kHC1, kHC3 };

struct OlsResult {
  double effect = 0.0;  // coefficient on the treatment indicator
  double effect_se = 0.0;
  double effect_p = 1.0;
  // Ordered (intercept, treatment, covariates...).
  std::vector<std::string> labels;
  Eigen::VectorXd coefficients;
  Eigen::VectorXd robust_se;
  Eigen::VectorXd p_values;
  Eigen::MatrixXd covariance;  // robust
  Eigen::VectorXd residuals;
  Eigen::Index n = 0;
  Eigen::Index parameters = 0;
};

// y = a + effect * d + X b + u by least squares. Errors when the parameter
// count reaches n (use the DML path instead) or the design is singular.
OlsResult FitOlsRobust(const Eigen::MatrixXd& covariates, const Eigen::VectorXd& d,
                       const Eigen::VectorXd& y, HcType hc = HcType::kHC1,
                       std::span<const std::string> covariate_labels = {});

// Covariate sets of the three regression-adjustment baselines:
//   kAllItems            every covariate and every raw item
//   kScaleMeans          covariates, one mean per reducible scale, raw items
//                        of non-reducible scales
//   kPrincipalComponents as kScaleMeans with each mean replaced by the
//                        scale's first principal component score
enum class OlsVariant { kAllItems, kScaleMeans, kPrincipalComponents };

const char* OlsVariantName(OlsVariant v);

data::DesignMatrix BuildOlsDesign(const data::Dataset& ds,
                                  std::span<const std::string> covariates,
                                  std::span<const data::ScaleDefinition> scales,
                                  OlsVariant variant);

// Rows with a missing outcome are excluded before fitting.
OlsResult FitOlsRobust(const data::Dataset& ds, std::span<const std::string> covariates,
                       const std::string& outcome, OlsVariant variant,
                       std::span<const data::ScaleDefinition> scales, HcType hc = HcType::kHC1);

// First principal component score of a standardized item block, with the
// sign fixed so that the first item's loading is nonnegative.
Eigen::VectorXd FirstPrincipalComponent(const Eigen::MatrixXd& items);

struct MeanTestResult {
  double mean_a = 0.0;
  double mean_b = 0.0;
  double t = 0.0;
  double df = 0.0;  // Welch-Satterthwaite
  double p = 1.0;   // two-sided
};

// Welch's unequal-variance t test. Errors when a group has fewer than two
// observations, or when both variances vanish.
MeanTestResult WelchMeanTest(std::span<const double> a, std::span<const double> b);

struct ChiSquareResult {
  double statistic = 0.0;
  double df = 0.0;
  double p = 1.0;
  std::vector<std::string> levels;
  std::vector<double> share_a;  // per level
  std::vector<double> share_b;
};

// Pearson chi-square test of homogeneity of a categorical variable across
// two groups (group_a: indicator == 0, group_b: indicator == 1).
ChiSquareResult ChiSquareHomogeneity(std::span<const std::string> values,
                                     const Eigen::VectorXd& group);

struct DifferenceInMeans {
  double estimate = 0.0;
  double se = 0.0;
};

// Unadjusted treated-minus-control mean with the unpooled standard error.
DifferenceInMeans NaiveDifference(const Eigen::VectorXd& y, const Eigen::VectorXd& d);

}  // namespace flipdml::inference

#endif  // FLIPDML_INFERENCE_H_
