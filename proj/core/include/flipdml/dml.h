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
// Cross-fitted double/debiased machine learning for the average treatment
// effect of a binary treatment.
//
// Two models are supported. The interactive model fits g(0, x), g(1, x) and
// the propensity m(x) and averages the doubly robust (AIPW) score
//
//   psi_i = g1_i - g0_i + d_i (y_i - g1_i) / m_i - (1 - d_i)(y_i - g0_i) / (1 - m_i).
//
// The partially linear model y = theta d + h(x) + u residualizes y on
// l(x) = E[y | x] and d on m(x) and regresses residual on residual.
//
// Every nuisance prediction for observation i comes from a model trained
// without i. Each repetition redraws the fold split from its own derived
// seed; repetitions are aggregated by the median rule.

#ifndef FLIPDML_DML_H_
#define FLIPDML_DML_H_

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "flipdml/datamodel.h"
#include "flipdml/learners.h"

namespace flipdml::dml {

enum class DmlModel { kInteractive, kPartiallyLinear };
enum class OutcomeKind { kAuto, kContinuous, kBinary };

const char* DmlModelName(DmlModel model);

struct DmlConfig {
  int folds = 5;
  int repetitions = 100;
  double clip = 0.01;  // propensities are clipped into [clip, 1 - clip]
  DmlModel model = DmlModel::kInteractive;
  std::uint64_t seed = 0;
  int threads = 1;
  // Nuisance tuning: K-fold CV over a log-spaced penalty grid, run once per
  // repetition on all rows available to the nuisance.
  int cv_folds = 10;
  int grid_points = 50;
  learners::CvRule cv_rule = learners::CvRule::kMinimum;
  OutcomeKind outcome_kind = OutcomeKind::kAuto;
  // Share of clipped propensities above which a repetition warns about overlap.
  double overlap_warning_share = 0.05;

  void Validate() const;  // throws ConfigError
};

// A nuisance function learner. Implementations are immutable and shared by
// concurrently running repetitions.
class NuisanceLearner {
 public:
  virtual ~NuisanceLearner() = default;

  // Selects a tuning value (e.g. a penalty) from `rows`; called once per
  // repetition.
  virtual double Tune(std::span<const Eigen::Index> rows, const Eigen::VectorXd& target,
                      std::uint64_t seed) const = 0;

  // Trains on `train` with the tuned value and predicts `test`.
  virtual Eigen::VectorXd FitPredict(std::span<const Eigen::Index> train,
                                     std::span<const Eigen::Index> test,
                                     const Eigen::VectorXd& target, double tuning) const = 0;
};

// Ridge regression with a CV-selected penalty (squared-error loss).
class RidgeLearner final : public NuisanceLearner {
 public:
  RidgeLearner(const Eigen::MatrixXd& x, int cv_folds, int grid_points, learners::CvRule rule);
  double Tune(std::span<const Eigen::Index> rows, const Eigen::VectorXd& target,
              std::uint64_t seed) const override;
  Eigen::VectorXd FitPredict(std::span<const Eigen::Index> train,
                             std::span<const Eigen::Index> test, const Eigen::VectorXd& target,
                             double tuning) const override;

 private:
  const Eigen::MatrixXd& x_;
  int cv_folds_;
  int grid_points_;
  learners::CvRule rule_;
};

// L2-penalized logistic regression with a CV-selected penalty (log loss);
// predicts probabilities.
class LogisticRidgeLearner final : public NuisanceLearner {
 public:
  LogisticRidgeLearner(const Eigen::MatrixXd& x, int cv_folds, int grid_points,
                       learners::CvRule rule);
  double Tune(std::span<const Eigen::Index> rows, const Eigen::VectorXd& target,
              std::uint64_t seed) const override;
  Eigen::VectorXd FitPredict(std::span<const Eigen::Index> train,
                             std::span<const Eigen::Index> test, const Eigen::VectorXd& target,
                             double tuning) const override;

 private:
  const Eigen::MatrixXd& x_;
  int cv_folds_;
  int grid_points_;
  learners::CvRule rule_;
};

// Principal component regression with a CV-selected component count.
class PcrLearner final : public NuisanceLearner {
 public:
  PcrLearner(const Eigen::MatrixXd& x, int cv_folds, Eigen::Index max_components,
             learners::CvRule rule);
  double Tune(std::span<const Eigen::Index> rows, const Eigen::VectorXd& target,
              std::uint64_t seed) const override;
  Eigen::VectorXd FitPredict(std::span<const Eigen::Index> train,
                             std::span<const Eigen::Index> test, const Eigen::VectorXd& target,
                             double tuning) const override;

 private:
  const Eigen::MatrixXd& x_;
  int cv_folds_;
  Eigen::Index max_components_;
  learners::CvRule rule_;
};

// Returns stored values regardless of the training rows (known nuisance
// functions, e.g. simulator truth).
class FixedLearner final : public NuisanceLearner {
 public:
  explicit FixedLearner(Eigen::VectorXd values);
  double Tune(std::span<const Eigen::Index>, const Eigen::VectorXd&,
              std::uint64_t) const override {
    return 0.0;
  }
  Eigen::VectorXd FitPredict(std::span<const Eigen::Index> train,
                             std::span<const Eigen::Index> test, const Eigen::VectorXd& target,
                             double tuning) const override;

 private:
  Eigen::VectorXd values_;
};

// Non-owning. The interactive model reads outcome_control, outcome_treated
// and propensity; the partially linear model reads outcome and propensity.
struct NuisanceSet {
  const NuisanceLearner* outcome_control = nullptr;
  const NuisanceLearner* outcome_treated = nullptr;
  const NuisanceLearner* outcome = nullptr;
  const NuisanceLearner* propensity = nullptr;
};

struct RepetitionEstimate {
  double estimate = 0.0;
  double se = 0.0;
  double mean_score = 0.0;      // empirical mean of the orthogonal score at estimate
  double clipped_share = 0.0;   // share of propensities at the clip boundary
};

struct AteEstimate {
  double estimate = 0.0;
  double se = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double p_value = 1.0;  // two-sided, normal reference
  Eigen::Index n = 0;
  std::vector<RepetitionEstimate> repetitions;
  double max_abs_mean_score = 0.0;
  std::vector<std::string> warnings;
};

inline constexpr double kNormalQuantile975 = 1.959963984540054;

// Median aggregation: estimate = median_r theta_r,
// se = median_r sqrt(se_r^2 + (theta_r - estimate)^2); CI = estimate +- 1.96 se.
AteEstimate AggregateRepetitions(std::span<const RepetitionEstimate> repetitions);

// Array-level estimators. `d` is 0/1; all vectors share one row order.
AteEstimate EstimateInteractive(const Eigen::VectorXd& y, const Eigen::VectorXd& d,
                                const NuisanceSet& nuisances, const DmlConfig& config);
AteEstimate EstimatePartiallyLinear(const Eigen::VectorXd& y, const Eigen::VectorXd& d,
                                    const NuisanceSet& nuisances, const DmlConfig& config);

// Fold split for a repetition: fold id of each observation. Exposed for the
// cross-fitting partition checks.
std::vector<int> RepetitionFolds(Eigen::Index n, const DmlConfig& config, int repetition);

// Dataset-level estimators with ridge / logistic-ridge nuisances over the
// listed covariate columns (categoricals dummy-coded). Rows missing the
// outcome are dropped first. Binary outcomes (kAuto detects 0/1) use
// logistic-ridge outcome models and report the effect on the probability
// scale.
AteEstimate EstimateAteInteractive(const data::Dataset& ds, std::span<const std::string> covariates,
                                   const std::string& outcome, const DmlConfig& config);
AteEstimate EstimateAtePartiallyLinear(const data::Dataset& ds,
                                       std::span<const std::string> covariates,
                                       const std::string& outcome, const DmlConfig& config);

}  // namespace flipdml::dml

#endif  // FLIPDML_DML_H_
