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

#include <boost/math/distributions/normal.hpp>

#include "flipdml/errors.h"
#include "flipdml/parallel.h"
#include "flipdml/random.h"

namespace flipdml::dml {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd Rows(const MatrixXd& x, std::span<const Index> rows) {
  MatrixXd out(static_cast<Index>(rows.size()), x.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Index>(k)) = x.row(rows[k]);
  return out;
}

VectorXd Rows(const VectorXd& y, std::span<const Index> rows) {
  VectorXd out(static_cast<Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) out[static_cast<Index>(k)] = y[rows[k]];
  return out;
}

double Median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

void CheckInputs(const VectorXd& y, const VectorXd& d, const DmlConfig& config) {
  config.Validate();
  if (y.size() != d.size()) throw EstimationError("dml: y and d lengths differ");
  if (!y.allFinite()) throw EstimationError("dml: outcome has missing values");
  Index treated = 0;
  for (Index i = 0; i < d.size(); ++i) {
    if (d[i] != 0.0 && d[i] != 1.0) throw EstimationError("dml: treatment must be 0/1");
    treated += d[i] == 1.0;
  }
  if (treated == 0 || treated == d.size()) {
    throw EstimationError("dml: treatment is constant; the effect is not identified");
  }
  if (d.size() < 2 * config.folds) throw EstimationError("dml: too few observations for the fold count");
}

struct FoldRows {
  std::vector<Index> train;
  std::vector<Index> test;
};

std::vector<FoldRows> MakeFolds(const std::vector<int>& fold_of, int folds) {
  std::vector<FoldRows> out(static_cast<std::size_t>(folds));
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    for (int f = 0; f < folds; ++f) {
      auto& fr = out[static_cast<std::size_t>(f)];
      (fold_of[i] == f ? fr.test : fr.train).push_back(static_cast<Index>(i));
    }
  }
  return out;
}

std::vector<Index> Filter(std::span<const Index> rows, const VectorXd& d, double value) {
  std::vector<Index> out;
  for (Index r : rows) {
    if (d[r] == value) out.push_back(r);
  }
  return out;
}

// Clips into [clip, 1 - clip]; returns the share of values at the boundary.
double ClipPropensity(VectorXd* m, double clip) {
  Index at_boundary = 0;
  for (Index i = 0; i < m->size(); ++i) {
    double& v = (*m)[i];
    if (v <= clip) {
      v = clip;
      ++at_boundary;
    } else if (v >= 1.0 - clip) {
      v = 1.0 - clip;
      ++at_boundary;
    }
  }
  return static_cast<double>(at_boundary) / static_cast<double>(m->size());
}

void Scatter(VectorXd* dst, std::span<const Index> rows, const VectorXd& values) {
  for (std::size_t k = 0; k < rows.size(); ++k) (*dst)[rows[k]] = values[static_cast<Index>(k)];
}

AteEstimate Finish(std::vector<RepetitionEstimate> reps, Index n, const DmlConfig& config) {
  AteEstimate out = AggregateRepetitions(reps);
  out.n = n;
  bool overlap = false;
  for (const auto& r : reps) overlap |= r.clipped_share > config.overlap_warning_share;
  if (overlap) {
    out.warnings.push_back("overlap: more than " +
                           std::to_string(static_cast<int>(100 * config.overlap_warning_share)) +
                           "% of propensities at the clipping boundary");
  }
  return out;
}

bool LooksBinary(const VectorXd& y) {
  for (Index i = 0; i < y.size(); ++i) {
    if (y[i] != 0.0 && y[i] != 1.0) return false;
  }
  return true;
}

}  // namespace

const char* DmlModelName(DmlModel model) {
  return model == DmlModel::kInteractive ? "dml_interactive" : "dml_partially_linear";
}

void DmlConfig::Validate() const {
  if (folds < 2) throw ConfigError("dml.folds must be at least 2");
  if (repetitions < 1) throw ConfigError("dml.repetitions must be at least 1");
  if (!(clip > 0.0 && clip < 0.5)) throw ConfigError("dml.clip must lie in (0, 0.5)");
  if (cv_folds < 2) throw ConfigError("dml.cv_folds must be at least 2");
  if (grid_points < 1) throw ConfigError("dml.grid_points must be at least 1");
}

RidgeLearner::RidgeLearner(const MatrixXd& x, int cv_folds, int grid_points, learners::CvRule rule)
    : x_(x), cv_folds_(cv_folds), grid_points_(grid_points), rule_(rule) {}

double RidgeLearner::Tune(std::span<const Index> rows, const VectorXd& target,
                          std::uint64_t seed) const {
  const MatrixXd x = Rows(x_, rows);
  learners::CvOptions opt;
  opt.folds = cv_folds_;
  opt.loss = learners::CvLoss::kMse;
  opt.rule = rule_;
  opt.seed = seed;
  const auto grid = learners::DefaultPenaltyGrid(x, opt.prep, grid_points_);
  return learners::CrossValidate(x, Rows(target, rows), grid, opt).selected_penalty;
}

VectorXd RidgeLearner::FitPredict(std::span<const Index> train, std::span<const Index> test,
                                  const VectorXd& target, double tuning) const {
  const auto fit = learners::FitRidge(Rows(x_, train), Rows(target, train), tuning);
  return fit.Predict(Rows(x_, test));
}

LogisticRidgeLearner::LogisticRidgeLearner(const MatrixXd& x, int cv_folds, int grid_points,
                                           learners::CvRule rule)
    : x_(x), cv_folds_(cv_folds), grid_points_(grid_points), rule_(rule) {}

double LogisticRidgeLearner::Tune(std::span<const Index> rows, const VectorXd& target,
                                  std::uint64_t seed) const {
  const MatrixXd x = Rows(x_, rows);
  learners::CvOptions opt;
  opt.folds = cv_folds_;
  opt.loss = learners::CvLoss::kLogLoss;
  opt.rule = rule_;
  opt.seed = seed;
  const auto grid = learners::DefaultPenaltyGrid(x, opt.prep, grid_points_);
  return learners::CrossValidate(x, Rows(target, rows), grid, opt).selected_penalty;
}

VectorXd LogisticRidgeLearner::FitPredict(std::span<const Index> train, std::span<const Index> test,
                                          const VectorXd& target, double tuning) const {
  const auto fit = learners::FitLogisticRidge(Rows(x_, train), Rows(target, train), tuning);
  return fit.PredictProbability(Rows(x_, test));
}

PcrLearner::PcrLearner(const MatrixXd& x, int cv_folds, Index max_components, learners::CvRule rule)
    : x_(x), cv_folds_(cv_folds), max_components_(max_components), rule_(rule) {}

double PcrLearner::Tune(std::span<const Index> rows, const VectorXd& target,
                        std::uint64_t seed) const {
  learners::CvOptions opt;
  opt.folds = cv_folds_;
  opt.rule = rule_;
  opt.seed = seed;
  const Index cap = std::min<Index>(max_components_, x_.cols());
  return static_cast<double>(
      learners::CrossValidatePcr(Rows(x_, rows), Rows(target, rows), cap, opt).selected_components);
}

VectorXd PcrLearner::FitPredict(std::span<const Index> train, std::span<const Index> test,
                                const VectorXd& target, double tuning) const {
  const MatrixXd x_train = Rows(x_, train);
  const learners::Preprocessing prep;
  const auto rank = learners::Decompose(learners::ColumnTransform::Fit(x_train, prep).Apply(x_train)).Rank();
  const Index k = std::min<Index>(static_cast<Index>(tuning), rank);
  return learners::FitPcr(x_train, Rows(target, train), k, prep).Predict(Rows(x_, test));
}

FixedLearner::FixedLearner(VectorXd values) : values_(std::move(values)) {}

VectorXd FixedLearner::FitPredict(std::span<const Index>, std::span<const Index> test,
                                  const VectorXd&, double) const {
  return Rows(values_, test);
}

AteEstimate AggregateRepetitions(std::span<const RepetitionEstimate> repetitions) {
  if (repetitions.empty()) throw EstimationError("no repetitions to aggregate");
  std::vector<double> thetas;
  for (const auto& r : repetitions) thetas.push_back(r.estimate);
  AteEstimate out;
  out.estimate = Median(thetas);
  std::vector<double> inflated;
  for (const auto& r : repetitions) {
    const double dev = r.estimate - out.estimate;
    inflated.push_back(std::sqrt(r.se * r.se + dev * dev));
  }
  out.se = Median(inflated);
  out.ci_low = out.estimate - kNormalQuantile975 * out.se;
  out.ci_high = out.estimate + kNormalQuantile975 * out.se;
  if (out.se > 0.0) {
    const boost::math::normal normal;
    out.p_value = 2.0 * boost::math::cdf(boost::math::complement(normal, std::fabs(out.estimate / out.se)));
  } else {
    out.p_value = out.estimate == 0.0 ? 1.0 : 0.0;
  }
  out.repetitions.assign(repetitions.begin(), repetitions.end());
  for (const auto& r : repetitions) {
    out.max_abs_mean_score = std::max(out.max_abs_mean_score, std::fabs(r.mean_score));
  }
  return out;
}

std::vector<int> RepetitionFolds(Index n, const DmlConfig& config, int repetition) {
  const std::uint64_t rep_seed = DeriveSeed(config.seed, static_cast<std::uint64_t>(repetition));
  return learners::AssignFolds(n, config.folds, DeriveSeed(rep_seed, 1));
}

AteEstimate EstimateInteractive(const VectorXd& y, const VectorXd& d, const NuisanceSet& nuisances,
                                const DmlConfig& config) {
  CheckInputs(y, d, config);
  if (!nuisances.outcome_control || !nuisances.outcome_treated || !nuisances.propensity) {
    throw ConfigError("interactive model needs both outcome learners and a propensity learner");
  }
  const Index n = y.size();
  std::vector<Index> all(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
  const auto control = Filter(all, d, 0.0);
  const auto treated = Filter(all, d, 1.0);

  std::vector<RepetitionEstimate> reps(static_cast<std::size_t>(config.repetitions));
  ParallelFor(reps.size(), config.threads, [&](std::size_t r) {
    const int rep = static_cast<int>(r);
    const std::uint64_t rep_seed = DeriveSeed(config.seed, r);
    const double tune_g0 = nuisances.outcome_control->Tune(control, y, DeriveSeed(rep_seed, 2));
    const double tune_g1 = nuisances.outcome_treated->Tune(treated, y, DeriveSeed(rep_seed, 3));
    const double tune_m = nuisances.propensity->Tune(all, d, DeriveSeed(rep_seed, 4));

    VectorXd g0(n), g1(n), m(n);
    for (const auto& fold : MakeFolds(RepetitionFolds(n, config, rep), config.folds)) {
      const auto train0 = Filter(fold.train, d, 0.0);
      const auto train1 = Filter(fold.train, d, 1.0);
      if (train0.empty() || train1.empty()) {
        throw EstimationError("dml: a training fold lacks treated or control units");
      }
      Scatter(&g0, fold.test, nuisances.outcome_control->FitPredict(train0, fold.test, y, tune_g0));
      Scatter(&g1, fold.test, nuisances.outcome_treated->FitPredict(train1, fold.test, y, tune_g1));
      Scatter(&m, fold.test, nuisances.propensity->FitPredict(fold.train, fold.test, d, tune_m));
    }
    const double clipped = ClipPropensity(&m, config.clip);
    if (clipped >= 1.0) {
      throw EstimationError(
          "dml: every propensity lies at the clipping boundary; common support "
          "(0 < Pr(d = 1 | x) < 1) is violated");
    }
    VectorXd psi(n);
    for (Index i = 0; i < n; ++i) {
      psi[i] = g1[i] - g0[i] + d[i] * (y[i] - g1[i]) / m[i] -
               (1.0 - d[i]) * (y[i] - g0[i]) / (1.0 - m[i]);
    }
    const double theta = psi.mean();
    const VectorXd score = psi.array() - theta;
    reps[r] = {theta, std::sqrt(score.squaredNorm() / static_cast<double>(n) / static_cast<double>(n)),
               score.mean(), clipped};
  });
  return Finish(std::move(reps), n, config);
}

AteEstimate EstimatePartiallyLinear(const VectorXd& y, const VectorXd& d,
                                    const NuisanceSet& nuisances, const DmlConfig& config) {
  CheckInputs(y, d, config);
  if (!nuisances.outcome || !nuisances.propensity) {
    throw ConfigError("partially linear model needs an outcome learner and a propensity learner");
  }
  const Index n = y.size();
  std::vector<Index> all(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;

  std::vector<RepetitionEstimate> reps(static_cast<std::size_t>(config.repetitions));
  ParallelFor(reps.size(), config.threads, [&](std::size_t r) {
    const int rep = static_cast<int>(r);
    const std::uint64_t rep_seed = DeriveSeed(config.seed, r);
    const double tune_l = nuisances.outcome->Tune(all, y, DeriveSeed(rep_seed, 2));
    const double tune_m = nuisances.propensity->Tune(all, d, DeriveSeed(rep_seed, 4));
    VectorXd ell(n), m(n);
    for (const auto& fold : MakeFolds(RepetitionFolds(n, config, rep), config.folds)) {
      Scatter(&ell, fold.test, nuisances.outcome->FitPredict(fold.train, fold.test, y, tune_l));
      Scatter(&m, fold.test, nuisances.propensity->FitPredict(fold.train, fold.test, d, tune_m));
    }
    const double clipped = ClipPropensity(&m, config.clip);
    const VectorXd v = d - m;
    const VectorXd u = y - ell;
    const double vv = v.squaredNorm();
    if (!(vv > 1e-10 * static_cast<double>(n))) {
      throw EstimationError("dml: treatment residuals vanish; no identifying variation");
    }
    const double theta = v.dot(u) / vv;
    const VectorXd psi = (u - theta * v).cwiseProduct(v);
    const double jacobian = vv / static_cast<double>(n);
    const double variance = psi.squaredNorm() / static_cast<double>(n) / (jacobian * jacobian);
    reps[r] = {theta, std::sqrt(variance / static_cast<double>(n)), psi.mean(), clipped};
  });
  return Finish(std::move(reps), n, config);
}

namespace {

struct PreparedData {
  data::Dataset sample;
  MatrixXd x;
  VectorXd y;
  bool binary = false;
};

PreparedData Prepare(const data::Dataset& ds, std::span<const std::string> covariates,
                     const std::string& outcome, const DmlConfig& config) {
  const std::vector<std::string> required{outcome};
  const auto rows = data::CompleteRows(ds, required);
  PreparedData p{ds.Subset(rows), {}, {}, false};
  p.x = data::BuildDesignMatrix(p.sample, covariates, false).matrix;
  p.y = p.sample.Numeric(outcome);
  switch (config.outcome_kind) {
    case OutcomeKind::kAuto:
      p.binary = LooksBinary(p.y);
      break;
    case OutcomeKind::kBinary:
      if (!LooksBinary(p.y)) throw ValidationError("outcome '" + outcome + "' is not 0/1");
      p.binary = true;
      break;
    case OutcomeKind::kContinuous:
      break;
  }
  return p;
}

}  // namespace

AteEstimate EstimateAteInteractive(const data::Dataset& ds, std::span<const std::string> covariates,
                                   const std::string& outcome, const DmlConfig& config) {
  const PreparedData p = Prepare(ds, covariates, outcome, config);
  const RidgeLearner ridge(p.x, config.cv_folds, config.grid_points, config.cv_rule);
  const LogisticRidgeLearner logistic(p.x, config.cv_folds, config.grid_points, config.cv_rule);
  const NuisanceLearner* outcome_model = p.binary ? static_cast<const NuisanceLearner*>(&logistic)
                                                  : static_cast<const NuisanceLearner*>(&ridge);
  NuisanceSet set;
  set.outcome_control = outcome_model;
  set.outcome_treated = outcome_model;
  set.propensity = &logistic;
  return EstimateInteractive(p.y, p.sample.treatment(), set, config);
}

AteEstimate EstimateAtePartiallyLinear(const data::Dataset& ds,
                                       std::span<const std::string> covariates,
                                       const std::string& outcome, const DmlConfig& config) {
  const PreparedData p = Prepare(ds, covariates, outcome, config);
  const RidgeLearner ridge(p.x, config.cv_folds, config.grid_points, config.cv_rule);
  const LogisticRidgeLearner logistic(p.x, config.cv_folds, config.grid_points, config.cv_rule);
  NuisanceSet set;
  // l(x) = E[y | x] is a conditional mean (a probability for binary y), so
  // squared-error ridge is used for both outcome kinds.
  set.outcome = &ridge;
  set.propensity = &logistic;
  return EstimatePartiallyLinear(p.y, p.sample.treatment(), set, config);
}

}  // namespace flipdml::dml
