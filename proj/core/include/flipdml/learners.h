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
// Penalized prediction: ridge regression through the singular value
// decomposition, principal component regression, L2-penalized logistic
// regression, and K-fold cross-validation over a penalty grid.
//
// Penalties act on the sum-of-squares scale: ridge minimizes
// ||y - b0 - X b||^2 + penalty * ||b||^2 and the logistic fit minimizes
// -loglik + penalty / 2 * ||b||^2. The intercept is never penalized.

#ifndef FLIPDML_LEARNERS_H_
#define FLIPDML_LEARNERS_H_

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace flipdml::learners {

// Thin SVD X = U diag(s) V^T with s sorted descending.
struct SpectralDecomposition {
  Eigen::MatrixXd u;
  Eigen::VectorXd singular_values;
  Eigen::MatrixXd v;

  // Count of singular values above tolerance * s_max (and above zero).
  Eigen::Index Rank(double relative_tolerance = 1e-10) const;
};

SpectralDecomposition Decompose(const Eigen::MatrixXd& x);

struct Preprocessing {
  bool intercept = true;    // center X and y before fitting
  bool standardize = true;  // scale columns to unit sample variance
};

// Column centering/scaling applied before a fit; identity when disabled.
struct ColumnTransform {
  Eigen::VectorXd center;
  Eigen::VectorXd scale;

  static ColumnTransform Fit(const Eigen::MatrixXd& x, const Preprocessing& prep);
  Eigen::MatrixXd Apply(const Eigen::MatrixXd& x) const;
};

struct RidgeFit {
  Eigen::VectorXd coefficients;  // original column scale
  double intercept = 0.0;
  double penalty = 0.0;
  ColumnTransform transform;

  Eigen::VectorXd Predict(const Eigen::MatrixXd& x) const;
};

// Errors: penalty < 0, n < 2, or penalty == 0 with rank-deficient X.
RidgeFit FitRidge(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double penalty,
                  const Preprocessing& prep = {});

// Same fit from a precomputed decomposition of the transformed design.
RidgeFit FitRidge(const SpectralDecomposition& svd, const ColumnTransform& transform,
                  double y_mean, const Eigen::VectorXd& y_centered, double penalty);

struct PcrFit {
  Eigen::VectorXd coefficients;
  double intercept = 0.0;
  Eigen::Index components = 0;
  ColumnTransform transform;

  Eigen::VectorXd Predict(const Eigen::MatrixXd& x) const;
};

// Regression on the first `components` principal directions. Errors when
// components is negative or exceeds rank(X).
PcrFit FitPcr(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, Eigen::Index components,
              const Preprocessing& prep = {});

struct LogisticRidgeFit {
  Eigen::VectorXd coefficients;
  double intercept = 0.0;
  double penalty = 0.0;
  bool converged = false;
  int iterations = 0;
  double gradient_norm = 0.0;
  std::vector<double> objective_trace;  // one entry per accepted iterate
  ColumnTransform transform;

  Eigen::VectorXd PredictProbability(const Eigen::MatrixXd& x) const;
  Eigen::VectorXd PredictLink(const Eigen::MatrixXd& x) const;
};

struct LogisticOptions {
  int max_iterations = 100;
  double tolerance = 1e-8;  // on the gradient norm
  Preprocessing prep;
};

// Penalized Newton (IRLS) with step halving. Errors when y is not 0/1,
// holds a single class, or penalty <= 0. Non-convergence is reported through
// `converged`, never silently.
LogisticRidgeFit FitLogisticRidge(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                  double penalty, const LogisticOptions& options = {});

// Fit on already-transformed columns, optionally warm-started from
// (intercept, coefficients) on the transformed scale.
LogisticRidgeFit FitLogisticRidgeTransformed(const Eigen::MatrixXd& z, const Eigen::VectorXd& y,
                                             double penalty, const LogisticOptions& options,
                                             const Eigen::VectorXd* warm_start);

// Sum-of-squares penalty scale of a design: trace(Z^T Z) / p after
// preprocessing (n - 1 for standardized columns).
double PenaltyScale(const Eigen::MatrixXd& x, const Preprocessing& prep);

// `points` values log-spaced over [1e-4, 1e4] * PenaltyScale, ascending.
std::vector<double> DefaultPenaltyGrid(const Eigen::MatrixXd& x, const Preprocessing& prep,
                                       int points = 50);

enum class CvLoss { kMse, kLogLoss };

// kMinimum picks the smallest mean held-out loss (exact ties go to the larger
// penalty); kOneStandardError picks the largest penalty whose mean loss is
// within one standard error of that minimum.
enum class CvRule { kMinimum, kOneStandardError };

struct CvOptions {
  int folds = 10;
  CvLoss loss = CvLoss::kMse;
  CvRule rule = CvRule::kOneStandardError;
  std::uint64_t seed = 0;
  // Under kLogLoss, redraw the partition when a fold loses a class; when
  // false (or after 20 redraws) that is an EstimationError.
  bool refold_single_class = true;
  int threads = 1;
  Preprocessing prep;
};

struct CvResult {
  double selected_penalty = 0.0;
  std::size_t selected_index = 0;
  std::vector<double> grid;
  std::vector<double> mean_loss;
  std::vector<double> se_loss;
  std::vector<int> fold_of;  // held-out fold of every observation
};

// Random balanced partition of n observations into k folds.
std::vector<int> AssignFolds(Eigen::Index n, int k, std::uint64_t seed);

// Ridge (kMse) or logistic ridge (kLogLoss) over `grid`. Deterministic given
// options.seed, independent of options.threads.
CvResult CrossValidate(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                       std::span<const double> grid, const CvOptions& options);

struct PcrCvResult {
  Eigen::Index selected_components = 0;
  std::vector<double> mean_loss;  // indexed by component count
  std::vector<double> se_loss;
};

// Chooses the PCR component count in [0, max_components] by held-out MSE.
// Ties and the one-standard-error rule favour fewer components.
PcrCvResult CrossValidatePcr(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                             Eigen::Index max_components, const CvOptions& options);

}  // namespace flipdml::learners

#endif  // FLIPDML_LEARNERS_H_
