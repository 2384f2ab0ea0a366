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
#include "flipdml/learners.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Cholesky>
#include <Eigen/SVD>

#include "flipdml/errors.h"
#include "flipdml/parallel.h"
#include "flipdml/random.h"

namespace flipdml::learners {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

double Softplus(double eta) {
  return eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
}

double Sigmoid(double eta) {
  if (eta >= 0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

bool IsBinary(const VectorXd& y) {
  for (Index i = 0; i < y.size(); ++i) {
    if (y[i] != 0.0 && y[i] != 1.0) return false;
  }
  return true;
}

bool HasBothClasses(const VectorXd& y, std::span<const Index> rows) {
  bool zero = false, one = false;
  for (Index r : rows) {
    (y[r] == 1.0 ? one : zero) = true;
  }
  return zero && one;
}

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

// Maps coefficients from the transformed scale back to the raw columns.
void Untransform(const ColumnTransform& t, const VectorXd& z_coef, double z_intercept,
                 VectorXd* coef, double* intercept) {
  *coef = z_coef.cwiseQuotient(t.scale);
  *intercept = z_intercept - t.center.dot(*coef);
}

struct FoldSplit {
  std::vector<Index> train;
  std::vector<Index> test;
};

std::vector<FoldSplit> SplitsFromAssignment(const std::vector<int>& fold_of, int folds) {
  std::vector<FoldSplit> splits(static_cast<std::size_t>(folds));
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    for (int f = 0; f < folds; ++f) {
      auto& s = splits[static_cast<std::size_t>(f)];
      (fold_of[i] == f ? s.test : s.train).push_back(static_cast<Index>(i));
    }
  }
  return splits;
}

void Summarize(const std::vector<std::vector<double>>& losses, std::size_t grid_size,
               std::vector<double>* mean, std::vector<double>* se) {
  const double k = static_cast<double>(losses.size());
  mean->assign(grid_size, 0.0);
  se->assign(grid_size, 0.0);
  for (std::size_t g = 0; g < grid_size; ++g) {
    double sum = 0.0;
    for (const auto& fold : losses) sum += fold[g];
    const double m = sum / k;
    double ss = 0.0;
    for (const auto& fold : losses) ss += (fold[g] - m) * (fold[g] - m);
    (*mean)[g] = m;
    (*se)[g] = k > 1 ? std::sqrt(ss / (k - 1.0) / k) : 0.0;
  }
}

}  // namespace

Index SpectralDecomposition::Rank(double relative_tolerance) const {
  if (singular_values.size() == 0) return 0;
  const double cutoff = relative_tolerance * singular_values[0];
  Index rank = 0;
  for (Index j = 0; j < singular_values.size(); ++j) {
    if (singular_values[j] > cutoff && singular_values[j] > 0.0) ++rank;
  }
  return rank;
}

SpectralDecomposition Decompose(const MatrixXd& x) {
  Eigen::BDCSVD<MatrixXd> svd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return {svd.matrixU(), svd.singularValues(), svd.matrixV()};
}

ColumnTransform ColumnTransform::Fit(const MatrixXd& x, const Preprocessing& prep) {
  ColumnTransform t;
  const Index p = x.cols();
  const Index n = x.rows();
  t.center = prep.intercept ? VectorXd(x.colwise().mean().transpose()) : VectorXd::Zero(p);
  t.scale = VectorXd::Ones(p);
  if (prep.standardize && n > 1) {
    for (Index j = 0; j < p; ++j) {
      const double ss = (x.col(j).array() - t.center[j]).square().sum();
      const double sd = std::sqrt(ss / static_cast<double>(n - 1));
      // A constant training column carries no information; leave it unscaled.
      if (sd > 1e-12) t.scale[j] = sd;
    }
  }
  return t;
}

MatrixXd ColumnTransform::Apply(const MatrixXd& x) const {
  return (x.rowwise() - center.transpose()).array().rowwise() / scale.transpose().array();
}

VectorXd RidgeFit::Predict(const MatrixXd& x) const {
  return (x * coefficients).array() + intercept;
}

RidgeFit FitRidge(const SpectralDecomposition& svd, const ColumnTransform& transform,
                  double y_mean, const VectorXd& y_centered, double penalty) {
  if (!(penalty >= 0.0)) throw EstimationError("ridge penalty must be nonnegative");
  const Index p = svd.v.rows();
  if (penalty == 0.0 && svd.Rank() < p) {
    throw EstimationError("design is rank deficient; an unpenalized fit has no unique solution");
  }
  const VectorXd& s = svd.singular_values;
  VectorXd weights(s.size());
  for (Index j = 0; j < s.size(); ++j) {
    const double denom = s[j] * s[j] + penalty;
    weights[j] = denom > 0.0 ? s[j] / denom : 0.0;
  }
  const VectorXd z_coef = svd.v * weights.cwiseProduct(svd.u.transpose() * y_centered);
  RidgeFit fit;
  fit.penalty = penalty;
  fit.transform = transform;
  Untransform(transform, z_coef, y_mean, &fit.coefficients, &fit.intercept);
  return fit;
}

RidgeFit FitRidge(const MatrixXd& x, const VectorXd& y, double penalty, const Preprocessing& prep) {
  if (x.rows() != y.size()) throw EstimationError("ridge: X and y row counts differ");
  if (x.rows() < 2) throw EstimationError("ridge: need at least two observations");
  if (!(penalty >= 0.0)) throw EstimationError("ridge penalty must be nonnegative");
  const ColumnTransform t = ColumnTransform::Fit(x, prep);
  const double y_mean = prep.intercept ? y.mean() : 0.0;
  const VectorXd yc = y.array() - y_mean;
  return FitRidge(Decompose(t.Apply(x)), t, y_mean, yc, penalty);
}

VectorXd PcrFit::Predict(const MatrixXd& x) const {
  return (x * coefficients).array() + intercept;
}

PcrFit FitPcr(const MatrixXd& x, const VectorXd& y, Index components, const Preprocessing& prep) {
  if (x.rows() != y.size()) throw EstimationError("pcr: X and y row counts differ");
  if (x.rows() < 2) throw EstimationError("pcr: need at least two observations");
  const ColumnTransform t = ColumnTransform::Fit(x, prep);
  const auto svd = Decompose(t.Apply(x));
  const Index rank = svd.Rank();
  if (components < 0 || components > rank) {
    throw EstimationError("pcr: " + std::to_string(components) +
                          " components requested but rank(X) = " + std::to_string(rank));
  }
  const double y_mean = prep.intercept ? y.mean() : 0.0;
  const VectorXd yc = y.array() - y_mean;
  VectorXd z_coef = VectorXd::Zero(x.cols());
  if (components > 0) {
    const auto k = components;
    const VectorXd scores = svd.u.leftCols(k).transpose() * yc;
    z_coef = svd.v.leftCols(k) * scores.cwiseQuotient(svd.singular_values.head(k));
  }
  PcrFit fit;
  fit.components = components;
  fit.transform = t;
  Untransform(t, z_coef, y_mean, &fit.coefficients, &fit.intercept);
  return fit;
}

VectorXd LogisticRidgeFit::PredictLink(const MatrixXd& x) const {
  return (x * coefficients).array() + intercept;
}

VectorXd LogisticRidgeFit::PredictProbability(const MatrixXd& x) const {
  return PredictLink(x).unaryExpr([](double eta) { return Sigmoid(eta); });
}

LogisticRidgeFit FitLogisticRidgeTransformed(const MatrixXd& z, const VectorXd& y, double penalty,
                                             const LogisticOptions& options,
                                             const VectorXd* warm_start) {
  const Index n = z.rows();
  const Index p = z.cols();
  const bool with_intercept = options.prep.intercept;
  const Index offset = with_intercept ? 1 : 0;
  const Index dim = p + offset;

  // theta = (intercept?, slopes) on the transformed scale.
  VectorXd theta = VectorXd::Zero(dim);
  if (warm_start && warm_start->size() == dim) {
    theta = *warm_start;
  } else if (with_intercept) {
    const double ybar = y.mean();
    theta[0] = std::log(ybar / (1.0 - ybar));
  }

  auto link = [&](const VectorXd& th) -> VectorXd {
    VectorXd eta = z * th.tail(p);
    if (with_intercept) eta.array() += th[0];
    return eta;
  };
  auto objective = [&](const VectorXd& eta, const VectorXd& th) {
    double f = 0.0;
    for (Index i = 0; i < n; ++i) f += Softplus(eta[i]) - y[i] * eta[i];
    return f + 0.5 * penalty * th.tail(p).squaredNorm();
  };

  LogisticRidgeFit fit;
  fit.penalty = penalty;
  VectorXd eta = link(theta);
  double f = objective(eta, theta);
  fit.objective_trace.push_back(f);

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    VectorXd prob = eta.unaryExpr([](double e) { return Sigmoid(e); });
    VectorXd w = prob.cwiseProduct(VectorXd::Ones(n) - prob);
    const VectorXd resid = prob - y;

    VectorXd grad(dim);
    if (with_intercept) grad[0] = resid.sum();
    grad.tail(p) = z.transpose() * resid + penalty * theta.tail(p);
    fit.gradient_norm = grad.norm();
    if (fit.gradient_norm < options.tolerance) {
      fit.converged = true;
      break;
    }

    MatrixXd hess(dim, dim);
    const MatrixXd wz = z.array().colwise() * w.array();
    hess.bottomRightCorner(p, p) = z.transpose() * wz;
    hess.bottomRightCorner(p, p).diagonal().array() += penalty;
    if (with_intercept) {
      hess(0, 0) = w.sum();
      const VectorXd cross = wz.colwise().sum().transpose();
      hess.block(1, 0, p, 1) = cross;
      hess.block(0, 1, 1, p) = cross.transpose();
    }
    const VectorXd step = hess.ldlt().solve(grad);
    // Below this decrement the objective change is lost in rounding, and the
    // quadratic model is exact enough to take the full step.
    const bool tiny = grad.dot(step) < 1e-12 * (1.0 + std::fabs(f));

    double scale = 1.0;
    bool accepted = false;
    for (int halving = 0; halving < 40; ++halving) {
      const VectorXd candidate = theta - scale * step;
      const VectorXd eta_c = link(candidate);
      const double f_c = objective(eta_c, candidate);
      if (f_c <= f || tiny) {
        theta = candidate;
        eta = eta_c;
        f = f_c;
        accepted = true;
        break;
      }
      scale *= 0.5;
    }
    fit.iterations = iter + 1;
    if (!accepted) break;  // no descent possible at machine precision
    fit.objective_trace.push_back(f);
  }
  if (!fit.converged) {
    // Final gradient check after the last accepted step.
    const VectorXd prob = eta.unaryExpr([](double e) { return Sigmoid(e); });
    const VectorXd resid = prob - y;
    VectorXd grad(dim);
    if (with_intercept) grad[0] = resid.sum();
    grad.tail(p) = z.transpose() * resid + penalty * theta.tail(p);
    fit.gradient_norm = grad.norm();
    fit.converged = fit.gradient_norm < options.tolerance;
  }
  fit.intercept = with_intercept ? theta[0] : 0.0;
  fit.coefficients = theta.tail(p);
  return fit;
}

LogisticRidgeFit FitLogisticRidge(const MatrixXd& x, const VectorXd& y, double penalty,
                                  const LogisticOptions& options) {
  if (x.rows() != y.size()) throw EstimationError("logistic: X and y row counts differ");
  if (!(penalty > 0.0)) throw EstimationError("logistic ridge penalty must be positive");
  if (!IsBinary(y)) throw EstimationError("logistic: response must be coded 0/1");
  const double ybar = y.mean();
  if (ybar == 0.0 || ybar == 1.0) {
    throw EstimationError("logistic: response has a single class");
  }
  const ColumnTransform t = ColumnTransform::Fit(x, options.prep);
  LogisticRidgeFit fit = FitLogisticRidgeTransformed(t.Apply(x), y, penalty, options, nullptr);
  VectorXd coef;
  double intercept = 0.0;
  Untransform(t, fit.coefficients, fit.intercept, &coef, &intercept);
  fit.coefficients = std::move(coef);
  fit.intercept = intercept;
  fit.transform = t;
  return fit;
}

double PenaltyScale(const MatrixXd& x, const Preprocessing& prep) {
  if (x.cols() == 0) return 1.0;
  const MatrixXd z = ColumnTransform::Fit(x, prep).Apply(x);
  const double scale = z.squaredNorm() / static_cast<double>(x.cols());
  return scale > 0.0 ? scale : 1.0;
}

std::vector<double> DefaultPenaltyGrid(const MatrixXd& x, const Preprocessing& prep, int points) {
  if (points < 1) throw ConfigError("penalty grid needs at least one point");
  const double scale = PenaltyScale(x, prep);
  std::vector<double> grid(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i) {
    const double exponent = points == 1 ? 0.0 : -4.0 + 8.0 * i / (points - 1.0);
    grid[static_cast<std::size_t>(i)] = std::pow(10.0, exponent) * scale;
  }
  return grid;
}

std::vector<int> AssignFolds(Index n, int k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("cross-validation needs at least 2 folds");
  if (n < k) throw EstimationError("fewer observations than folds");
  Rng rng(seed);
  const auto perm = RandomPermutation(n, rng);
  std::vector<int> fold_of(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    fold_of[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = static_cast<int>(i % k);
  }
  return fold_of;
}

CvResult CrossValidate(const MatrixXd& x, const VectorXd& y, std::span<const double> grid,
                       const CvOptions& options) {
  if (grid.empty()) throw ConfigError("cross-validation grid is empty");
  if (options.folds < 2) throw ConfigError("cross-validation needs at least 2 folds");
  if (x.rows() != y.size()) throw EstimationError("cross-validation: X and y row counts differ");
  const bool logloss = options.loss == CvLoss::kLogLoss;
  if (logloss && !IsBinary(y)) throw EstimationError("log loss needs a 0/1 response");
  for (double g : grid) {
    if (!(g >= 0.0) || (logloss && g <= 0.0)) {
      throw ConfigError("cross-validation grid values must be positive");
    }
  }

  CvResult result;
  result.grid.assign(grid.begin(), grid.end());
  const int k = options.folds;

  std::vector<FoldSplit> splits;
  for (int attempt = 0;; ++attempt) {
    result.fold_of = AssignFolds(x.rows(), k, DeriveSeed(options.seed, static_cast<std::uint64_t>(attempt)));
    splits = SplitsFromAssignment(result.fold_of, k);
    if (!logloss) break;
    const bool ok = std::all_of(splits.begin(), splits.end(), [&](const FoldSplit& s) {
      return HasBothClasses(y, s.train) && HasBothClasses(y, s.test);
    });
    if (ok) break;
    if (!options.refold_single_class || attempt >= 19) {
      throw EstimationError("cross-validation fold holds a single class");
    }
  }

  // Penalties are visited from largest to smallest so logistic fits can warm
  // start along the path.
  std::vector<std::size_t> order(grid.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return grid[a] > grid[b]; });

  std::vector<std::vector<double>> losses(static_cast<std::size_t>(k),
                                          std::vector<double>(grid.size()));
  ParallelFor(static_cast<std::size_t>(k), options.threads, [&](std::size_t f) {
    const auto& split = splits[f];
    const MatrixXd x_train = Rows(x, split.train);
    const VectorXd y_train = Rows(y, split.train);
    const MatrixXd x_test = Rows(x, split.test);
    const VectorXd y_test = Rows(y, split.test);
    const ColumnTransform t = ColumnTransform::Fit(x_train, options.prep);
    const MatrixXd z_train = t.Apply(x_train);
    const MatrixXd z_test = t.Apply(x_test);
    auto& fold_loss = losses[f];
    if (!logloss) {
      const double y_mean = options.prep.intercept ? y_train.mean() : 0.0;
      const VectorXd yc = y_train.array() - y_mean;
      const auto svd = Decompose(z_train);
      const VectorXd uty = svd.u.transpose() * yc;
      const VectorXd& s = svd.singular_values;
      for (std::size_t g = 0; g < grid.size(); ++g) {
        VectorXd w(s.size());
        for (Index j = 0; j < s.size(); ++j) {
          const double denom = s[j] * s[j] + grid[g];
          w[j] = denom > 0.0 ? s[j] / denom : 0.0;
        }
        const VectorXd coef = svd.v * w.cwiseProduct(uty);
        const VectorXd pred = (z_test * coef).array() + y_mean;
        fold_loss[g] = (y_test - pred).squaredNorm() / static_cast<double>(y_test.size());
      }
    } else {
      LogisticOptions lopt;
      lopt.prep = options.prep;
      VectorXd warm;
      for (std::size_t g : order) {
        const auto fit = FitLogisticRidgeTransformed(z_train, y_train, grid[g], lopt,
                                                     warm.size() ? &warm : nullptr);
        warm.resize(fit.coefficients.size() + (lopt.prep.intercept ? 1 : 0));
        if (lopt.prep.intercept) {
          warm[0] = fit.intercept;
          warm.tail(fit.coefficients.size()) = fit.coefficients;
        } else {
          warm = fit.coefficients;
        }
        double loss = 0.0;
        const VectorXd eta = (z_test * fit.coefficients).array() + fit.intercept;
        for (Index i = 0; i < eta.size(); ++i) {
          // -log p(y | eta) = softplus(eta) - y * eta, exact without clipping.
          loss += Softplus(eta[i]) - y_test[i] * eta[i];
        }
        fold_loss[g] = loss / static_cast<double>(eta.size());
      }
    }
  });

  Summarize(losses, grid.size(), &result.mean_loss, &result.se_loss);

  std::size_t best = order.front();
  for (std::size_t g : order) {
    // Strict improvement only: among equal losses the larger penalty stays.
    if (result.mean_loss[g] < result.mean_loss[best]) best = g;
  }
  if (options.rule == CvRule::kOneStandardError) {
    const double bound = result.mean_loss[best] + result.se_loss[best];
    for (std::size_t g : order) {
      if (result.mean_loss[g] <= bound) {
        best = g;
        break;
      }
    }
  }
  result.selected_index = best;
  result.selected_penalty = grid[best];
  return result;
}

PcrCvResult CrossValidatePcr(const MatrixXd& x, const VectorXd& y, Index max_components,
                             const CvOptions& options) {
  if (options.folds < 2) throw ConfigError("cross-validation needs at least 2 folds");
  if (max_components < 0) throw ConfigError("max_components must be nonnegative");
  const int k = options.folds;
  const auto fold_of = AssignFolds(x.rows(), k, DeriveSeed(options.seed, 0));
  const auto splits = SplitsFromAssignment(fold_of, k);
  const auto count = static_cast<std::size_t>(max_components + 1);
  std::vector<std::vector<double>> losses(static_cast<std::size_t>(k), std::vector<double>(count));
  ParallelFor(static_cast<std::size_t>(k), options.threads, [&](std::size_t f) {
    const auto& split = splits[f];
    const MatrixXd x_train = Rows(x, split.train);
    const VectorXd y_train = Rows(y, split.train);
    const VectorXd y_test = Rows(y, split.test);
    const ColumnTransform t = ColumnTransform::Fit(x_train, options.prep);
    const MatrixXd z_test = t.Apply(Rows(x, split.test));
    const auto svd = Decompose(t.Apply(x_train));
    const Index rank = svd.Rank();
    const double y_mean = options.prep.intercept ? y_train.mean() : 0.0;
    const VectorXd scores = svd.u.transpose() * (y_train.array() - y_mean).matrix();
    VectorXd pred = VectorXd::Constant(y_test.size(), y_mean);
    for (std::size_t c = 0; c < count; ++c) {
      const auto j = static_cast<Index>(c) - 1;
      if (j >= rank) {
        losses[f][c] = std::numeric_limits<double>::infinity();
        continue;
      }
      if (j >= 0) {
        pred += (z_test * svd.v.col(j)) * (scores[j] / svd.singular_values[j]);
      }
      losses[f][c] = (y_test - pred).squaredNorm() / static_cast<double>(y_test.size());
    }
  });
  PcrCvResult result;
  Summarize(losses, count, &result.mean_loss, &result.se_loss);
  std::size_t best = 0;
  for (std::size_t c = 1; c < count; ++c) {
    if (result.mean_loss[c] < result.mean_loss[best]) best = c;
  }
  if (options.rule == CvRule::kOneStandardError) {
    const double bound = result.mean_loss[best] + result.se_loss[best];
    for (std::size_t c = 0; c <= best; ++c) {
      if (result.mean_loss[c] <= bound) {
        best = c;
        break;
      }
    }
  }
  result.selected_components = static_cast<Index>(best);
  return result;
}

}  // namespace flipdml::learners
