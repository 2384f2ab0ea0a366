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

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "flipdml/errors.h"

namespace flipdml::inference {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

double TwoSidedT(double t, double df) {
  if (!std::isfinite(t)) return 0.0;
  boost::math::students_t dist(df);
  return std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t))));
}

double SampleVariance(std::span<const double> v, double mean) {
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return ss / static_cast<double>(v.size() - 1);
}

double Mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

void AppendColumn(data::DesignMatrix* design, const VectorXd& col, const std::string& label,
                  const std::string& source) {
  const Index p = design->matrix.cols();
  design->matrix.conservativeResize(col.size(), p + 1);
  design->matrix.col(p) = col;
  design->labels.push_back(label);
  design->encoding.push_back({source, ""});
}

}  // namespace

const char* OlsVariantName(OlsVariant v) {
  switch (v) {
    case OlsVariant::kAllItems:
      return "ols1";
    case OlsVariant::kScaleMeans:
      return "ols2";
    case OlsVariant::kPrincipalComponents:
      return "ols3";
  }
  return "ols";
}

OlsResult FitOlsRobust(const MatrixXd& covariates, const VectorXd& d, const VectorXd& y, HcType hc,
                       std::span<const std::string> covariate_labels) {
  const Index n = y.size();
  if (d.size() != n || covariates.rows() != n) {
    throw EstimationError("ols: inconsistent row counts");
  }
  const Index k = covariates.cols() + 2;
  if (k >= n) {
    throw EstimationError("ols: " + std::to_string(k) + " parameters for " + std::to_string(n) +
                          " observations; use the DML estimators for p >= n");
  }
  MatrixXd z(n, k);
  z.col(0).setOnes();
  z.col(1) = d;
  z.rightCols(covariates.cols()) = covariates;

  Eigen::ColPivHouseholderQR<MatrixXd> pivoted(z);
  if (pivoted.rank() < k) {
    throw EstimationError("ols: design matrix is rank deficient");
  }
  Eigen::HouseholderQR<MatrixXd> qr(z);
  const MatrixXd r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  const VectorXd coef = qr.solve(y);
  const MatrixXd r_inv =
      r.triangularView<Eigen::Upper>().solve(MatrixXd::Identity(k, k));
  const MatrixXd bread = r_inv * r_inv.transpose();  // (Z'Z)^-1

  OlsResult out;
  out.n = n;
  out.parameters = k;
  out.coefficients = coef;
  out.residuals = y - z * coef;

  VectorXd weight = out.residuals.array().square();
  if (hc == HcType::kHC3) {
    for (Index i = 0; i < n; ++i) {
      const double h = z.row(i) * bread * z.row(i).transpose();
      weight[i] /= (1.0 - h) * (1.0 - h);
    }
  }
  const MatrixXd meat = z.transpose() * (z.array().colwise() * weight.array()).matrix();
  out.covariance = bread * meat * bread;
  if (hc == HcType::kHC1) out.covariance *= static_cast<double>(n) / static_cast<double>(n - k);
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose());

  out.robust_se = out.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
  out.p_values.resize(k);
  const double df = static_cast<double>(n - k);
  for (Index j = 0; j < k; ++j) {
    out.p_values[j] = out.robust_se[j] > 0.0 ? TwoSidedT(coef[j] / out.robust_se[j], df)
                                             : (coef[j] == 0.0 ? 1.0 : 0.0);
  }
  out.effect = coef[1];
  out.effect_se = out.robust_se[1];
  out.effect_p = out.p_values[1];
  out.labels = {"(intercept)", "d"};
  for (Index j = 0; j < covariates.cols(); ++j) {
    out.labels.push_back(static_cast<std::size_t>(j) < covariate_labels.size()
                             ? covariate_labels[static_cast<std::size_t>(j)]
                             : "x" + std::to_string(j + 1));
  }
  return out;
}

VectorXd FirstPrincipalComponent(const MatrixXd& items) {
  const Index n = items.rows();
  if (n < 2 || items.cols() < 1) throw EstimationError("pca: need at least two rows");
  MatrixXd z = items.rowwise() - items.colwise().mean();
  for (Index j = 0; j < z.cols(); ++j) {
    const double sd = std::sqrt(z.col(j).squaredNorm() / static_cast<double>(n - 1));
    if (!(sd > 0.0)) throw EstimationError("pca: item column " + std::to_string(j + 1) + " is constant");
    z.col(j) /= sd;
  }
  const MatrixXd corr = z.transpose() * z / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(corr);
  VectorXd loading = eig.eigenvectors().col(corr.cols() - 1);
  if (loading[0] < 0.0) loading = -loading;
  return z * loading;
}

data::DesignMatrix BuildOlsDesign(const data::Dataset& ds, std::span<const std::string> covariates,
                                  std::span<const data::ScaleDefinition> scales,
                                  OlsVariant variant) {
  if (variant == OlsVariant::kAllItems) {
    std::vector<std::string> columns(covariates.begin(), covariates.end());
    for (const auto& s : scales) columns.insert(columns.end(), s.items.begin(), s.items.end());
    return data::BuildDesignMatrix(ds, columns, false);
  }
  data::DesignMatrix design = data::BuildDesignMatrix(ds, covariates, false);
  design.matrix.conservativeResize(ds.rows(), design.matrix.cols());
  for (const auto& s : scales) {
    const MatrixXd block = ds.ItemMatrix(s);
    if (!s.reducible) {
      for (std::size_t j = 0; j < s.items.size(); ++j) {
        AppendColumn(&design, block.col(static_cast<Index>(j)), s.items[j], s.items[j]);
      }
      continue;
    }
    if (variant == OlsVariant::kScaleMeans) {
      AppendColumn(&design, block.rowwise().mean(), "mean:" + s.name, s.name);
    } else {
      AppendColumn(&design, FirstPrincipalComponent(block), "pc1:" + s.name, s.name);
    }
  }
  return design;
}

OlsResult FitOlsRobust(const data::Dataset& ds, std::span<const std::string> covariates,
                       const std::string& outcome, OlsVariant variant,
                       std::span<const data::ScaleDefinition> scales, HcType hc) {
  const std::vector<std::string> required{outcome};
  const auto rows = data::CompleteRows(ds, required);
  const data::Dataset sample = ds.Subset(rows);
  const auto design = BuildOlsDesign(sample, covariates, scales, variant);
  return FitOlsRobust(design.matrix, sample.treatment(), sample.Numeric(outcome), hc,
                      design.labels);
}

MeanTestResult WelchMeanTest(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) {
    throw EstimationError("welch test: each group needs at least two observations");
  }
  MeanTestResult r;
  r.mean_a = Mean(a);
  r.mean_b = Mean(b);
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double va = SampleVariance(a, r.mean_a) / na;
  const double vb = SampleVariance(b, r.mean_b) / nb;
  const double se2 = va + vb;
  const double diff = r.mean_a - r.mean_b;
  if (se2 <= 0.0) {
    if (diff == 0.0) throw EstimationError("welch test: both groups are constant and equal");
    r.t = diff > 0 ? std::numeric_limits<double>::infinity()
                   : -std::numeric_limits<double>::infinity();
    r.df = na + nb - 2.0;
    r.p = 0.0;
    return r;
  }
  r.t = diff / std::sqrt(se2);
  r.df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
  r.p = TwoSidedT(r.t, r.df);
  return r;
}

ChiSquareResult ChiSquareHomogeneity(std::span<const std::string> values, const VectorXd& group) {
  if (static_cast<Index>(values.size()) != group.size()) {
    throw EstimationError("chi-square: inconsistent lengths");
  }
  std::map<std::string, std::array<double, 2>> counts;
  std::array<double, 2> totals{0.0, 0.0};
  for (std::size_t i = 0; i < values.size(); ++i) {
    const int g = group[static_cast<Index>(i)] == 1.0 ? 1 : 0;
    counts[values[i]][static_cast<std::size_t>(g)] += 1.0;
    totals[static_cast<std::size_t>(g)] += 1.0;
  }
  if (totals[0] == 0.0 || totals[1] == 0.0) {
    throw EstimationError("chi-square: both groups must be non-empty");
  }
  ChiSquareResult r;
  const double n = totals[0] + totals[1];
  for (const auto& [level, c] : counts) {
    r.levels.push_back(level);
    r.share_a.push_back(c[0] / totals[0]);
    r.share_b.push_back(c[1] / totals[1]);
    const double level_total = c[0] + c[1];
    for (std::size_t g = 0; g < 2; ++g) {
      const double expected = level_total * totals[g] / n;
      r.statistic += (c[g] - expected) * (c[g] - expected) / expected;
    }
  }
  r.df = static_cast<double>(counts.size()) - 1.0;
  if (r.df < 1.0) {
    r.statistic = 0.0;
    r.p = 1.0;
    return r;
  }
  boost::math::chi_squared dist(r.df);
  r.p = boost::math::cdf(boost::math::complement(dist, r.statistic));
  return r;
}

DifferenceInMeans NaiveDifference(const VectorXd& y, const VectorXd& d) {
  double s1 = 0, s0 = 0, n1 = 0, n0 = 0;
  for (Index i = 0; i < y.size(); ++i) {
    if (d[i] == 1.0) {
      s1 += y[i];
      n1 += 1;
    } else {
      s0 += y[i];
      n0 += 1;
    }
  }
  if (n1 < 2 || n0 < 2) throw EstimationError("difference in means: need two units per group");
  const double m1 = s1 / n1, m0 = s0 / n0;
  double ss1 = 0, ss0 = 0;
  for (Index i = 0; i < y.size(); ++i) {
    if (d[i] == 1.0) {
      ss1 += (y[i] - m1) * (y[i] - m1);
    } else {
      ss0 += (y[i] - m0) * (y[i] - m0);
    }
  }
  return {m1 - m0, std::sqrt(ss1 / (n1 - 1) / n1 + ss0 / (n0 - 1) / n0)};
}

}  // namespace flipdml::inference
