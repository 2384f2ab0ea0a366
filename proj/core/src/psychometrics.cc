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
#include "flipdml/psychometrics.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/tools/minima.hpp>

#include "flipdml/bivariate_normal.h"
#include "flipdml/errors.h"
#include "flipdml/parallel.h"
#include "flipdml/random.h"

namespace flipdml::psych {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kInf = std::numeric_limits<double>::infinity();

double Pearson(const VectorXd& a, const VectorXd& b) {
  const VectorXd ca = a.array() - a.mean();
  const VectorXd cb = b.array() - b.mean();
  const double denom = std::sqrt(ca.squaredNorm() * cb.squaredNorm());
  if (!(denom > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  return ca.dot(cb) / denom;
}

// ---------------------------------------------------------------------------
// Quasi-Newton minimizer (BFGS with Armijo backtracking).

struct MinimizeResult {
  VectorXd x;
  double value = kInf;
  double gradient_norm = kInf;
  int iterations = 0;
};

template <typename Objective>
MinimizeResult MinimizeBfgs(const Objective& objective, VectorXd x, int max_iterations,
                            double gradient_tolerance) {
  const Index dim = x.size();
  VectorXd grad(dim);
  double value = objective(x, &grad);
  MatrixXd inv_hessian = MatrixXd::Identity(dim, dim);
  MinimizeResult result;
  int iter = 0;
  for (; iter < max_iterations; ++iter) {
    if (grad.lpNorm<Eigen::Infinity>() < gradient_tolerance) break;
    VectorXd direction = -inv_hessian * grad;
    double slope = grad.dot(direction);
    if (!(slope < 0.0)) {
      inv_hessian.setIdentity();
      direction = -grad;
      slope = -grad.squaredNorm();
    }
    double step = 1.0;
    VectorXd candidate(dim), candidate_grad(dim);
    double candidate_value = kInf;
    bool accepted = false;
    for (int k = 0; k < 60; ++k) {
      candidate = x + step * direction;
      candidate_value = objective(candidate, &candidate_grad);
      if (std::isfinite(candidate_value) && candidate_value <= value + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    const VectorXd s = candidate - x;
    const VectorXd y = candidate_grad - grad;
    const double sy = s.dot(y);
    if (sy > 1e-14) {
      const double rho = 1.0 / sy;
      const MatrixXd eye = MatrixXd::Identity(dim, dim);
      inv_hessian = (eye - rho * s * y.transpose()) * inv_hessian * (eye - rho * y * s.transpose()) +
                    rho * s * s.transpose();
    }
    const double change = value - candidate_value;
    x = candidate;
    grad = candidate_grad;
    value = candidate_value;
    if (change < 1e-16 * (1.0 + std::fabs(value)) && s.lpNorm<Eigen::Infinity>() < 1e-12) break;
  }
  result.x = std::move(x);
  result.value = value;
  result.gradient_norm = grad.lpNorm<Eigen::Infinity>();
  result.iterations = iter;
  return result;
}

// ---------------------------------------------------------------------------
// One-factor ML discrepancy.

struct CfaProblem {
  MatrixXd s;  // covariance on the working scale
  double log_det_s = 0.0;
  Index q = 0;
  bool tau = false;

  Index Dimension() const { return (tau ? 1 : q) + q; }

  void Unpack(const VectorXd& theta, VectorXd* loadings, VectorXd* psi) const {
    if (tau) {
      *loadings = VectorXd::Constant(q, theta[0]);
    } else {
      *loadings = theta.head(q);
    }
    *psi = kMinUniqueness + theta.tail(q).array().exp();
  }

  double operator()(const VectorXd& theta, VectorXd* grad) const {
    VectorXd l, psi;
    Unpack(theta, &l, &psi);
    MatrixXd sigma = l * l.transpose();
    sigma.diagonal() += psi;
    Eigen::LLT<MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success) return kInf;
    const MatrixXd sigma_inv = llt.solve(MatrixXd::Identity(q, q));
    double log_det = 0.0;
    for (Index j = 0; j < q; ++j) log_det += 2.0 * std::log(llt.matrixL()(j, j));
    const double f = log_det + (s.cwiseProduct(sigma_inv)).sum() - log_det_s - static_cast<double>(q);
    if (grad) {
      const MatrixXd g = sigma_inv - sigma_inv * s * sigma_inv;
      const VectorXd gl = 2.0 * g * l;
      grad->resize(Dimension());
      if (tau) {
        (*grad)[0] = gl.sum();
      } else {
        grad->head(q) = gl;
      }
      grad->tail(q) = g.diagonal().cwiseProduct((psi.array() - kMinUniqueness).matrix());
    }
    return f;
  }
};

}  // namespace

// ---------------------------------------------------------------------------

ItemBlock::ItemBlock(MatrixXd responses, std::vector<std::string> labels)
    : responses_(std::move(responses)), labels_(std::move(labels)) {
  if (responses_.cols() < 2) throw ValidationError("an item block needs at least 2 items");
  if (responses_.rows() < 1) throw ValidationError("an item block needs at least one row");
  for (Index i = 0; i < responses_.rows(); ++i) {
    for (Index j = 0; j < responses_.cols(); ++j) {
      const double v = responses_(i, j);
      if (!(v == std::round(v) && v >= data::kLikertMin && v <= data::kLikertMax)) {
        throw ValidationError("item block value out of Likert range at row " +
                              std::to_string(i + 1) + ", item " + std::to_string(j + 1));
      }
    }
  }
  if (labels_.empty()) {
    for (Index j = 0; j < responses_.cols(); ++j) labels_.push_back(std::to_string(j + 1));
  }
  if (static_cast<Index>(labels_.size()) != responses_.cols()) {
    throw ValidationError("item labels do not match the item count");
  }
}

ItemBlock ItemBlock::FromDataset(const data::Dataset& ds, const data::ScaleDefinition& scale) {
  return ItemBlock(ds.ItemMatrix(scale), scale.items);
}

ItemBlock ItemBlock::Select(const std::vector<Index>& columns) const {
  MatrixXd sub(responses_.rows(), static_cast<Index>(columns.size()));
  std::vector<std::string> labels;
  for (std::size_t k = 0; k < columns.size(); ++k) {
    sub.col(static_cast<Index>(k)) = responses_.col(columns[k]);
    labels.push_back(labels_[static_cast<std::size_t>(columns[k])]);
  }
  return ItemBlock(std::move(sub), std::move(labels));
}

VectorXd ScoreScaleMeans(const MatrixXd& block) {
  if (block.cols() == 0 || block.rows() == 0) throw ValidationError("empty item block");
  return block.rowwise().mean();
}

MatrixXd Covariance(const MatrixXd& block) {
  const MatrixXd c = block.rowwise() - block.colwise().mean();
  return c.transpose() * c / static_cast<double>(block.rows() - 1);
}

MatrixXd Correlation(const MatrixXd& block) {
  const MatrixXd cov = Covariance(block);
  const VectorXd inv_sd = cov.diagonal().cwiseSqrt().cwiseInverse();
  return inv_sd.asDiagonal() * cov * inv_sd.asDiagonal();
}

AlphaResult CronbachAlpha(const MatrixXd& block, double confidence) {
  const Index q = block.cols();
  const Index n = block.rows();
  if (q < 2) throw EstimationError("alpha: need at least two items");
  if (n < 3) throw EstimationError("alpha: need at least three observations");
  const MatrixXd cov = Covariance(block);
  const double total_var = cov.sum();
  if (!(total_var > 0.0)) throw EstimationError("alpha: total score has zero variance");
  const double qd = static_cast<double>(q);
  AlphaResult r;
  r.alpha = qd / (qd - 1.0) * (1.0 - cov.trace() / total_var);

  const double df1 = static_cast<double>(n - 1);
  const double df2 = df1 * (qd - 1.0);
  const boost::math::fisher_f f(df1, df2);
  const double tail = (1.0 - confidence) / 2.0;
  r.ci_low = 1.0 - (1.0 - r.alpha) * boost::math::quantile(f, 1.0 - tail);
  r.ci_high = 1.0 - (1.0 - r.alpha) * boost::math::quantile(f, tail);

  const VectorXd sd = cov.diagonal().cwiseSqrt();
  if ((sd.array() > 0.0).all()) {
    const MatrixXd corr = sd.cwiseInverse().asDiagonal() * cov * sd.cwiseInverse().asDiagonal();
    const double mean_r = (corr.sum() - qd) / (qd * (qd - 1.0));
    r.standardized = qd * mean_r / (1.0 + (qd - 1.0) * mean_r);
  } else {
    r.standardized = std::numeric_limits<double>::quiet_NaN();
  }
  return r;
}

CfaFit FitUnidimensionalCfa(const MatrixXd& block, CfaModel model, const CfaOptions& options) {
  const Index q = block.cols();
  const Index n = block.rows();
  if (model == CfaModel::kCongeneric && q < 3) {
    throw EstimationError("congeneric one-factor model is not identified with fewer than 3 items");
  }
  if (q < 2) throw EstimationError("cfa: need at least two items");
  if (n <= q) throw EstimationError("cfa: need more observations than items");

  const MatrixXd centered = block.rowwise() - block.colwise().mean();
  const MatrixXd s_raw = centered.transpose() * centered / static_cast<double>(n);
  // A common rescaling keeps the problem well conditioned without changing
  // the tau-equivalent structure.
  const double unit = s_raw.diagonal().mean();
  if (!(unit > 0.0) || (s_raw.diagonal().array() <= 0.0).any()) {
    throw EstimationError("cfa: an item has zero variance");
  }
  CfaProblem problem;
  problem.s = s_raw / unit;
  problem.q = q;
  problem.tau = model == CfaModel::kTauEquivalent;
  Eigen::LLT<MatrixXd> s_llt(problem.s);
  if (s_llt.info() != Eigen::Success) throw EstimationError("cfa: sample covariance is singular");
  for (Index j = 0; j < q; ++j) problem.log_det_s += 2.0 * std::log(s_llt.matrixL()(j, j));

  Rng rng(options.seed);
  std::uniform_real_distribution<double> load_draw(0.2, 0.95);
  std::uniform_real_distribution<double> psi_draw(0.1, 0.8);
  const VectorXd diag = problem.s.diagonal();

  MinimizeResult best;
  for (int restart = 0; restart < std::max(options.restarts, 1); ++restart) {
    VectorXd theta(problem.Dimension());
    const Index off = problem.tau ? 1 : q;
    if (restart == 0) {
      if (problem.tau) {
        theta[0] = std::sqrt(0.5 * diag.mean());
      } else {
        theta.head(q) = (0.5 * diag).cwiseSqrt();
      }
      for (Index j = 0; j < q; ++j) theta[off + j] = std::log(0.5 * diag[j]);
    } else {
      if (problem.tau) {
        theta[0] = load_draw(rng) * std::sqrt(diag.mean());
      } else {
        for (Index j = 0; j < q; ++j) theta[j] = load_draw(rng) * std::sqrt(diag[j]);
      }
      for (Index j = 0; j < q; ++j) theta[off + j] = std::log(psi_draw(rng) * diag[j]);
    }
    auto result = MinimizeBfgs(problem, theta, options.max_iterations, options.gradient_tolerance);
    if (result.value < best.value) best = std::move(result);
  }
  if (!std::isfinite(best.value)) throw EstimationError("cfa: optimizer failed to find a valid solution");

  CfaFit fit;
  fit.model = model;
  fit.n = n;
  fit.discrepancy = std::max(0.0, best.value);
  fit.converged = best.gradient_norm < 1e-5;
  VectorXd l, psi;
  problem.Unpack(best.x, &l, &psi);
  if (l.sum() < 0.0) l = -l;
  for (Index j = 0; j < q; ++j) {
    if (psi[j] - kMinUniqueness < 1e-5) {
      fit.heywood = true;
      fit.heywood_items.push_back(j);
    }
  }
  fit.raw_loadings = l * std::sqrt(unit);
  fit.raw_uniquenesses = psi * unit;
  const VectorXd implied_var = l.array().square() + psi.array();
  fit.loadings = l.cwiseQuotient(implied_var.cwiseSqrt());
  fit.uniquenesses = psi.cwiseQuotient(implied_var);

  MatrixXd sigma = l * l.transpose();
  sigma.diagonal() += psi;
  const VectorXd inv_sd = problem.s.diagonal().cwiseSqrt().cwiseInverse();
  fit.residual_correlations = inv_sd.asDiagonal() * (problem.s - sigma) * inv_sd.asDiagonal();
  return fit;
}

double McDonaldOmega(const CfaFit& fit) {
  const double sum_l = fit.loadings.sum();
  const double common = sum_l * sum_l;
  const double denom = common + fit.uniquenesses.sum();
  return denom > 0.0 ? common / denom : 0.0;
}

double StandardizedRmsr(const CfaFit& fit) {
  const Index q = fit.residual_correlations.rows();
  double ss = 0.0;
  for (Index i = 0; i < q; ++i) {
    for (Index j = 0; j < i; ++j) ss += fit.residual_correlations(i, j) * fit.residual_correlations(i, j);
  }
  const double count = static_cast<double>(q * (q - 1) / 2);
  return count > 0 ? std::sqrt(ss / count) : 0.0;
}

std::vector<std::optional<double>> ItemTotalCorrelations(const MatrixXd& block) {
  const Index q = block.cols();
  if (q < 2) throw EstimationError("item-total correlation needs at least two items");
  const VectorXd total = block.rowwise().sum();
  std::vector<std::optional<double>> out;
  for (Index j = 0; j < q; ++j) {
    const double r = Pearson(block.col(j), total - block.col(j));
    out.push_back(std::isfinite(r) ? std::optional<double>(r) : std::nullopt);
  }
  return out;
}

TauEquivalenceTest CompareTauEquivalence(const CfaFit& congeneric, const CfaFit& tau_equivalent) {
  TauEquivalenceTest t;
  const double q = static_cast<double>(congeneric.loadings.size());
  t.df = q - 1.0;
  t.chi_square = std::max(0.0, static_cast<double>(congeneric.n) *
                                   (tau_equivalent.discrepancy - congeneric.discrepancy));
  if (t.df >= 1.0) {
    const boost::math::chi_squared dist(t.df);
    t.p = boost::math::cdf(boost::math::complement(dist, t.chi_square));
  }
  return t;
}

int ItemAnalysisReport::FlagCount() const {
  return static_cast<int>(std::count_if(flags.begin(), flags.end(), [](const ItemFlags& f) { return f.any(); }));
}

ItemAnalysisReport RunItemAnalysis(const ItemBlock& block, const ItemThresholds& thresholds,
                                   const CfaOptions& cfa, std::string scale_name) {
  const MatrixXd& x = block.responses();
  const Index q = x.cols();
  ItemAnalysisReport report;
  report.scale = std::move(scale_name);
  report.items = block.labels();
  report.alpha = CronbachAlpha(x);
  report.item_total = ItemTotalCorrelations(x);

  const CfaFit tau = FitUnidimensionalCfa(x, CfaModel::kTauEquivalent, cfa);
  if (q >= 3) {
    const CfaFit cong = FitUnidimensionalCfa(x, CfaModel::kCongeneric, cfa);
    report.omega = McDonaldOmega(cong);
    report.loadings = cong.loadings;
    report.rmsr = StandardizedRmsr(cong);
    report.tau_equivalence = CompareTauEquivalence(cong, tau);
    if (cong.heywood) report.warnings.push_back("congeneric fit hit the uniqueness bound (Heywood case)");
    if (!cong.converged) report.warnings.push_back("congeneric fit did not converge");
  } else {
    report.omega = McDonaldOmega(tau);
    report.loadings = tau.loadings;
    report.rmsr = StandardizedRmsr(tau);
    report.tau_equivalence = {0.0, 0.0, 1.0};
    report.warnings.push_back("two-item scale: omega and loadings from the tau-equivalent model");
  }

  report.flags.resize(static_cast<std::size_t>(q));
  for (Index j = 0; j < q; ++j) {
    auto& f = report.flags[static_cast<std::size_t>(j)];
    const auto& it = report.item_total[static_cast<std::size_t>(j)];
    if (!it) {
      f.undefined_item_total = true;
    } else if (*it < thresholds.item_total) {
      f.low_item_total = true;
    }
    f.low_loading = report.loadings[j] < thresholds.loading;
  }
  return report;
}

ItemSelection ApplyItemSelection(const ItemBlock& block, const std::vector<std::string>& wording_drops,
                                 const ItemThresholds& thresholds, const CfaOptions& cfa) {
  ItemSelection sel;
  std::vector<Index> current(static_cast<std::size_t>(block.items()));
  std::iota(current.begin(), current.end(), Index{0});
  const auto& labels = block.labels();

  for (const auto& word : wording_drops) {
    auto it = std::find_if(current.begin(), current.end(),
                           [&](Index j) { return labels[static_cast<std::size_t>(j)] == word; });
    if (it == current.end()) {
      sel.warnings.push_back("wording override '" + word + "' is not an item of this scale");
      continue;
    }
    if (current.size() <= 2) {
      sel.warnings.push_back("wording override '" + word + "' ignored: scale would drop below 2 items");
      continue;
    }
    sel.dropped.push_back(word);
    current.erase(it);
  }

  auto report = RunItemAnalysis(block.Select(current), thresholds, cfa);
  sel.omega_path.push_back(report.omega);
  for (;;) {
    std::vector<std::size_t> flagged;
    for (std::size_t k = 0; k < report.flags.size(); ++k) {
      if (report.flags[k].any()) flagged.push_back(k);
    }
    if (flagged.empty()) break;
    if (current.size() <= 2) {
      sel.warnings.push_back("flagged items remain but the scale cannot drop below 2 items");
      break;
    }
    std::optional<std::size_t> best;
    double best_omega = report.omega;
    ItemAnalysisReport best_report;
    for (std::size_t k : flagged) {
      std::vector<Index> trial = current;
      trial.erase(trial.begin() + static_cast<std::ptrdiff_t>(k));
      auto candidate = RunItemAnalysis(block.Select(trial), thresholds, cfa);
      // A drop must raise omega and may not add flags to the retained set.
      if (candidate.omega > best_omega && candidate.FlagCount() <= report.FlagCount()) {
        best = k;
        best_omega = candidate.omega;
        best_report = std::move(candidate);
      }
    }
    if (!best) break;
    sel.dropped.push_back(labels[static_cast<std::size_t>(current[*best])]);
    current.erase(current.begin() + static_cast<std::ptrdiff_t>(*best));
    report = std::move(best_report);
    sel.omega_path.push_back(report.omega);
  }
  for (Index j : current) sel.retained.push_back(labels[static_cast<std::size_t>(j)]);
  return sel;
}

// ---------------------------------------------------------------------------
// Polychoric correlation.

namespace {

struct OrdinalCoding {
  std::vector<double> categories;  // sorted observed values
  std::vector<int> code;           // per row, index into categories
  std::vector<double> thresholds;  // finite cutpoints, size K - 1
};

OrdinalCoding Code(const VectorXd& v) {
  OrdinalCoding c;
  std::vector<double> values(v.data(), v.data() + v.size());
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  if (values.size() < 2) throw ValidationError("polychoric: a variable has fewer than two observed categories");
  c.categories = values;
  std::vector<double> counts(values.size(), 0.0);
  c.code.resize(static_cast<std::size_t>(v.size()));
  for (Index i = 0; i < v.size(); ++i) {
    const auto pos = static_cast<std::size_t>(std::lower_bound(values.begin(), values.end(), v[i]) - values.begin());
    c.code[static_cast<std::size_t>(i)] = static_cast<int>(pos);
    counts[pos] += 1.0;
  }
  double cum = 0.0;
  const double n = static_cast<double>(v.size());
  for (std::size_t k = 0; k + 1 < counts.size(); ++k) {
    cum += counts[k];
    c.thresholds.push_back(NormalQuantile(cum / n));
  }
  return c;
}

std::vector<double> WithInfinities(const std::vector<double>& t) {
  std::vector<double> out{-kInf};
  out.insert(out.end(), t.begin(), t.end());
  out.push_back(kInf);
  return out;
}

}  // namespace

double PolychoricLogLikelihood(const MatrixXd& counts, const std::vector<double>& tx,
                               const std::vector<double>& ty, double rho) {
  const auto bx = WithInfinities(tx);
  const auto by = WithInfinities(ty);
  const Index kx = counts.rows();
  const Index ky = counts.cols();
  MatrixXd cdf(kx + 1, ky + 1);
  for (Index a = 0; a <= kx; ++a) {
    for (Index b = 0; b <= ky; ++b) {
      cdf(a, b) = BivariateNormalCdf(bx[static_cast<std::size_t>(a)], by[static_cast<std::size_t>(b)], rho);
    }
  }
  double ll = 0.0;
  for (Index a = 0; a < kx; ++a) {
    for (Index b = 0; b < ky; ++b) {
      if (counts(a, b) == 0.0) continue;
      const double p = cdf(a + 1, b + 1) - cdf(a, b + 1) - cdf(a + 1, b) + cdf(a, b);
      ll += counts(a, b) * std::log(std::max(p, 1e-300));
    }
  }
  return ll;
}

PolychoricResult Polychoric(const VectorXd& x, const VectorXd& y) {
  if (x.size() != y.size()) throw ValidationError("polychoric: variables differ in length");
  const OrdinalCoding cx = Code(x);
  const OrdinalCoding cy = Code(y);
  MatrixXd counts = MatrixXd::Zero(static_cast<Index>(cx.categories.size()),
                                   static_cast<Index>(cy.categories.size()));
  for (std::size_t i = 0; i < cx.code.size(); ++i) counts(cx.code[i], cy.code[i]) += 1.0;

  auto negative_ll = [&](double rho) {
    return -PolychoricLogLikelihood(counts, cx.thresholds, cy.thresholds, rho);
  };
  const auto [rho, nll] = boost::math::tools::brent_find_minima(negative_ll, -kPolychoricBound,
                                                                kPolychoricBound, 40);
  PolychoricResult r;
  r.rho = rho;
  r.log_likelihood = -nll;
  r.thresholds_x = cx.thresholds;
  r.thresholds_y = cy.thresholds;
  if (kPolychoricBound - std::fabs(rho) < 1e-4) {
    r.rho = std::copysign(kPolychoricBound, rho);
    r.log_likelihood = -negative_ll(r.rho);
    r.boundary = true;
  }
  return r;
}

PolychoricMatrix PolychoricCorrelationMatrix(const MatrixXd& block, int threads) {
  const Index q = block.cols();
  PolychoricMatrix out{MatrixXd::Identity(q, q), Eigen::MatrixXi::Zero(q, q)};
  std::vector<std::pair<Index, Index>> pairs;
  for (Index i = 0; i < q; ++i) {
    for (Index j = i + 1; j < q; ++j) pairs.emplace_back(i, j);
  }
  std::vector<PolychoricResult> results(pairs.size());
  ParallelFor(pairs.size(), threads, [&](std::size_t k) {
    results[k] = Polychoric(block.col(pairs[k].first), block.col(pairs[k].second));
  });
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto [i, j] = pairs[k];
    out.correlation(i, j) = out.correlation(j, i) = results[k].rho;
    out.boundary(i, j) = out.boundary(j, i) = results[k].boundary ? 1 : 0;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sampling adequacy and retention.

SamplingAdequacy AssessSamplingAdequacy(const MatrixXd& r, Index n) {
  const Index q = r.rows();
  if (q < 2 || r.cols() != q) throw ValidationError("adequacy: need a square matrix with q >= 2");
  SamplingAdequacy out;
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(r);
  const VectorXd values = eig.eigenvalues();
  out.determinant = values.prod();
  MatrixXd inverse;
  if (values.minCoeff() <= 1e-12 * std::max(1.0, values.maxCoeff())) {
    out.singular = true;
    out.determinant = std::max(0.0, out.determinant);
    VectorXd inv_values = VectorXd::Zero(q);
    for (Index j = 0; j < q; ++j) {
      if (values[j] > 1e-12 * values.maxCoeff()) inv_values[j] = 1.0 / values[j];
    }
    inverse = eig.eigenvectors() * inv_values.asDiagonal() * eig.eigenvectors().transpose();
  } else {
    inverse = eig.eigenvectors() * values.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
  }

  double sum_r2 = 0.0, sum_q2 = 0.0;
  out.kmo_per_item.resize(q);
  for (Index i = 0; i < q; ++i) {
    double ri = 0.0, qi = 0.0;
    for (Index j = 0; j < q; ++j) {
      if (i == j) continue;
      const double denom = std::sqrt(inverse(i, i) * inverse(j, j));
      const double partial = denom > 0.0 ? -inverse(i, j) / denom : 0.0;
      ri += r(i, j) * r(i, j);
      qi += partial * partial;
    }
    out.kmo_per_item[i] = ri + qi > 0.0 ? ri / (ri + qi) : 0.0;
    sum_r2 += ri;
    sum_q2 += qi;
  }
  out.kmo = sum_r2 + sum_q2 > 0.0 ? sum_r2 / (sum_r2 + sum_q2) : 0.0;

  const double qd = static_cast<double>(q);
  out.bartlett_df = qd * (qd - 1.0) / 2.0;
  if (out.determinant <= 0.0) {
    out.bartlett_chi_square = kInf;
    out.bartlett_p = 0.0;
  } else {
    const double factor = static_cast<double>(n) - 1.0 - (2.0 * qd + 5.0) / 6.0;
    out.bartlett_chi_square = std::max(0.0, -factor * std::log(out.determinant));
    const boost::math::chi_squared dist(out.bartlett_df);
    out.bartlett_p = boost::math::cdf(boost::math::complement(dist, out.bartlett_chi_square));
  }
  return out;
}

VectorXd DescendingEigenvalues(const MatrixXd& symmetric) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(symmetric, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().reverse();
}

VectorXd ParallelAnalysisReference(Index n, Index q, const ParallelAnalysisOptions& options) {
  if (n < 3 || q < 1) throw ValidationError("parallel analysis: need n >= 3 and q >= 1");
  if (options.replications < 1) throw ConfigError("parallel analysis needs at least one replication");
  const auto reps = static_cast<std::size_t>(options.replications);
  std::vector<VectorXd> draws(reps);
  ParallelFor(reps, options.threads, [&](std::size_t r) {
    Rng rng(DeriveSeed(options.seed, r));
    draws[r] = DescendingEigenvalues(Correlation(StandardNormalMatrix(n, q, rng)));
  });
  VectorXd reference(q);
  std::vector<double> column(reps);
  for (Index j = 0; j < q; ++j) {
    for (std::size_t r = 0; r < reps; ++r) column[r] = draws[r][j];
    std::sort(column.begin(), column.end());
    // Linear interpolation between order statistics.
    const double pos = options.percentile * static_cast<double>(reps - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, reps - 1);
    reference[j] = column[lo] + (pos - static_cast<double>(lo)) * (column[hi] - column[lo]);
  }
  return reference;
}

VectorXd EmpiricalKaiserReference(const VectorXd& eigenvalues, Index n) {
  const Index q = eigenvalues.size();
  const double qd = static_cast<double>(q);
  const double factor = std::pow(1.0 + std::sqrt(qd / static_cast<double>(n)), 2);
  VectorXd ref(q);
  double preceding = 0.0;
  for (Index j = 0; j < q; ++j) {
    const double remaining = (qd - preceding) / (qd - static_cast<double>(j));
    ref[j] = std::max(remaining * factor, 1.0);
    preceding += eigenvalues[j];
  }
  return ref;
}

RetentionCounts RetentionCriteria(const VectorXd& eigenvalues, Index n, const VectorXd& pa_reference) {
  if (pa_reference.size() != eigenvalues.size()) {
    throw ValidationError("parallel-analysis reference length differs from the eigenvalue count");
  }
  RetentionCounts c;
  const VectorXd ekc = EmpiricalKaiserReference(eigenvalues, n);
  bool pa_open = true;
  for (Index j = 0; j < eigenvalues.size(); ++j) {
    const double l = eigenvalues[j];
    c.kaiser_guttman += l > 1.0;
    c.jolliffe += l > 0.7;
    c.empirical_kaiser += l > ekc[j];
    pa_open = pa_open && l > pa_reference[j];
    c.parallel_analysis += pa_open;
  }
  return c;
}

RetentionCounts RetentionCriteria(const VectorXd& eigenvalues, Index n, const ParallelAnalysisOptions& pa) {
  return RetentionCriteria(eigenvalues, n, ParallelAnalysisReference(n, eigenvalues.size(), pa));
}

RetentionReport RunRetentionDiagnostics(const ItemBlock& block, const ParallelAnalysisOptions& pa,
                                        std::string scale_name) {
  RetentionReport report;
  report.scale = std::move(scale_name);
  const auto poly = PolychoricCorrelationMatrix(block.responses(), pa.threads);
  report.polychoric_boundary = poly.boundary;
  report.eigenvalues = DescendingEigenvalues(poly.correlation);
  report.adequacy = AssessSamplingAdequacy(poly.correlation, block.rows());
  report.pa_reference = ParallelAnalysisReference(block.rows(), block.items(), pa);
  report.ekc_reference = EmpiricalKaiserReference(report.eigenvalues, block.rows());
  report.counts = RetentionCriteria(report.eigenvalues, block.rows(), report.pa_reference);
  return report;
}

}  // namespace flipdml::psych
