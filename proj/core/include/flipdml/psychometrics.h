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
// Scale construction diagnostics: reliability (Cronbach's alpha, McDonald's
// omega), one-factor confirmatory factor analysis, corrected item-total
// correlations, item selection, polychoric correlations, sampling adequacy
// and eigenvalue retention criteria.
//
// Functions take the item block as an n x q real matrix. ItemBlock is the
// validated Likert form of that matrix.

#ifndef FLIPDML_PSYCHOMETRICS_H_
#define FLIPDML_PSYCHOMETRICS_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "flipdml/datamodel.h"

namespace flipdml::psych {

class ItemBlock {
 public:
  // Throws ValidationError unless q >= 2 and every value is a Likert code
  // in {-3..3}.
  explicit ItemBlock(Eigen::MatrixXd responses, std::vector<std::string> labels = {});
  static ItemBlock FromDataset(const data::Dataset& ds, const data::ScaleDefinition& scale);

  const Eigen::MatrixXd& responses() const { return responses_; }
  const std::vector<std::string>& labels() const { return labels_; }
  Eigen::Index items() const { return responses_.cols(); }
  Eigen::Index rows() const { return responses_.rows(); }

  ItemBlock Select(const std::vector<Eigen::Index>& columns) const;

 private:
  Eigen::MatrixXd responses_;
  std::vector<std::string> labels_;
};

// Per-row arithmetic mean (classical test theory scale score).
Eigen::VectorXd ScoreScaleMeans(const Eigen::MatrixXd& block);

// Sample covariance (n - 1 denominator) and correlation.
Eigen::MatrixXd Covariance(const Eigen::MatrixXd& block);
Eigen::MatrixXd Correlation(const Eigen::MatrixXd& block);

struct AlphaResult {
  double alpha = 0.0;
  double ci_low = 0.0;  // Feldt interval
  double ci_high = 0.0;
  double standardized = 0.0;  // from the mean inter-item correlation
};

// alpha = q / (q - 1) * (1 - sum var(item) / var(total)). Requires q >= 2,
// n >= 3 and a non-constant total.
AlphaResult CronbachAlpha(const Eigen::MatrixXd& block, double confidence = 0.95);

enum class CfaModel { kCongeneric, kTauEquivalent };

struct CfaOptions {
  int restarts = 10;
  std::uint64_t seed = 0;
  int max_iterations = 500;
  double gradient_tolerance = 1e-9;
};

struct CfaFit {
  CfaModel model = CfaModel::kCongeneric;
  // Standardized solution (unit item variances, unit factor variance).
  Eigen::VectorXd loadings;
  Eigen::VectorXd uniquenesses;
  // Solution on the covariance scale of the input.
  Eigen::VectorXd raw_loadings;
  Eigen::VectorXd raw_uniquenesses;
  double discrepancy = 0.0;  // F_ML at the optimum
  Eigen::MatrixXd residual_correlations;  // sample minus implied
  Eigen::Index n = 0;
  bool converged = false;
  bool heywood = false;  // a uniqueness reached its lower bound
  std::vector<Eigen::Index> heywood_items;
};

inline constexpr double kMinUniqueness = 1e-4;

// Maximum-likelihood one-factor model on the sample covariance (n
// denominator) minimizing log|Sigma| + tr(S Sigma^-1) - log|S| - q with
// Sigma = l l^T + diag(psi). The congeneric model needs q >= 3; the
// tau-equivalent model constrains all loadings to be equal.
CfaFit FitUnidimensionalCfa(const Eigen::MatrixXd& block, CfaModel model,
                            const CfaOptions& options = {});

// omega = (sum l)^2 / ((sum l)^2 + sum psi) on the standardized solution.
double McDonaldOmega(const CfaFit& fit);

// Root mean square of the off-diagonal residual correlations.
double StandardizedRmsr(const CfaFit& fit);

// Correlation of each item with the sum of the remaining items; nullopt
// (undefined) for constant items or a constant rest score.
std::vector<std::optional<double>> ItemTotalCorrelations(const Eigen::MatrixXd& block);

struct TauEquivalenceTest {
  double chi_square = 0.0;  // n * (F_tau - F_congeneric)
  double df = 0.0;          // q - 1
  double p = 1.0;
};

TauEquivalenceTest CompareTauEquivalence(const CfaFit& congeneric, const CfaFit& tau_equivalent);

struct ItemThresholds {
  double item_total = 0.3;
  double loading = 0.4;
};

struct ItemFlags {
  bool low_item_total = false;
  bool low_loading = false;
  bool undefined_item_total = false;
  bool any() const { return low_item_total || low_loading || undefined_item_total; }
};

struct ItemAnalysisReport {
  std::string scale;
  std::vector<std::string> items;
  AlphaResult alpha;
  double omega = 0.0;
  std::vector<std::optional<double>> item_total;
  Eigen::VectorXd loadings;  // congeneric, standardized
  double rmsr = 0.0;
  TauEquivalenceTest tau_equivalence;
  std::vector<ItemFlags> flags;
  std::vector<std::string> warnings;

  int FlagCount() const;
};

// Assembles alpha (with CI), omega, item-total correlations, congeneric
// loadings, RMSR and the tau-equivalence comparison. Scales with two items
// use the tau-equivalent solution for omega and loadings (a two-item
// congeneric model is not identified).
ItemAnalysisReport RunItemAnalysis(const ItemBlock& block, const ItemThresholds& thresholds = {},
                                   const CfaOptions& cfa = {}, std::string scale_name = {});

struct ItemSelection {
  std::vector<std::string> retained;
  std::vector<std::string> dropped;  // in drop order
  std::vector<double> omega_path;    // omega before the first drop and after each drop
  std::vector<std::string> warnings;
};

// Drops wording-override items first, then repeatedly removes the flagged
// item whose removal raises omega the most, recomputing the analysis after
// each drop. Stops when no flagged item improves omega or when a drop would
// leave fewer than two items.
ItemSelection ApplyItemSelection(const ItemBlock& block, const std::vector<std::string>& wording_drops,
                                 const ItemThresholds& thresholds = {}, const CfaOptions& cfa = {});

struct PolychoricResult {
  double rho = 0.0;
  bool boundary = false;  // estimate clipped at +-0.999
  std::vector<double> thresholds_x;  // finite cutpoints
  std::vector<double> thresholds_y;
  double log_likelihood = 0.0;
};

inline constexpr double kPolychoricBound = 0.999;

// Two-step estimate for two ordinal variables: thresholds from the marginal
// cumulative proportions, then the correlation maximizing the
// bivariate-normal contingency likelihood. Each variable needs at least two
// observed categories.
PolychoricResult Polychoric(const Eigen::VectorXd& x, const Eigen::VectorXd& y);

// Log-likelihood of a contingency table under the bivariate normal model
// with fixed cutpoints (finite cutpoints only).
double PolychoricLogLikelihood(const Eigen::MatrixXd& counts, const std::vector<double>& tx,
                               const std::vector<double>& ty, double rho);

struct PolychoricMatrix {
  Eigen::MatrixXd correlation;  // symmetric, unit diagonal
  Eigen::MatrixXi boundary;     // 1 where an estimate was clipped
};

PolychoricMatrix PolychoricCorrelationMatrix(const Eigen::MatrixXd& block, int threads = 1);

struct SamplingAdequacy {
  double kmo = 0.0;
  Eigen::VectorXd kmo_per_item;
  double bartlett_chi_square = 0.0;
  double bartlett_df = 0.0;
  double bartlett_p = 1.0;
  double determinant = 0.0;
  bool singular = false;  // anti-image from a pseudo-inverse
};

// KMO and Bartlett's sphericity test for a correlation matrix from n rows.
SamplingAdequacy AssessSamplingAdequacy(const Eigen::MatrixXd& correlation, Eigen::Index n);

// Eigenvalues in descending order.
Eigen::VectorXd DescendingEigenvalues(const Eigen::MatrixXd& symmetric);

struct ParallelAnalysisOptions {
  int replications = 1000;
  double percentile = 0.95;
  std::uint64_t seed = 0;
  int threads = 1;
};

// Per-position reference eigenvalues: the percentile of each ordered
// eigenvalue of correlation matrices of n x q uncorrelated normal data.
Eigen::VectorXd ParallelAnalysisReference(Eigen::Index n, Eigen::Index q,
                                          const ParallelAnalysisOptions& options);

// Empirical Kaiser criterion reference series
// max(((q - sum_{i<j} l_i) / (q - j + 1)) * (1 + sqrt(q / n))^2, 1).
Eigen::VectorXd EmpiricalKaiserReference(const Eigen::VectorXd& eigenvalues, Eigen::Index n);

struct RetentionCounts {
  int kaiser_guttman = 0;  // #{l_j > 1}
  int empirical_kaiser = 0;
  int parallel_analysis = 0;  // leading run of l_j above the reference
  int jolliffe = 0;  // #{l_j > 0.7}
};

RetentionCounts RetentionCriteria(const Eigen::VectorXd& eigenvalues, Eigen::Index n,
                                  const ParallelAnalysisOptions& pa);
// Same, with a precomputed parallel-analysis reference.
RetentionCounts RetentionCriteria(const Eigen::VectorXd& eigenvalues, Eigen::Index n,
                                  const Eigen::VectorXd& pa_reference);

struct RetentionReport {
  std::string scale;
  Eigen::VectorXd eigenvalues;
  SamplingAdequacy adequacy;
  RetentionCounts counts;
  Eigen::VectorXd pa_reference;
  Eigen::VectorXd ekc_reference;
  Eigen::MatrixXi polychoric_boundary;
};

// Polychoric matrix, adequacy measures, eigenvalues and all retention counts.
RetentionReport RunRetentionDiagnostics(const ItemBlock& block, const ParallelAnalysisOptions& pa,
                                        std::string scale_name = {});

}  // namespace flipdml::psych

#endif  // FLIPDML_PSYCHOMETRICS_H_
