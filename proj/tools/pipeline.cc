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
#include "pipeline.h"

#include <cstdlib>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>

#include <Eigen/Core>
#include <boost/math/distributions/students_t.hpp>
#include <boost/version.hpp>
#include <nlohmann/json.hpp>

#include "config.h"
#include "flipdml/csv.h"
#include "flipdml/datamodel.h"
#include "flipdml/dml.h"
#include "flipdml/errors.h"
#include "flipdml/inference.h"
#include "flipdml/psychometrics.h"
#include "flipdml/random.h"
#include "flipdml/simulator.h"
#include "flipdml/usage.h"

#ifndef FLIPDML_VERSION
#define FLIPDML_VERSION "unknown"
#endif

namespace flipdml::tools {

namespace {

using json = nlohmann::ordered_json;
using Eigen::Index;

std::string Num(double v, int digits = 4) { return FormatNumber(v, digits); }

std::string Join(const std::vector<std::string>& items, const char* sep = ";") {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

std::string Flag(bool b) { return b ? "1" : "0"; }

// State shared by the subcommand handlers.
struct Context {
  const PipelineConfig& cfg;
  std::filesystem::path out_dir;
  Format format = Format::kCsv;
  int threads = 1;
  std::optional<std::uint64_t> seed;
  json settings = json::object();
  std::vector<std::string> outputs;
  std::vector<std::string> warnings;

  std::uint64_t RequireSeed() const {
    if (!seed) throw ConfigError("config field 'seed' is required for this subcommand (or pass --seed)");
    return *seed;
  }

  void Emit(const std::string& name, const Table& table) {
    for (auto& f : WriteTable(out_dir, name, table, format)) outputs.push_back(std::move(f));
  }
};

json DmlSettings(const dml::DmlConfig& d) {
  return json{{"folds", d.folds},         {"repetitions", d.repetitions}, {"cv_folds", d.cv_folds},
              {"grid_points", d.grid_points}, {"clip", d.clip},             {"cv_rule", CvRuleName(d.cv_rule)}};
}

// ---------------------------------------------------------------------------

void RunItemAnalysis(Context& ctx) {
  const auto ds = ctx.cfg.LoadDataset();
  const std::uint64_t seed = ctx.RequireSeed();
  const auto& it = ctx.cfg.item_analysis;
  ctx.settings = {{"item_total_threshold", it.thresholds.item_total},
                  {"loading_threshold", it.thresholds.loading},
                  {"restarts", it.restarts}};

  Table items{"Item statistics",
              {"scale", "item", "item_total", "loading", "low_item_total", "low_loading", "undefined_item_total"}};
  Table scales{"Scale reliability",
               {"scale", "items", "n", "alpha", "alpha_ci_low", "alpha_ci_high", "alpha_standardized", "omega", "rmsr",
                "tau_chi_square", "tau_df", "tau_p", "flagged_items"}};
  Table selection{"Item selection", {"scale", "retained", "dropped", "omega_initial", "omega_final"}};

  for (const auto& entry : it.wording_drops) {
    bool known = false;
    for (const auto& def : ds.schema().scales) known |= def.name == entry.first;
    if (!known) throw ConfigError("config field 'item_analysis.wording_drops': unknown scale '" + entry.first + "'");
  }
  const auto& defs = ds.schema().scales;
  for (std::size_t s = 0; s < defs.size(); ++s) {
    const auto& def = defs[s];
    const auto block = psych::ItemBlock::FromDataset(ds, def);
    psych::CfaOptions cfa;
    cfa.restarts = it.restarts;
    cfa.seed = DeriveSeed(seed, s);
    const auto report = psych::RunItemAnalysis(block, it.thresholds, cfa, def.name);
    for (std::size_t j = 0; j < report.items.size(); ++j) {
      const auto& f = report.flags[j];
      const auto& r = report.item_total[j];
      items.rows.push_back({def.name, report.items[j], r ? Num(*r) : "NA", Num(report.loadings[static_cast<Index>(j)]),
                            Flag(f.low_item_total), Flag(f.low_loading), Flag(f.undefined_item_total)});
    }
    const auto& t = report.tau_equivalence;
    scales.rows.push_back({def.name, std::to_string(block.items()), std::to_string(block.rows()), Num(report.alpha.alpha),
                           Num(report.alpha.ci_low), Num(report.alpha.ci_high), Num(report.alpha.standardized),
                           Num(report.omega), Num(report.rmsr), Num(t.chi_square), Num(t.df, 0), Num(t.p),
                           std::to_string(report.FlagCount())});
    for (const auto& w : report.warnings) ctx.warnings.push_back(def.name + ": " + w);

    const auto drops_it = it.wording_drops.find(def.name);
    const std::vector<std::string> drops = drops_it == it.wording_drops.end() ? std::vector<std::string>{} : drops_it->second;
    const auto sel = psych::ApplyItemSelection(block, drops, it.thresholds, cfa);
    selection.rows.push_back({def.name, Join(sel.retained), Join(sel.dropped), Num(sel.omega_path.front()),
                              Num(sel.omega_path.back())});
    for (const auto& w : sel.warnings) ctx.warnings.push_back(def.name + ": " + w);
  }
  ctx.Emit("item_analysis", items);
  ctx.Emit("scale_reliability", scales);
  ctx.Emit("item_selection", selection);
}

void RunPcaDiagnostics(Context& ctx) {
  const auto ds = ctx.cfg.LoadDataset();
  const std::uint64_t seed = ctx.RequireSeed();
  ctx.settings = {{"pa_replications", ctx.cfg.pca.replications}, {"pa_percentile", ctx.cfg.pca.percentile}};
  Table diag{"Sampling adequacy and retention",
             {"scale", "items", "n", "kmo", "bartlett_chi_square", "bartlett_df", "bartlett_p", "determinant",
              "singular", "kaiser_guttman", "empirical_kaiser", "parallel_analysis", "jolliffe", "boundary_pairs"}};
  Table eig{"Eigenvalues", {"scale", "position", "eigenvalue", "pa_reference", "ekc_reference"}};
  const auto& defs = ds.schema().scales;
  for (std::size_t s = 0; s < defs.size(); ++s) {
    const auto block = psych::ItemBlock::FromDataset(ds, defs[s]);
    psych::ParallelAnalysisOptions pa;
    pa.replications = ctx.cfg.pca.replications;
    pa.percentile = ctx.cfg.pca.percentile;
    pa.seed = DeriveSeed(seed, s);
    pa.threads = ctx.threads;
    const auto r = psych::RunRetentionDiagnostics(block, pa, defs[s].name);
    const int boundary = r.polychoric_boundary.sum() / 2;
    if (boundary > 0) {
      ctx.warnings.push_back(defs[s].name + ": " + std::to_string(boundary) +
                             " polychoric estimate(s) clipped at the boundary");
    }
    if (r.adequacy.singular) ctx.warnings.push_back(defs[s].name + ": correlation matrix is singular");
    diag.rows.push_back({defs[s].name, std::to_string(block.items()), std::to_string(block.rows()),
                         Num(r.adequacy.kmo), Num(r.adequacy.bartlett_chi_square), Num(r.adequacy.bartlett_df, 0),
                         Num(r.adequacy.bartlett_p), Num(r.adequacy.determinant, 6), Flag(r.adequacy.singular),
                         std::to_string(r.counts.kaiser_guttman), std::to_string(r.counts.empirical_kaiser),
                         std::to_string(r.counts.parallel_analysis), std::to_string(r.counts.jolliffe),
                         std::to_string(boundary)});
    for (Index j = 0; j < r.eigenvalues.size(); ++j) {
      eig.rows.push_back({defs[s].name, std::to_string(j + 1), Num(r.eigenvalues[j]), Num(r.pa_reference[j]),
                          Num(r.ekc_reference[j])});
    }
  }
  ctx.Emit("pca_diagnostics", diag);
  ctx.Emit("eigenvalues", eig);
}

void RunScore(Context& ctx) {
  const auto ds = ctx.cfg.LoadDataset();
  const auto& schema = ds.schema();
  Table t{"Scale means", {schema.id_column, schema.treatment_column}};
  std::vector<Eigen::VectorXd> means;
  for (const auto& def : schema.scales) {
    t.header.push_back(def.name);
    means.push_back(psych::ScoreScaleMeans(ds.ItemMatrix(def)));
  }
  for (Index i = 0; i < ds.rows(); ++i) {
    std::vector<std::string> row{ds.ids()[static_cast<std::size_t>(i)], Num(ds.treatment()[i], 0)};
    for (const auto& m : means) row.push_back(Num(m[i], 6));
    t.rows.push_back(std::move(row));
  }
  ctx.Emit("scores", t);
}

void RunEstimate(Context& ctx) {
  const auto ds = ctx.cfg.LoadDataset();
  const std::uint64_t seed = ctx.RequireSeed();
  const auto& est = ctx.cfg.estimate;
  const auto& schema = ds.schema();
  std::vector<std::string> outcomes = est.outcomes.empty() ? schema.outcomes : est.outcomes;
  for (const auto& o : outcomes) {
    if (std::find(schema.outcomes.begin(), schema.outcomes.end(), o) == schema.outcomes.end()) {
      throw ConfigError("config field 'estimate.outcomes': '" + o + "' is not a schema outcome");
    }
  }
  std::vector<std::string> covariates;
  for (const auto& c : schema.covariates) covariates.push_back(c.name);
  const std::vector<std::string> features = schema.AnalysisColumns();

  json ols = json::array(), models = json::array();
  for (auto v : est.ols) ols.push_back(inference::OlsVariantName(v));
  for (auto m : est.models) models.push_back(dml::DmlModelName(m));
  ctx.settings = DmlSettings(est.dml);
  ctx.settings["ols"] = ols;
  ctx.settings["dml"] = models;
  ctx.settings["hc"] = HcName(est.hc);
  ctx.settings["outcomes"] = outcomes;

  Table t{"Treatment effect estimates",
          {"outcome", "estimator", "n", "estimate", "se", "p_value", "ci_low", "ci_high", "stars"}};
  std::vector<std::string> estimator_order;
  std::map<std::pair<std::string, std::string>, std::string> cells;
  auto add = [&](const std::string& outcome, const std::string& name, Index n, double e, double se, double p,
                 double lo, double hi) {
    t.rows.push_back({outcome, name, std::to_string(n), Num(e), Num(se), Num(p), Num(lo), Num(hi), Stars(p)});
    if (std::find(estimator_order.begin(), estimator_order.end(), name) == estimator_order.end()) {
      estimator_order.push_back(name);
    }
    cells[{name, outcome}] = Num(e, 3) + Stars(p) + " (" + Num(se, 3) + ")";
  };
  for (std::size_t k = 0; k < outcomes.size(); ++k) {
    const auto& outcome = outcomes[k];
    for (auto variant : est.ols) {
      const auto fit = inference::FitOlsRobust(ds, covariates, outcome, variant, schema.scales, est.hc);
      const double df = static_cast<double>(fit.n - fit.parameters);
      const double q = boost::math::quantile(boost::math::students_t(df), 0.975);
      add(outcome, inference::OlsVariantName(variant), fit.n, fit.effect, fit.effect_se, fit.effect_p,
          fit.effect - q * fit.effect_se, fit.effect + q * fit.effect_se);
    }
    for (auto model : est.models) {
      dml::DmlConfig cfg = est.dml;
      cfg.model = model;
      cfg.seed = DeriveSeed(seed, k);
      cfg.threads = ctx.threads;
      const auto r = model == dml::DmlModel::kInteractive ? dml::EstimateAteInteractive(ds, features, outcome, cfg)
                                                          : dml::EstimateAtePartiallyLinear(ds, features, outcome, cfg);
      add(outcome, dml::DmlModelName(model), r.n, r.estimate, r.se, r.p_value, r.ci_low, r.ci_high);
      for (const auto& w : r.warnings) ctx.warnings.push_back(outcome + " / " + dml::DmlModelName(model) + ": " + w);
    }
  }
  ctx.Emit("estimates", t);

  if (ctx.format == Format::kMarkdown) {
    Table pivot{"Treatment effect estimates", {"estimator"}};
    for (const auto& o : outcomes) pivot.header.push_back(o);
    for (const auto& name : estimator_order) {
      std::vector<std::string> row{name};
      for (const auto& o : outcomes) row.push_back(cells[{name, o}]);
      pivot.rows.push_back(std::move(row));
    }
    pivot.notes.push_back("Robust standard errors in parentheses. * p<0.1; ** p<0.05; *** p<0.01.");
    pivot.notes.push_back("DML: " + std::to_string(est.dml.folds) + "-fold cross-fitting, " +
                          std::to_string(est.dml.repetitions) + " repetitions, penalties by " +
                          std::to_string(est.dml.cv_folds) + "-fold cross-validation.");
    ctx.outputs.push_back(WriteMarkdown(ctx.out_dir, "estimates_table", RenderMarkdown(pivot)));
  }
}

std::vector<data::SampleSpec> Samples(const PipelineConfig& cfg, const data::Schema& schema) {
  if (!cfg.samples.empty()) return cfg.samples;
  std::vector<data::SampleSpec> out{{"all", {}}};
  for (const auto& o : schema.outcomes) out.push_back({o, {o}});
  return out;
}

void RunBalance(Context& ctx) {
  const auto ds = ctx.cfg.LoadDataset();
  const auto& schema = ds.schema();
  const auto samples = Samples(ctx.cfg, schema);
  json sj = json::array();
  for (const auto& s : samples) sj.push_back({{"name", s.name}, {"required_outcomes", s.required_outcomes}});
  ctx.settings = {{"samples", sj}};

  Table t{"Covariate balance",
          {"sample", "variable", "test", "n_control", "n_treated", "mean_control", "mean_treated", "difference",
           "statistic", "df", "p_value", "stars"}};
  for (const auto& spec : samples) {
    const auto sample = data::SelectSample(ds, spec);
    const auto& d = sample.data.treatment();
    const std::string nc = std::to_string(sample.control), nt = std::to_string(sample.treated);
    auto welch = [&](const std::string& name, const Eigen::VectorXd& v) {
      std::vector<double> a, b;
      for (Index i = 0; i < v.size(); ++i) (d[i] == 0.0 ? a : b).push_back(v[i]);
      const auto r = inference::WelchMeanTest(b, a);  // treated minus control
      t.rows.push_back({spec.name, name, "welch", nc, nt, Num(r.mean_b), Num(r.mean_a), Num(r.mean_a - r.mean_b),
                        Num(r.t), Num(r.df, 2), Num(r.p), Stars(r.p)});
    };
    for (const auto& c : schema.covariates) {
      if (c.type == data::ColumnType::kReal) {
        welch(c.name, sample.data.Numeric(c.name));
      } else {
        const auto r = inference::ChiSquareHomogeneity(sample.data.Categorical(c.name), d);
        t.rows.push_back({spec.name, c.name, "chi_square", nc, nt, "NA", "NA", "NA", Num(r.statistic),
                          Num(r.df, 0), Num(r.p), Stars(r.p)});
      }
    }
    for (const auto& def : schema.scales) welch(def.name, psych::ScoreScaleMeans(sample.data.ItemMatrix(def)));
    for (const auto& o : spec.required_outcomes) welch(o, sample.data.Numeric(o));
  }
  t.notes.push_back("Welch t tests for means; chi-square homogeneity tests for categorical covariates.");
  ctx.Emit("balance", t);
}

void RunUsage(Context& ctx) {
  const auto& u = ctx.cfg.usage;
  if (!u.dir) throw ConfigError("config field 'usage.dir' is required for the usage subcommand");
  if (!u.exam) throw ConfigError("config field 'usage.exam' is required for the usage subcommand");
  ctx.settings = {{"exam", usage::FormatTimestamp(*u.exam)}};
  if (u.cutoffs) ctx.settings["cutoffs"] = *u.cutoffs;
  const auto logs = usage::LoadUsageLogs(usage::UsageLogPaths::InDirectory(*u.dir), *u.exam);
  const auto records = usage::ComputeUsageMeasures(logs, ctx.threads);

  Table m{"Usage measures", {"student_id", "exam_points", "vd", "tv", "qp", "acs", "videos_accessed"}};
  for (const auto& r : records) {
    m.rows.push_back({r.student, r.exam_points ? Num(*r.exam_points, 1) : "NA", Num(r.vd, 6), Num(r.tv, 6),
                      Num(r.qp, 6), Num(r.acs, 6), std::to_string(r.videos_accessed)});
  }
  ctx.Emit("usage_measures", m);

  const auto q = usage::SummarizeByQuartile(records, u.cutoffs);
  for (const auto& w : q.warnings) ctx.warnings.push_back(w);
  Table qt{"Usage by exam-point quartile", {"quartile", "lower", "upper", "n", "measure", "mean", "median", "min", "max"}};
  for (const auto& g : q.groups) {
    const std::pair<const char*, const usage::MeasureSummary*> parts[] = {
        {"VD", &g.vd}, {"TV", &g.tv}, {"QP", &g.qp}, {"ACS", &g.acs}};
    for (const auto& [name, s] : parts) {
      qt.rows.push_back({std::to_string(g.quartile), Num(g.lower, 1), Num(g.upper, 1), std::to_string(g.n), name,
                         Num(s->mean), Num(s->median), Num(s->min), Num(s->max)});
    }
  }
  qt.notes.push_back("Cutoffs: " + Num(q.cutoffs[0], 1) + " / " + Num(q.cutoffs[1], 1) + " / " +
                     Num(q.cutoffs[2], 1) + "; ties go to the lower quartile.");
  ctx.Emit("usage_quartiles", qt);

  const auto a = usage::AccessVersusUsage(logs, ctx.threads);
  Table at{"Video access versus usage", {"student_id", "accessed", "due_usage", "total_usage"}};
  for (std::size_t i = 0; i < a.students.size(); ++i) {
    at.rows.push_back({a.students[i], std::to_string(a.accessed[i]), Num(a.due_usage[i], 6), Num(a.total_usage[i], 6)});
  }
  ctx.Emit("usage_access", at);
  Table ac{"Correlation with videos accessed", {"series", "correlation"}};
  ac.rows.push_back({"due_usage", Num(a.correlation_due)});
  ac.rows.push_back({"total_usage", Num(a.correlation_total)});
  ctx.Emit("usage_access_correlation", ac);
}

void WriteText(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

void RunSimulate(Context& ctx) {
  auto spec = ctx.cfg.simulate.Resolve();
  spec.seed = ctx.RequireSeed();
  ctx.settings = {{"n", spec.n}, {"scales", spec.scales.size()}, {"usage", spec.usage.enabled}};
  const auto cohort = sim::GenerateCohort(spec);
  for (const auto& w : cohort.warnings) ctx.warnings.push_back(w);
  sim::ExportCohort(cohort, ctx.out_dir);
  ctx.outputs.insert(ctx.outputs.end(), {"data.csv", "schema.json", "truth.csv"});
  if (cohort.usage) ctx.outputs.push_back("usage/");
  WriteText(ctx.out_dir / "cohort_spec.json", sim::CohortSpecToJson(spec));
  ctx.outputs.push_back("cohort_spec.json");

  // A pipeline config for the exported cohort: nested samples A ⊇ B ⊇ ...
  nlohmann::ordered_json next;
  next["dataset"] = "data.csv";
  next["schema"] = "schema.json";
  next["seed"] = spec.seed;
  const auto& outcomes = cohort.data.schema().outcomes;
  next["samples"] = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < outcomes.size(); ++k) {
    std::vector<std::string> required(outcomes.begin(), outcomes.begin() + static_cast<std::ptrdiff_t>(k + 1));
    next["samples"].push_back({{"name", std::string(1, static_cast<char>('A' + k))}, {"required_outcomes", required}});
  }
  for (const char* section : {"estimate", "item_analysis", "pca"}) {
    if (ctx.cfg.raw.contains(section)) next[section] = ctx.cfg.raw.at(section);
  }
  if (cohort.usage) {
    next["usage"] = {{"dir", "usage"}, {"exam", usage::FormatTimestamp(cohort.usage->exam)}};
  }
  WriteText(ctx.out_dir / "config.json", next.dump(2) + "\n");
  ctx.outputs.push_back("config.json");
  Table oracle{"Oracle", {"quantity", "value"}};
  oracle.rows.push_back({"oracle_ate", Num(sim::OracleAte(cohort), 8)});
  oracle.rows.push_back({"treated", std::to_string(cohort.data.CountTreated())});
  oracle.rows.push_back({"n", std::to_string(cohort.data.rows())});
  ctx.Emit("oracle", oracle);
}

void RunBenchmarkCommand(Context& ctx) {
  const auto& b = ctx.cfg.benchmark;
  sim::BenchmarkOptions opt;
  opt.estimators = b.estimators;
  opt.replications = b.replications;
  opt.seed = ctx.RequireSeed();
  opt.threads = ctx.threads;
  opt.dml = b.dml;
  const auto spec = b.spec.Resolve();
  json est = json::array();
  for (auto e : b.estimators) est.push_back(sim::EstimatorName(e));
  ctx.settings = DmlSettings(b.dml);
  ctx.settings["replications"] = b.replications;
  ctx.settings["estimators"] = est;
  ctx.settings["n"] = spec.n;
  const auto result = sim::RunBenchmark(spec, opt);
  Table t{"Estimator benchmark",
          {"estimator", "replications", "failures", "failure_rate", "mean_estimate", "mean_oracle", "bias", "sd",
           "rmse", "coverage", "mean_se"}};
  for (const auto& r : result.rows) {
    t.rows.push_back({r.estimator, std::to_string(r.replications), std::to_string(r.failures), Num(r.failure_rate),
                      Num(r.mean_estimate, 6), Num(r.mean_oracle, 6), Num(r.bias, 6), Num(r.sd, 6), Num(r.rmse, 6),
                      Num(r.coverage), Num(r.mean_se, 6)});
    if (r.failures > 0) ctx.warnings.push_back(r.estimator + ": " + std::to_string(r.failures) + " failed replication(s)");
  }
  ctx.Emit("benchmark", t);
  Table reps{"Replications", {"replication", "estimator", "ok", "estimate", "se", "oracle_ate"}};
  for (std::size_t r = 0; r < result.replications.size(); ++r) {
    const auto& rep = result.replications[r];
    for (std::size_t e = 0; e < rep.estimates.size(); ++e) {
      const auto& x = rep.estimates[e];
      reps.rows.push_back({std::to_string(r), sim::EstimatorName(b.estimators[e]), Flag(x.ok),
                           x.ok ? Num(x.estimate, 6) : "NA", x.ok ? Num(x.se, 6) : "NA", Num(rep.oracle_ate, 6)});
    }
  }
  ctx.Emit("benchmark_replications", reps);
}

json Libraries() {
  return json{{"flipdml", FLIPDML_VERSION},
              {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                            std::to_string(EIGEN_MINOR_VERSION)},
              {"boost", std::to_string(BOOST_VERSION / 100000) + "." + std::to_string(BOOST_VERSION / 100 % 1000) + "." +
                            std::to_string(BOOST_VERSION % 100)},
              {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                    std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                    std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
}

void WriteManifest(const Context& ctx, const std::string& subcommand, int exit_code, const std::string& error) {
  json m;
  m["tool"] = "flipdml";
  m["subcommand"] = subcommand;
  m["status"] = exit_code == kExitOk ? "ok" : "error";
  m["exit_code"] = exit_code;
  if (!error.empty()) m["error"] = error;
  m["config_sha256"] = Sha256Hex(ctx.cfg.canonical);
  m["seed"] = ctx.seed ? json(*ctx.seed) : json(nullptr);
  m["versions"] = Libraries();
  m["settings"] = ctx.settings;
  m["outputs"] = ctx.outputs;
  m["warnings"] = ctx.warnings;
  WriteText(ctx.out_dir / "manifest.json", m.dump(2) + "\n");
}

int ExitCodeFor(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
  if (dynamic_cast<const ValidationError*>(&e)) return kExitValidation;
  if (dynamic_cast<const EstimationError*>(&e)) return kExitEstimation;
  return kExitEstimation;
}

// The config could not be loaded: only --out or FLIPDML_OUT can locate the
// output directory, and the hash covers the raw file bytes.
void WriteConfigErrorManifest(const RunOptions& options, const std::string& message, std::ostream& log) {
  PipelineConfig empty;
  std::ifstream in(options.config, std::ios::binary);
  if (in) empty.canonical.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  Context ctx{empty, {}, Format::kCsv, 1, options.seed, json::object(), {}, {}};
  if (options.out) {
    ctx.out_dir = *options.out;
  } else if (const char* env = std::getenv(kOutputDirEnv); env && *env) {
    ctx.out_dir = env;
  } else {
    return;
  }
  try {
    std::filesystem::create_directories(ctx.out_dir);
    WriteManifest(ctx, options.subcommand, kExitConfig, message);
  } catch (const std::exception& e) {
    log << "error: cannot write manifest: " << e.what() << "\n";
  }
}

}  // namespace

const std::vector<std::string>& Subcommands() {
  static const std::vector<std::string> names{"item-analysis", "pca-diagnostics", "score",    "estimate",
                                              "balance",       "usage",           "simulate", "benchmark"};
  return names;
}

int Run(const RunOptions& options, std::ostream& log) {
  const auto& names = Subcommands();
  if (std::find(names.begin(), names.end(), options.subcommand) == names.end()) {
    log << "error: unknown subcommand '" << options.subcommand << "'\n";
    return kExitConfig;
  }
  std::optional<PipelineConfig> cfg;
  try {
    cfg = LoadPipelineConfig(options.config);
  } catch (const Error& e) {
    log << "config error: " << e.what() << "\n";
    WriteConfigErrorManifest(options, e.what(), log);
    return kExitConfig;
  }

  Context ctx{*cfg, {}, Format::kCsv, 1, std::nullopt, json::object(), {}, {}};
  ctx.seed = options.seed ? options.seed : cfg->seed;
  ctx.threads = options.threads.value_or(cfg->threads.value_or(1));
  ctx.format = options.format.value_or(cfg->format.value_or(Format::kCsv));
  if (options.out) {
    ctx.out_dir = *options.out;
  } else if (const char* env = std::getenv(kOutputDirEnv); env && *env) {
    ctx.out_dir = env;
  } else if (cfg->output_dir) {
    ctx.out_dir = *cfg->output_dir;
  } else {
    ctx.out_dir = "flipdml_out";
  }
  if (ctx.threads < 1) {
    log << "config error: --threads must be at least 1\n";
    return kExitConfig;
  }
  try {
    std::filesystem::create_directories(ctx.out_dir);
  } catch (const std::filesystem::filesystem_error& e) {
    log << "config error: cannot create output directory: " << e.what() << "\n";
    return kExitConfig;
  }

  int code = kExitOk;
  std::string message;
  try {
    const std::string& s = options.subcommand;
    if (s == "item-analysis") {
      RunItemAnalysis(ctx);
    } else if (s == "pca-diagnostics") {
      RunPcaDiagnostics(ctx);
    } else if (s == "score") {
      RunScore(ctx);
    } else if (s == "estimate") {
      RunEstimate(ctx);
    } else if (s == "balance") {
      RunBalance(ctx);
    } else if (s == "usage") {
      RunUsage(ctx);
    } else if (s == "simulate") {
      RunSimulate(ctx);
    } else {
      RunBenchmarkCommand(ctx);
    }
  } catch (const std::exception& e) {
    code = ExitCodeFor(e);
    message = e.what();
    const char* kind = code == kExitConfig ? "config error" : code == kExitValidation ? "data error" : "estimation error";
    log << kind << ": " << message << "\n";
  }
  for (const auto& w : ctx.warnings) log << "warning: " << w << "\n";
  try {
    WriteManifest(ctx, options.subcommand, code, message);
  } catch (const std::exception& e) {
    log << "error: cannot write manifest: " << e.what() << "\n";
    if (code == kExitOk) code = kExitConfig;
  }
  return code;
}

}  // namespace flipdml::tools
