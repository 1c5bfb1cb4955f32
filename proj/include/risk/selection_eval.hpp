#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "risk/data_model.hpp"
#include "risk/metrics.hpp"
#include "risk/model_spec.hpp"
#include "risk/predictor.hpp"
#include "risk/sampler.hpp"

namespace risk {

struct SelectionRule {
  enum class Method { credible_interval, threshold };
  Method method = Method::threshold;
  double level = 0.95;
  double cutoff = 0.10;

  void validate() const;
  static SelectionRule from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

std::string_view to_string(SelectionRule::Method m);
std::optional<SelectionRule::Method> parse_selection_method(std::string_view s);

// Retained predictors of each sub-model, in the sub-model's order.
// credible_interval: central `level` interval of beta excludes 0.
// threshold: |posterior mean of beta| >= cutoff.
std::vector<std::vector<std::string>> select_variables(const PosteriorDraws& pd,
                                                       const std::vector<SubModelSpec>& specs,
                                                       const SelectionRule& rule);

std::vector<SubModelSpec> restrict_predictors(std::vector<SubModelSpec> specs,
                                              const std::vector<std::vector<std::string>>& keep);

// Normalises the weights of `train`, then samples the posterior.
FittedModel fit_model(const Dataset& train, std::vector<SubModelSpec> specs, const PriorConfig& prior,
                      const SamplerConfig& cfg);

// Rows whose outcome k is observed and whose prediction is applicable.
struct EvaluationRows {
  std::vector<std::size_t> rows;
  std::vector<double> probs;
  std::vector<int> labels;
};

EvaluationRows evaluation_rows(const Dataset& d, const std::vector<RiskPrediction>& preds, Outcome k,
                               std::optional<Group> group = std::nullopt);

struct SubgroupTable {
  std::string covariate;
  SubgroupSplit split = SubgroupSplit::levels;
  std::vector<CalibrationRow> rows;
};

struct OutcomeMetrics {
  Outcome outcome = Outcome::aud;
  std::size_t n = 0;
  std::size_t cases = 0;
  double expected = 0.0;
  std::optional<double> auc;
  std::optional<double> e_over_o;
  double brier = 0.0;
  std::vector<CalibrationRow> quintiles;
  std::vector<SubgroupTable> subgroups;

  nlohmann::json to_json() const;
};

OutcomeMetrics outcome_metrics(Outcome k, const EvaluationRows& ev, const Dataset* covariates = nullptr);

struct GroupMetrics {
  Group group = Group::a;
  Outcome outcome = Outcome::aud;
  std::size_t n = 0;
  std::size_t cases = 0;
  std::optional<double> auc;
  std::optional<double> e_over_o;
  double brier = 0.0;
};

struct MetricsReport {
  std::array<OutcomeMetrics, 2> outcomes;
  // Every at-risk (group, outcome) pair with evaluated rows.
  std::vector<GroupMetrics> groups;

  const OutcomeMetrics& operator[](Outcome k) const { return outcomes[static_cast<std::size_t>(index_of(k))]; }
  nlohmann::json to_json() const;
};

// Pooled metrics over applicable rows; quintile and subgroup tables when `tables`.
MetricsReport metrics_report(const Dataset& d, const std::vector<RiskPrediction>& preds, bool tables);

void write_quintiles_csv(const MetricsReport& r, std::ostream& out);
void write_subgroups_csv(const MetricsReport& r, std::ostream& out);

struct FoldMetrics {
  int fold = 0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::array<std::optional<double>, 2> auc;
  std::array<std::optional<double>, 2> e_over_o;
  std::array<double, 2> brier{};
  std::vector<std::vector<std::string>> selected;
};

struct CvReport {
  MetricsReport pooled;
  std::vector<FoldMetrics> folds;
  // Means over folds where the metric is defined.
  std::array<std::optional<double>, 2> mean_fold_auc;
  std::array<std::optional<double>, 2> mean_fold_e_over_o;
  std::size_t n_pooled = 0;
  std::vector<SubModelSpec> submodels;

  nlohmann::json to_json() const;
};

struct CvOptions {
  int folds = 5;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  QuadratureMode mode = QuadratureMode::univariate;
  int order = default_quadrature_order;
};

// Per fold: fit, select, refit the selected model, predict the held-out rows.
CvReport cross_validate(const Dataset& d, const std::vector<SubModelSpec>& specs, const PriorConfig& prior,
                        const SelectionRule& rule, const SamplerConfig& cfg, const CvOptions& opt);

enum class RecalibrationScope { submodel, outcome };

struct RecalibrationEntry {
  std::string label;  // sub-model label, or outcome name for outcome scope
  std::vector<std::size_t> submodels;
  std::size_t n = 0;
  double observed = 0.0;
  double expected_before = 0.0;
  double expected_after = 0.0;
  std::optional<double> delta;
  std::string skipped;  // reason, empty when recalibrated
};

struct RecalibrationResult {
  FittedModel model;
  std::vector<RecalibrationEntry> entries;

  nlohmann::json to_json() const;
};

// Shifts predictive probabilities on the logit scale, one offset per sub-model
// (or per outcome), so expected equals observed cases on the validation data.
RecalibrationResult recalibrate_intercepts(const FittedModel& model, const Dataset& validation,
                                           RecalibrationScope scope = RecalibrationScope::submodel,
                                           QuadratureMode mode = QuadratureMode::univariate,
                                           int order = default_quadrature_order, unsigned threads = 1);

}  // namespace risk
