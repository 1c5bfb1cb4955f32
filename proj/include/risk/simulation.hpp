#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "risk/data_model.hpp"
#include "risk/sampler.hpp"
#include "risk/selection_eval.hpp"

namespace risk {

using GroupOutcome = std::pair<Group, Outcome>;

struct SimSetting {
  int id = 1;
  // Linear predictor of the latent outcome; design-column names.
  std::map<GroupOutcome, double> intercepts;
  std::map<GroupOutcome, std::map<std::string, double>> coefficients;
  std::size_t train_size = 3000;
  std::vector<std::size_t> test_sizes{1000, 1000};
  std::array<double, 3> group_proportions{0.33, 0.64, 0.03};
  double rho_b = 0.8;
  double latent_variance = 5.0;
  int replicates = 50;
  std::size_t clusters = 40;
  // Candidate predictors (schema names) of each outcome's sub-models.
  std::array<std::vector<std::string>, 2> candidates;
  SelectionRule selection;

  double intercept(Group g, Outcome k) const;
  double coefficient(Group g, Outcome k, const std::string& column) const;

  void validate() const;
  nlohmann::json to_json() const;
  // Keys absent from `j` keep the values of `base`; unknown keys are rejected.
  static SimSetting from_json(const nlohmann::json& j, const SimSetting& base);
};

// Settings 1-4. `a_aud_intercept` replaces the group A AUD intercept of
// settings 1 and 2 (the table prints 10.0; -10.02 is used by default).
SimSetting sim_preset(int id, double a_aud_intercept = -10.02);

// Per-group counts for a total size: rounded proportions, remainder to group B.
std::array<std::size_t, 3> group_counts(std::size_t n, const std::array<double, 3>& proportions);

struct PredictorDistribution {
  Schema schema;
  // Continuous predictors on the logit scale.
  std::vector<std::string> continuous;
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  // Binary and categorical predictors, and their joint level table.
  std::vector<std::string> categorical;
  std::vector<std::pair<std::vector<int>, double>> table;
  std::array<double, 3> group_probs{0.33, 0.64, 0.03};
  std::vector<std::string> warnings;

  void validate() const;
  nlohmann::json to_json() const;
  static PredictorDistribution from_json(const nlohmann::json& j);
};

// Documented synthetic stand-in: 18 continuous predictors from a three-factor
// logit-scale model, plus male, race_white and a four-level region.
PredictorDistribution default_predictor_distribution();

// AUD (15) and CUD (17) candidate predictor names of the default distribution.
std::array<std::vector<std::string>, 2> default_candidates();

inline constexpr double logit_clamp = 1e-4;

PredictorDistribution estimate_predictor_distribution(const Dataset& reference);

// Draws n participants with the given per-group counts from `dist`.
Dataset draw_participants(const PredictorDistribution& dist, const SimSetting& setting,
                          const std::array<std::size_t, 3>& counts, Rng& rng, const std::string& id_prefix);

struct Replicate {
  Dataset train;
  std::vector<Dataset> tests;
};

// Train and each test set come from separate named substreams of `seed`.
Replicate generate_replicate(const PredictorDistribution& dist, const SimSetting& setting, std::uint64_t seed);

enum class ModelKind { joint, univariate };
std::string_view to_string(ModelKind m);

struct ReplicateMetrics {
  int replicate = 0;
  bool ok = false;
  std::string error;
  // [model][outcome][test set]
  std::array<std::array<std::vector<OutcomeMetrics>, 2>, 2> metrics;
};

struct ExperimentReport {
  SimSetting setting;
  SamplerConfig sampler;
  std::uint64_t seed = 0;
  std::vector<ReplicateMetrics> replicates;

  std::size_t failures() const;
  // Mean over successful replicates where the metric is defined.
  std::optional<double> mean_auc(ModelKind m, Outcome k, std::size_t test) const;
  std::optional<double> mean_brier(ModelKind m, Outcome k, std::size_t test) const;
  std::optional<double> mean_e_over_o(ModelKind m, Outcome k, std::size_t test) const;

  nlohmann::json to_json() const;
  void write_replicates_csv(std::ostream& out) const;
};

struct ExperimentOptions {
  std::uint64_t seed = 1;
  unsigned threads = 1;
  QuadratureMode mode = QuadratureMode::univariate;
  // Called after each replicate finishes (from worker threads).
  std::function<void(const ReplicateMetrics&)> progress;
};

// Desk-scale sampler budget: 2 chains, 300 warmup and 300 kept iterations.
SamplerConfig simulation_sampler_defaults();

// Joint model with both outcomes against separate AUD (groups A, B) and CUD
// (groups B, C) models; t prior, selection per the setting, refit, predict tests.
ReplicateMetrics run_replicate(const PredictorDistribution& dist, const SimSetting& setting,
                               const SamplerConfig& cfg, std::uint64_t seed, int index);

ExperimentReport run_experiment(const SimSetting& setting, const PredictorDistribution& dist,
                                const SamplerConfig& cfg, const ExperimentOptions& opt);

}  // namespace risk
