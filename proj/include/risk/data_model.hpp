#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "risk/core.hpp"

namespace risk {

enum class PredictorKind { continuous, binary, categorical };

struct PredictorSpec {
  std::string name;
  PredictorKind kind = PredictorKind::continuous;
  // M in exp(beta / M); the divisor that mapped the raw predictor into [0, 1].
  std::optional<double> scaling_max;
  // Added to raw values before division by scaling_max.
  double shift = 0.0;
  // Categorical levels; the first one is the reference level.
  std::vector<std::string> levels;
  // False when the data file carries raw values that scale_predictors must map.
  bool scaled = true;
};

struct Schema {
  std::vector<PredictorSpec> predictors;

  // Model-matrix column names: predictors in declaration order, each categorical
  // expanded to one indicator per non-reference level ("region:south").
  std::vector<std::string> design_columns() const;
  const PredictorSpec* find(std::string_view name) const;
  // Design columns generated by a predictor name, or the column itself if the
  // name is already a design column. Empty when unknown.
  std::vector<std::string> expand(std::string_view name) const;
  // Predictor that owns a design column.
  const PredictorSpec* owner_of(std::string_view design_column) const;

  static Schema from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

Schema load_schema(const std::filesystem::path& path);

struct Participant {
  std::string id;
  Group group = Group::a;
  std::string cluster_id;
  double weight = 1.0;
  bool weight_missing = false;
  std::array<std::optional<int>, 2> outcomes;
  // Aligned with Schema::design_columns().
  std::vector<double> x;

  std::optional<int> outcome(Outcome k) const { return outcomes[index_of(k)]; }
};

class Dataset {
 public:
  Dataset() = default;
  Dataset(Schema schema, std::vector<Participant> participants);

  const Schema& schema() const { return schema_; }
  const std::vector<Participant>& participants() const { return participants_; }
  const Participant& operator[](std::size_t i) const { return participants_[i]; }
  std::size_t size() const { return participants_.size(); }
  bool empty() const { return participants_.empty(); }

  const std::vector<std::string>& design_columns() const { return columns_; }
  std::optional<std::size_t> column_index(std::string_view name) const;

  std::array<std::size_t, 3> group_sizes() const;
  // Sorted distinct cluster ids and the per-participant index into them.
  const std::vector<std::string>& clusters() const { return clusters_; }
  std::size_t cluster_of(std::size_t participant) const { return cluster_index_[participant]; }
  bool has_outcomes() const;

  Dataset subset(const std::vector<std::size_t>& rows) const;

 private:
  void index();

  Schema schema_;
  std::vector<Participant> participants_;
  std::vector<std::string> columns_;
  std::vector<std::string> clusters_;
  std::vector<std::size_t> cluster_index_;
};

struct LoadOptions {
  // Outcome columns must be present and filled (training / validation data).
  bool require_outcomes = true;
};

Dataset parse_dataset(std::istream& in, const Schema& schema, const LoadOptions& opts = {});
Dataset load_dataset(const std::filesystem::path& path, const Schema& schema,
                     const LoadOptions& opts = {});
void write_dataset(const Dataset& d, std::ostream& out);
void write_dataset(const Dataset& d, const std::filesystem::path& path);

// Maps raw continuous predictors into [0, 1]: shift to a zero minimum when
// negative values occur, then divide by the declared or observed maximum.
Dataset scale_predictors(const Dataset& raw);

// Rescales weights so they sum to the participant count.
Dataset normalize_weights(const Dataset& d);

struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// K folds stratified by (group, AUD, CUD); deterministic in seed.
std::vector<Fold> stratified_folds(const Dataset& d, int k, std::uint64_t seed);

}  // namespace risk
