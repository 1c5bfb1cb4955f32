#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace risk {

// Mann-Whitney AUC with ties counted one half. Empty when either class is absent.
std::optional<double> auc(const std::vector<double>& scores, const std::vector<int>& labels);

// Sum of probabilities over number of cases. Empty when there are no cases.
std::optional<double> e_over_o(const std::vector<double>& probs, const std::vector<int>& labels);

// Mean squared error of probabilities; NaN for empty input.
double brier(const std::vector<double>& probs, const std::vector<int>& labels);

struct CalibrationRow {
  std::string label;
  std::size_t n = 0;
  double expected = 0.0;
  double observed = 0.0;
  std::optional<double> e_over_o;
  bool empty = false;

  nlohmann::json to_json() const;
};

// Five equal-count groups by ascending probability; the lowest groups take the
// remainder. Needs at least five rows.
std::vector<CalibrationRow> quintile_table(const std::vector<double>& probs, const std::vector<int>& labels);

enum class SubgroupSplit { levels, median };

// Levels split: one row per entry of `levels` (distinct observed values when
// empty). Median split: "<= median" and "> median" of the covariate.
std::vector<CalibrationRow> subgroup_table(const std::vector<double>& probs, const std::vector<int>& labels,
                                           const std::vector<double>& covariate, SubgroupSplit split,
                                           std::vector<double> levels = {});

}  // namespace risk
