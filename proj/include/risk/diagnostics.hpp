#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "risk/sampler.hpp"

namespace risk {

// Rank-normalised split R-hat of one parameter; `chains` is (iterations x chains).
// NaN when the within-chain variance is zero.
double split_rhat(const Eigen::MatrixXd& chains);

// Bulk effective sample size (rank-normalised, split chains, Geyer's initial
// monotone sequence). NaN when the draws are constant.
double ess_bulk(const Eigen::MatrixXd& chains);

struct ParameterDiagnostics {
  std::string name;
  double rhat = 0.0;
  double ess_bulk = 0.0;
  // Set when R-hat is undefined or above 1.01.
  bool flagged = false;
};

struct DiagnosticsReport {
  std::vector<ParameterDiagnostics> parameters;
  std::size_t divergences = 0;
  double divergence_fraction = 0.0;
  bool high_divergence = false;  // more than 20% of kept draws
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
};

DiagnosticsReport diagnostics(const PosteriorDraws& pd);

}  // namespace risk
