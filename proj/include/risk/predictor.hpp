#pragma once

#include <array>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "risk/data_model.hpp"
#include "risk/model_spec.hpp"
#include "risk/quadrature.hpp"
#include "risk/sampler.hpp"

namespace risk {

// Everything needed to predict: posterior draws plus the structure they belong to.
struct FittedModel {
  Schema schema;
  std::vector<SubModelSpec> submodels;
  PriorConfig prior;
  PosteriorDraws draws;
  // Logit-scale shift of each sub-model's predictive probability; all zero
  // until recalibrate_intercepts sets them.
  std::vector<double> offsets;

  double offset(std::size_t submodel) const { return submodel < offsets.size() ? offsets[submodel] : 0.0; }
};

struct OutcomePrediction {
  double mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  // False for structural-zero outcomes and for outcomes no sub-model covers.
  bool applicable = false;
  bool covered = false;
};

struct RiskPrediction {
  std::string id;
  Group group = Group::a;
  std::array<OutcomePrediction, 2> outcomes;

  const OutcomePrediction& operator[](Outcome k) const { return outcomes[index_of(k)]; }
};

class Predictor {
 public:
  // Throws input_error for bivariate mode on a model without a school effect.
  explicit Predictor(const FittedModel& model, QuadratureMode mode = QuadratureMode::univariate,
                     int order = default_quadrature_order);

  // Checks that `data` carries every design column the sub-models use and
  // binds column positions. Throws input_error naming the missing ones.
  void bind(const Dataset& data);

  // Marginal probability under each posterior draw, in draw order.
  Eigen::VectorXd draw_probabilities(const Participant& p, Outcome k) const;

  RiskPrediction predict(const Participant& p) const;
  std::vector<RiskPrediction> predict(const Dataset& data, unsigned threads = 1);

  const FittedModel& model() const { return model_; }

 private:
  struct Binding {
    std::size_t intercept = 0;
    std::vector<std::size_t> slope_columns;  // into draws
    std::vector<std::size_t> data_columns;   // into Participant::x
  };

  const FittedModel& model_;
  QuadratureRule rule_;
  std::optional<std::size_t> sigma_u_;
  std::optional<std::size_t> sigma_s_;
  std::vector<Binding> bindings_;
  bool bound_ = false;
};

// Type-7 sample quantile of already sorted values.
double sorted_quantile(const std::vector<double>& sorted, double q);

struct OddsRatio {
  std::string submodel;
  std::string predictor;  // design column
  double scaling_max = 1.0;
  double beta_mean = 0.0;
  double beta_lo = 0.0;
  double beta_hi = 0.0;
  // Posterior mean and central 95% interval of exp(beta / M).
  double or_mean = 1.0;
  double or_lo = 1.0;
  double or_hi = 1.0;
};

std::vector<OddsRatio> odds_ratios(const PosteriorDraws& pd, const std::vector<SubModelSpec>& specs,
                                   const Schema& schema);

void write_predictions(const std::vector<RiskPrediction>& rows, std::ostream& out);

}  // namespace risk
