#include "risk/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "risk/csv.hpp"
#include "risk/parallel.hpp"

namespace risk {

namespace {

std::size_t require_column(const PosteriorDraws& pd, const std::string& name) {
  auto c = pd.column(name);
  if (!c) throw input_error("posterior draws lack column " + name);
  return *c;
}

}  // namespace

Predictor::Predictor(const FittedModel& model, QuadratureMode mode, int order)
    : model_(model), rule_(gauss_hermite(order, mode)) {
  const auto& pd = model_.draws;
  sigma_u_ = pd.column("sigma_u");
  sigma_s_ = pd.column("sigma_s");
  if (mode == QuadratureMode::bivariate && !sigma_s_)
    throw input_error("bivariate quadrature needs a model fitted with a school effect");
  Dataset empty(model_.schema, {});
  bind(empty);
}

void Predictor::bind(const Dataset& data) {
  const auto& pd = model_.draws;
  std::vector<Binding> bindings;
  std::vector<std::string> missing;
  for (const auto& s : model_.submodels) {
    Binding b;
    b.intercept = require_column(pd, intercept_name(s));
    for (const auto& name : s.predictors) {
      b.slope_columns.push_back(require_column(pd, slope_name(s, name)));
      auto col = data.column_index(name);
      if (!col) {
        if (std::find(missing.begin(), missing.end(), name) == missing.end()) missing.push_back(name);
        continue;
      }
      b.data_columns.push_back(*col);
    }
    bindings.push_back(std::move(b));
  }
  if (!missing.empty()) {
    std::string msg = "input lacks predictors required by the model:";
    for (const auto& m : missing) msg += " " + m;
    throw input_error(msg);
  }
  bindings_ = std::move(bindings);
  bound_ = true;
}

Eigen::VectorXd Predictor::draw_probabilities(const Participant& p, Outcome k) const {
  const auto m = find_submodel(model_.submodels, p.group, k);
  const auto& pd = model_.draws;
  const auto n = static_cast<Eigen::Index>(pd.draws());
  if (!m) return Eigen::VectorXd::Constant(n, std::numeric_limits<double>::quiet_NaN());
  const auto& b = bindings_[*m];
  Eigen::VectorXd out(n);
  for (Eigen::Index d = 0; d < n; ++d) {
    double eta = pd.values(d, static_cast<Eigen::Index>(b.intercept));
    for (std::size_t j = 0; j < b.slope_columns.size(); ++j)
      eta += pd.values(d, static_cast<Eigen::Index>(b.slope_columns[j])) * p.x[b.data_columns[j]];
    double su = sigma_u_ ? pd.values(d, static_cast<Eigen::Index>(*sigma_u_)) : 0.0;
    std::optional<double> ss;
    if (sigma_s_) ss = pd.values(d, static_cast<Eigen::Index>(*sigma_s_));
    // A model without a participant effect integrates its school effect instead.
    if (rule_.mode == QuadratureMode::univariate && !sigma_u_ && ss) su = *ss;
    out(d) = marginal_probability(eta, su, ss, rule_);
  }
  return out;
}

double sorted_quantile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

RiskPrediction Predictor::predict(const Participant& p) const {
  RiskPrediction r;
  r.id = p.id;
  r.group = p.group;
  for (auto k : all_outcomes) {
    auto& o = r.outcomes[static_cast<std::size_t>(index_of(k))];
    const auto m = find_submodel(model_.submodels, p.group, k);
    if (!m || model_.draws.draws() == 0) {
      o.mean = o.lo = o.hi = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    const Eigen::VectorXd probs = draw_probabilities(p, k);
    std::vector<double> sorted(probs.data(), probs.data() + probs.size());
    std::sort(sorted.begin(), sorted.end());
    double sum = 0.0;
    for (double v : sorted) sum += v;
    o.mean = sum / static_cast<double>(sorted.size());
    o.lo = sorted_quantile(sorted, 0.025);
    o.hi = sorted_quantile(sorted, 0.975);
    const double delta = model_.offset(*m);
    if (delta != 0.0) {
      o.mean = logistic(logit(o.mean) + delta);
      o.lo = logistic(logit(o.lo) + delta);
      o.hi = logistic(logit(o.hi) + delta);
    }
    o.covered = true;
    o.applicable = at_risk(p.group, k);
  }
  return r;
}

std::vector<RiskPrediction> Predictor::predict(const Dataset& data, unsigned threads) {
  bind(data);
  std::vector<RiskPrediction> out(data.size());
  parallel_for(data.size(), threads, [&](std::size_t i) { out[i] = predict(data[i]); });
  return out;
}

std::vector<OddsRatio> odds_ratios(const PosteriorDraws& pd, const std::vector<SubModelSpec>& specs,
                                   const Schema& schema) {
  std::vector<OddsRatio> out;
  const auto n = static_cast<Eigen::Index>(pd.draws());
  for (const auto& s : specs) {
    for (const auto& name : s.predictors) {
      const auto col = static_cast<Eigen::Index>(require_column(pd, slope_name(s, name)));
      const auto* owner = schema.owner_of(name);
      if (!owner) throw input_error("schema does not declare predictor " + name);
      double M = 1.0;
      if (owner->kind == PredictorKind::continuous) {
        if (!owner->scaling_max) throw input_error("predictor " + owner->name + " has no scaling_max");
        M = *owner->scaling_max;
      }
      std::vector<double> beta(static_cast<std::size_t>(n));
      std::vector<double> ors(static_cast<std::size_t>(n));
      for (Eigen::Index d = 0; d < n; ++d) {
        beta[static_cast<std::size_t>(d)] = pd.values(d, col);
        ors[static_cast<std::size_t>(d)] = std::exp(pd.values(d, col) / M);
      }
      std::sort(beta.begin(), beta.end());
      std::sort(ors.begin(), ors.end());
      OddsRatio r;
      r.submodel = s.label;
      r.predictor = name;
      r.scaling_max = M;
      double sb = 0.0, so = 0.0;
      for (std::size_t i = 0; i < beta.size(); ++i) {
        sb += beta[i];
        so += ors[i];
      }
      const double nd = static_cast<double>(std::max<Eigen::Index>(n, 1));
      r.beta_mean = sb / nd;
      r.or_mean = so / nd;
      r.beta_lo = sorted_quantile(beta, 0.025);
      r.beta_hi = sorted_quantile(beta, 0.975);
      r.or_lo = sorted_quantile(ors, 0.025);
      r.or_hi = sorted_quantile(ors, 0.975);
      out.push_back(std::move(r));
    }
  }
  return out;
}

void write_predictions(const std::vector<RiskPrediction>& rows, std::ostream& out) {
  out << "id,group,p_aud,p_aud_lo,p_aud_hi,aud_applicable,p_cud,p_cud_lo,p_cud_hi,cud_applicable\n";
  const auto num = [](double v) { return std::isnan(v) ? std::string() : csv::format(v); };
  for (const auto& r : rows) {
    out << csv::quote_if_needed(r.id) << ',' << to_string(r.group);
    for (auto k : all_outcomes) {
      const auto& o = r[k];
      out << ',' << num(o.mean) << ',' << num(o.lo) << ',' << num(o.hi) << ',' << (o.applicable ? 1 : 0);
    }
    out << '\n';
  }
}

}  // namespace risk
