#include "risk/selection_eval.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <boost/math/tools/roots.hpp>

#include "risk/csv.hpp"
#include "risk/parallel.hpp"

namespace risk {

namespace {

nlohmann::json optional_json(const std::optional<double>& v) {
  return v && std::isfinite(*v) ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

nlohmann::json finite_json(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

std::optional<double> mean_defined(const std::vector<std::optional<double>>& v) {
  double s = 0.0;
  int n = 0;
  for (const auto& x : v)
    if (x) {
      s += *x;
      ++n;
    }
  if (n == 0) return std::nullopt;
  return s / n;
}

}  // namespace

void SelectionRule::validate() const {
  if (!(level > 0.0 && level < 1.0)) throw input_error("selection level must lie in (0, 1)");
  if (!(cutoff >= 0.0)) throw input_error("selection cutoff must be >= 0");
}

std::string_view to_string(SelectionRule::Method m) {
  return m == SelectionRule::Method::threshold ? "threshold" : "credible_interval";
}

std::optional<SelectionRule::Method> parse_selection_method(std::string_view s) {
  if (s == "threshold") return SelectionRule::Method::threshold;
  if (s == "credible_interval" || s == "ci") return SelectionRule::Method::credible_interval;
  return std::nullopt;
}

SelectionRule SelectionRule::from_json(const nlohmann::json& j) {
  SelectionRule r;
  if (j.contains("method")) {
    auto m = parse_selection_method(j.at("method").get<std::string>());
    if (!m) throw input_error("unknown selection method " + j.at("method").get<std::string>());
    r.method = *m;
  }
  r.level = j.value("level", r.level);
  r.cutoff = j.value("cutoff", r.cutoff);
  r.validate();
  return r;
}

nlohmann::json SelectionRule::to_json() const {
  return {{"method", std::string(to_string(method))}, {"level", level}, {"cutoff", cutoff}};
}

std::vector<std::vector<std::string>> select_variables(const PosteriorDraws& pd,
                                                       const std::vector<SubModelSpec>& specs,
                                                       const SelectionRule& rule) {
  rule.validate();
  std::vector<std::vector<std::string>> out(specs.size());
  for (std::size_t m = 0; m < specs.size(); ++m) {
    for (const auto& name : specs[m].predictors) {
      const auto col = pd.column(slope_name(specs[m], name));
      if (!col) throw input_error("draws lack slope " + slope_name(specs[m], name));
      std::vector<double> v(pd.draws());
      for (std::size_t d = 0; d < v.size(); ++d)
        v[d] = pd.values(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(*col));
      std::sort(v.begin(), v.end());
      bool keep = false;
      if (rule.method == SelectionRule::Method::threshold) {
        double s = 0.0;
        for (double x : v) s += x;
        keep = !v.empty() && std::abs(s / static_cast<double>(v.size())) >= rule.cutoff;
      } else {
        const double tail = (1.0 - rule.level) / 2.0;
        const double lo = sorted_quantile(v, tail);
        const double hi = sorted_quantile(v, 1.0 - tail);
        keep = lo > 0.0 || hi < 0.0;
      }
      if (keep) out[m].push_back(name);
    }
  }
  return out;
}

std::vector<SubModelSpec> restrict_predictors(std::vector<SubModelSpec> specs,
                                              const std::vector<std::vector<std::string>>& keep) {
  for (std::size_t m = 0; m < specs.size() && m < keep.size(); ++m) specs[m].predictors = keep[m];
  return specs;
}

FittedModel fit_model(const Dataset& train, std::vector<SubModelSpec> specs, const PriorConfig& prior,
                      const SamplerConfig& cfg) {
  const Dataset d = normalize_weights(train);
  JointModel jm(d, specs, prior);
  FittedModel m;
  m.schema = train.schema();
  m.submodels = std::move(specs);
  m.prior = prior;
  m.draws = sample(jm, cfg);
  m.offsets.assign(m.submodels.size(), 0.0);
  return m;
}

EvaluationRows evaluation_rows(const Dataset& d, const std::vector<RiskPrediction>& preds, Outcome k,
                               std::optional<Group> group) {
  EvaluationRows ev;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto& p = d[i];
    if (group && p.group != *group) continue;
    const auto& o = preds[i][k];
    const auto y = p.outcome(k);
    if (!o.applicable || !y) continue;
    ev.rows.push_back(i);
    ev.probs.push_back(o.mean);
    ev.labels.push_back(*y);
  }
  return ev;
}

nlohmann::json OutcomeMetrics::to_json() const {
  nlohmann::json q = nlohmann::json::array();
  for (const auto& r : quintiles) q.push_back(r.to_json());
  nlohmann::json s = nlohmann::json::array();
  for (const auto& t : subgroups) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : t.rows) rows.push_back(r.to_json());
    s.push_back({{"covariate", t.covariate},
                 {"split", t.split == SubgroupSplit::median ? "median" : "levels"},
                 {"rows", rows}});
  }
  return {{"outcome", std::string(to_string(outcome))},
          {"n", n},
          {"cases", cases},
          {"expected", expected},
          {"auc", optional_json(auc)},
          {"e_over_o", optional_json(e_over_o)},
          {"brier", finite_json(brier)},
          {"quintiles", q},
          {"subgroups", s}};
}

OutcomeMetrics outcome_metrics(Outcome k, const EvaluationRows& ev, const Dataset* covariates) {
  OutcomeMetrics m;
  m.outcome = k;
  m.n = ev.rows.size();
  for (std::size_t i = 0; i < ev.rows.size(); ++i) {
    m.cases += static_cast<std::size_t>(ev.labels[i]);
    m.expected += ev.probs[i];
  }
  m.auc = auc(ev.probs, ev.labels);
  m.e_over_o = e_over_o(ev.probs, ev.labels);
  m.brier = brier(ev.probs, ev.labels);
  if (!covariates) return m;
  if (m.n >= 5) m.quintiles = quintile_table(ev.probs, ev.labels);
  if (m.n == 0) return m;
  const auto& cols = covariates->design_columns();
  for (std::size_t c = 0; c < cols.size(); ++c) {
    std::vector<double> x(ev.rows.size());
    bool binary = true;
    for (std::size_t i = 0; i < ev.rows.size(); ++i) {
      x[i] = (*covariates)[ev.rows[i]].x[c];
      binary = binary && (x[i] == 0.0 || x[i] == 1.0);
    }
    SubgroupTable t;
    t.covariate = cols[c];
    t.split = binary ? SubgroupSplit::levels : SubgroupSplit::median;
    t.rows = binary ? subgroup_table(ev.probs, ev.labels, x, t.split, {0.0, 1.0})
                    : subgroup_table(ev.probs, ev.labels, x, t.split);
    m.subgroups.push_back(std::move(t));
  }
  return m;
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json j;
  for (const auto& o : outcomes) j["outcomes"][std::string(to_string(o.outcome))] = o.to_json();
  j["groups"] = nlohmann::json::array();
  for (const auto& g : groups)
    j["groups"].push_back({{"submodel", submodel_key(g.group, g.outcome)},
                           {"n", g.n},
                           {"cases", g.cases},
                           {"auc", optional_json(g.auc)},
                           {"e_over_o", optional_json(g.e_over_o)},
                           {"brier", finite_json(g.brier)}});
  return j;
}

MetricsReport metrics_report(const Dataset& d, const std::vector<RiskPrediction>& preds, bool tables) {
  if (preds.size() != d.size()) throw input_error("prediction count does not match the dataset");
  MetricsReport r;
  for (auto k : all_outcomes) {
    r.outcomes[static_cast<std::size_t>(index_of(k))] =
        outcome_metrics(k, evaluation_rows(d, preds, k), tables ? &d : nullptr);
  }
  for (auto g : all_groups)
    for (auto k : all_outcomes) {
      if (!at_risk(g, k)) continue;
      const auto ev = evaluation_rows(d, preds, k, g);
      if (ev.rows.empty()) continue;
      const auto om = outcome_metrics(k, ev);
      r.groups.push_back({g, k, om.n, om.cases, om.auc, om.e_over_o, om.brier});
    }
  return r;
}

void write_quintiles_csv(const MetricsReport& r, std::ostream& out) {
  out << "outcome,quintile,n,expected,observed,e_over_o\n";
  for (const auto& o : r.outcomes)
    for (const auto& q : o.quintiles)
      out << to_string(o.outcome) << ',' << q.label << ',' << q.n << ',' << csv::format(q.expected) << ','
          << csv::format(q.observed) << ',' << (q.e_over_o ? csv::format(*q.e_over_o) : "") << '\n';
}

void write_subgroups_csv(const MetricsReport& r, std::ostream& out) {
  out << "outcome,covariate,split,level,n,expected,observed,e_over_o,empty\n";
  for (const auto& o : r.outcomes)
    for (const auto& t : o.subgroups)
      for (const auto& q : t.rows)
        out << to_string(o.outcome) << ',' << csv::quote_if_needed(t.covariate) << ','
            << (t.split == SubgroupSplit::median ? "median" : "levels") << ',' << csv::quote_if_needed(q.label)
            << ',' << q.n << ',' << csv::format(q.expected) << ',' << csv::format(q.observed) << ','
            << (q.e_over_o ? csv::format(*q.e_over_o) : "") << ',' << (q.empty ? 1 : 0) << '\n';
}

nlohmann::json CvReport::to_json() const {
  nlohmann::json j;
  j["pooled"] = pooled.to_json();
  j["n_pooled"] = n_pooled;
  j["submodels"] = submodels_to_json(submodels);
  for (auto k : all_outcomes) {
    const auto i = static_cast<std::size_t>(index_of(k));
    j["fold_average"][std::string(to_string(k))] = {{"auc", optional_json(mean_fold_auc[i])},
                                                    {"e_over_o", optional_json(mean_fold_e_over_o[i])}};
  }
  j["folds"] = nlohmann::json::array();
  for (const auto& f : folds) {
    nlohmann::json fj{{"fold", f.fold}, {"n_train", f.n_train}, {"n_test", f.n_test}};
    for (auto k : all_outcomes) {
      const auto i = static_cast<std::size_t>(index_of(k));
      fj[std::string(to_string(k))] = {{"auc", optional_json(f.auc[i])},
                                       {"auc_flagged", !f.auc[i].has_value()},
                                       {"e_over_o", optional_json(f.e_over_o[i])},
                                       {"brier", finite_json(f.brier[i])}};
    }
    nlohmann::json sel = nlohmann::json::object();
    for (std::size_t m = 0; m < f.selected.size() && m < submodels.size(); ++m)
      sel[submodels[m].label] = f.selected[m];
    fj["selected"] = sel;
    j["folds"].push_back(fj);
  }
  return j;
}

CvReport cross_validate(const Dataset& d, const std::vector<SubModelSpec>& specs, const PriorConfig& prior,
                        const SelectionRule& rule, const SamplerConfig& cfg, const CvOptions& opt) {
  rule.validate();
  cfg.validate();
  const auto folds = stratified_folds(d, opt.folds, opt.seed);
  std::vector<FoldMetrics> fold_metrics(folds.size());
  std::vector<RiskPrediction> preds(d.size());
  const unsigned outer = std::min<unsigned>(opt.threads == 0 ? default_threads() : opt.threads,
                                            static_cast<unsigned>(folds.size()));

  parallel_for(folds.size(), outer, [&](std::size_t f) {
    const Dataset train = d.subset(folds[f].train);
    const Dataset test = d.subset(folds[f].test);
    SamplerConfig c = cfg;
    c.seed = derive_seed(opt.seed, "cv-fit", f);
    c.threads = outer > 1 ? 1 : opt.threads;
    FittedModel full = fit_model(train, specs, prior, c);
    const auto keep = select_variables(full.draws, specs, rule);
    const auto selected = restrict_predictors(specs, keep);
    bool changed = false;
    for (std::size_t m = 0; m < specs.size(); ++m) changed = changed || keep[m] != specs[m].predictors;
    FittedModel refit;
    if (changed) {
      c.seed = derive_seed(opt.seed, "cv-refit", f);
      refit = fit_model(train, selected, prior, c);
    }
    const FittedModel& final_model = changed ? refit : full;
    Predictor predictor(final_model, opt.mode, opt.order);
    const auto fold_preds = predictor.predict(test, 1);
    for (std::size_t i = 0; i < fold_preds.size(); ++i) preds[folds[f].test[i]] = fold_preds[i];

    FoldMetrics fm;
    fm.fold = static_cast<int>(f);
    fm.n_train = train.size();
    fm.n_test = test.size();
    fm.selected = keep;
    for (auto k : all_outcomes) {
      const auto i = static_cast<std::size_t>(index_of(k));
      const auto ev = evaluation_rows(test, fold_preds, k);
      fm.auc[i] = auc(ev.probs, ev.labels);
      fm.e_over_o[i] = e_over_o(ev.probs, ev.labels);
      fm.brier[i] = brier(ev.probs, ev.labels);
    }
    fold_metrics[f] = std::move(fm);
  });

  CvReport r;
  r.submodels = specs;
  r.pooled = metrics_report(d, preds, true);
  r.folds = std::move(fold_metrics);
  for (auto k : all_outcomes) {
    const auto i = static_cast<std::size_t>(index_of(k));
    std::vector<std::optional<double>> a, e;
    for (const auto& f : r.folds) {
      a.push_back(f.auc[i]);
      e.push_back(f.e_over_o[i]);
    }
    r.mean_fold_auc[i] = mean_defined(a);
    r.mean_fold_e_over_o[i] = mean_defined(e);
    r.n_pooled += r.pooled.outcomes[i].n;
  }
  return r;
}

nlohmann::json RecalibrationResult::to_json() const {
  nlohmann::json entries_json = nlohmann::json::array();
  for (const auto& e : entries)
    entries_json.push_back({{"label", e.label},
                            {"n", e.n},
                            {"observed", e.observed},
                            {"expected_before", e.expected_before},
                            {"expected_after", e.expected_after},
                            {"delta", optional_json(e.delta)},
                            {"skipped", e.skipped}});
  return {{"entries", entries_json}, {"offsets", model.offsets}};
}

RecalibrationResult recalibrate_intercepts(const FittedModel& model, const Dataset& validation,
                                           RecalibrationScope scope, QuadratureMode mode, int order,
                                           unsigned threads) {
  FittedModel base = model;
  base.offsets.assign(base.submodels.size(), 0.0);
  Predictor predictor(base, mode, order);
  const auto preds = predictor.predict(validation, threads);

  // Recalibration units: sub-models (or outcomes) that cover at-risk pairs.
  const auto applicable = [&](std::size_t m) {
    const auto& s = base.submodels[m];
    return std::any_of(s.groups.begin(), s.groups.end(), [&](Group g) { return at_risk(g, s.outcome); });
  };
  std::vector<RecalibrationEntry> units;
  if (scope == RecalibrationScope::submodel) {
    for (std::size_t m = 0; m < base.submodels.size(); ++m) {
      if (!applicable(m)) continue;
      RecalibrationEntry e;
      e.label = base.submodels[m].label;
      e.submodels = {m};
      units.push_back(std::move(e));
    }
  } else {
    for (auto k : all_outcomes) {
      RecalibrationEntry e;
      e.label = std::string(to_string(k));
      for (std::size_t m = 0; m < base.submodels.size(); ++m)
        if (base.submodels[m].outcome == k && applicable(m)) e.submodels.push_back(m);
      if (!e.submodels.empty()) units.push_back(std::move(e));
    }
  }

  RecalibrationResult result;
  result.model = model;
  result.model.offsets.assign(model.submodels.size(), 0.0);
  for (std::size_t m = 0; m < model.submodels.size(); ++m) result.model.offsets[m] = model.offset(m);

  for (auto& e : units) {
    std::vector<double> a;
    for (std::size_t i = 0; i < validation.size(); ++i) {
      const auto& p = validation[i];
      const auto k = base.submodels[e.submodels.front()].outcome;
      const auto m = find_submodel(base.submodels, p.group, k);
      if (!m || std::find(e.submodels.begin(), e.submodels.end(), *m) == e.submodels.end()) continue;
      const auto& o = preds[i][k];
      const auto y = p.outcome(k);
      if (!o.applicable || !y) continue;
      a.push_back(logit(o.mean));
      e.observed += *y;
      e.expected_before += logistic(a.back() + model.offset(*m));
    }
    e.n = a.size();
    if (e.observed <= 0) {
      e.skipped = "no cases";
    } else if (e.observed >= static_cast<double>(e.n)) {
      e.skipped = "no non-cases";
    }
    if (!e.skipped.empty()) {
      e.expected_after = e.expected_before;
      result.entries.push_back(std::move(e));
      continue;
    }
    const double target = e.observed;
    const auto f = [&](double delta) {
      double s = 0.0;
      for (double x : a) s += logistic(x + delta);
      return s - target;
    };
    double lo = -1.0, hi = 1.0;
    while (f(lo) > 0 && lo > -800) lo *= 2;
    while (f(hi) < 0 && hi < 800) hi *= 2;
    std::uintmax_t iters = 500;
    const auto bracket =
        boost::math::tools::toms748_solve(f, lo, hi, boost::math::tools::eps_tolerance<double>(52), iters);
    double delta = 0.5 * (bracket.first + bracket.second);
    if (std::abs(f(bracket.first)) < std::abs(f(delta))) delta = bracket.first;
    if (std::abs(f(bracket.second)) < std::abs(f(delta))) delta = bracket.second;
    e.delta = delta;
    e.expected_after = f(delta) + target;
    for (auto m : e.submodels) result.model.offsets[m] = delta;
    result.entries.push_back(std::move(e));
  }
  return result;
}

}  // namespace risk
