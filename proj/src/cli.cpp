#include "risk/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "risk/bundle.hpp"
#include "risk/csv.hpp"
#include "risk/data_model.hpp"
#include "risk/diagnostics.hpp"
#include "risk/hash.hpp"
#include "risk/model_spec.hpp"
#include "risk/predictor.hpp"
#include "risk/sampler.hpp"
#include "risk/selection_eval.hpp"
#include "risk/simulation.hpp"

namespace risk {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw input_error(path.string() + ": " + e.what());
  }
}

void make_out_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw io_error("cannot create " + dir.string() + ": " + ec.message());
}

template <class F>
void write_file(const fs::path& path, F&& body) {
  std::ostringstream ss;
  body(ss);
  write_text(path, ss.str());
}

std::optional<std::string> env(const char* name) {
  const char* v = std::getenv(name);
  if (!v || !*v) return std::nullopt;
  return std::string(v);
}

// Values shared by every command. Flags win over environment variables.
struct Common {
  std::optional<std::uint64_t> seed_flag;
  std::optional<unsigned> threads_flag;

  std::uint64_t seed() const {
    if (seed_flag) return *seed_flag;
    if (auto e = env("RISK_ENGINE_SEED")) {
      auto v = csv::parse_int(*e);
      if (!v || *v < 0) throw input_error("RISK_ENGINE_SEED must be a non-negative integer");
      return static_cast<std::uint64_t>(*v);
    }
    return 1;
  }

  unsigned threads() const {
    if (threads_flag) return *threads_flag;
    if (auto e = env("RISK_ENGINE_THREADS")) {
      auto v = csv::parse_int(*e);
      if (!v || *v < 0) throw input_error("RISK_ENGINE_THREADS must be a non-negative integer");
      return static_cast<unsigned>(*v);
    }
    return 0;
  }
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--seed", c.seed_flag, "Master seed (env RISK_ENGINE_SEED)");
  cmd->add_option("--threads", c.threads_flag, "Worker threads, 0 = all cores (env RISK_ENGINE_THREADS)");
}

struct SamplerFlags {
  std::string config;
  std::optional<int> chains, warmup, iter, max_depth;
  std::optional<double> target_accept;
  bool keep_random_effects = false;

  SamplerConfig build(std::uint64_t seed, unsigned threads, SamplerConfig base = {}) const {
    SamplerConfig c = base;
    if (!config.empty()) c = SamplerConfig::from_json(read_json(config), c);
    if (chains) c.chains = *chains;
    if (warmup) c.warmup_iters = *warmup;
    if (iter) c.sampling_iters = *iter;
    if (max_depth) c.max_tree_depth = *max_depth;
    if (target_accept) c.target_accept = *target_accept;
    if (keep_random_effects) c.keep_random_effects = true;
    c.seed = seed;
    c.threads = threads;
    c.validate();
    return c;
  }
};

void add_sampler(CLI::App* cmd, SamplerFlags& s) {
  cmd->add_option("--sampler-config", s.config, "Sampler settings (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--chains", s.chains, "Number of chains");
  cmd->add_option("--warmup", s.warmup, "Warmup iterations per chain (0 or >= 100)");
  cmd->add_option("--iter", s.iter, "Kept iterations per chain");
  cmd->add_option("--target-accept", s.target_accept, "Target acceptance statistic");
  cmd->add_option("--max-depth", s.max_depth, "Maximum tree depth");
  cmd->add_flag("--keep-random-effects", s.keep_random_effects, "Store participant and school effects in the draws");
}

struct PriorFlags {
  std::string config;
  std::string slope;
  bool no_school = false;

  PriorConfig build(const std::optional<SlopePrior>& from_submodels) const {
    PriorConfig p;
    if (!config.empty()) p = PriorConfig::from_json(read_json(config));
    if (from_submodels) p.slope_prior = *from_submodels;
    if (!slope.empty()) {
      auto s = parse_slope_prior(slope);
      if (!s) throw input_error("unknown prior '" + slope + "' (expected lasso or t)");
      p.slope_prior = *s;
    }
    if (no_school) p.include_school_effect = false;
    p.validate();
    return p;
  }
};

void add_prior(CLI::App* cmd, PriorFlags& p) {
  cmd->add_option("--prior-config", p.config, "Prior settings (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--prior", p.slope, "Slope prior: lasso or t");
  cmd->add_flag("--no-school-effect", p.no_school, "Fit without the school random effect");
}

QuadratureMode parse_mode(const std::string& s) {
  auto m = parse_quadrature_mode(s);
  if (!m) throw input_error("unknown quadrature mode '" + s + "' (expected univariate or bivariate)");
  return *m;
}

Dataset load_data(const fs::path& path, const Schema& schema, bool outcomes) {
  if (!fs::exists(path)) throw io_error("cannot open " + path.string());
  if (fs::file_size(path) == 0) return Dataset(schema, {});
  LoadOptions opts;
  opts.require_outcomes = outcomes;
  Dataset d = load_dataset(path, schema, opts);
  const bool raw = std::any_of(schema.predictors.begin(), schema.predictors.end(),
                               [](const PredictorSpec& p) { return p.kind == PredictorKind::continuous && !p.scaled; });
  return raw ? scale_predictors(d) : d;
}

// Marks the continuous predictors of a fitted schema as raw so that incoming
// data is mapped with the stored shift and scaling maximum.
Schema as_raw(Schema s) {
  for (auto& p : s.predictors)
    if (p.kind == PredictorKind::continuous) p.scaled = false;
  return s;
}

RunManifest start_manifest(const std::string& command, const json& config, std::uint64_t seed,
                           const std::vector<std::string>& inputs) {
  RunManifest m;
  m.command = command;
  m.config_hash = sha256_hex(config.dump());
  m.seed = seed;
  m.started = utc_timestamp();
  for (const auto& in : inputs)
    if (!in.empty()) m.inputs[in] = fs::is_directory(in) ? bundle_hash(in) : sha256_file(in);
  return m;
}

std::string fmt(double v, int precision = 3) {
  if (!std::isfinite(v)) return "NA";
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(precision) << v;
  return ss.str();
}

std::string fmt(const std::optional<double>& v, int precision = 3) { return v ? fmt(*v, precision) : "NA"; }

void print_metrics(std::ostream& os, const MetricsReport& r) {
  for (const auto& o : r.outcomes)
    os << "  " << to_string(o.outcome) << ": n=" << o.n << " cases=" << o.cases << " AUC=" << fmt(o.auc)
       << " E/O=" << fmt(o.e_over_o) << " Brier=" << fmt(o.brier) << "\n";
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  Common common;
  SamplerFlags sampler;
  PriorFlags prior;
  std::string data, schema, submodels, out;
};

int cmd_train(const TrainArgs& a) {
  const auto seed = a.common.seed();
  const Schema schema = load_schema(a.schema);
  const Dataset data = load_data(a.data, schema, true);
  const SubModelConfig sub = a.submodels.empty() ? SubModelConfig{} : load_submodel_config(a.submodels);
  std::vector<std::string> warnings;
  const auto specs = default_joint_spec(data.schema(), sub, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
  const PriorConfig prior = a.prior.build(sub.prior);
  const SamplerConfig cfg = a.sampler.build(seed, a.common.threads());

  const json config{{"prior", prior.to_json()}, {"sampler", cfg.to_json()}, {"submodels", submodels_to_json(specs)}};
  auto manifest = start_manifest("train", config, seed, {a.data, a.schema, a.submodels});
  make_out_dir(a.out);

  FittedModel model = fit_model(data, specs, prior, cfg);
  const auto diag = diagnostics(model.draws);
  save_bundle(a.out, model, manifest, &diag);

  double max_rhat = 0.0;
  std::size_t flagged = 0;
  for (const auto& p : diag.parameters) {
    if (p.flagged) ++flagged;
    if (std::isfinite(p.rhat)) max_rhat = std::max(max_rhat, p.rhat);
  }
  std::cout << "trained " << specs.size() << " sub-models on " << data.size() << " participants\n"
            << "draws: " << model.draws.draws() << " x " << model.draws.names.size() << "\n"
            << "max R-hat: " << fmt(max_rhat) << " (" << flagged << " flagged)\n"
            << "divergences: " << diag.divergences << "\n";
  for (const auto& w : diag.warnings) std::cerr << "warning: " << w << "\n";
  return 0;
}

// ---------------------------------------------------------------- cv

struct CvArgs {
  Common common;
  SamplerFlags sampler;
  PriorFlags prior;
  std::string data, schema, submodels, configs, out, method = "threshold", mode = "univariate";
  double cutoff = 0.10, level = 0.95;
  int folds = 5;
};

struct CvVariant {
  std::string name;
  PriorConfig prior;
  SelectionRule rule;
};

std::string file_safe(std::string s) {
  for (auto& c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
  return s;
}

int cmd_cv(const CvArgs& a) {
  const auto seed = a.common.seed();
  const unsigned threads = a.common.threads();
  const Schema schema = load_schema(a.schema);
  const Dataset data = load_data(a.data, schema, true);
  const SubModelConfig sub = a.submodels.empty() ? SubModelConfig{} : load_submodel_config(a.submodels);
  std::vector<std::string> warnings;
  const auto specs = default_joint_spec(data.schema(), sub, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
  const PriorConfig base_prior = a.prior.build(sub.prior);

  std::vector<CvVariant> variants;
  if (!a.configs.empty()) {
    const json list = read_json(a.configs);
    if (!list.is_array() || list.empty()) throw input_error("--configs must hold a non-empty JSON array");
    for (const auto& item : list) {
      CvVariant v;
      v.prior = base_prior;
      try {
        v.name = item.value("name", "config" + std::to_string(variants.size() + 1));
        if (item.contains("prior")) {
          const auto& p = item.at("prior");
          if (p.is_string()) {
            auto s = parse_slope_prior(p.get<std::string>());
            if (!s) throw input_error("unknown prior '" + p.get<std::string>() + "'");
            v.prior.slope_prior = *s;
          } else {
            v.prior = PriorConfig::from_json(p);
          }
        }
        v.rule = item.contains("selection") ? SelectionRule::from_json(item.at("selection")) : SelectionRule{};
      } catch (const json::exception& e) {
        throw input_error(std::string("--configs: ") + e.what());
      }
      variants.push_back(std::move(v));
    }
  } else {
    CvVariant v;
    v.prior = base_prior;
    auto m = parse_selection_method(a.method);
    if (!m) throw input_error("unknown selection method '" + a.method + "'");
    v.rule.method = *m;
    v.rule.cutoff = a.cutoff;
    v.rule.level = a.level;
    v.rule.validate();
    v.name = std::string(to_string(v.prior.slope_prior)) + "-" + std::string(to_string(v.rule.method));
    variants.push_back(std::move(v));
  }

  const SamplerConfig cfg = a.sampler.build(seed, threads);
  CvOptions opt;
  opt.folds = a.folds;
  opt.seed = seed;
  opt.threads = threads;
  opt.mode = parse_mode(a.mode);

  json config{{"folds", a.folds}, {"sampler", cfg.to_json()}, {"mode", a.mode}, {"variants", json::array()}};
  for (const auto& v : variants)
    config["variants"].push_back({{"name", v.name}, {"prior", v.prior.to_json()}, {"selection", v.rule.to_json()}});
  auto manifest = start_manifest("cv", config, seed, {a.data, a.schema, a.submodels, a.configs});
  make_out_dir(a.out);

  json report{{"folds", a.folds}, {"variants", json::array()}};
  std::vector<std::string> outputs{"cv_report.json", "comparison.csv"};
  std::ostringstream comparison;
  comparison << "name,prior,selection,auc_aud,auc_cud,e_over_o_aud,e_over_o_cud,brier_aud,brier_cud\n";
  for (const auto& v : variants) {
    const auto r = cross_validate(data, specs, v.prior, v.rule, cfg, opt);
    json entry{{"name", v.name}, {"prior", v.prior.to_json()}, {"selection", v.rule.to_json()}, {"report", r.to_json()}};
    report["variants"].push_back(entry);
    const auto opt_num = [](const std::optional<double>& x) { return x ? csv::format(*x) : std::string(); };
    comparison << csv::quote_if_needed(v.name) << ',' << to_string(v.prior.slope_prior) << ','
               << to_string(v.rule.method) << ',' << opt_num(r.mean_fold_auc[0]) << ',' << opt_num(r.mean_fold_auc[1])
               << ',' << opt_num(r.mean_fold_e_over_o[0]) << ',' << opt_num(r.mean_fold_e_over_o[1]) << ','
               << csv::format(r.pooled.outcomes[0].brier) << ',' << csv::format(r.pooled.outcomes[1].brier) << '\n';
    const auto stem = file_safe(v.name);
    write_file(fs::path(a.out) / ("quintiles_" + stem + ".csv"), [&](std::ostream& os) { write_quintiles_csv(r.pooled, os); });
    write_file(fs::path(a.out) / ("subgroups_" + stem + ".csv"), [&](std::ostream& os) { write_subgroups_csv(r.pooled, os); });
    outputs.push_back("quintiles_" + stem + ".csv");
    outputs.push_back("subgroups_" + stem + ".csv");
    std::cout << v.name << " (pooled over " << a.folds << " folds)\n";
    print_metrics(std::cout, r.pooled);
  }
  write_text(fs::path(a.out) / "cv_report.json", report.dump(2) + "\n");
  write_text(fs::path(a.out) / "comparison.csv", comparison.str());
  write_manifest(a.out, manifest, outputs);
  return 0;
}

// ---------------------------------------------------------------- predict

struct PredictArgs {
  Common common;
  std::string bundle, data, out, mode = "univariate";
  int order = default_quadrature_order;
  bool raw = false;
};

int cmd_predict(const PredictArgs& a) {
  const FittedModel model = load_bundle(a.bundle);
  Predictor predictor(model, parse_mode(a.mode), a.order);
  const Dataset data = load_data(a.data, a.raw ? as_raw(model.schema) : model.schema, false);
  const json config{{"mode", a.mode}, {"order", a.order}, {"raw", a.raw}};
  auto manifest = start_manifest("predict", config, a.common.seed(), {a.bundle, a.data});
  make_out_dir(a.out);
  const auto preds = predictor.predict(data, a.common.threads());
  write_file(fs::path(a.out) / "predictions.csv", [&](std::ostream& os) { write_predictions(preds, os); });
  write_manifest(a.out, manifest, {"predictions.csv"});
  std::cout << "predicted " << preds.size() << " individuals\n";
  return 0;
}

// ---------------------------------------------------------------- validate

struct ValidateArgs {
  Common common;
  std::string bundle, data, out, mode = "univariate", scope = "submodel";
  int order = default_quadrature_order;
  bool recalibrate = false;
  bool raw = false;
};

void write_evaluation(const fs::path& dir, const std::string& suffix, const Dataset& data,
                      const std::vector<RiskPrediction>& preds, const MetricsReport& report,
                      std::vector<std::string>& outputs) {
  const auto name = [&](const std::string& stem, const std::string& ext) { return stem + suffix + ext; };
  write_text(dir / name("metrics", ".json"), report.to_json().dump(2) + "\n");
  write_file(dir / name("quintiles", ".csv"), [&](std::ostream& os) { write_quintiles_csv(report, os); });
  write_file(dir / name("subgroups", ".csv"), [&](std::ostream& os) { write_subgroups_csv(report, os); });
  write_file(dir / name("predictions", ".csv"), [&](std::ostream& os) { write_predictions(preds, os); });
  for (const char* stem : {"metrics", "quintiles", "subgroups", "predictions"})
    outputs.push_back(name(stem, std::string(stem) == "metrics" ? ".json" : ".csv"));
  (void)data;
}

int cmd_validate(const ValidateArgs& a) {
  const FittedModel model = load_bundle(a.bundle);
  const auto mode = parse_mode(a.mode);
  RecalibrationScope scope;
  if (a.scope == "submodel") scope = RecalibrationScope::submodel;
  else if (a.scope == "outcome") scope = RecalibrationScope::outcome;
  else throw input_error("unknown recalibration scope '" + a.scope + "' (expected submodel or outcome)");

  Predictor predictor(model, mode, a.order);
  const Dataset data = load_data(a.data, a.raw ? as_raw(model.schema) : model.schema, true);
  const unsigned threads = a.common.threads();
  const json config{{"mode", a.mode}, {"order", a.order}, {"recalibrate", a.recalibrate}, {"scope", a.scope}, {"raw", a.raw}};
  auto manifest = start_manifest("validate", config, a.common.seed(), {a.bundle, a.data});
  make_out_dir(a.out);

  std::vector<std::string> outputs;
  const auto preds = predictor.predict(data, threads);
  const auto report = metrics_report(data, preds, true);
  write_evaluation(a.out, "", data, preds, report, outputs);
  std::cout << "validation on " << data.size() << " participants\n";
  print_metrics(std::cout, report);
  for (const auto& o : report.outcomes)
    if (!o.e_over_o) std::cerr << "warning: no " << to_string(o.outcome) << " cases; E/O undefined\n";

  if (a.recalibrate) {
    const auto result = recalibrate_intercepts(model, data, scope, mode, a.order, threads);
    Predictor updated(result.model, mode, a.order);
    const auto preds2 = updated.predict(data, threads);
    const auto report2 = metrics_report(data, preds2, true);
    write_evaluation(a.out, "_recalibrated", data, preds2, report2, outputs);
    write_text(fs::path(a.out) / "recalibration.json", result.to_json().dump(2) + "\n");
    outputs.emplace_back("recalibration.json");

    json deltas = json::object();
    for (const auto& e : result.entries) deltas[e.label] = e.delta ? json(*e.delta) : json(nullptr);
    const json provenance{{"source_bundle_hash", bundle_hash(a.bundle)},
                          {"validation_data_hash", sha256_file(a.data)},
                          {"scope", a.scope},
                          {"delta", deltas}};
    auto sub_manifest = manifest;
    sub_manifest.command = "validate --recalibrate";
    save_bundle(fs::path(a.out) / "recalibrated", result.model, sub_manifest, nullptr,
                std::optional<json>(std::in_place, provenance));

    std::cout << "after recalibration\n";
    print_metrics(std::cout, report2);
    for (const auto& e : result.entries)
      if (!e.skipped.empty()) std::cerr << "warning: " << e.label << " not recalibrated (" << e.skipped << ")\n";
  }
  write_manifest(a.out, manifest, outputs);
  return 0;
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  Common common;
  SamplerFlags sampler;
  int preset = 1;
  std::string setting_file, distribution, reference, reference_schema, out;
  std::optional<double> rho_b, a_aud_intercept;
  std::optional<int> replicates;
  std::optional<std::size_t> train_size, clusters;
  std::vector<std::size_t> test_sizes;
  std::vector<std::string> sets;
  bool quiet = false;
};

int cmd_simulate(const SimulateArgs& a) {
  const auto seed = a.common.seed();
  SimSetting setting = sim_preset(a.preset, a.a_aud_intercept.value_or(-10.02));
  if (!a.setting_file.empty()) setting = SimSetting::from_json(read_json(a.setting_file), setting);
  json overrides = json::object();
  for (const auto& s : a.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw input_error("--set expects key=value, got '" + s + "'");
    const auto key = s.substr(0, eq);
    const auto value = s.substr(eq + 1);
    try {
      overrides[key] = json::parse(value);
    } catch (const json::exception&) {
      overrides[key] = value;
    }
  }
  if (a.rho_b) overrides["rho_b"] = *a.rho_b;
  if (a.replicates) overrides["replicates"] = *a.replicates;
  if (a.train_size) overrides["train_size"] = *a.train_size;
  if (a.clusters) overrides["clusters"] = *a.clusters;
  if (!a.test_sizes.empty()) overrides["test_sizes"] = a.test_sizes;
  setting = SimSetting::from_json(overrides, setting);

  PredictorDistribution dist;
  if (!a.distribution.empty()) {
    dist = PredictorDistribution::from_json(read_json(a.distribution));
  } else if (!a.reference.empty()) {
    if (a.reference_schema.empty()) throw input_error("--reference needs --reference-schema");
    dist = estimate_predictor_distribution(load_data(a.reference, load_schema(a.reference_schema), false));
    for (const auto& w : dist.warnings) std::cerr << "warning: " << w << "\n";
  } else {
    dist = default_predictor_distribution();
  }
  const SamplerConfig cfg = a.sampler.build(seed, 1, simulation_sampler_defaults());

  const json config{{"setting", setting.to_json()}, {"sampler", cfg.to_json()}, {"distribution", dist.to_json()}};
  auto manifest = start_manifest("simulate", config, seed,
                                 {a.setting_file, a.distribution, a.reference, a.reference_schema});
  make_out_dir(a.out);

  ExperimentOptions opt;
  opt.seed = seed;
  opt.threads = a.common.threads();
  std::mutex io;
  std::size_t done = 0;
  if (!a.quiet)
    opt.progress = [&](const ReplicateMetrics& r) {
      std::lock_guard lock(io);
      ++done;
      std::cerr << "replicate " << r.replicate << (r.ok ? " done" : " failed: " + r.error) << " (" << done << "/"
                << setting.replicates << ")\n";
    };
  const auto report = run_experiment(setting, dist, cfg, opt);

  write_text(fs::path(a.out) / "report.json", report.to_json().dump(2) + "\n");
  write_file(fs::path(a.out) / "replicates.csv", [&](std::ostream& os) { report.write_replicates_csv(os); });
  write_text(fs::path(a.out) / "setting.json", setting.to_json().dump(2) + "\n");
  write_text(fs::path(a.out) / "distribution.json", dist.to_json().dump(2) + "\n");
  write_manifest(a.out, manifest, {"report.json", "replicates.csv", "setting.json", "distribution.json"});

  std::cout << "setting " << setting.id << ", rho_B = " << setting.rho_b << ", " << setting.replicates
            << " replicates (" << report.failures() << " failed)\n";
  std::cout << "outcome  test  AUC joint  AUC univ   gap     Brier joint  Brier univ\n";
  for (auto k : all_outcomes)
    for (std::size_t t = 0; t < setting.test_sizes.size(); ++t) {
      const auto ja = report.mean_auc(ModelKind::joint, k, t), ua = report.mean_auc(ModelKind::univariate, k, t);
      const auto jb = report.mean_brier(ModelKind::joint, k, t), ub = report.mean_brier(ModelKind::univariate, k, t);
      std::cout << std::left << std::setw(9) << to_string(k) << std::setw(6) << t + 1 << std::setw(11) << fmt(ja)
                << std::setw(10) << fmt(ua) << std::setw(8)
                << (ja && ua ? fmt(*ja - *ua) : std::string("NA")) << std::setw(13) << fmt(jb, 4) << fmt(ub, 4)
                << "\n";
    }
  return report.failures() == report.replicates.size() ? 3 : 0;
}

// ---------------------------------------------------------------- inspect

struct InspectArgs {
  std::string bundle;
  bool as_json = false;
};

int cmd_inspect(const InspectArgs& a) {
  const FittedModel model = load_bundle(a.bundle);
  const auto ors = odds_ratios(model.draws, model.submodels, model.schema);
  const auto& pd = model.draws;
  const auto column_mean = [&](const std::string& name) -> std::optional<double> {
    auto c = pd.column(name);
    if (!c || pd.draws() == 0) return std::nullopt;
    return pd.values.col(static_cast<Eigen::Index>(*c)).mean();
  };
  std::optional<std::vector<double>> sigma_u2;
  if (auto c = pd.column("sigma_u")) {
    std::vector<double> v(pd.draws());
    for (std::size_t d = 0; d < v.size(); ++d) {
      const double s = pd.values(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(*c));
      v[d] = s * s;
    }
    std::sort(v.begin(), v.end());
    sigma_u2 = v;
  }

  if (a.as_json) {
    json j{{"draws", pd.draws()}, {"chains", pd.chains()}, {"prior", model.prior.to_json()}, {"submodels", json::array()}};
    for (std::size_t m = 0; m < model.submodels.size(); ++m) {
      const auto& s = model.submodels[m];
      json sj{{"label", s.label}, {"intercept", column_mean(intercept_name(s)).value_or(NAN)}, {"offset", model.offset(m)},
              {"coefficients", json::array()}};
      for (const auto& r : ors)
        if (r.submodel == s.label)
          sj["coefficients"].push_back({{"predictor", r.predictor}, {"coefficient", r.beta_mean},
                                        {"scaling_max", r.scaling_max}, {"or", r.or_mean},
                                        {"or_lo", r.or_lo}, {"or_hi", r.or_hi}});
      j["submodels"].push_back(sj);
    }
    if (sigma_u2) {
      double s = 0.0;
      for (double v : *sigma_u2) s += v;
      j["sigma_u2"] = {{"mean", s / static_cast<double>(sigma_u2->size())},
                       {"lo", sorted_quantile(*sigma_u2, 0.025)},
                       {"hi", sorted_quantile(*sigma_u2, 0.975)}};
    }
    std::cout << j.dump(2) << "\n";
    return 0;
  }

  std::cout << "bundle: " << a.bundle << "\n"
            << "draws: " << pd.draws() << " from " << pd.chains() << " chains, prior "
            << to_string(model.prior.slope_prior) << "\n\n";
  std::cout << std::left << std::setw(14) << "Sub-model" << std::setw(28) << "Variable" << std::right << std::setw(12)
            << "Coefficient" << std::setw(9) << "OR" << "   95% CI (OR)\n";
  for (std::size_t m = 0; m < model.submodels.size(); ++m) {
    const auto& s = model.submodels[m];
    std::cout << std::left << std::setw(14) << s.label << std::setw(28) << "Intercept" << std::right << std::setw(12)
              << fmt(column_mean(intercept_name(s)), 2);
    if (model.offset(m) != 0.0) std::cout << "   (recalibration offset " << fmt(model.offset(m), 3) << ")";
    std::cout << "\n";
    for (const auto& r : ors)
      if (r.submodel == s.label)
        std::cout << std::left << std::setw(14) << "" << std::setw(28) << r.predictor << std::right << std::setw(12)
                  << fmt(r.beta_mean, 2) << std::setw(9) << fmt(r.or_mean, 2) << "   (" << fmt(r.or_lo, 2) << ", "
                  << fmt(r.or_hi, 2) << ")\n";
  }
  if (sigma_u2) {
    double s = 0.0;
    for (double v : *sigma_u2) s += v;
    std::cout << "\nsigma_u^2: " << fmt(s / static_cast<double>(sigma_u2->size()), 2) << " ("
              << fmt(sorted_quantile(*sigma_u2, 0.025), 2) << ", " << fmt(sorted_quantile(*sigma_u2, 0.975), 2) << ")\n";
  }
  if (auto c = column_mean("sigma_s")) std::cout << "sigma_s: " << fmt(*c, 3) << " (posterior mean)\n";
  return 0;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Joint Bayesian risk model for alcohol and cannabis use disorders", "risk_engine"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(tool_version));

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Fit the joint model and write a model bundle");
  t->add_option("--data", train.data, "Training data (CSV)")->required()->check(CLI::ExistingFile);
  t->add_option("--schema", train.schema, "Predictor schema (JSON)")->required()->check(CLI::ExistingFile);
  t->add_option("--submodels", train.submodels, "Sub-model predictor lists (JSON)")->check(CLI::ExistingFile);
  t->add_option("--out", train.out, "Bundle directory")->required();
  add_common(t, train.common);
  add_sampler(t, train.sampler);
  add_prior(t, train.prior);

  CvArgs cv;
  auto* c = app.add_subcommand("cv", "Cross-validate one or more prior/selection configurations");
  c->add_option("--data", cv.data, "Training data (CSV)")->required()->check(CLI::ExistingFile);
  c->add_option("--schema", cv.schema, "Predictor schema (JSON)")->required()->check(CLI::ExistingFile);
  c->add_option("--submodels", cv.submodels, "Sub-model predictor lists (JSON)")->check(CLI::ExistingFile);
  c->add_option("--configs", cv.configs, "JSON array of {name, prior, selection}")->check(CLI::ExistingFile);
  c->add_option("--folds", cv.folds, "Number of folds")->capture_default_str();
  c->add_option("--selection", cv.method, "threshold or credible_interval")->capture_default_str();
  c->add_option("--cutoff", cv.cutoff, "Threshold cutoff")->capture_default_str();
  c->add_option("--level", cv.level, "Credible interval level")->capture_default_str();
  c->add_option("--mode", cv.mode, "Quadrature mode")->capture_default_str();
  c->add_option("--out", cv.out, "Output directory")->required();
  add_common(c, cv.common);
  add_sampler(c, cv.sampler);
  add_prior(c, cv.prior);

  PredictArgs predict;
  auto* p = app.add_subcommand("predict", "Predict AUD and CUD risk for new individuals");
  p->add_option("--bundle", predict.bundle, "Model bundle directory")->required();
  p->add_option("--data", predict.data, "Individuals (CSV, outcome columns optional)")->required();
  p->add_option("--mode", predict.mode, "univariate or bivariate")->capture_default_str();
  p->add_option("--order", predict.order, "Quadrature order")->capture_default_str();
  p->add_flag("--raw", predict.raw, "Continuous predictors are on their original scale");
  p->add_option("--out", predict.out, "Output directory")->required();
  add_common(p, predict.common);

  ValidateArgs validate;
  auto* v = app.add_subcommand("validate", "Evaluate a bundle on external data, optionally recalibrating");
  v->add_option("--bundle", validate.bundle, "Model bundle directory")->required();
  v->add_option("--data", validate.data, "Validation data (CSV)")->required();
  v->add_flag("--recalibrate", validate.recalibrate, "Recalibrate intercepts and write an updated bundle");
  v->add_option("--scope", validate.scope, "Recalibration unit: submodel or outcome")->capture_default_str();
  v->add_option("--mode", validate.mode, "univariate or bivariate")->capture_default_str();
  v->add_option("--order", validate.order, "Quadrature order")->capture_default_str();
  v->add_flag("--raw", validate.raw, "Continuous predictors are on their original scale");
  v->add_option("--out", validate.out, "Output directory")->required();
  add_common(v, validate.common);

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "Run the joint vs univariate simulation study");
  s->add_option("--preset", sim.preset, "Setting 1-4")->capture_default_str();
  s->add_option("--setting", sim.setting_file, "Custom setting (JSON); overrides the preset")->check(CLI::ExistingFile);
  s->add_option("--distribution", sim.distribution, "Predictor distribution (JSON)")->check(CLI::ExistingFile);
  s->add_option("--reference", sim.reference, "Reference data to estimate the predictor distribution from")
      ->check(CLI::ExistingFile);
  s->add_option("--reference-schema", sim.reference_schema, "Schema of --reference")->check(CLI::ExistingFile);
  s->add_option("--rho-b", sim.rho_b, "Latent correlation in group B");
  s->add_option("--replicates", sim.replicates, "Number of replicates");
  s->add_option("--train-size", sim.train_size, "Training sample size");
  s->add_option("--test-sizes", sim.test_sizes, "Test sample sizes")->delimiter(',');
  s->add_option("--clusters", sim.clusters, "Number of schools");
  s->add_option("--a-aud-intercept", sim.a_aud_intercept, "Group A AUD intercept of settings 1-2");
  s->add_option("--set", sim.sets, "Setting override key=value (JSON value)");
  s->add_flag("--quiet", sim.quiet, "No progress output");
  s->add_option("--out", sim.out, "Output directory")->required();
  add_common(s, sim.common);
  add_sampler(s, sim.sampler);

  InspectArgs inspect;
  auto* i = app.add_subcommand("inspect", "Print the coefficient and odds-ratio table of a bundle");
  i->add_option("--bundle", inspect.bundle, "Model bundle directory")->required();
  i->add_flag("--json", inspect.as_json, "JSON output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*t) return cmd_train(train);
    if (*c) return cmd_cv(cv);
    if (*p) return cmd_predict(predict);
    if (*v) return cmd_validate(validate);
    if (*s) return cmd_simulate(sim);
    if (*i) return cmd_inspect(inspect);
  } catch (const input_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const sampler_error& e) {
    std::cerr << "sampler error: " << e.what() << "\n";
    return 3;
  } catch (const io_error& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace risk
