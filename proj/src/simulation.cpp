#include "risk/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include "risk/csv.hpp"
#include "risk/parallel.hpp"

namespace risk {

namespace {

constexpr GroupOutcome a_aud{Group::a, Outcome::aud};
constexpr GroupOutcome a_cud{Group::a, Outcome::cud};
constexpr GroupOutcome b_aud{Group::b, Outcome::aud};
constexpr GroupOutcome b_cud{Group::b, Outcome::cud};
constexpr GroupOutcome c_aud{Group::c, Outcome::aud};
constexpr GroupOutcome c_cud{Group::c, Outcome::cud};

GroupOutcome parse_key(const std::string& key) {
  const auto dash = key.find('-');
  std::optional<Group> g;
  std::optional<Outcome> k;
  if (dash != std::string::npos) {
    g = parse_group(key.substr(0, dash));
    k = parse_outcome(key.substr(dash + 1));
  }
  if (!g || !k) throw input_error("unknown sub-model key '" + key + "'");
  return {*g, *k};
}

std::string key_of(const GroupOutcome& go) { return submodel_key(go.first, go.second); }

double inv_logit(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Lower Cholesky factor; falls back to a clipped eigen-decomposition for
// semidefinite matrices.
Eigen::MatrixXd sqrt_factor(const Eigen::MatrixXd& cov) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const Eigen::VectorXd vals = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * vals.asDiagonal();
}

nlohmann::json optional_json(const std::optional<double>& v) {
  return v && std::isfinite(*v) ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

double SimSetting::intercept(Group g, Outcome k) const {
  const auto it = intercepts.find({g, k});
  return it == intercepts.end() ? 0.0 : it->second;
}

double SimSetting::coefficient(Group g, Outcome k, const std::string& column) const {
  const auto it = coefficients.find({g, k});
  if (it == coefficients.end()) return 0.0;
  const auto c = it->second.find(column);
  return c == it->second.end() ? 0.0 : c->second;
}

void SimSetting::validate() const {
  if (!(rho_b > -1.0 && rho_b < 1.0)) throw input_error("rho_b must lie in (-1, 1)");
  if (!(latent_variance > 0)) throw input_error("latent_variance must be > 0");
  if (replicates < 1) throw input_error("replicates must be >= 1");
  if (train_size < 10) throw input_error("train_size must be >= 10");
  if (test_sizes.empty()) throw input_error("at least one test set is required");
  for (auto t : test_sizes)
    if (t < 5) throw input_error("test sizes must be >= 5");
  if (clusters < 1) throw input_error("clusters must be >= 1");
  double s = 0.0;
  for (double p : group_proportions) {
    if (!(p >= 0)) throw input_error("group proportions must be >= 0");
    s += p;
  }
  if (std::abs(s - 1.0) > 1e-9) throw input_error("group proportions must sum to 1");
  selection.validate();
}

nlohmann::json SimSetting::to_json() const {
  nlohmann::json ints = nlohmann::json::object();
  for (const auto& [go, v] : intercepts) ints[key_of(go)] = v;
  nlohmann::json coefs = nlohmann::json::object();
  for (const auto& [go, m] : coefficients) coefs[key_of(go)] = m;
  return {{"id", id},
          {"intercepts", ints},
          {"coefficients", coefs},
          {"train_size", train_size},
          {"test_sizes", test_sizes},
          {"group_proportions", group_proportions},
          {"rho_b", rho_b},
          {"latent_variance", latent_variance},
          {"replicates", replicates},
          {"clusters", clusters},
          {"candidates", {{"AUD", candidates[0]}, {"CUD", candidates[1]}}},
          {"selection", selection.to_json()}};
}

SimSetting SimSetting::from_json(const nlohmann::json& j, const SimSetting& base) {
  static const std::vector<std::string> known{"id",       "intercepts", "coefficients", "train_size",
                                              "test_sizes", "group_proportions", "rho_b", "latent_variance",
                                              "replicates", "clusters", "candidates", "selection"};
  for (const auto& [key, _] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw input_error("unknown setting key '" + key + "'");
  SimSetting s = base;
  try {
    s.id = j.value("id", s.id);
    if (j.contains("intercepts")) {
      s.intercepts.clear();
      for (const auto& [k, v] : j.at("intercepts").items()) s.intercepts[parse_key(k)] = v.get<double>();
    }
    if (j.contains("coefficients")) {
      s.coefficients.clear();
      for (const auto& [k, v] : j.at("coefficients").items())
        s.coefficients[parse_key(k)] = v.get<std::map<std::string, double>>();
    }
    s.train_size = j.value("train_size", s.train_size);
    s.test_sizes = j.value("test_sizes", s.test_sizes);
    s.group_proportions = j.value("group_proportions", s.group_proportions);
    s.rho_b = j.value("rho_b", s.rho_b);
    s.latent_variance = j.value("latent_variance", s.latent_variance);
    s.replicates = j.value("replicates", s.replicates);
    s.clusters = j.value("clusters", s.clusters);
    if (j.contains("candidates")) {
      const auto& c = j.at("candidates");
      s.candidates[0] = c.value("AUD", s.candidates[0]);
      s.candidates[1] = c.value("CUD", s.candidates[1]);
    }
    if (j.contains("selection")) s.selection = SelectionRule::from_json(j.at("selection"));
  } catch (const nlohmann::json::exception& e) {
    throw input_error(std::string("simulation setting: ") + e.what());
  }
  s.validate();
  return s;
}

SimSetting sim_preset(int id, double a_aud_intercept) {
  if (id < 1 || id > 4) throw input_error("preset must be 1, 2, 3 or 4");
  SimSetting s;
  s.id = id;
  s.candidates = default_candidates();
  s.selection = SelectionRule{SelectionRule::Method::threshold, 0.95, 0.10};
  if (id == 2) s.train_size = 1500;

  const bool early = id <= 2;
  s.intercepts = {{a_aud, early ? a_aud_intercept : (id == 3 ? -10.02 : -8.50)},
                  {a_cud, -17.21},
                  {b_aud, id == 4 ? -8.20 : -6.83},
                  {b_cud, id == 4 ? -9.00 : -7.44},
                  {c_aud, -14.98},
                  {c_cud, early ? -4.30 : (id == 3 ? -10.00 : -9.50)}};
  if (id <= 3) {
    s.coefficients[a_aud] = {{"male", 2.00},          {"delinquency", 15.00},     {"extraversion", 2.50},
                             {"race_white", 1.50},    {"parental_education", 2.00}, {"peer_alcohol", 1.50}};
    s.coefficients[b_aud] = {{"male", 1.00},        {"neuroticism", 3.00},  {"delinquency", 6.34},
                             {"conscientiousness", -2.19}, {"extraversion", 2.50}, {"race_white", 1.50}};
    s.coefficients[b_cud] = {{"male", 1.50},        {"neuroticism", 3.50}, {"delinquency", 6.66},
                             {"conscientiousness", -1.69}, {"openness", 1.81},   {"peer_cannabis", 1.50}};
  } else {
    s.coefficients[a_aud] = {{"male", 2.00}, {"delinquency", 15.00}, {"extraversion", 2.30}, {"race_white", 1.50}};
    s.coefficients[b_aud] = s.coefficients[a_aud];
    s.coefficients[b_cud] = {{"male", 2.00}, {"neuroticism", 4.00}, {"delinquency", 10.00}, {"peer_cannabis", 2.00}};
  }
  if (id == 3)
    s.coefficients[c_cud] = {{"male", 1.00}, {"neuroticism", 4.00}, {"delinquency", 15.00}, {"peer_cannabis", 2.00}};
  if (id == 4) s.coefficients[c_cud] = s.coefficients[b_cud];
  return s;
}

std::array<std::size_t, 3> group_counts(std::size_t n, const std::array<double, 3>& p) {
  std::array<std::size_t, 3> c{};
  c[0] = static_cast<std::size_t>(std::llround(p[0] * static_cast<double>(n)));
  c[2] = static_cast<std::size_t>(std::llround(p[2] * static_cast<double>(n)));
  c[0] = std::min(c[0], n);
  c[2] = std::min(c[2], n - c[0]);
  c[1] = n - c[0] - c[2];
  return c;
}

void PredictorDistribution::validate() const {
  const auto p = static_cast<Eigen::Index>(continuous.size());
  if (mean.size() != p || cov.rows() != p || cov.cols() != p)
    throw input_error("predictor distribution: mean/covariance size mismatch");
  if (!cov.isApprox(cov.transpose(), 1e-12)) throw input_error("predictor distribution: covariance not symmetric");
  if (p > 0) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.eigenvalues().minCoeff() < -1e-10 * std::max(1.0, eig.eigenvalues().maxCoeff()))
      throw input_error("predictor distribution: covariance not positive semidefinite");
  }
  double total = 0.0;
  for (const auto& [levels, prob] : table) {
    if (levels.size() != categorical.size()) throw input_error("predictor distribution: table cell size mismatch");
    if (prob < 0) throw input_error("predictor distribution: negative probability");
    total += prob;
  }
  if (!categorical.empty() && std::abs(total - 1.0) > 1e-9)
    throw input_error("predictor distribution: table probabilities must sum to 1");
  double g = 0.0;
  for (double v : group_probs) g += v;
  if (std::abs(g - 1.0) > 1e-9) throw input_error("predictor distribution: group probabilities must sum to 1");
  for (const auto& name : continuous) {
    const auto* s = schema.find(name);
    if (!s || s->kind != PredictorKind::continuous) throw input_error("predictor distribution: " + name + " is not continuous");
  }
  for (const auto& name : categorical) {
    const auto* s = schema.find(name);
    if (!s || s->kind == PredictorKind::continuous) throw input_error("predictor distribution: " + name + " is not categorical");
  }
}

nlohmann::json PredictorDistribution::to_json() const {
  std::vector<double> m(mean.data(), mean.data() + mean.size());
  std::vector<std::vector<double>> c(static_cast<std::size_t>(cov.rows()));
  for (Eigen::Index i = 0; i < cov.rows(); ++i)
    for (Eigen::Index k = 0; k < cov.cols(); ++k) c[static_cast<std::size_t>(i)].push_back(cov(i, k));
  nlohmann::json t = nlohmann::json::array();
  for (const auto& [levels, prob] : table) t.push_back({{"levels", levels}, {"p", prob}});
  return {{"schema", schema.to_json()}, {"continuous", continuous}, {"mean", m},          {"cov", c},
          {"categorical", categorical}, {"table", t},               {"group_probs", group_probs}};
}

PredictorDistribution PredictorDistribution::from_json(const nlohmann::json& j) {
  PredictorDistribution d;
  try {
    d.schema = Schema::from_json(j.at("schema"));
    d.continuous = j.at("continuous").get<std::vector<std::string>>();
    const auto m = j.at("mean").get<std::vector<double>>();
    const auto c = j.at("cov").get<std::vector<std::vector<double>>>();
    d.mean = Eigen::Map<const Eigen::VectorXd>(m.data(), static_cast<Eigen::Index>(m.size()));
    d.cov.resize(static_cast<Eigen::Index>(c.size()), static_cast<Eigen::Index>(c.size()));
    for (std::size_t i = 0; i < c.size(); ++i) {
      if (c[i].size() != c.size()) throw input_error("predictor distribution: covariance is not square");
      for (std::size_t k = 0; k < c.size(); ++k)
        d.cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = c[i][k];
    }
    d.categorical = j.at("categorical").get<std::vector<std::string>>();
    for (const auto& cell : j.at("table"))
      d.table.emplace_back(cell.at("levels").get<std::vector<int>>(), cell.at("p").get<double>());
    d.group_probs = j.value("group_probs", d.group_probs);
  } catch (const nlohmann::json::exception& e) {
    throw input_error(std::string("predictor distribution: ") + e.what());
  }
  d.validate();
  return d;
}

std::array<std::vector<std::string>, 2> default_candidates() {
  const std::vector<std::string> shared{"male",          "race_white",  "neuroticism", "conscientiousness",
                                        "extraversion",  "openness",    "delinquency", "ace",
                                        "depressive_symptoms", "self_esteem", "region"};
  std::vector<std::string> aud = shared;
  for (const char* n : {"parental_education", "peer_alcohol", "school_trouble", "agreeableness"}) aud.emplace_back(n);
  std::vector<std::string> cud = shared;
  for (const char* n : {"peer_cannabis", "peer_smoking", "violence_victimization", "supportive_environment",
                        "school_connectedness", "sensation_seeking"})
    cud.emplace_back(n);
  return {aud, cud};
}

PredictorDistribution default_predictor_distribution() {
  struct Row {
    const char* name;
    double mean;
    double sd;
    std::array<double, 3> loading;  // externalising, internalising, social
  };
  static const Row rows[] = {
      {"neuroticism", 0.08, 0.6, {0.10, 0.60, -0.10}},
      {"conscientiousness", 1.00, 0.6, {-0.35, -0.20, 0.20}},
      {"extraversion", 0.66, 0.6, {0.15, -0.30, 0.50}},
      {"openness", 1.00, 0.6, {0.15, 0.00, 0.35}},
      {"delinquency", -2.20, 0.9, {0.70, 0.20, 0.10}},
      {"ace", -1.40, 0.8, {0.30, 0.35, -0.10}},
      {"depressive_symptoms", -1.40, 0.7, {0.15, 0.70, -0.20}},
      {"self_esteem", 1.40, 0.6, {-0.10, -0.60, 0.30}},
      {"agreeableness", 1.10, 0.6, {-0.30, -0.10, 0.30}},
      {"parental_education", 0.60, 0.9, {-0.05, -0.10, 0.20}},
      {"peer_alcohol", -0.60, 1.0, {0.55, 0.00, 0.30}},
      {"school_trouble", -1.00, 0.8, {0.50, 0.25, -0.10}},
      {"peer_cannabis", -1.40, 1.0, {0.60, 0.05, 0.20}},
      {"peer_smoking", -1.10, 1.0, {0.55, 0.10, 0.10}},
      {"violence_victimization", -2.20, 0.9, {0.45, 0.25, 0.00}},
      {"supportive_environment", 0.85, 0.6, {-0.25, -0.35, 0.30}},
      {"school_connectedness", 0.85, 0.6, {-0.30, -0.30, 0.35}},
      {"sensation_seeking", 0.00, 0.7, {0.50, 0.00, 0.30}},
  };
  constexpr Eigen::Index p = std::size(rows);
  PredictorDistribution d;
  Eigen::MatrixXd load(p, 3);
  Eigen::VectorXd sd(p);
  d.mean.resize(p);
  for (Eigen::Index i = 0; i < p; ++i) {
    const auto& r = rows[i];
    d.continuous.emplace_back(r.name);
    d.mean(i) = r.mean;
    sd(i) = r.sd;
    for (int f = 0; f < 3; ++f) load(i, f) = r.loading[static_cast<std::size_t>(f)];
  }
  Eigen::MatrixXd corr = load * load.transpose();
  corr.diagonal().setOnes();
  d.cov = sd.asDiagonal() * corr * sd.asDiagonal();

  d.schema.predictors.push_back({"male", PredictorKind::binary, 1.0, 0.0, {}, true});
  d.schema.predictors.push_back({"race_white", PredictorKind::binary, 1.0, 0.0, {}, true});
  d.schema.predictors.push_back(
      {"region", PredictorKind::categorical, std::nullopt, 0.0, {"northeast", "midwest", "south", "west"}, true});
  for (const auto& name : d.continuous) d.schema.predictors.push_back({name, PredictorKind::continuous, 1.0, 0.0, {}, true});

  d.categorical = {"male", "race_white", "region"};
  const std::array<double, 2> male{0.53, 0.47};
  const std::array<double, 2> white{0.32, 0.68};
  const std::array<double, 4> region{0.18, 0.27, 0.37, 0.18};
  for (int m = 0; m < 2; ++m)
    for (int w = 0; w < 2; ++w)
      for (int r = 0; r < 4; ++r)
        d.table.emplace_back(std::vector<int>{m, w, r}, male[static_cast<std::size_t>(m)] *
                                                            white[static_cast<std::size_t>(w)] *
                                                            region[static_cast<std::size_t>(r)]);
  d.group_probs = {0.33, 0.64, 0.03};
  return d;
}

PredictorDistribution estimate_predictor_distribution(const Dataset& reference) {
  PredictorDistribution d;
  d.schema = reference.schema();
  const auto col = [&](const std::string& name) { return *reference.column_index(name); };

  std::vector<std::size_t> cont_cols;
  for (const auto& s : d.schema.predictors) {
    if (s.kind == PredictorKind::continuous) {
      d.continuous.push_back(s.name);
      cont_cols.push_back(col(s.name));
    } else {
      d.categorical.push_back(s.name);
    }
  }
  const auto n = static_cast<Eigen::Index>(reference.size());
  const auto p = static_cast<Eigen::Index>(d.continuous.size());
  if (n == 0) throw input_error("reference dataset is empty");

  Eigen::MatrixXd z(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index c = 0; c < p; ++c) {
      const double v = std::clamp(reference[static_cast<std::size_t>(i)].x[cont_cols[static_cast<std::size_t>(c)]],
                                  logit_clamp, 1.0 - logit_clamp);
      z(i, c) = std::log(v) - std::log1p(-v);
    }
  d.mean = p > 0 ? Eigen::VectorXd(z.colwise().mean().transpose()) : Eigen::VectorXd();
  d.cov = Eigen::MatrixXd::Zero(p, p);
  if (n > 1 && p > 0) {
    const Eigen::MatrixXd centered = z.rowwise() - d.mean.transpose();
    d.cov = centered.transpose() * centered / static_cast<double>(n - 1);
  }
  bool ridge = false;
  if (n < p + 1) {
    d.warnings.push_back("fewer rows than continuous predictors + 1; covariance is rank deficient");
    ridge = true;
  }
  for (Eigen::Index c = 0; c < p; ++c)
    if (!(d.cov(c, c) > 0)) {
      d.warnings.push_back("predictor " + d.continuous[static_cast<std::size_t>(c)] + " has zero variance");
      ridge = true;
    }
  if (ridge) d.cov += logit_clamp * Eigen::MatrixXd::Identity(p, p);

  std::map<std::vector<int>, std::size_t> counts;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    std::vector<int> key;
    for (const auto& name : d.categorical) {
      const auto* s = d.schema.find(name);
      if (s->kind == PredictorKind::binary) {
        key.push_back(reference[i].x[col(name)] > 0.5 ? 1 : 0);
      } else {
        int level = 0;
        for (std::size_t l = 1; l < s->levels.size(); ++l)
          if (reference[i].x[col(name + ":" + s->levels[l])] > 0.5) level = static_cast<int>(l);
        key.push_back(level);
      }
    }
    ++counts[key];
  }
  if (!d.categorical.empty())
    for (const auto& [key, count] : counts)
      d.table.emplace_back(key, static_cast<double>(count) / static_cast<double>(reference.size()));

  const auto g = reference.group_sizes();
  for (std::size_t k = 0; k < 3; ++k) d.group_probs[k] = static_cast<double>(g[k]) / static_cast<double>(reference.size());
  return d;
}

Dataset draw_participants(const PredictorDistribution& dist, const SimSetting& setting,
                          const std::array<std::size_t, 3>& counts, Rng& rng, const std::string& id_prefix) {
  const Schema& schema = dist.schema;
  const auto columns = schema.design_columns();
  std::map<std::string, std::size_t> index;
  for (std::size_t c = 0; c < columns.size(); ++c) index[columns[c]] = c;

  const Eigen::MatrixXd factor = sqrt_factor(dist.cov);
  const auto p = dist.mean.size();
  std::vector<double> cumulative;
  double acc = 0.0;
  for (const auto& cell : dist.table) cumulative.push_back(acc += cell.second);

  // Coefficient vectors per at-risk (group, outcome) aligned with the columns.
  std::array<std::array<Eigen::VectorXd, 2>, 3> beta;
  for (auto g : all_groups)
    for (auto k : all_outcomes) {
      Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(columns.size()));
      const auto it = setting.coefficients.find({g, k});
      if (it != setting.coefficients.end())
        for (const auto& [name, v] : it->second) {
          const auto c = index.find(name);
          if (c == index.end()) throw input_error("setting coefficient for unknown column " + name);
          b(static_cast<Eigen::Index>(c->second)) = v;
        }
      beta[static_cast<std::size_t>(index_of(g))][static_cast<std::size_t>(index_of(k))] = std::move(b);
    }

  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> cluster(0, setting.clusters - 1);
  const double sd = std::sqrt(setting.latent_variance);
  const int width = static_cast<int>(std::to_string(setting.clusters).size());

  std::vector<Participant> people;
  people.reserve(counts[0] + counts[1] + counts[2]);
  std::size_t serial = 0;
  for (auto g : all_groups) {
    for (std::size_t i = 0; i < counts[static_cast<std::size_t>(index_of(g))]; ++i) {
      Participant person;
      std::ostringstream id;
      id << id_prefix << std::setw(6) << std::setfill('0') << serial++;
      person.id = id.str();
      person.group = g;
      std::ostringstream cl;
      cl << "s" << std::setw(width) << std::setfill('0') << cluster(rng) + 1;
      person.cluster_id = cl.str();
      person.x.assign(columns.size(), 0.0);

      Eigen::VectorXd e(p);
      for (Eigen::Index c = 0; c < p; ++c) e(c) = normal(rng);
      const Eigen::VectorXd zl = dist.mean + factor * e;
      for (Eigen::Index c = 0; c < p; ++c)
        person.x[index.at(dist.continuous[static_cast<std::size_t>(c)])] = inv_logit(zl(c));

      if (!dist.table.empty()) {
        const double u = unif(rng) * cumulative.back();
        auto pos = static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
        pos = std::min(pos, dist.table.size() - 1);
        const auto& levels = dist.table[pos].first;
        for (std::size_t v = 0; v < dist.categorical.size(); ++v) {
          const auto* s = schema.find(dist.categorical[v]);
          if (s->kind == PredictorKind::binary) {
            person.x[index.at(s->name)] = levels[v];
          } else if (levels[v] > 0) {
            person.x[index.at(s->name + ":" + s->levels[static_cast<std::size_t>(levels[v])])] = 1.0;
          }
        }
      }

      const Eigen::Map<const Eigen::VectorXd> x(person.x.data(), static_cast<Eigen::Index>(person.x.size()));
      const auto gi = static_cast<std::size_t>(index_of(g));
      const double mu1 = setting.intercept(g, Outcome::aud) + beta[gi][0].dot(x);
      const double mu2 = setting.intercept(g, Outcome::cud) + beta[gi][1].dot(x);
      const double rho = g == Group::b ? setting.rho_b : 0.0;
      const double e1 = normal(rng);
      const double e2 = normal(rng);
      const double y1 = mu1 + sd * e1;
      const double y2 = mu2 + sd * (rho * e1 + std::sqrt(1.0 - rho * rho) * e2);
      person.outcomes[0] = at_risk(g, Outcome::aud) && y1 > 0 ? 1 : 0;
      person.outcomes[1] = at_risk(g, Outcome::cud) && y2 > 0 ? 1 : 0;
      people.push_back(std::move(person));
    }
  }
  return Dataset(schema, std::move(people));
}

Replicate generate_replicate(const PredictorDistribution& dist, const SimSetting& setting, std::uint64_t seed) {
  Replicate r;
  auto train_rng = make_rng(seed, "sim-train");
  r.train = draw_participants(dist, setting, group_counts(setting.train_size, setting.group_proportions), train_rng,
                              "train-");
  for (std::size_t t = 0; t < setting.test_sizes.size(); ++t) {
    auto rng = make_rng(seed, "sim-test", t);
    r.tests.push_back(draw_participants(dist, setting, group_counts(setting.test_sizes[t], setting.group_proportions),
                                        rng, "test" + std::to_string(t + 1) + "-"));
  }
  return r;
}

std::string_view to_string(ModelKind m) { return m == ModelKind::joint ? "joint" : "univariate"; }

namespace {

FittedModel fit_select_refit(const Dataset& train, const std::vector<SubModelSpec>& specs, const PriorConfig& prior,
                             const SelectionRule& rule, SamplerConfig cfg, std::uint64_t seed) {
  cfg.seed = derive_seed(seed, "fit");
  FittedModel full = fit_model(train, specs, prior, cfg);
  const auto keep = select_variables(full.draws, specs, rule);
  bool changed = false;
  for (std::size_t m = 0; m < specs.size(); ++m) changed = changed || keep[m] != specs[m].predictors;
  if (!changed) return full;
  cfg.seed = derive_seed(seed, "refit");
  return fit_model(train, restrict_predictors(specs, keep), prior, cfg);
}

Dataset select_groups(const Dataset& d, Outcome k) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < d.size(); ++i)
    if (at_risk(d[i].group, k)) rows.push_back(i);
  return d.subset(rows);
}

}  // namespace

SamplerConfig simulation_sampler_defaults() {
  SamplerConfig c;
  c.chains = 2;
  c.warmup_iters = 300;
  c.sampling_iters = 300;
  return c;
}

ReplicateMetrics run_replicate(const PredictorDistribution& dist, const SimSetting& setting,
                               const SamplerConfig& cfg, std::uint64_t seed, int index) {
  ReplicateMetrics out;
  out.replicate = index;
  const std::uint64_t rep_seed = derive_seed(seed, "replicate", static_cast<std::uint64_t>(index));
  try {
    const auto data = generate_replicate(dist, setting, derive_seed(rep_seed, "data"));
    const Schema& schema = data.train.schema();

    SubModelConfig config;
    config.prior = SlopePrior::student_t;
    for (auto g : all_groups)
      for (auto k : all_outcomes)
        config.predictors[{g, k}] = at_risk(g, k) ? setting.candidates[static_cast<std::size_t>(index_of(k))]
                                                  : std::vector<std::string>{};
    const auto joint_specs = default_joint_spec(schema, config);
    PriorConfig joint_prior;
    joint_prior.slope_prior = SlopePrior::student_t;
    const FittedModel joint =
        fit_select_refit(data.train, joint_specs, joint_prior, setting.selection, cfg, derive_seed(rep_seed, "joint"));

    PriorConfig uni_prior = joint_prior;
    uni_prior.include_participant_effect = false;
    std::array<FittedModel, 2> uni;
    for (auto k : all_outcomes) {
      const auto spec = univariate_spec(schema, k, setting.candidates[static_cast<std::size_t>(index_of(k))]);
      uni[static_cast<std::size_t>(index_of(k))] =
          fit_select_refit(select_groups(data.train, k), {spec}, uni_prior, setting.selection, cfg,
                           derive_seed(rep_seed, "univariate", static_cast<std::uint64_t>(index_of(k))));
    }

    for (std::size_t t = 0; t < data.tests.size(); ++t) {
      const Dataset& test = data.tests[t];
      Predictor jp(joint);
      const auto joint_preds = jp.predict(test, 1);
      const auto jr = metrics_report(test, joint_preds, false);

      std::vector<RiskPrediction> uni_preds(test.size());
      for (auto k : all_outcomes) {
        Predictor up(uni[static_cast<std::size_t>(index_of(k))]);
        const auto preds = up.predict(test, 1);
        for (std::size_t i = 0; i < test.size(); ++i) {
          uni_preds[i].id = preds[i].id;
          uni_preds[i].group = preds[i].group;
          uni_preds[i].outcomes[static_cast<std::size_t>(index_of(k))] = preds[i][k];
        }
      }
      const auto ur = metrics_report(test, uni_preds, false);
      for (auto k : all_outcomes) {
        const auto ki = static_cast<std::size_t>(index_of(k));
        out.metrics[0][ki].push_back(jr[k]);
        out.metrics[1][ki].push_back(ur[k]);
      }
    }
    out.ok = true;
  } catch (const std::exception& e) {
    out.ok = false;
    out.error = e.what();
    for (auto& m : out.metrics)
      for (auto& k : m) k.clear();
  }
  return out;
}

ExperimentReport run_experiment(const SimSetting& setting, const PredictorDistribution& dist,
                                const SamplerConfig& cfg, const ExperimentOptions& opt) {
  setting.validate();
  dist.validate();
  cfg.validate();
  ExperimentReport report;
  report.setting = setting;
  report.sampler = cfg;
  report.seed = opt.seed;
  report.replicates.resize(static_cast<std::size_t>(setting.replicates));
  const unsigned threads = opt.threads == 0 ? default_threads() : opt.threads;
  SamplerConfig inner = cfg;
  inner.threads = 1;
  parallel_for(report.replicates.size(), threads, [&](std::size_t r) {
    report.replicates[r] = run_replicate(dist, setting, inner, opt.seed, static_cast<int>(r));
    if (opt.progress) opt.progress(report.replicates[r]);
  });
  return report;
}

std::size_t ExperimentReport::failures() const {
  return static_cast<std::size_t>(std::count_if(replicates.begin(), replicates.end(), [](const auto& r) { return !r.ok; }));
}

namespace {

template <class Get>
std::optional<double> mean_over(const std::vector<ReplicateMetrics>& reps, ModelKind m, Outcome k, std::size_t t,
                                Get get) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& r : reps) {
    if (!r.ok) continue;
    const auto& v = r.metrics[static_cast<std::size_t>(m == ModelKind::joint ? 0 : 1)][static_cast<std::size_t>(index_of(k))];
    if (t >= v.size()) continue;
    const std::optional<double> x = get(v[t]);
    if (!x || !std::isfinite(*x)) continue;
    s += *x;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return s / static_cast<double>(n);
}

}  // namespace

std::optional<double> ExperimentReport::mean_auc(ModelKind m, Outcome k, std::size_t t) const {
  return mean_over(replicates, m, k, t, [](const OutcomeMetrics& o) { return o.auc; });
}

std::optional<double> ExperimentReport::mean_brier(ModelKind m, Outcome k, std::size_t t) const {
  return mean_over(replicates, m, k, t, [](const OutcomeMetrics& o) { return std::optional<double>(o.brier); });
}

std::optional<double> ExperimentReport::mean_e_over_o(ModelKind m, Outcome k, std::size_t t) const {
  return mean_over(replicates, m, k, t, [](const OutcomeMetrics& o) { return o.e_over_o; });
}

nlohmann::json ExperimentReport::to_json() const {
  nlohmann::json j;
  j["setting"] = setting.to_json();
  j["sampler"] = sampler.to_json();
  j["seed"] = seed;
  j["replicates_requested"] = replicates.size();
  j["replicates_completed"] = replicates.size() - failures();
  j["failures"] = failures();
  nlohmann::json errors = nlohmann::json::array();
  for (const auto& r : replicates)
    if (!r.ok) errors.push_back({{"replicate", r.replicate}, {"error", r.error}});
  j["failed_replicates"] = errors;
  for (auto m : {ModelKind::joint, ModelKind::univariate})
    for (auto k : all_outcomes)
      for (std::size_t t = 0; t < setting.test_sizes.size(); ++t)
        j["metrics"][std::string(to_string(m))][std::string(to_string(k))]["test" + std::to_string(t + 1)] = {
            {"auc", optional_json(mean_auc(m, k, t))},
            {"brier", optional_json(mean_brier(m, k, t))},
            {"e_over_o", optional_json(mean_e_over_o(m, k, t))}};
  for (auto k : all_outcomes)
    for (std::size_t t = 0; t < setting.test_sizes.size(); ++t) {
      const auto ja = mean_auc(ModelKind::joint, k, t), ua = mean_auc(ModelKind::univariate, k, t);
      const auto jb = mean_brier(ModelKind::joint, k, t), ub = mean_brier(ModelKind::univariate, k, t);
      j["comparison"][std::string(to_string(k))]["test" + std::to_string(t + 1)] = {
          {"auc_joint_minus_univariate", ja && ua ? nlohmann::json(*ja - *ua) : nlohmann::json(nullptr)},
          {"brier_joint_minus_univariate", jb && ub ? nlohmann::json(*jb - *ub) : nlohmann::json(nullptr)}};
    }
  return j;
}

void ExperimentReport::write_replicates_csv(std::ostream& out) const {
  out << "replicate,model,outcome,test_set,n,cases,auc,brier,e_over_o,status\n";
  for (const auto& r : replicates) {
    if (!r.ok) {
      out << r.replicate << ",,,,,,,,,failed\n";
      continue;
    }
    for (auto m : {ModelKind::joint, ModelKind::univariate})
      for (auto k : all_outcomes) {
        const auto& v = r.metrics[static_cast<std::size_t>(m == ModelKind::joint ? 0 : 1)][static_cast<std::size_t>(index_of(k))];
        for (std::size_t t = 0; t < v.size(); ++t) {
          const auto& o = v[t];
          out << r.replicate << ',' << to_string(m) << ',' << to_string(k) << ',' << t + 1 << ',' << o.n << ','
              << o.cases << ',' << (o.auc ? csv::format(*o.auc) : "") << ','
              << (std::isfinite(o.brier) ? csv::format(o.brier) : "") << ','
              << (o.e_over_o ? csv::format(*o.e_over_o) : "") << ",ok\n";
        }
      }
  }
}

}  // namespace risk
