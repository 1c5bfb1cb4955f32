#include "risk/model_spec.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

namespace risk {
namespace {

constexpr double log_two_pi = 1.8378770664093454836;
constexpr double log_pi = 1.1447298858494001741;
constexpr double log_two = 0.69314718055994530942;

double softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// log(1 + a^2) and a / (1 + a^2) without overflow for large |a|.
double log1p_sq(double a) {
  const double abs_a = std::fabs(a);
  if (abs_a > 1e150) return 2.0 * std::log(abs_a);
  return std::log1p(a * a);
}

double ratio_1p_sq(double a) {
  if (std::fabs(a) > 1e150) return 1.0 / a;
  return a / (1.0 + a * a);
}

// Half-Cauchy(0, scale) on exp(l) plus the log-Jacobian l; adds d/dl to *dl.
double half_cauchy_on_log(double l, double scale, double* dl) {
  const double a = std::exp(l) / scale;
  if (dl != nullptr) *dl += 1.0 - 2.0 * a * ratio_1p_sq(a);
  return log_two - log_pi - std::log(scale) - log1p_sq(a) + l;
}

// Weighted logistic regression of y on [1, x] with a small ridge; slopes whose
// |estimate| / se falls below noncentered_z are flagged.
std::vector<bool> pilot_noncentered(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
  const auto n = x.rows();
  const auto p = x.cols();
  std::vector<bool> flags(static_cast<std::size_t>(p), true);
  if (n == 0 || p == 0) return flags;
  Eigen::MatrixXd d(n, p + 1);
  d.col(0).setOnes();
  d.rightCols(p) = x;
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(p + 1);
  Eigen::MatrixXd h;
  const double ridge = 1e-2;
  for (int it = 0; it < 30; ++it) {
    const Eigen::ArrayXd eta = (d * theta).array();
    const Eigen::ArrayXd prob = 1.0 / (1.0 + (-eta).exp());
    const Eigen::VectorXd g = d.transpose() * (w.array() * (y.array() - prob)).matrix() - ridge * theta;
    const Eigen::VectorXd c = (w.array() * prob * (1.0 - prob)).matrix();
    h = d.transpose() * c.asDiagonal() * d;
    h.diagonal().array() += ridge;
    const Eigen::VectorXd step = h.ldlt().solve(g);
    if (!step.allFinite()) return flags;
    theta += step;
    if (step.cwiseAbs().maxCoeff() < 1e-8) break;
  }
  const Eigen::MatrixXd cov = h.ldlt().solve(Eigen::MatrixXd::Identity(p + 1, p + 1));
  for (Eigen::Index j = 0; j < p; ++j) {
    const double se = std::sqrt(cov(j + 1, j + 1));
    if (std::isfinite(se) && se > 0) flags[static_cast<std::size_t>(j)] = std::fabs(theta(j + 1)) / se < noncentered_z;
  }
  return flags;
}

}  // namespace

std::string_view to_string(SlopePrior p) {
  return p == SlopePrior::lasso ? "lasso" : "t";
}

std::optional<SlopePrior> parse_slope_prior(std::string_view s) {
  if (s == "lasso") return SlopePrior::lasso;
  if (s == "t" || s == "student_t") return SlopePrior::student_t;
  return std::nullopt;
}

void PriorConfig::validate() const {
  if (!(intercept_variance > 0) || !(sigma_u_scale > 0) || !(sigma_s_scale > 0))
    throw input_error("prior scales must be positive");
}

PriorConfig PriorConfig::from_json(const nlohmann::json& j) {
  PriorConfig p;
  if (j.contains("slope_prior")) {
    auto parsed = parse_slope_prior(j.at("slope_prior").get<std::string>());
    if (!parsed) throw input_error("unknown slope prior '" + j.at("slope_prior").get<std::string>() + "'");
    p.slope_prior = *parsed;
  }
  p.intercept_variance = j.value("intercept_variance", p.intercept_variance);
  p.sigma_u_scale = j.value("sigma_u_scale", p.sigma_u_scale);
  p.sigma_s_scale = j.value("sigma_s_scale", p.sigma_s_scale);
  p.include_school_effect = j.value("include_school_effect", p.include_school_effect);
  p.include_participant_effect = j.value("include_participant_effect", p.include_participant_effect);
  p.validate();
  return p;
}

nlohmann::json PriorConfig::to_json() const {
  return {{"slope_prior", to_string(slope_prior)},
          {"intercept_variance", intercept_variance},
          {"sigma_u_scale", sigma_u_scale},
          {"sigma_s_scale", sigma_s_scale},
          {"include_school_effect", include_school_effect},
          {"include_participant_effect", include_participant_effect}};
}

bool SubModelSpec::covers(Group g) const {
  return std::find(groups.begin(), groups.end(), g) != groups.end();
}

nlohmann::json submodels_to_json(const std::vector<SubModelSpec>& specs) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& s : specs) {
    std::vector<std::string> groups;
    for (auto g : s.groups) groups.emplace_back(to_string(g));
    out.push_back({{"label", s.label},
                   {"groups", groups},
                   {"outcome", to_string(s.outcome)},
                   {"predictors", s.predictors},
                   {"shrink_scale", s.shrink_scale}});
  }
  return out;
}

std::vector<SubModelSpec> submodels_from_json(const nlohmann::json& j) {
  std::vector<SubModelSpec> specs;
  for (const auto& e : j) {
    SubModelSpec s;
    s.label = e.at("label").get<std::string>();
    for (const auto& g : e.at("groups")) {
      auto parsed = parse_group(g.get<std::string>());
      if (!parsed) throw input_error("sub-model '" + s.label + "': unknown group");
      s.groups.push_back(*parsed);
    }
    auto k = parse_outcome(e.at("outcome").get<std::string>());
    if (!k) throw input_error("sub-model '" + s.label + "': unknown outcome");
    s.outcome = *k;
    s.predictors = e.at("predictors").get<std::vector<std::string>>();
    s.shrink_scale = e.value("shrink_scale", 1.0);
    specs.push_back(std::move(s));
  }
  return specs;
}

SubModelConfig SubModelConfig::from_json(const nlohmann::json& j) {
  SubModelConfig c;
  if (j.contains("prior") && !j.at("prior").is_null()) {
    auto p = parse_slope_prior(j.at("prior").get<std::string>());
    if (!p) throw input_error("unknown prior '" + j.at("prior").get<std::string>() + "'");
    c.prior = *p;
  }
  const auto& subs = j.contains("submodels") ? j.at("submodels") : nlohmann::json::object();
  for (const auto& [key, names] : subs.items()) {
    const auto dash = key.find('-');
    std::optional<Group> g;
    std::optional<Outcome> k;
    if (dash != std::string::npos) {
      g = parse_group(key.substr(0, dash));
      k = parse_outcome(key.substr(dash + 1));
    }
    if (!g || !k) throw input_error("unknown sub-model key '" + key + "' (expected e.g. \"B-AUD\")");
    c.predictors[{*g, *k}] = names.get<std::vector<std::string>>();
  }
  return c;
}

SubModelConfig load_submodel_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open sub-model config " + path.string());
  try {
    return SubModelConfig::from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw input_error("sub-model config " + path.string() + ": " + e.what());
  }
}

namespace {

std::vector<std::string> expand_predictors(const Schema& schema, const std::string& where,
                                           const std::vector<std::string>& names) {
  std::vector<std::string> cols;
  for (const auto& name : names) {
    auto expanded = schema.expand(name);
    if (expanded.empty()) throw input_error(where + ": unknown predictor '" + name + "'");
    for (auto& c : expanded)
      if (std::find(cols.begin(), cols.end(), c) == cols.end()) cols.push_back(std::move(c));
  }
  return cols;
}

}  // namespace

std::vector<SubModelSpec> default_joint_spec(const Schema& schema, const SubModelConfig& config,
                                             std::vector<std::string>* warnings) {
  std::vector<SubModelSpec> specs;
  for (auto g : all_groups) {
    for (auto k : all_outcomes) {
      SubModelSpec s;
      s.label = submodel_key(g, k);
      s.groups = {g};
      s.outcome = k;
      s.shrink_scale = at_risk(g, k) ? 1.0 : concentrated_shrink_scale;
      if (auto it = config.predictors.find({g, k}); it != config.predictors.end())
        s.predictors = expand_predictors(schema, s.label, it->second);
      if (!at_risk(g, k) && !s.predictors.empty() && warnings != nullptr)
        warnings->push_back(s.label + " is a structural-zero sub-model; its " +
                            std::to_string(s.predictors.size()) +
                            " predictor(s) get a prior concentrated near zero");
      specs.push_back(std::move(s));
    }
  }
  return specs;
}

SubModelSpec univariate_spec(const Schema& schema, Outcome outcome,
                             const std::vector<std::string>& predictors) {
  SubModelSpec s;
  s.label = std::string(to_string(outcome));
  for (auto g : all_groups)
    if (at_risk(g, outcome)) s.groups.push_back(g);
  s.outcome = outcome;
  s.predictors = expand_predictors(schema, s.label, predictors);
  return s;
}

std::optional<std::size_t> find_submodel(const std::vector<SubModelSpec>& specs, Group g, Outcome k) {
  for (std::size_t m = 0; m < specs.size(); ++m)
    if (specs[m].outcome == k && specs[m].covers(g)) return m;
  return std::nullopt;
}

ParameterLayout::ParameterLayout(const std::vector<SubModelSpec>& specs, const PriorConfig& prior,
                                 std::size_t n_participants, std::size_t n_clusters) {
  std::size_t next = specs.size();
  for (const auto& s : specs) {
    slope_offset_.push_back(next);
    slope_count_.push_back(s.predictors.size());
    next += s.predictors.size();
  }
  n_slopes_ = next - specs.size();
  next += n_slopes_;
  if (prior.include_participant_effect) log_sigma_u_ = next++;
  if (prior.include_school_effect) log_sigma_s_ = next++;
  z_u_offset_ = next;
  n_u_ = prior.include_participant_effect ? n_participants : 0;
  z_s_offset_ = z_u_offset_ + n_u_;
  n_s_ = prior.include_school_effect ? n_clusters : 0;
}

std::string intercept_name(const SubModelSpec& s) { return "intercept[" + s.label + "]"; }
std::string slope_name(const SubModelSpec& s, const std::string& p) { return "beta[" + s.label + "/" + p + "]"; }
std::string lambda_name(const SubModelSpec& s, const std::string& p) { return "lambda[" + s.label + "/" + p + "]"; }

std::vector<std::string> ParameterLayout::population_names(const std::vector<SubModelSpec>& specs) const {
  std::vector<std::string> names(population_dim());
  for (std::size_t m = 0; m < specs.size(); ++m) {
    names[intercept(m)] = intercept_name(specs[m]);
    for (std::size_t j = 0; j < slope_count(m); ++j) {
      names[slope(m, j)] = slope_name(specs[m], specs[m].predictors[j]);
      names[log_lambda(m, j)] = lambda_name(specs[m], specs[m].predictors[j]);
    }
  }
  if (log_sigma_u_) names[*log_sigma_u_] = "sigma_u";
  if (log_sigma_s_) names[*log_sigma_s_] = "sigma_s";
  return names;
}

std::vector<bool> ParameterLayout::population_positive() const {
  std::vector<bool> pos(population_dim(), false);
  for (std::size_t i = submodels() + n_slopes_; i < population_dim(); ++i) pos[i] = true;
  return pos;
}

namespace density {

double log_normal(double x, double sd) {
  const double z = x / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * log_two_pi;
}

double log_double_exponential(double x, double scale) {
  return -std::fabs(x) / scale - std::log(2.0 * scale);
}

double log_cauchy(double x, double scale) {
  return -log_pi - std::log(scale) - log1p_sq(x / scale);
}

double log_half_cauchy(double x, double scale) {
  if (x < 0) return -std::numeric_limits<double>::infinity();
  return log_two + log_cauchy(x, scale);
}

}  // namespace density

JointModel::JointModel(const Dataset& data, std::vector<SubModelSpec> specs, PriorConfig prior)
    : specs_(std::move(specs)), prior_(prior) {
  prior_.validate();
  layout_ = ParameterLayout(specs_, prior_, data.size(), data.clusters().size());
  for (const auto& p : data.participants()) participant_ids_.push_back(p.id);
  cluster_ids_ = data.clusters();

  blocks_.resize(specs_.size());
  for (std::size_t m = 0; m < specs_.size(); ++m) {
    const auto& spec = specs_[m];
    std::vector<std::size_t> cols;
    for (const auto& name : spec.predictors) {
      auto c = data.column_index(name);
      if (!c) throw input_error("sub-model " + spec.label + ": predictor '" + name + "' not in dataset");
      cols.push_back(*c);
    }
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < data.size(); ++i)
      if (spec.covers(data[i].group)) rows.push_back(i);

    auto& b = blocks_[m];
    b.x.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
    b.y.resize(static_cast<Eigen::Index>(rows.size()));
    b.w.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto& p = data[rows[r]];
      auto y = p.outcome(spec.outcome);
      if (!y) throw input_error("participant '" + p.id + "' lacks the " + std::string(to_string(spec.outcome)) +
                                " outcome needed for fitting");
      const auto ri = static_cast<Eigen::Index>(r);
      for (std::size_t j = 0; j < cols.size(); ++j) b.x(ri, static_cast<Eigen::Index>(j)) = p.x[cols[j]];
      b.y(ri) = *y;
      b.w(ri) = p.weight;
      b.participant.push_back(rows[r]);
      b.cluster.push_back(data.cluster_of(rows[r]));
    }
    b.center = rows.empty() ? Eigen::VectorXd::Zero(b.x.cols()) : Eigen::VectorXd(b.x.colwise().mean().transpose());
    b.x.rowwise() -= b.center.transpose();
    b.noncentered = pilot_noncentered(b.x, b.y, b.w);
  }
}

double JointModel::intercept(const Eigen::VectorXd& q, std::size_t m) const {
  const auto at = [](std::size_t i) { return static_cast<Eigen::Index>(i); };
  const auto p = at(layout_.slope_count(m));
  double b0 = q(at(layout_.intercept(m)));
  if (p > 0) b0 -= blocks_[m].center.dot(slopes(q, m));
  return b0;
}

Eigen::VectorXd JointModel::slopes(const Eigen::VectorXd& q, std::size_t m) const {
  const auto at = [](std::size_t i) { return static_cast<Eigen::Index>(i); };
  Eigen::VectorXd beta(at(layout_.slope_count(m)));
  for (std::size_t j = 0; j < layout_.slope_count(m); ++j) {
    beta(at(j)) = q(at(layout_.slope(m, j)));
    if (blocks_[m].noncentered[j]) beta(at(j)) *= std::exp(-q(at(layout_.log_lambda(m, j))));
  }
  return beta;
}

std::size_t JointModel::observations() const {
  std::size_t n = 0;
  for (const auto& b : blocks_) n += static_cast<std::size_t>(b.y.size());
  return n;
}

double JointModel::evaluate(const Eigen::VectorXd& q, Eigen::VectorXd* grad, bool with_likelihood,
                            bool with_prior) const {
  if (grad != nullptr) grad->setZero(static_cast<Eigen::Index>(layout_.dim()));
  const auto at = [](std::size_t i) { return static_cast<Eigen::Index>(i); };
  const auto iu = layout_.log_sigma_u();
  const auto is = layout_.log_sigma_s();
  const double sigma_u = iu ? std::exp(q(at(*iu))) : 0.0;
  const double sigma_s = is ? std::exp(q(at(*is))) : 0.0;

  double lp = 0.0;
  double d_sigma_u = 0.0;
  double d_sigma_s = 0.0;
  Eigen::VectorXd eta;
  Eigen::VectorXd resid;
  for (std::size_t m = 0; m < blocks_.size(); ++m) {
    const auto& b = blocks_[m];
    const auto p = at(layout_.slope_count(m));
    const auto i0 = at(layout_.intercept(m));
    const Eigen::VectorXd beta = slopes(q, m);
    // Gradient with respect to the intercept coordinate and beta.
    double g_a = 0.0;
    Eigen::VectorXd g_beta = Eigen::VectorXd::Zero(p);

    const auto n = b.y.size();
    if (with_likelihood && n > 0) {
      eta.setConstant(n, q(i0));
      if (p > 0) eta.noalias() += b.x * beta;
      for (Eigen::Index r = 0; r < n; ++r) {
        const auto ur = static_cast<std::size_t>(r);
        if (iu) eta(r) += sigma_u * q(at(layout_.z_u(b.participant[ur])));
        if (is) eta(r) += sigma_s * q(at(layout_.z_s(b.cluster[ur])));
      }
      // softplus(eta) = max(eta, 0) + log1p(exp(-|eta|)); logistic from the same exponential
      const Eigen::ArrayXd e = (-eta.array().abs()).exp();
      lp += (b.w.array() * (b.y.array() * eta.array() - eta.array().max(0.0) - e.log1p())).sum();
      if (grad != nullptr) {
        const Eigen::ArrayXd prob = (eta.array() >= 0.0).select(1.0 / (1.0 + e), e / (1.0 + e));
        resid = (b.w.array() * (b.y.array() - prob)).matrix();
        g_a += resid.sum();
        if (p > 0) g_beta.noalias() += b.x.transpose() * resid;
        auto& g = *grad;
        for (Eigen::Index r = 0; r < n; ++r) {
          const auto ur = static_cast<std::size_t>(r);
          if (iu) {
            const auto zi = at(layout_.z_u(b.participant[ur]));
            g(zi) += resid(r) * sigma_u;
            d_sigma_u += resid(r) * q(zi);
          }
          if (is) {
            const auto zc = at(layout_.z_s(b.cluster[ur]));
            g(zc) += resid(r) * sigma_s;
            d_sigma_s += resid(r) * q(zc);
          }
        }
      }
    }

    if (with_prior) {
      const double b0 = q(i0) - (p > 0 ? b.center.dot(beta) : 0.0);
      lp += density::log_normal(b0, std::sqrt(prior_.intercept_variance));
      const double d = b0 / prior_.intercept_variance;
      g_a -= d;
      if (p > 0) g_beta += d * b.center;
    }

    if (grad != nullptr) {
      auto& g = *grad;
      g(i0) += g_a;
      for (Eigen::Index j = 0; j < p; ++j) {
        const auto uj = static_cast<std::size_t>(j);
        if (!b.noncentered[uj]) {
          g(at(layout_.slope(m, uj))) += g_beta(j);
          continue;
        }
        // beta_j = s_j / lambda_j
        const double lambda = std::exp(q(at(layout_.log_lambda(m, uj))));
        g(at(layout_.slope(m, uj))) += g_beta(j) / lambda;
        g(at(layout_.log_lambda(m, uj))) -= g_beta(j) * beta(j);
      }
    }

    if (with_prior) {
      for (std::size_t j = 0; j < layout_.slope_count(m); ++j) {
        const auto ib = at(layout_.slope(m, j));
        const auto il = at(layout_.log_lambda(m, j));
        // Non-centred: s ~ DE(0, 1) or Cauchy(0, 1). Centred: beta = s given lambda
        // ~ DE(0, 1/lambda) or Cauchy(0, 1/lambda), i.e. the same kernel at lambda * beta
        // plus log lambda.
        const double l = q(il);
        const bool nc = b.noncentered[j];
        const double lambda = nc ? 1.0 : std::exp(l);
        const double a = lambda * q(ib);
        double d_a = 0.0;
        double d_l = 0.0;
        if (prior_.slope_prior == SlopePrior::lasso) {
          // d|a|/da := 0 at a = 0
          lp += -log_two - std::fabs(a);
          d_a = a > 0 ? -1.0 : (a < 0 ? 1.0 : 0.0);
        } else {
          lp += -log_pi - log1p_sq(a);
          d_a = -2.0 * ratio_1p_sq(a);
        }
        const double d_s = d_a * lambda;
        if (!nc) {
          lp += l;
          d_l += 1.0 + d_a * a;
        }
        lp += half_cauchy_on_log(q(il), specs_[m].shrink_scale, &d_l);
        if (grad != nullptr) {
          (*grad)(ib) += d_s;
          (*grad)(il) += d_l;
        }
      }
    }
  }

  if (grad != nullptr && with_likelihood) {
    if (iu) (*grad)(at(*iu)) += d_sigma_u * sigma_u;
    if (is) (*grad)(at(*is)) += d_sigma_s * sigma_s;
  }

  if (with_prior) {
    if (iu) {
      double d = 0.0;
      lp += half_cauchy_on_log(q(at(*iu)), prior_.sigma_u_scale, &d);
      if (grad != nullptr) (*grad)(at(*iu)) += d;
    }
    if (is) {
      double d = 0.0;
      lp += half_cauchy_on_log(q(at(*is)), prior_.sigma_s_scale, &d);
      if (grad != nullptr) (*grad)(at(*is)) += d;
    }
    const auto z_begin = at(layout_.population_dim());
    const auto z_count = at(layout_.dim()) - z_begin;
    if (z_count > 0) {
      const auto z = q.segment(z_begin, z_count);
      lp += -0.5 * z.squaredNorm() - 0.5 * log_two_pi * static_cast<double>(z_count);
      if (grad != nullptr) grad->segment(z_begin, z_count) -= z;
    }
  }
  return lp;
}

double JointModel::log_density(const Eigen::VectorXd& q, Eigen::VectorXd& grad) const {
  return evaluate(q, &grad, true, true);
}

LogDensityResult JointModel::log_posterior(const Eigen::VectorXd& q) const {
  LogDensityResult r;
  r.value = evaluate(q, &r.gradient, true, true);
  return r;
}

double JointModel::log_prior(const Eigen::VectorXd& q) const { return evaluate(q, nullptr, false, true); }

double JointModel::log_likelihood(const Eigen::VectorXd& q) const { return evaluate(q, nullptr, true, false); }

ParameterVector JointModel::unpack(const Eigen::VectorXd& q) const {
  const auto at = [](std::size_t i) { return static_cast<Eigen::Index>(i); };
  ParameterVector t;
  for (std::size_t m = 0; m < specs_.size(); ++m) {
    t.intercepts.push_back(intercept(q, m));
    const Eigen::VectorXd beta = slopes(q, m);
    std::vector<double> b(beta.data(), beta.data() + beta.size()), l;
    for (std::size_t j = 0; j < layout_.slope_count(m); ++j) l.push_back(std::exp(q(at(layout_.log_lambda(m, j)))));
    t.slopes.push_back(std::move(b));
    t.lambdas.push_back(std::move(l));
  }
  if (auto iu = layout_.log_sigma_u()) {
    t.sigma_u = std::exp(q(at(*iu)));
    for (std::size_t i = 0; i < layout_.n_participant_effects(); ++i)
      t.participant_effects.push_back(t.sigma_u * q(at(layout_.z_u(i))));
  } else {
    t.sigma_u = 0.0;
  }
  if (auto is = layout_.log_sigma_s()) {
    t.sigma_s = std::exp(q(at(*is)));
    for (std::size_t c = 0; c < layout_.n_school_effects(); ++c)
      t.school_effects.push_back(*t.sigma_s * q(at(layout_.z_s(c))));
  }
  return t;
}

Eigen::VectorXd JointModel::pack(const ParameterVector& t) const {
  const auto at = [](std::size_t i) { return static_cast<Eigen::Index>(i); };
  Eigen::VectorXd q = Eigen::VectorXd::Zero(at(layout_.dim()));
  for (std::size_t m = 0; m < specs_.size(); ++m) {
    double a = t.intercepts.at(m);
    for (std::size_t j = 0; j < layout_.slope_count(m); ++j) {
      q(at(layout_.slope(m, j))) = t.slopes.at(m).at(j) * (blocks_[m].noncentered[j] ? t.lambdas.at(m).at(j) : 1.0);
      q(at(layout_.log_lambda(m, j))) = std::log(t.lambdas.at(m).at(j));
      a += blocks_[m].center(at(j)) * t.slopes.at(m).at(j);
    }
    q(at(layout_.intercept(m))) = a;
  }
  if (auto iu = layout_.log_sigma_u()) {
    q(at(*iu)) = std::log(t.sigma_u);
    for (std::size_t i = 0; i < layout_.n_participant_effects() && i < t.participant_effects.size(); ++i)
      q(at(layout_.z_u(i))) = t.participant_effects[i] / t.sigma_u;
  }
  if (auto is = layout_.log_sigma_s()) {
    const double s = t.sigma_s.value_or(1.0);
    q(at(*is)) = std::log(s);
    for (std::size_t c = 0; c < layout_.n_school_effects() && c < t.school_effects.size(); ++c)
      q(at(layout_.z_s(c))) = t.school_effects[c] / s;
  }
  return q;
}

std::vector<std::string> JointModel::draw_names(bool with_random_effects) const {
  auto names = layout_.population_names(specs_);
  if (with_random_effects) {
    for (std::size_t i = 0; i < layout_.n_participant_effects(); ++i) names.push_back("u[" + participant_ids_[i] + "]");
    for (std::size_t c = 0; c < layout_.n_school_effects(); ++c) names.push_back("u_s[" + cluster_ids_[c] + "]");
  }
  return names;
}

std::vector<bool> JointModel::draw_positive(bool with_random_effects) const {
  auto pos = layout_.population_positive();
  if (with_random_effects) pos.resize(layout_.dim(), false);
  return pos;
}

Eigen::VectorXd JointModel::draw_row(const Eigen::VectorXd& q, bool with_random_effects) const {
  const auto at = [](std::size_t i) { return static_cast<Eigen::Index>(i); };
  const auto pop = at(layout_.population_dim());
  Eigen::VectorXd row(with_random_effects ? at(layout_.dim()) : pop);
  row.head(pop) = q.head(pop);
  const auto positive = layout_.population_positive();
  for (Eigen::Index i = 0; i < pop; ++i)
    if (positive[static_cast<std::size_t>(i)]) row(i) = std::exp(q(i));
  for (std::size_t m = 0; m < specs_.size(); ++m) {
    row(at(layout_.intercept(m))) = intercept(q, m);
    const Eigen::VectorXd beta = slopes(q, m);
    for (std::size_t j = 0; j < layout_.slope_count(m); ++j) row(at(layout_.slope(m, j))) = beta(at(j));
  }
  if (with_random_effects) {
    const auto iu = layout_.log_sigma_u();
    const auto is = layout_.log_sigma_s();
    for (std::size_t i = 0; i < layout_.n_participant_effects(); ++i)
      row(at(layout_.z_u(i))) = std::exp(q(at(*iu))) * q(at(layout_.z_u(i)));
    for (std::size_t c = 0; c < layout_.n_school_effects(); ++c)
      row(at(layout_.z_s(c))) = std::exp(q(at(*is))) * q(at(layout_.z_s(c)));
  }
  return row;
}

double linear_predictor(const Dataset& data, std::size_t participant, const std::vector<SubModelSpec>& specs,
                        std::size_t submodel, const ParameterVector& theta) {
  const auto& spec = specs.at(submodel);
  const auto& p = data[participant];
  double eta = theta.intercepts.at(submodel);
  for (std::size_t j = 0; j < spec.predictors.size(); ++j) {
    auto c = data.column_index(spec.predictors[j]);
    if (!c) throw input_error("missing predictor '" + spec.predictors[j] + "' for participant " + p.id);
    eta += p.x[*c] * theta.slopes.at(submodel).at(j);
  }
  if (!theta.participant_effects.empty()) eta += theta.participant_effects.at(participant);
  if (!theta.school_effects.empty()) eta += theta.school_effects.at(data.cluster_of(participant));
  return eta;
}

double weighted_log_likelihood(const Dataset& data, const std::vector<SubModelSpec>& specs,
                               const ParameterVector& theta) {
  double ll = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& p = data[i];
    for (auto k : all_outcomes) {
      auto m = find_submodel(specs, p.group, k);
      if (!m) continue;
      auto y = p.outcome(k);
      if (!y) throw input_error("participant '" + p.id + "' lacks an outcome");
      const double eta = linear_predictor(data, i, specs, *m, theta);
      // y log p + (1 - y) log(1 - p) with log p = -softplus(-eta), log(1 - p) = -softplus(eta)
      ll += p.weight * (*y == 1 ? -softplus(-eta) : -softplus(eta));
    }
  }
  return ll;
}

LogDensityResult log_posterior(const Dataset& data, const std::vector<SubModelSpec>& specs,
                               const PriorConfig& prior, const Eigen::VectorXd& q) {
  return JointModel(data, specs, prior).log_posterior(q);
}

}  // namespace risk
