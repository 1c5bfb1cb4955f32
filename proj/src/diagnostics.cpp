#include "risk/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/distributions/normal.hpp>

namespace risk {

namespace {

constexpr double nan_value = std::numeric_limits<double>::quiet_NaN();

// Splits each chain into first and second half (odd middle draw dropped).
Eigen::MatrixXd split_chains(const Eigen::MatrixXd& chains) {
  const Eigen::Index n = chains.rows() / 2;
  Eigen::MatrixXd out(n, 2 * chains.cols());
  const Eigen::Index offset = chains.rows() - n;
  for (Eigen::Index c = 0; c < chains.cols(); ++c) {
    out.col(2 * c) = chains.col(c).head(n);
    out.col(2 * c + 1) = chains.col(c).segment(offset, n);
  }
  return out;
}

// Average-rank normal scores over all pooled draws.
Eigen::MatrixXd rank_normalize(const Eigen::MatrixXd& x) {
  const Eigen::Index s = x.size();
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(s));
  std::iota(idx.begin(), idx.end(), 0);
  const double* d = x.data();
  std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) { return d[a] < d[b]; });
  Eigen::MatrixXd z(x.rows(), x.cols());
  double* out = z.data();
  const boost::math::normal_distribution<double> std_normal;
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && d[idx[j + 1]] == d[idx[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    const double p = (rank - 0.375) / (static_cast<double>(s) + 0.25);
    const double score = boost::math::quantile(std_normal, p);
    for (std::size_t k = i; k <= j; ++k) out[idx[k]] = score;
    i = j + 1;
  }
  return z;
}

double rhat_basic(const Eigen::MatrixXd& x) {
  const double n = static_cast<double>(x.rows());
  const double m = static_cast<double>(x.cols());
  if (n < 2 || m < 1) return nan_value;
  const Eigen::RowVectorXd means = x.colwise().mean();
  double w = 0.0;
  for (Eigen::Index c = 0; c < x.cols(); ++c) w += (x.col(c).array() - means(c)).square().sum() / (n - 1);
  w /= m;
  const double grand = means.mean();
  const double b = m > 1 ? n * (means.array() - grand).square().sum() / (m - 1) : 0.0;
  if (!(w > 0)) return nan_value;
  return std::sqrt(((n - 1) / n * w + b / n) / w);
}

bool constant(const Eigen::MatrixXd& x) {
  if (x.size() == 0) return true;
  return (x.array() == x(0, 0)).all();
}

double autocov(const Eigen::VectorXd& c, double mean, Eigen::Index lag) {
  const Eigen::Index n = c.size();
  double s = 0.0;
  for (Eigen::Index t = 0; t + lag < n; ++t) s += (c(t) - mean) * (c(t + lag) - mean);
  return s / static_cast<double>(n);
}

double ess_basic(const Eigen::MatrixXd& x) {
  const Eigen::Index n = x.rows();
  const Eigen::Index m = x.cols();
  if (n < 4 || constant(x)) return nan_value;
  const Eigen::RowVectorXd means = x.colwise().mean();
  const auto mean_acov = [&](Eigen::Index lag) {
    double s = 0.0;
    for (Eigen::Index c = 0; c < m; ++c) s += autocov(x.col(c), means(c), lag);
    return s / static_cast<double>(m);
  };
  const double nd = static_cast<double>(n);
  const double mean_var = mean_acov(0) * nd / (nd - 1);
  double var_plus = mean_var * (nd - 1) / nd;
  if (m > 1) {
    const double g = means.mean();
    var_plus += (means.array() - g).square().sum() / static_cast<double>(m - 1);
  }
  std::vector<double> rho(static_cast<std::size_t>(n), 0.0);
  double rho_even = 1.0;
  double rho_odd = 1.0 - (mean_var - mean_acov(1)) / var_plus;
  rho[0] = rho_even;
  rho[1] = rho_odd;
  Eigen::Index s = 1;
  while (s < n - 4 && rho_even + rho_odd > 0) {
    rho_even = 1.0 - (mean_var - mean_acov(s + 1)) / var_plus;
    rho_odd = 1.0 - (mean_var - mean_acov(s + 2)) / var_plus;
    if (rho_even + rho_odd >= 0) {
      rho[static_cast<std::size_t>(s + 1)] = rho_even;
      rho[static_cast<std::size_t>(s + 2)] = rho_odd;
    }
    s += 2;
  }
  const Eigen::Index max_s = s;
  if (rho_even > 0) rho[static_cast<std::size_t>(max_s + 1)] = rho_even;
  for (Eigen::Index t = 1; t <= max_s - 3; t += 2) {
    const auto u = static_cast<std::size_t>(t);
    if (rho[u + 1] + rho[u + 2] > rho[u - 1] + rho[u]) {
      rho[u + 1] = (rho[u - 1] + rho[u]) / 2;
      rho[u + 2] = rho[u + 1];
    }
  }
  const double total = nd * static_cast<double>(m);
  double tau = -1.0 + rho[static_cast<std::size_t>(max_s + 1)];
  for (Eigen::Index t = 0; t <= max_s; ++t) tau += 2.0 * rho[static_cast<std::size_t>(t)];
  tau = std::max(tau, 1.0 / std::log10(total));
  return total / tau;
}

}  // namespace

double split_rhat(const Eigen::MatrixXd& chains) {
  if (chains.rows() < 4 || constant(chains)) return nan_value;
  const Eigen::MatrixXd split = split_chains(chains);
  const double bulk = rhat_basic(rank_normalize(split));
  const double med = [&] {
    std::vector<double> v(split.data(), split.data() + split.size());
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2), v.end());
    double hi = v[v.size() / 2];
    if (v.size() % 2 == 1) return hi;
    const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2));
    return 0.5 * (lo + hi);
  }();
  const Eigen::MatrixXd folded = (split.array() - med).abs().matrix();
  const double tail = rhat_basic(rank_normalize(folded));
  if (std::isnan(bulk)) return nan_value;
  return std::isnan(tail) ? bulk : std::max(bulk, tail);
}

double ess_bulk(const Eigen::MatrixXd& chains) {
  if (chains.rows() < 4 || constant(chains)) return nan_value;
  return ess_basic(rank_normalize(split_chains(chains)));
}

nlohmann::json DiagnosticsReport::to_json() const {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  nlohmann::json params = nlohmann::json::array();
  for (const auto& p : parameters)
    params.push_back({{"name", p.name}, {"rhat", num(p.rhat)}, {"ess_bulk", num(p.ess_bulk)}, {"flagged", p.flagged}});
  return {{"parameters", params},
          {"divergences", divergences},
          {"divergence_fraction", divergence_fraction},
          {"high_divergence", high_divergence},
          {"warnings", warnings}};
}

DiagnosticsReport diagnostics(const PosteriorDraws& pd) {
  DiagnosticsReport r;
  if (pd.chains() == 1) r.warnings.emplace_back("single chain: R-hat computed on its split halves");
  for (std::size_t c = 0; c < pd.names.size(); ++c) {
    const Eigen::MatrixXd by = pd.by_chain(c);
    ParameterDiagnostics p;
    p.name = pd.names[c];
    p.rhat = split_rhat(by);
    p.ess_bulk = ess_bulk(by);
    p.flagged = std::isnan(p.rhat) || p.rhat > 1.01;
    if (p.flagged)
      r.warnings.push_back(std::isnan(p.rhat) ? p.name + ": R-hat undefined (constant draws)"
                                              : p.name + ": R-hat " + std::to_string(p.rhat) + " > 1.01");
    r.parameters.push_back(std::move(p));
  }
  r.divergences = pd.divergences();
  r.divergence_fraction = pd.draws() > 0 ? static_cast<double>(r.divergences) / static_cast<double>(pd.draws()) : 0.0;
  r.high_divergence = r.divergence_fraction > 0.2;
  if (r.high_divergence)
    r.warnings.push_back("divergent transitions in " + std::to_string(r.divergences) + " of " +
                         std::to_string(pd.draws()) + " draws");
  return r;
}

}  // namespace risk
