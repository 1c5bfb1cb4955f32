#include "risk/quadrature.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "risk/core.hpp"

namespace risk {

std::string_view to_string(QuadratureMode m) {
  return m == QuadratureMode::univariate ? "univariate" : "bivariate";
}

std::optional<QuadratureMode> parse_quadrature_mode(std::string_view s) {
  if (s == "univariate") return QuadratureMode::univariate;
  if (s == "bivariate") return QuadratureMode::bivariate;
  return std::nullopt;
}

namespace {

// Orthonormal Hermite polynomials at x: returns (p_n, p_{n-1}) and the sum of
// squares of p_0 .. p_{n-1}.
struct HermiteEval {
  double pn;
  double pn1;
  double sum_sq;
};

HermiteEval hermite(int n, double x) {
  double p_prev = 0.0;
  double p = std::pow(std::numbers::pi, -0.25);
  double sum_sq = 0.0;
  for (int j = 0; j < n; ++j) {
    sum_sq += p * p;
    const double next = x * std::sqrt(2.0 / (j + 1)) * p - std::sqrt(static_cast<double>(j) / (j + 1)) * p_prev;
    p_prev = p;
    p = next;
  }
  return {p, p_prev, sum_sq};
}

}  // namespace

QuadratureRule gauss_hermite(int order, QuadratureMode mode) {
  if (order < 1 || order > 100) throw input_error("quadrature order must lie in [1, 100]");
  const int n = order;
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i + 1 < n; ++i) {
    const double b = std::sqrt((i + 1) / 2.0);
    jacobi(i, i + 1) = b;
    jacobi(i + 1, i) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
  std::vector<double> x(eig.eigenvalues().data(), eig.eigenvalues().data() + n);

  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double t = x[static_cast<std::size_t>(i)];
    for (int it = 0; it < 10; ++it) {
      const auto h = hermite(n, t);
      const double step = h.pn / (std::sqrt(2.0 * n) * h.pn1);
      t -= step;
      if (std::abs(step) < 1e-16 * std::max(1.0, std::abs(t))) break;
    }
    x[static_cast<std::size_t>(i)] = t;
    w[static_cast<std::size_t>(i)] = 1.0 / hermite(n, t).sum_sq;
  }
  for (int i = 0; i < n / 2; ++i) {
    const auto lo = static_cast<std::size_t>(i);
    const auto hi = static_cast<std::size_t>(n - 1 - i);
    const double node = 0.5 * (x[hi] - x[lo]);
    const double weight = 0.5 * (w[lo] + w[hi]);
    x[lo] = -node;
    x[hi] = node;
    w[lo] = w[hi] = weight;
  }
  if (n % 2 == 1) x[static_cast<std::size_t>(n / 2)] = 0.0;

  QuadratureRule rule;
  rule.nodes = std::move(x);
  rule.weights = std::move(w);
  rule.order = order;
  rule.mode = mode;
  return rule;
}

double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double logit(double p) { return std::log(p) - std::log1p(-p); }

namespace {

// logistic(x) - 1/2, odd in x to the last bit.
double centered_logistic(double x) { return 0.5 * std::tanh(0.5 * x); }

// Sum over nodes of w * f(base + scale * node), pairing +node with -node so
// that an odd f at base 0 sums to exactly zero.
template <class F>
double symmetric_sum(const QuadratureRule& rule, double base, double scale, F f) {
  const std::size_t n = rule.nodes.size();
  double s = 0.0;
  for (std::size_t m = 0; m < n / 2; ++m) {
    const double a = scale * rule.nodes[n - 1 - m];
    s += rule.weights[m] * (f(base + a) + f(base - a));
  }
  if (n % 2 == 1) s += rule.weights[n / 2] * f(base);
  return s;
}

}  // namespace

double marginal_probability(double eta, double sigma_u, std::optional<double> sigma_s, const QuadratureRule& rule) {
  if (sigma_u < 0) throw input_error("marginal_probability: sigma_u must be >= 0");
  const double norm = 1.0 / std::sqrt(std::numbers::pi);
  const double su = std::numbers::sqrt2 * sigma_u;
  if (rule.mode == QuadratureMode::univariate) {
    if (sigma_u == 0.0) return logistic(eta);
    const double p = 0.5 + norm * symmetric_sum(rule, eta, su, centered_logistic);
    // Small probabilities keep their relative precision.
    if (p < 0.25) return norm * symmetric_sum(rule, eta, su, logistic);
    return p;
  }
  if (!sigma_s) throw input_error("bivariate quadrature requires sigma_s");
  if (*sigma_s < 0) throw input_error("marginal_probability: sigma_s must be >= 0");
  const double ss = std::numbers::sqrt2 * *sigma_s;
  const auto inner = [&](auto f) {
    return [&, f](double x) { return norm * symmetric_sum(rule, x, ss, f); };
  };
  const double p = 0.5 + norm * symmetric_sum(rule, eta, su, inner(centered_logistic));
  if (p < 0.25) return norm * symmetric_sum(rule, eta, su, inner(logistic));
  return p;
}

}  // namespace risk
