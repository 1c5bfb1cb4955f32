#pragma once

#include <optional>
#include <string_view>
#include <vector>

namespace risk {

enum class QuadratureMode { univariate, bivariate };

std::string_view to_string(QuadratureMode m);
std::optional<QuadratureMode> parse_quadrature_mode(std::string_view s);

// Gauss-Hermite rule for the weight exp(-t^2): sum of weights is sqrt(pi).
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
  int order = 0;
  QuadratureMode mode = QuadratureMode::univariate;
};

inline constexpr int default_quadrature_order = 20;

// Golub-Welsch eigen-decomposition followed by Newton refinement of each node.
// Valid for 1 <= order <= 100.
QuadratureRule gauss_hermite(int order, QuadratureMode mode = QuadratureMode::univariate);

double logistic(double x);
double logit(double p);

// P(y = 1) with the random effects integrated out. Univariate mode integrates
// one N(0, sigma_u^2) effect; bivariate mode also integrates N(0, sigma_s^2)
// with a tensor-product rule and requires sigma_s.
double marginal_probability(double eta, double sigma_u, std::optional<double> sigma_s,
                            const QuadratureRule& rule);

}  // namespace risk
