#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "risk/data_model.hpp"
#include "risk/predictor.hpp"
#include "risk/rng.hpp"
#include "risk/sampler.hpp"

namespace risk::test {

// Two continuous predictors and a binary one, already on [0, 1].
inline Schema toy_schema() {
  Schema s;
  s.predictors.push_back({"x1", PredictorKind::continuous, 1.0, 0.0, {}, true});
  s.predictors.push_back({"x2", PredictorKind::continuous, 1.0, 0.0, {}, true});
  s.predictors.push_back({"male", PredictorKind::binary, 1.0, 0.0, {}, true});
  return s;
}

struct ToyTruth {
  // Per (group, outcome) intercept; slopes on x1, x2, male shared by outcome.
  double intercept[3][2] = {{-1.0, -30.0}, {-1.2, -1.5}, {-30.0, -0.8}};
  double slopes[2][3] = {{1.5, -1.0, 0.5}, {0.8, 1.2, -0.4}};
  double sigma_u = 0.8;
  double group_probs[3] = {0.35, 0.5, 0.15};
  int clusters = 8;
};

inline double logistic_of(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Participants drawn from a joint logistic model with a participant effect
// shared by both outcomes; structural-zero outcomes are 0.
inline Dataset toy_dataset(std::size_t n, std::uint64_t seed, const ToyTruth& t = {},
                           const std::string& prefix = "p") {
  Rng rng = make_rng(seed, "toy");
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::discrete_distribution<int> group({t.group_probs[0], t.group_probs[1], t.group_probs[2]});
  std::vector<Participant> rows;
  for (std::size_t i = 0; i < n; ++i) {
    Participant p;
    p.id = prefix + std::to_string(i);
    p.group = static_cast<Group>(group(rng));
    p.cluster_id = "s" + std::to_string(static_cast<int>(unif(rng) * t.clusters));
    p.x = {unif(rng), unif(rng), unif(rng) < 0.5 ? 1.0 : 0.0};
    const double u = t.sigma_u * normal(rng);
    for (auto k : all_outcomes) {
      const int ki = index_of(k);
      double eta = t.intercept[index_of(p.group)][ki] + u;
      for (int j = 0; j < 3; ++j) eta += t.slopes[ki][j] * p.x[static_cast<std::size_t>(j)];
      const int y = unif(rng) < logistic_of(eta) ? 1 : 0;
      p.outcomes[static_cast<std::size_t>(ki)] = at_risk(p.group, k) ? y : 0;
    }
    rows.push_back(std::move(p));
  }
  return Dataset(toy_schema(), std::move(rows));
}

inline SamplerConfig quick_sampler(int warmup = 200, int iter = 200, int chains = 2, std::uint64_t seed = 11) {
  SamplerConfig c;
  c.chains = chains;
  c.warmup_iters = warmup;
  c.sampling_iters = iter;
  c.seed = seed;
  c.threads = 1;
  return c;
}

// Fitted model whose draws are filled column by column; unspecified columns are
// zero except positive ones, which are one.
inline FittedModel manual_model(const Schema& schema, std::vector<SubModelSpec> specs, PriorConfig prior, int draws,
                         const std::map<std::string, std::vector<double>>& values) {
  const Dataset empty(schema, {});
  JointModel jm(empty, specs, prior);
  FittedModel m;
  m.schema = schema;
  m.submodels = specs;
  m.prior = prior;
  m.draws.names = jm.draw_names(false);
  m.draws.positive = jm.draw_positive(false);
  m.draws.values = Eigen::MatrixXd::Zero(draws, static_cast<Eigen::Index>(m.draws.names.size()));
  for (std::size_t c = 0; c < m.draws.names.size(); ++c)
    if (m.draws.positive[c]) m.draws.values.col(static_cast<Eigen::Index>(c)).setOnes();
  for (const auto& [name, v] : values) {
    const auto c = m.draws.column(name);
    if (!c) throw std::runtime_error("no draw column " + name);
    for (int d = 0; d < draws; ++d)
      m.draws.values(d, static_cast<Eigen::Index>(*c)) = v[static_cast<std::size_t>(d) % v.size()];
  }
  for (int d = 0; d < draws; ++d) {
    m.draws.chain.push_back(0);
    m.draws.iteration.push_back(d);
    m.draws.log_density.push_back(0.0);
    m.draws.divergent.push_back(false);
  }
  return m;
}

// Fresh scratch directory under the system temp path.
inline std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("risk_engine_tests") / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace risk::test
