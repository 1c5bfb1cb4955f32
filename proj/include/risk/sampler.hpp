#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "risk/model_spec.hpp"
#include "risk/rng.hpp"

namespace risk {

struct SamplerConfig {
  int chains = 4;
  int warmup_iters = 1000;
  int sampling_iters = 1000;
  double target_accept = 0.8;
  int max_tree_depth = 10;
  std::uint64_t seed = 1;
  // Worker threads for chains; 0 means hardware concurrency.
  unsigned threads = 0;
  // Keep u and u_s columns in the draws (large for big n).
  bool keep_random_effects = false;

  void validate() const;
  static SamplerConfig from_json(const nlohmann::json& j, SamplerConfig base);
  static SamplerConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

// Position, momentum, log density and its gradient.
struct PhasePoint {
  Eigen::VectorXd q;
  Eigen::VectorXd p;
  Eigen::VectorXd grad;
  double log_density = 0.0;
};

// -log density + kinetic energy under a diagonal inverse metric.
double hamiltonian(const PhasePoint& z, const Eigen::VectorXd& inv_metric);

// One velocity-Verlet step.
void leapfrog(const LogDensity& model, PhasePoint& z, double step, const Eigen::VectorXd& inv_metric);

// Uniform on [-2, 2]^dim; each chain index gets its own stream.
Eigen::VectorXd initialize(std::size_t dim, std::uint64_t seed, int chain = 0);

struct ChainStats {
  double step_size = 0.0;
  Eigen::VectorXd inv_metric;
  int divergences = 0;
  double mean_accept = 0.0;
  double mean_tree_depth = 0.0;
  long long leapfrog_steps = 0;
};

struct ChainOutput {
  Eigen::MatrixXd draws;  // rows = kept iterations
  std::vector<double> log_density;
  std::vector<bool> divergent;
  ChainStats stats;
};

// Maps an unconstrained state to the row stored for a kept draw.
using DrawTransform = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

// No-U-Turn sampling (multinomial trajectory sampling, generalised U-turn
// check) with dual-averaging step size and windowed diagonal-metric adaptation.
ChainOutput run_chain(const LogDensity& model, const SamplerConfig& cfg, int chain,
                      const DrawTransform& transform = {});

std::vector<ChainOutput> run_chains(const LogDensity& model, const SamplerConfig& cfg,
                                    const DrawTransform& transform = {});

struct PosteriorDraws {
  std::vector<std::string> names;
  std::vector<bool> positive;
  Eigen::MatrixXd values;  // rows = kept draws, chain-major
  std::vector<int> chain;
  std::vector<int> iteration;
  std::vector<double> log_density;
  std::vector<bool> divergent;
  std::vector<ChainStats> chain_stats;

  std::size_t draws() const { return static_cast<std::size_t>(values.rows()); }
  int chains() const;
  std::optional<std::size_t> column(std::string_view name) const;
  std::size_t divergences() const;
  // Column as (iterations x chains); requires equal chain lengths.
  Eigen::MatrixXd by_chain(std::size_t column) const;
};

PosteriorDraws collect_draws(std::vector<std::string> names, std::vector<bool> positive,
                             const std::vector<ChainOutput>& chains);

// Samples the joint model; draws are on the constrained scale.
PosteriorDraws sample(const JointModel& model, const SamplerConfig& cfg);

// Canonical text form: chain,iteration,lp__,divergent__,<parameters...>
void write_draws(const PosteriorDraws& pd, std::ostream& out);
PosteriorDraws read_draws(std::istream& in);

}  // namespace risk
