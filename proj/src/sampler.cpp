#include "risk/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>

#include "risk/csv.hpp"
#include "risk/parallel.hpp"

namespace risk {

void SamplerConfig::validate() const {
  if (chains < 1) throw input_error("sampler: chains must be >= 1");
  if (sampling_iters < 1) throw input_error("sampler: sampling_iters must be >= 1");
  if (warmup_iters < 0 || (warmup_iters > 0 && warmup_iters < 100))
    throw input_error("sampler: warmup_iters must be 0 or >= 100");
  if (!(target_accept > 0.0 && target_accept < 1.0)) throw input_error("sampler: target_accept must lie in (0, 1)");
  if (max_tree_depth < 1 || max_tree_depth > 20) throw input_error("sampler: max_tree_depth must lie in [1, 20]");
}

SamplerConfig SamplerConfig::from_json(const nlohmann::json& j, SamplerConfig c) {
  c.chains = j.value("chains", c.chains);
  c.warmup_iters = j.value("warmup_iters", c.warmup_iters);
  c.sampling_iters = j.value("sampling_iters", c.sampling_iters);
  c.target_accept = j.value("target_accept", c.target_accept);
  c.max_tree_depth = j.value("max_tree_depth", c.max_tree_depth);
  c.seed = j.value("seed", c.seed);
  c.keep_random_effects = j.value("keep_random_effects", c.keep_random_effects);
  c.validate();
  return c;
}

SamplerConfig SamplerConfig::from_json(const nlohmann::json& j) { return from_json(j, SamplerConfig{}); }

nlohmann::json SamplerConfig::to_json() const {
  return {{"chains", chains},
          {"warmup_iters", warmup_iters},
          {"sampling_iters", sampling_iters},
          {"target_accept", target_accept},
          {"max_tree_depth", max_tree_depth},
          {"seed", seed},
          {"keep_random_effects", keep_random_effects}};
}

double hamiltonian(const PhasePoint& z, const Eigen::VectorXd& inv_metric) {
  return -z.log_density + 0.5 * z.p.cwiseProduct(inv_metric).dot(z.p);
}

void leapfrog(const LogDensity& model, PhasePoint& z, double step, const Eigen::VectorXd& inv_metric) {
  z.p.noalias() += 0.5 * step * z.grad;
  z.q.noalias() += step * inv_metric.cwiseProduct(z.p);
  z.log_density = model.log_density(z.q, z.grad);
  z.p.noalias() += 0.5 * step * z.grad;
}

Eigen::VectorXd initialize(std::size_t dim, std::uint64_t seed, int chain) {
  auto rng = make_rng(seed, "init", static_cast<std::uint64_t>(chain));
  std::uniform_real_distribution<double> unif(-2.0, 2.0);
  Eigen::VectorXd q(static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < q.size(); ++i) q(i) = unif(rng);
  return q;
}

namespace {

double log_sum_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

bool no_u_turn(const Eigen::VectorXd& p_sharp_minus, const Eigen::VectorXd& p_sharp_plus,
               const Eigen::VectorXd& rho) {
  return p_sharp_plus.dot(rho) > 0 && p_sharp_minus.dot(rho) > 0;
}

struct TransitionInfo {
  double accept_stat = 0.0;
  int depth = 0;
  int leapfrog_steps = 0;
  bool divergent = false;
};

class Nuts {
 public:
  Nuts(const LogDensity& model, int max_depth, Rng& rng)
      : model_(model), max_depth_(max_depth), rng_(rng),
        inv_metric_(Eigen::VectorXd::Ones(static_cast<Eigen::Index>(model.dim()))) {}

  double step_size() const { return step_; }
  void set_step_size(double e) { step_ = e; }
  const Eigen::VectorXd& inv_metric() const { return inv_metric_; }
  void set_inv_metric(Eigen::VectorXd m) { inv_metric_ = std::move(m); }

  void sample_momentum(PhasePoint& z) {
    for (Eigen::Index i = 0; i < z.p.size(); ++i) z.p(i) = normal_(rng_) / std::sqrt(inv_metric_(i));
  }

  // Doubles or halves the step size until a single leapfrog step crosses an
  // acceptance probability of 0.8.
  void init_step_size(const PhasePoint& start) {
    if (step_ == 0 || step_ > 1e7 || std::isnan(step_)) return;
    const double log_08 = std::log(0.8);
    const auto delta = [&] {
      PhasePoint z = start;
      sample_momentum(z);
      const double h0 = hamiltonian(z, inv_metric_);
      leapfrog(model_, z, step_, inv_metric_);
      double h = hamiltonian(z, inv_metric_);
      if (std::isnan(h)) h = std::numeric_limits<double>::infinity();
      return h0 - h;
    };
    const int direction = delta() > log_08 ? 1 : -1;
    for (;;) {
      const double d = delta();
      if (direction == 1 && !(d > log_08)) break;
      if (direction == -1 && !(d < log_08)) break;
      step_ = direction == 1 ? 2 * step_ : 0.5 * step_;
      if (step_ > 1e7) throw sampler_error("step size diverged to infinity during initialisation");
      if (step_ == 0) throw sampler_error("step size collapsed to zero during initialisation");
    }
  }

  TransitionInfo transition(PhasePoint& state) {
    const auto dim = state.q.size();
    z_ = state;
    sample_momentum(z_);
    divergent_ = false;

    PhasePoint z_fwd = z_;
    PhasePoint z_bck = z_;
    PhasePoint z_sample = z_;
    PhasePoint z_propose = z_;

    Eigen::VectorXd p_sharp = inv_metric_.cwiseProduct(z_.p);
    Eigen::VectorXd p_sharp_fwd_bck = p_sharp, p_sharp_fwd_fwd = p_sharp;
    Eigen::VectorXd p_sharp_bck_fwd = p_sharp, p_sharp_bck_bck = p_sharp;
    Eigen::VectorXd p_fwd_bck = z_.p, p_fwd_fwd = z_.p, p_bck_fwd = z_.p, p_bck_bck = z_.p;
    Eigen::VectorXd rho = z_.p;

    double log_sum_weight = 0.0;
    const double h0 = hamiltonian(z_, inv_metric_);
    int n_leapfrog = 0;
    double sum_metro_prob = 0.0;
    int depth = 0;

    while (depth < max_depth_) {
      Eigen::VectorXd rho_fwd = Eigen::VectorXd::Zero(dim);
      Eigen::VectorXd rho_bck = Eigen::VectorXd::Zero(dim);
      bool valid_subtree = false;
      double log_sum_weight_subtree = -std::numeric_limits<double>::infinity();

      if (uniform_(rng_) > 0.5) {
        z_ = z_fwd;
        rho_bck = rho;
        p_bck_fwd = p_fwd_bck;
        p_sharp_bck_fwd = p_sharp_fwd_bck;
        valid_subtree = build_tree(depth, z_propose, p_sharp_fwd_bck, p_sharp_fwd_fwd, rho_fwd, p_fwd_bck,
                                   p_fwd_fwd, h0, 1.0, n_leapfrog, log_sum_weight_subtree, sum_metro_prob);
        z_fwd = z_;
      } else {
        z_ = z_bck;
        rho_fwd = rho;
        p_fwd_bck = p_bck_fwd;
        p_sharp_fwd_bck = p_sharp_bck_fwd;
        valid_subtree = build_tree(depth, z_propose, p_sharp_bck_fwd, p_sharp_bck_bck, rho_bck, p_bck_fwd,
                                   p_bck_bck, h0, -1.0, n_leapfrog, log_sum_weight_subtree, sum_metro_prob);
        z_bck = z_;
      }
      if (!valid_subtree) break;
      ++depth;

      if (log_sum_weight_subtree > log_sum_weight) {
        z_sample = z_propose;
      } else if (uniform_(rng_) < std::exp(log_sum_weight_subtree - log_sum_weight)) {
        z_sample = z_propose;
      }
      log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);

      rho = rho_bck + rho_fwd;
      bool persist = no_u_turn(p_sharp_bck_bck, p_sharp_fwd_fwd, rho);
      Eigen::VectorXd rho_extended = rho_bck + p_fwd_bck;
      persist = persist && no_u_turn(p_sharp_bck_bck, p_sharp_fwd_bck, rho_extended);
      rho_extended = rho_fwd + p_bck_fwd;
      persist = persist && no_u_turn(p_sharp_bck_fwd, p_sharp_fwd_fwd, rho_extended);
      if (!persist) break;
    }

    state = z_sample;
    TransitionInfo info;
    info.accept_stat = n_leapfrog > 0 ? sum_metro_prob / n_leapfrog : 0.0;
    info.depth = depth;
    info.leapfrog_steps = n_leapfrog;
    info.divergent = divergent_;
    return info;
  }

 private:
  bool build_tree(int depth, PhasePoint& z_propose, Eigen::VectorXd& p_sharp_beg, Eigen::VectorXd& p_sharp_end,
                  Eigen::VectorXd& rho, Eigen::VectorXd& p_beg, Eigen::VectorXd& p_end, double h0, double sign,
                  int& n_leapfrog, double& log_sum_weight, double& sum_metro_prob) {
    if (depth == 0) {
      leapfrog(model_, z_, sign * step_, inv_metric_);
      ++n_leapfrog;
      double h = hamiltonian(z_, inv_metric_);
      if (std::isnan(h)) h = std::numeric_limits<double>::infinity();
      if (h - h0 > max_delta_h_) divergent_ = true;
      log_sum_weight = log_sum_exp(log_sum_weight, h0 - h);
      sum_metro_prob += h0 - h > 0 ? 1.0 : std::exp(h0 - h);
      z_propose = z_;
      p_sharp_beg = inv_metric_.cwiseProduct(z_.p);
      p_sharp_end = p_sharp_beg;
      rho += z_.p;
      p_beg = z_.p;
      p_end = p_beg;
      return !divergent_;
    }

    const auto dim = z_.q.size();
    double log_sum_weight_init = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd p_init_end(dim), p_sharp_init_end(dim);
    Eigen::VectorXd rho_init = Eigen::VectorXd::Zero(dim);
    if (!build_tree(depth - 1, z_propose, p_sharp_beg, p_sharp_init_end, rho_init, p_beg, p_init_end, h0, sign,
                    n_leapfrog, log_sum_weight_init, sum_metro_prob))
      return false;

    PhasePoint z_propose_final = z_;
    double log_sum_weight_final = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd p_final_beg(dim), p_sharp_final_beg(dim);
    Eigen::VectorXd rho_final = Eigen::VectorXd::Zero(dim);
    if (!build_tree(depth - 1, z_propose_final, p_sharp_final_beg, p_sharp_end, rho_final, p_final_beg, p_end, h0,
                    sign, n_leapfrog, log_sum_weight_final, sum_metro_prob))
      return false;

    const double log_sum_weight_subtree = log_sum_exp(log_sum_weight_init, log_sum_weight_final);
    log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);
    if (log_sum_weight_final > log_sum_weight_subtree) {
      z_propose = z_propose_final;
    } else if (uniform_(rng_) < std::exp(log_sum_weight_final - log_sum_weight_subtree)) {
      z_propose = z_propose_final;
    }

    const Eigen::VectorXd rho_subtree = rho_init + rho_final;
    rho += rho_subtree;
    bool persist = no_u_turn(p_sharp_beg, p_sharp_end, rho_subtree);
    Eigen::VectorXd rho_extended = rho_init + p_final_beg;
    persist = persist && no_u_turn(p_sharp_beg, p_sharp_final_beg, rho_extended);
    rho_extended = rho_final + p_init_end;
    persist = persist && no_u_turn(p_sharp_init_end, p_sharp_end, rho_extended);
    return persist;
  }

  const LogDensity& model_;
  int max_depth_;
  Rng& rng_;
  Eigen::VectorXd inv_metric_;
  double step_ = 1.0;
  double max_delta_h_ = 1000.0;
  bool divergent_ = false;
  PhasePoint z_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

class DualAveraging {
 public:
  explicit DualAveraging(double delta) : delta_(delta) {}

  void restart(double step) {
    mu_ = std::log(10 * step);
    counter_ = 0;
    s_bar_ = 0;
    x_bar_ = 0;
  }

  double learn(double accept_stat) {
    ++counter_;
    accept_stat = std::min(1.0, accept_stat);
    const double eta = 1.0 / (counter_ + t0_);
    s_bar_ = (1.0 - eta) * s_bar_ + eta * (delta_ - accept_stat);
    const double x = mu_ - s_bar_ * std::sqrt(counter_) / gamma_;
    const double x_eta = std::pow(counter_, -kappa_);
    x_bar_ = (1.0 - x_eta) * x_bar_ + x_eta * x;
    return std::exp(x);
  }

  double final_step() const { return std::exp(x_bar_); }

 private:
  double delta_;
  double mu_ = 0.0;
  double counter_ = 0.0;
  double s_bar_ = 0.0;
  double x_bar_ = 0.0;
  static constexpr double gamma_ = 0.05;
  static constexpr double kappa_ = 0.75;
  static constexpr double t0_ = 10.0;
};

// Fast initial buffer, doubling slow windows for the metric, fast terminal buffer.
class MetricWindows {
 public:
  MetricWindows(int warmup, Eigen::Index dim) : warmup_(warmup), mean_(Eigen::VectorXd::Zero(dim)), m2_(mean_) {
    if (warmup < 150) {
      init_buffer_ = static_cast<int>(0.15 * warmup);
      term_buffer_ = static_cast<int>(0.1 * warmup);
      window_ = warmup - (init_buffer_ + term_buffer_);
    }
    next_window_end_ = init_buffer_ + window_ - 1;
  }

  // Returns true when a slow window just closed and `inv_metric` was updated.
  bool learn(Eigen::VectorXd& inv_metric, const Eigen::VectorXd& q) {
    if (counter_ >= init_buffer_ && counter_ < warmup_ - term_buffer_ && counter_ != warmup_) {
      ++n_;
      const Eigen::VectorXd delta = q - mean_;
      mean_ += delta / n_;
      m2_ += delta.cwiseProduct(q - mean_);
    }
    if (counter_ == next_window_end_ && counter_ != warmup_) {
      compute_next_window();
      const Eigen::VectorXd var = n_ > 1 ? Eigen::VectorXd(m2_ / (n_ - 1.0)) : Eigen::VectorXd::Ones(q.size());
      const double n = n_;
      inv_metric = (n / (n + 5.0)) * var + Eigen::VectorXd::Constant(q.size(), 1e-3 * (5.0 / (n + 5.0)));
      mean_.setZero();
      m2_.setZero();
      n_ = 0;
      ++counter_;
      return true;
    }
    ++counter_;
    return false;
  }

 private:
  void compute_next_window() {
    if (next_window_end_ == warmup_ - term_buffer_ - 1) return;
    window_ *= 2;
    next_window_end_ = counter_ + window_;
    if (next_window_end_ != warmup_ - term_buffer_ - 1) {
      const int boundary = next_window_end_ + 2 * window_;
      if (boundary >= warmup_ - term_buffer_) next_window_end_ = warmup_ - term_buffer_ - 1;
    }
  }

  int warmup_;
  int init_buffer_ = 75;
  int term_buffer_ = 50;
  int window_ = 25;
  int next_window_end_ = 0;
  int counter_ = 0;
  Eigen::VectorXd mean_;
  Eigen::VectorXd m2_;
  long n_ = 0;
};

}  // namespace

ChainOutput run_chain(const LogDensity& model, const SamplerConfig& cfg, int chain, const DrawTransform& transform) {
  cfg.validate();
  const auto dim = model.dim();
  if (dim == 0) throw input_error("model has no parameters");

  PhasePoint z;
  z.p = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
  bool ok = false;
  auto init_rng = make_rng(cfg.seed, "init", static_cast<std::uint64_t>(chain));
  std::uniform_real_distribution<double> unif(-2.0, 2.0);
  for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
    z.q = attempt == 0 ? initialize(dim, cfg.seed, chain) : Eigen::VectorXd(static_cast<Eigen::Index>(dim));
    if (attempt > 0)
      for (Eigen::Index i = 0; i < z.q.size(); ++i) z.q(i) = unif(init_rng);
    z.log_density = model.log_density(z.q, z.grad);
    ok = std::isfinite(z.log_density) && z.grad.allFinite();
  }
  if (!ok) throw sampler_error("log density not finite at any of 100 initial points (chain " + std::to_string(chain) + ")");

  auto rng = make_rng(cfg.seed, "chain", static_cast<std::uint64_t>(chain));
  Nuts nuts(model, cfg.max_tree_depth, rng);
  nuts.init_step_size(z);

  const bool adapt = cfg.warmup_iters > 0;
  DualAveraging step_adapt(cfg.target_accept);
  step_adapt.restart(nuts.step_size());
  MetricWindows windows(cfg.warmup_iters, static_cast<Eigen::Index>(dim));

  ChainOutput out;
  const auto keep = static_cast<Eigen::Index>(cfg.sampling_iters);
  long long total_depth = 0;
  double total_accept = 0.0;

  for (int it = 0; it < cfg.warmup_iters + cfg.sampling_iters; ++it) {
    const auto info = nuts.transition(z);
    out.stats.leapfrog_steps += info.leapfrog_steps;
    if (adapt && it < cfg.warmup_iters) {
      nuts.set_step_size(step_adapt.learn(info.accept_stat));
      Eigen::VectorXd inv_metric = nuts.inv_metric();
      if (windows.learn(inv_metric, z.q)) {
        nuts.set_inv_metric(std::move(inv_metric));
        nuts.init_step_size(z);
        step_adapt.restart(nuts.step_size());
      }
      if (it == cfg.warmup_iters - 1) nuts.set_step_size(step_adapt.final_step());
      continue;
    }
    const auto row = transform ? transform(z.q) : z.q;
    if (out.draws.rows() == 0) out.draws.resize(keep, row.size());
    out.draws.row(static_cast<Eigen::Index>(out.log_density.size())) = row.transpose();
    out.log_density.push_back(z.log_density);
    out.divergent.push_back(info.divergent);
    if (info.divergent) ++out.stats.divergences;
    total_depth += info.depth;
    total_accept += info.accept_stat;
  }
  out.stats.step_size = nuts.step_size();
  out.stats.inv_metric = nuts.inv_metric();
  out.stats.mean_accept = total_accept / cfg.sampling_iters;
  out.stats.mean_tree_depth = static_cast<double>(total_depth) / cfg.sampling_iters;
  return out;
}

std::vector<ChainOutput> run_chains(const LogDensity& model, const SamplerConfig& cfg, const DrawTransform& transform) {
  cfg.validate();
  std::vector<ChainOutput> chains(static_cast<std::size_t>(cfg.chains));
  parallel_for(chains.size(), cfg.threads,
               [&](std::size_t c) { chains[c] = run_chain(model, cfg, static_cast<int>(c), transform); });
  return chains;
}

int PosteriorDraws::chains() const {
  int n = 0;
  for (int c : chain) n = std::max(n, c + 1);
  return n;
}

std::optional<std::size_t> PosteriorDraws::column(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return i;
  return std::nullopt;
}

std::size_t PosteriorDraws::divergences() const {
  return static_cast<std::size_t>(std::count(divergent.begin(), divergent.end(), true));
}

Eigen::MatrixXd PosteriorDraws::by_chain(std::size_t column) const {
  const int m = chains();
  std::vector<std::vector<double>> per(static_cast<std::size_t>(m));
  for (std::size_t r = 0; r < draws(); ++r)
    per[static_cast<std::size_t>(chain[r])].push_back(values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(column)));
  std::size_t n = per.empty() ? 0 : per[0].size();
  for (const auto& c : per) n = std::min(n, c.size());
  Eigen::MatrixXd out(static_cast<Eigen::Index>(n), m);
  for (int c = 0; c < m; ++c)
    for (std::size_t i = 0; i < n; ++i) out(static_cast<Eigen::Index>(i), c) = per[static_cast<std::size_t>(c)][i];
  return out;
}

PosteriorDraws collect_draws(std::vector<std::string> names, std::vector<bool> positive,
                             const std::vector<ChainOutput>& chains) {
  PosteriorDraws pd;
  pd.names = std::move(names);
  pd.positive = std::move(positive);
  Eigen::Index rows = 0;
  for (const auto& c : chains) rows += c.draws.rows();
  pd.values.resize(rows, static_cast<Eigen::Index>(pd.names.size()));
  Eigen::Index r = 0;
  for (std::size_t c = 0; c < chains.size(); ++c) {
    const auto& ch = chains[c];
    if (ch.draws.rows() > 0) pd.values.middleRows(r, ch.draws.rows()) = ch.draws;
    for (Eigen::Index i = 0; i < ch.draws.rows(); ++i) {
      pd.chain.push_back(static_cast<int>(c));
      pd.iteration.push_back(static_cast<int>(i));
      pd.log_density.push_back(ch.log_density[static_cast<std::size_t>(i)]);
      pd.divergent.push_back(ch.divergent[static_cast<std::size_t>(i)]);
    }
    r += ch.draws.rows();
    pd.chain_stats.push_back(ch.stats);
  }
  return pd;
}

PosteriorDraws sample(const JointModel& model, const SamplerConfig& cfg) {
  const bool re = cfg.keep_random_effects;
  auto chains = run_chains(model, cfg, [&](const Eigen::VectorXd& q) { return model.draw_row(q, re); });
  return collect_draws(model.draw_names(re), model.draw_positive(re), chains);
}

void write_draws(const PosteriorDraws& pd, std::ostream& out) {
  out << "chain,iteration,lp__,divergent__";
  for (const auto& n : pd.names) out << ',' << csv::quote_if_needed(n);
  out << '\n';
  for (std::size_t r = 0; r < pd.draws(); ++r) {
    out << pd.chain[r] << ',' << pd.iteration[r] << ',' << csv::format(pd.log_density[r]) << ','
        << (pd.divergent[r] ? 1 : 0);
    for (Eigen::Index c = 0; c < pd.values.cols(); ++c)
      out << ',' << csv::format(pd.values(static_cast<Eigen::Index>(r), c));
    out << '\n';
  }
}

PosteriorDraws read_draws(std::istream& in) {
  std::string line;
  if (!csv::next_line(in, line)) throw input_error("draws: empty file");
  auto header = csv::split(line);
  if (header.size() < 4 || header[0] != "chain" || header[1] != "iteration" || header[2] != "lp__" ||
      header[3] != "divergent__")
    throw input_error("draws: unexpected header");
  PosteriorDraws pd;
  pd.names.assign(header.begin() + 4, header.end());
  for (const auto& n : pd.names)
    pd.positive.push_back(n.rfind("lambda[", 0) == 0 || n == "sigma_u" || n == "sigma_s");
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (csv::next_line(in, line)) {
    ++line_no;
    auto f = csv::split(line);
    if (f.size() != header.size()) throw input_error("draws: malformed row " + std::to_string(line_no));
    auto chain = csv::parse_int(f[0]);
    auto iter = csv::parse_int(f[1]);
    auto lp = csv::parse_double(f[2]);
    if (!chain || !iter || !lp) throw input_error("draws: malformed row " + std::to_string(line_no));
    pd.chain.push_back(static_cast<int>(*chain));
    pd.iteration.push_back(static_cast<int>(*iter));
    pd.log_density.push_back(*lp);
    pd.divergent.push_back(f[3] == "1");
    std::vector<double> v;
    v.reserve(pd.names.size());
    for (std::size_t c = 4; c < f.size(); ++c) {
      auto x = csv::parse_double(f[c]);
      if (!x) throw input_error("draws: non-numeric value on row " + std::to_string(line_no));
      v.push_back(*x);
    }
    rows.push_back(std::move(v));
  }
  pd.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(pd.names.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < pd.names.size(); ++c)
      pd.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return pd;
}

}  // namespace risk
