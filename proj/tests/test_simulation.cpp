#include <catch_amalgamated.hpp>

#include <fstream>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "risk/simulation.hpp"
#include "support.hpp"

using namespace risk;
using Catch::Approx;

namespace {

// P(Y1 > 0, Y2 > 0) for a bivariate normal with the given means, common
// variance and correlation, by one-dimensional conditioning.
double orthant(double mu1, double mu2, double variance, double rho) {
  const double sd = std::sqrt(variance);
  const boost::math::normal_distribution<double> n01;
  const auto f = [&](double e) {
    return boost::math::pdf(n01, e) * boost::math::cdf(n01, (mu2 / sd + rho * e) / std::sqrt(1 - rho * rho));
  };
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, -mu1 / sd, 40.0, 15, 1e-12);
}

SimSetting flat_setting(double b_aud, double b_cud, double rho) {
  SimSetting s = sim_preset(1);
  s.coefficients.clear();
  s.intercepts = {{{Group::b, Outcome::aud}, b_aud}, {{Group::b, Outcome::cud}, b_cud}};
  s.rho_b = rho;
  return s;
}

std::vector<std::string> from_table(const std::map<std::string, double>& m) {
  std::vector<std::string> out;
  for (const auto& [k, _] : m) out.push_back(k);
  return out;
}

}  // namespace

TEST_CASE("presets reproduce the published coefficient table") {
  const auto s1 = sim_preset(1);
  CHECK(s1.intercept(Group::a, Outcome::aud) == -10.02);
  CHECK(sim_preset(1, 10.0).intercept(Group::a, Outcome::aud) == 10.0);
  CHECK(s1.intercept(Group::b, Outcome::aud) == -6.83);
  CHECK(s1.intercept(Group::c, Outcome::cud) == -4.30);
  CHECK(s1.coefficient(Group::b, Outcome::aud, "delinquency") == 6.34);
  CHECK(s1.coefficient(Group::b, Outcome::aud, "conscientiousness") == -2.19);
  CHECK(s1.coefficient(Group::b, Outcome::cud, "openness") == 1.81);
  CHECK(s1.coefficient(Group::a, Outcome::aud, "peer_alcohol") == 1.50);
  CHECK(s1.coefficient(Group::c, Outcome::cud, "male") == 0.0);
  CHECK(s1.coefficient(Group::a, Outcome::aud, "openness") == 0.0);
  CHECK(s1.train_size == 3000);
  CHECK(sim_preset(2).train_size == 1500);

  const auto s3 = sim_preset(3);
  CHECK(s3.intercept(Group::a, Outcome::aud) == -10.02);
  CHECK(s3.intercept(Group::c, Outcome::cud) == -10.00);
  CHECK(s3.coefficient(Group::c, Outcome::cud, "delinquency") == 15.00);
  CHECK(s3.coefficient(Group::c, Outcome::cud, "neuroticism") == 4.00);

  const auto s4 = sim_preset(4);
  CHECK(s4.intercept(Group::a, Outcome::aud) == -8.50);
  CHECK(s4.intercept(Group::b, Outcome::aud) == -8.20);
  CHECK(s4.intercept(Group::b, Outcome::cud) == -9.00);
  CHECK(s4.intercept(Group::c, Outcome::cud) == -9.50);
  CHECK(s4.intercept(Group::c, Outcome::aud) == -14.98);
  CHECK(s4.coefficient(Group::a, Outcome::aud, "extraversion") == 2.30);
  CHECK(s4.coefficient(Group::b, Outcome::aud, "delinquency") == 15.00);
  CHECK(s4.coefficient(Group::b, Outcome::aud, "neuroticism") == 0.0);
  CHECK(s4.coefficient(Group::c, Outcome::cud, "delinquency") == 10.00);
  CHECK(s4.coefficients.at({Group::b, Outcome::cud}) == s4.coefficients.at({Group::c, Outcome::cud}));

  for (int id = 1; id <= 4; ++id) {
    const auto s = sim_preset(id);
    CHECK(s.latent_variance == 5.0);
    CHECK(s.rho_b == 0.8);
    for (const auto& [go, coefs] : s.coefficients) {
      const auto& candidates = s.candidates[static_cast<std::size_t>(index_of(go.second))];
      for (const auto& name : from_table(coefs))
        CHECK(std::find(candidates.begin(), candidates.end(), name) != candidates.end());
    }
  }
  CHECK_THROWS_AS(sim_preset(5), input_error);
}

TEST_CASE("shipped preset files match the built-in presets") {
  for (int id = 1; id <= 4; ++id) {
    const auto path = std::filesystem::path(RISK_SOURCE_DIR) / "presets" / ("setting" + std::to_string(id) + ".json");
    INFO(path.string());
    std::ifstream in(path);
    REQUIRE(in);
    const auto loaded = SimSetting::from_json(nlohmann::json::parse(in), SimSetting{});
    CHECK(loaded.to_json() == sim_preset(id).to_json());
  }
}

TEST_CASE("group counts") {
  const auto c = group_counts(3000, {0.33, 0.64, 0.03});
  CHECK(c == std::array<std::size_t, 3>{990, 1920, 90});
  const auto odd = group_counts(7, {0.33, 0.64, 0.03});
  CHECK(odd[0] + odd[1] + odd[2] == 7);
  CHECK(odd[2] == 0);
  CHECK(group_counts(10, {0.0, 0.0, 1.0}) == std::array<std::size_t, 3>{0, 0, 10});
}

TEST_CASE("setting overrides") {
  const auto base = sim_preset(1);
  const auto s = SimSetting::from_json(nlohmann::json::parse(R"({"rho_b":0.2,"replicates":3,"test_sizes":[50]})"), base);
  CHECK(s.rho_b == 0.2);
  CHECK(s.replicates == 3);
  CHECK(s.test_sizes == std::vector<std::size_t>{50});
  CHECK(s.intercepts == base.intercepts);
  CHECK_THROWS_AS(SimSetting::from_json(nlohmann::json::parse(R"({"rho":0.2})"), base), input_error);
  CHECK_THROWS_AS(SimSetting::from_json(nlohmann::json::parse(R"({"rho_b":1.0})"), base), input_error);
  CHECK_THROWS_AS(SimSetting::from_json(nlohmann::json::parse(R"({"intercepts":{"D-AUD":1}})"), base), input_error);
  CHECK(SimSetting::from_json(base.to_json(), SimSetting{}).to_json() == base.to_json());
}

TEST_CASE("latent outcomes match the bivariate normal orthant probability") {
  const auto dist = default_predictor_distribution();
  for (double rho : {0.2, 0.8}) {
    const auto s = flat_setting(1.0, -0.5, rho);
    Rng rng(static_cast<std::uint64_t>(rho * 10));
    const auto d = draw_participants(dist, s, {0, 40000, 0}, rng, "b");
    double both = 0, aud = 0;
    for (const auto& p : d.participants()) {
      both += *p.outcome(Outcome::aud) && *p.outcome(Outcome::cud);
      aud += *p.outcome(Outcome::aud);
    }
    const double n = static_cast<double>(d.size());
    CHECK(both / n == Approx(orthant(1.0, -0.5, 5.0, rho)).margin(0.01));
    CHECK(aud / n == Approx(boost::math::cdf(boost::math::normal_distribution<double>(), 1.0 / std::sqrt(5.0))).margin(0.01));
  }
}

TEST_CASE("intercepts drive prevalence and structural zeros") {
  const auto dist = default_predictor_distribution();
  SimSetting s = sim_preset(1);
  s.coefficients.clear();
  for (auto& [go, v] : s.intercepts) v = -50.0;
  Rng rng(3);
  auto d = draw_participants(dist, s, {300, 300, 300}, rng, "x");
  for (const auto& p : d.participants()) {
    CHECK(*p.outcome(Outcome::aud) == 0);
    CHECK(*p.outcome(Outcome::cud) == 0);
  }
  for (auto& [go, v] : s.intercepts) v = 0.0;
  d = draw_participants(dist, s, {3000, 3000, 3000}, rng, "x");
  std::array<std::array<double, 2>, 3> rate{};
  for (const auto& p : d.participants())
    for (auto k : all_outcomes)
      rate[static_cast<std::size_t>(index_of(p.group))][static_cast<std::size_t>(index_of(k))] += *p.outcome(k) / 3000.0;
  CHECK(rate[0][0] == Approx(0.5).margin(0.03));
  CHECK(rate[1][0] == Approx(0.5).margin(0.03));
  CHECK(rate[1][1] == Approx(0.5).margin(0.03));
  CHECK(rate[2][1] == Approx(0.5).margin(0.03));
  CHECK(rate[0][1] == 0.0);
  CHECK(rate[2][0] == 0.0);
}

TEST_CASE("synthetic predictors follow the distribution") {
  const auto dist = default_predictor_distribution();
  REQUIRE_NOTHROW(dist.validate());
  CHECK(dist.continuous.size() == 18);
  const auto cand = default_candidates();
  CHECK(cand[0].size() == 15);
  CHECK(cand[1].size() == 17);

  SimSetting s = sim_preset(1);
  Rng rng(99);
  const auto d = draw_participants(dist, s, {0, 20000, 0}, rng, "p");
  const auto col = *d.column_index("delinquency");
  const auto male = *d.column_index("male");
  const auto south = *d.column_index("region:south");
  double z = 0, m = 0, r = 0;
  for (const auto& p : d.participants()) {
    const double v = p.x[col];
    CHECK(v > 0.0);
    CHECK(v < 1.0);
    z += std::log(v / (1 - v));
    m += p.x[male];
    r += p.x[south];
  }
  const double n = static_cast<double>(d.size());
  CHECK(z / n == Approx(-2.2).margin(0.03));
  CHECK(m / n == Approx(0.47).margin(0.015));
  CHECK(r / n == Approx(0.37).margin(0.015));
}

TEST_CASE("distribution estimation from a reference dataset") {
  const auto dist = default_predictor_distribution();
  Rng rng(5);
  const auto ref = draw_participants(dist, sim_preset(1), {1000, 2000, 100}, rng, "r");
  const auto est = estimate_predictor_distribution(ref);
  CHECK(est.warnings.empty());
  CHECK(est.continuous == dist.continuous);
  CHECK((est.mean - dist.mean).cwiseAbs().maxCoeff() < 0.06);
  CHECK((est.cov - dist.cov).cwiseAbs().maxCoeff() < 0.08);
  CHECK(est.group_probs[0] == Approx(1000.0 / 3100));
  double total = 0;
  for (const auto& [levels, p] : est.table) total += p;
  CHECK(total == Approx(1.0));

  const auto back = PredictorDistribution::from_json(est.to_json());
  CHECK(back.mean == est.mean);
  CHECK(back.cov == est.cov);
  CHECK(back.table == est.table);

  // Fewer rows than predictors: ridge and a warning.
  const auto tiny = estimate_predictor_distribution(ref.subset({0, 1, 2}));
  CHECK_FALSE(tiny.warnings.empty());
  CHECK_NOTHROW(tiny.validate());
  Eigen::LLT<Eigen::MatrixXd> llt(tiny.cov);
  CHECK(llt.info() == Eigen::Success);
}

TEST_CASE("replicates are deterministic in the seed") {
  const auto dist = default_predictor_distribution();
  SimSetting s = sim_preset(1);
  s.train_size = 200;
  s.test_sizes = {50, 60};
  const auto a = generate_replicate(dist, s, 7);
  const auto b = generate_replicate(dist, s, 7);
  const auto c = generate_replicate(dist, s, 8);
  REQUIRE(a.tests.size() == 2);
  CHECK(a.train.size() == 200);
  CHECK(a.tests[1].size() == 60);
  CHECK(a.train[17].x == b.train[17].x);
  CHECK(a.tests[0][3].outcomes == b.tests[0][3].outcomes);
  CHECK(a.train[17].x != c.train[17].x);
  CHECK(a.train[0].x != a.tests[0][0].x);
}

TEST_CASE("two-replicate smoke experiment") {
  const auto dist = default_predictor_distribution();
  SimSetting s = sim_preset(1);
  s.train_size = 300;
  s.test_sizes = {200, 200};
  s.replicates = 2;
  ExperimentOptions opt;
  opt.seed = 3;
  int calls = 0;
  opt.progress = [&](const ReplicateMetrics&) { ++calls; };
  const auto rep = run_experiment(s, dist, test::quick_sampler(100, 60, 1, 1), opt);
  REQUIRE(rep.replicates.size() == 2);
  CHECK(calls == 2);
  CHECK(rep.failures() == 0);
  for (auto m : {ModelKind::joint, ModelKind::univariate})
    for (auto k : all_outcomes)
      for (std::size_t t = 0; t < 2; ++t) {
        const auto b = rep.mean_brier(m, k, t);
        REQUIRE(b);
        CHECK(std::isfinite(*b));
        CHECK(rep.mean_auc(m, k, t));
      }
  std::ostringstream csv;
  rep.write_replicates_csv(csv);
  CHECK(csv.str().find("replicate") == 0);
  CHECK(rep.to_json()["replicates_completed"] == 2);
}

TEST_CASE("final-model preset has six predictors in three sub-models") {
  const auto dir = std::filesystem::path(RISK_SOURCE_DIR) / "presets";
  const auto schema = load_schema(dir / "final_model_schema.json");
  const auto cfg = load_submodel_config(dir / "final_model.json");
  const auto specs = default_joint_spec(schema, cfg);
  std::vector<std::size_t> sizes;
  for (const auto& s : specs) sizes.push_back(s.predictors.size());
  CHECK(sizes == std::vector<std::size_t>{6, 0, 6, 6, 0, 0});
  CHECK(cfg.prior == SlopePrior::student_t);
  for (const auto& p : schema.predictors)
    if (p.kind == PredictorKind::continuous) CHECK(p.scaling_max);
}
