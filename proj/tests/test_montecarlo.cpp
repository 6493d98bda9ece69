#include <doctest.h>

#include <cmath>
#include <limits>

#include "psel/config.hpp"
#include "psel/errors.hpp"
#include "psel/montecarlo.hpp"

using namespace psel;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double d : v) out[i++] = d;
  return out;
}

ExperimentConfig gaussian_config(int N, long long reps, std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.model = ModelSpec::gaussian({1.0, 0.1}, N);
  cfg.theta_true = vec({0.0, 0.1});
  cfg.rule = SelectionRule::sms();
  cfg.estimators = {"ml"};
  cfg.replications = reps;
  cfg.seed = seed;
  return cfg;
}

const SummaryRow& row_for(const McSummary& s, const std::string& id) {
  for (const auto& r : s.rows)
    if (r.estimator == id) return r;
  FAIL("missing row " << id);
  return s.rows.front();
}

void check_decomposition(const SummaryRow& r) {
  double total = 0.0;
  for (int m = 0; m < r.bias.frequency.size(); ++m) {
    if (!r.bias.bin_empty(m)) total += r.bias.frequency[m] * r.conditional_mse[m];
  }
  CHECK(std::abs(total - r.psmse) <= 1e-12 * (1.0 + r.psmse));
}

}  // namespace

TEST_CASE("results do not depend on the worker count") {
  ExperimentConfig cfg = gaussian_config(5, 3000, 17);
  cfg.estimators = {"ml", "psml_nr", "psml_mbp"};
  cfg.sweep = {SweepAxis::N, 0, {1, 5}};
  cfg.workers = 1;
  const McSummary one = run_experiment(cfg);
  cfg.workers = 3;
  const McSummary three = run_experiment(cfg);
  CHECK(three.workers == 3);
  REQUIRE(one.rows.size() == three.rows.size());
  for (std::size_t i = 0; i < one.rows.size(); ++i) {
    CHECK(one.rows[i].psmse == three.rows[i].psmse);
    CHECK(one.rows[i].psmse_se == three.rows[i].psmse_se);
    CHECK(one.rows[i].bias_sel == three.rows[i].bias_sel);
    CHECK(one.rows[i].bias.frequency == three.rows[i].bias.frequency);
    CHECK(one.rows[i].nonconverged == three.rows[i].nonconverged);
  }
}

TEST_CASE("psmse decomposes over the selection bins") {
  ExperimentConfig cfg = gaussian_config(10, 5000, 3);
  cfg.estimators = {"ml", "psml_fs"};
  for (const auto& r : run_experiment(cfg).rows) check_decomposition(r);
  ExperimentConfig uni;
  uni.model = ModelSpec::uniform(2, 3);
  uni.theta_true = vec({10, 10.2});
  uni.rule = SelectionRule::sms();
  uni.estimators = {"ml", "mvu", "uv"};
  uni.replications = 5000;
  for (const auto& r : run_experiment(uni).rows) check_decomposition(r);
}

TEST_CASE("symmetric gaussian selects each population half the time") {
  ExperimentConfig cfg = gaussian_config(4, 20000, 5);
  cfg.model = ModelSpec::gaussian({1.0, 1.0}, 4);
  cfg.theta_true = vec({0.3, 0.3});
  const McSummary s = run_experiment(cfg);
  const SummaryRow& r = s.rows.front();
  for (int m = 0; m < 2; ++m) CHECK(std::abs(r.bias.frequency[m] - 0.5) < 3 * r.bias.frequency_se[m]);
}

TEST_CASE("gaussian ML conditional bias matches the analytic oracle") {
  const ExperimentConfig cfg = gaussian_config(10, 20000, 7);
  const McSummary s = run_experiment(cfg);
  const SummaryRow& r = s.rows.front();
  const Matrix want = analytic_conditional_bias(cfg.model, cfg.rule, cfg.theta_true);
  for (int m = 0; m < 2; ++m)
    for (int j = 0; j < 2; ++j) {
      CAPTURE(j);
      CAPTURE(m);
      CHECK(std::abs(r.bias.conditional(j, m) - want(j, m)) < 3 * r.bias.conditional_se(j, m));
    }
  CHECK(r.bias.conditional(0, 0) > 3 * r.bias.conditional_se(0, 0));
  CHECK(r.bias.conditional(1, 1) > 3 * r.bias.conditional_se(1, 1));
}

TEST_CASE("exponential N=1 PSML attains the bound at theta=(5,5)") {
  ExperimentConfig cfg;
  cfg.model = ModelSpec::exponential(2, 1);
  cfg.theta_true = vec({5, 5});
  cfg.rule = SelectionRule::sms();
  cfg.estimators = {"psml"};
  cfg.replications = 100000;
  cfg.seed = 11;
  const McSummary s = run_experiment(cfg);
  const SummaryRow& r = s.rows.front();
  CHECK(r.psi_crb == doctest::Approx(25.0));
  CHECK(std::abs(r.psmse - 25.0) <= 0.02 * 25.0);
  CHECK(std::abs(r.bias_sel) < 3 * r.bias_sel_se);
}

TEST_CASE("randomized rule ML is unbiased in every bin") {
  ExperimentConfig cfg = gaussian_config(3, 20000, 13);
  cfg.rule = SelectionRule::randomized({0.3, 0.7});
  cfg.estimators = {"ml", "psml"};
  const McSummary s = run_experiment(cfg);
  const SummaryRow& ml = row_for(s, "ml");
  const SummaryRow& psml = row_for(s, "psml");
  for (int m = 0; m < 2; ++m)
    for (int j = 0; j < 2; ++j) CHECK(std::abs(ml.bias.indicator(j, m)) < 3 * ml.bias.indicator_se(j, m));
  CHECK(ml.psmse == psml.psmse);
  const Matrix J = fim(cfg.model, cfg.theta_true).inverse();
  CHECK(ml.psi_crb == doctest::Approx(0.3 * J(0, 0) + 0.7 * J(1, 1)).epsilon(1e-12));
}

TEST_CASE("U-V is Psi-unbiased while ML and MVU are not") {
  ExperimentConfig cfg;
  cfg.model = ModelSpec::uniform(2, 2);
  cfg.theta_true = vec({10, 10.2});
  cfg.rule = SelectionRule::sms();
  cfg.estimators = {"ml", "mvu", "uv"};
  cfg.replications = 50000;
  cfg.seed = 19;
  const McSummary s = run_experiment(cfg);
  const SummaryRow& uv = row_for(s, "uv");
  for (int m = 0; m < 2; ++m) CHECK(std::abs(uv.bias.indicator(m, m)) < 3 * uv.bias.indicator_se(m, m));
  CHECK(std::abs(row_for(s, "ml").bias_sel) > 3 * row_for(s, "ml").bias_sel_se);
  CHECK(std::abs(row_for(s, "mvu").bias_sel) > 3 * row_for(s, "mvu").bias_sel_se);
  CHECK(std::isnan(uv.psi_crb));
}

TEST_CASE("empirical psi bias on hand-built samples") {
  std::vector<BiasSample> samples;
  for (int i = 0; i < 64; ++i) samples.push_back({0, vec({1.0 + (i % 2), -1.0, 0.0})});
  for (int i = 0; i < 32; ++i) samples.push_back({1, vec({0.5, 2.0, 0.0})});
  const PsiBiasTable t = empirical_psi_bias(samples, 3);
  CHECK(t.total == 96);
  CHECK(t.counts == std::vector<long long>{64, 32, 0});
  CHECK(t.frequency[0] == doctest::Approx(2.0 / 3));
  CHECK(t.conditional(0, 0) == doctest::Approx(1.5));
  CHECK(t.conditional(1, 0) == doctest::Approx(-1.0));
  CHECK(t.conditional(1, 1) == doctest::Approx(2.0));
  CHECK(t.bin_empty(2));
  CHECK(std::isnan(t.conditional(0, 2)));
  CHECK(t.indicator(0, 2) == 0.0);
  for (int m = 0; m < 2; ++m)
    for (int j = 0; j < 2; ++j)
      CHECK(t.indicator(j, m) == doctest::Approx(t.frequency[m] * t.conditional(j, m)).epsilon(1e-14));
  CHECK_THROWS_AS(empirical_psi_bias({{0, vec({1.0, 2.0})}}, 3), Error);
}

TEST_CASE("batch standard errors cover the analytic bias") {
  const ExperimentConfig base = gaussian_config(5, 2000, 0);
  const Matrix want = analytic_conditional_bias(base.model, base.rule, base.theta_true);
  int covered = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    ExperimentConfig cfg = base;
    cfg.seed = seed;
    const McSummary s = run_experiment(cfg);
    const SummaryRow& r = s.rows.front();
    if (std::abs(r.bias.conditional(0, 0) - want(0, 0)) <= 3 * r.bias.conditional_se(0, 0)) ++covered;
  }
  CHECK(covered >= 95);
}

TEST_CASE("estimator failure rate above one percent aborts") {
  ExperimentConfig cfg;
  cfg.model = ModelSpec::exponential(2, 1);
  cfg.theta_true = vec({5, 5});
  cfg.rule = SelectionRule::sms();
  cfg.estimators = {"psml_mbp"};
  cfg.replications = 2000;
  try {
    run_experiment(cfg);
    FAIL("expected abort");
  } catch (const Error& err) {
    CHECK(err.code() == ErrorCode::EstimatorFailureRate);
    CHECK(std::string(err.what()).find("psml_mbp") != std::string::npos);
  }
}

TEST_CASE("experiment validation") {
  ExperimentConfig cfg = gaussian_config(2, 10, 1);
  cfg.replications = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = gaussian_config(2, 10, 1);
  cfg.sweep = {SweepAxis::N, 0, {5, 2}};
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg.sweep = {SweepAxis::N, 0, {}};
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = gaussian_config(2, 10, 1);
  cfg.estimators = {"mvu"};
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg.estimators = {"no_such_estimator"};
  CHECK_THROWS_AS(cfg.validate(), Error);
  CHECK_THROWS_AS(check_estimator_supported("psml", ModelSpec::uniform(2, 1), SelectionRule::sms()), Error);
}

TEST_CASE("preset names and overrides") {
  CHECK(preset_names().size() == 4);
  CHECK(canonical_preset("fig3") == "fig3_uniform");
  CHECK(canonical_preset("fig78_exponential") == "fig78_exponential");
  CHECK_THROWS_AS(canonical_preset("fig9"), Error);
  CHECK_THROWS_AS(preset_config("fig4"), Error);

  const ExperimentConfig fig56 = preset_config("fig56");
  CHECK(fig56.replications == 20000);
  CHECK(fig56.theta_true == vec({0.0, 0.1}));
  CHECK(fig56.model.noise_variances == std::vector<double>{1.0, 0.1});
  CHECK(preset_config("fig3").replications == 250000);
  CHECK(preset_config("fig78").replications == 100000);
  CHECK(preset_config("fig78").theta_true[0] == 5.0);

  PresetOverrides o;
  o.fast = true;
  o.seed = 99;
  o.workers = 2;
  const ExperimentConfig fast = preset_config("fig3", o);
  CHECK(fast.replications == 25000);
  CHECK(fast.seed == 99);
  CHECK(fast.workers == 2);
  o.replications = 500;
  CHECK(preset_config("fig3", o).replications == 50);
}

TEST_CASE("zeta surface covers the grid and behaves") {
  const auto result = run_preset("fig4");
  REQUIRE(std::holds_alternative<ZetaSurface>(result));
  const ZetaSurface& z = std::get<ZetaSurface>(result);
  CHECK(z.N == 10);
  CHECK(z.sigma2_sq == 1.0);
  double dmin = 1e9, dmax = -1e9, smin = 1e9, smax = -1e9;
  for (const auto& r : z.rows) {
    dmin = std::min(dmin, r.delta);
    dmax = std::max(dmax, r.delta);
    smin = std::min(smin, r.sigma1_sq);
    smax = std::max(smax, r.sigma1_sq);
    CHECK(r.zeta >= 1.0);
    CHECK(r.kappa == doctest::Approx(r.sigma1_sq / (r.sigma1_sq + 1.0)));
    if (r.delta == 5.0) CHECK(std::abs(r.zeta - 1.0) < 0.01);
  }
  CHECK(dmin == -5.0);
  CHECK(dmax == 5.0);
  CHECK(smin == doctest::Approx(0.1));
  CHECK(smax == doctest::Approx(10.0));
  for (std::size_t i = 1; i < z.rows.size(); ++i) {
    const auto& a = z.rows[i - 1];
    const auto& b = z.rows[i];
    if (a.sigma1_sq == b.sigma1_sq && b.delta <= 0.0) CHECK(a.zeta >= b.zeta);
  }
  for (const auto& a : z.rows)
    for (const auto& b : z.rows)
      if (a.delta == b.delta && a.sigma1_sq < b.sigma1_sq) CHECK(a.zeta <= b.zeta);
}

TEST_CASE("config json round trip") {
  for (const std::string name : {"fig3", "fig56", "fig78"}) {
    const ExperimentConfig cfg = preset_config(name);
    const ExperimentConfig back = parse_config(dump_config(cfg));
    CHECK(back == cfg);
    CHECK(dump_config(back) == dump_config(cfg));
  }
  ExperimentConfig cfg = gaussian_config(3, 10, 4);
  cfg.rule = SelectionRule::randomized({0.25, 0.75});
  cfg.ipsml.fd_step = 0.05;
  cfg.solver.initial_theta = vec({0.5, -0.5});
  CHECK(parse_config(dump_config(cfg)) == cfg);

  auto doc = config_to_json(preset_config("fig78"));
  CHECK(doc["sweep"]["component"] == 2);
  doc["surprise"] = 1;
  CHECK_THROWS_AS(config_from_json(doc), Error);
  CHECK_THROWS_AS(parse_config("{"), Error);
  CHECK_THROWS_AS(parse_config(R"({"model": {"family": "gaussian"}})"), Error);
  CHECK(parse_family("gaussian_linear") == Family::GaussianLinear);
  CHECK_THROWS_AS(parse_family("cauchy"), Error);
}
