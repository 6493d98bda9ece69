#include <doctest.h>

#include <cmath>

#include <Eigen/Eigenvalues>

#include "psel/errors.hpp"
#include "psel/estimators.hpp"
#include "psel/special.hpp"

using namespace psel;

namespace {

ObservationSet obs(std::vector<std::vector<double>> pops) {
  ObservationSet x;
  x.populations = std::move(pops);
  return x;
}

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double d : v) out[i++] = d;
  return out;
}

double inf_dist(const Vector& a, const Vector& b) { return (a - b).lpNorm<Eigen::Infinity>(); }

struct Problem {
  ModelSpec model;
  Vector ml;
  int m;
};

// Gaussian pairs with standardized selection margin at least one.
Problem gaussian_problem(Rng& rng) {
  for (;;) {
    const double s1 = 0.1 + 2 * rng.uniform_open(), s2 = 0.1 + 2 * rng.uniform_open();
    const int N = 1 + static_cast<int>(rng() % 20);
    const ModelSpec model = ModelSpec::gaussian({s1, s2}, N);
    const Vector ml = vec({-3 + 6 * rng.uniform_open(), -3 + 6 * rng.uniform_open()});
    const int m = select_from_ml(SelectionRule::sms(), ml);
    if (std::abs(ml[0] - ml[1]) / std::sqrt(model.pair_variance()) >= 1.0) return {model, ml, m};
  }
}

// ‖J⁻¹ g gᵀ‖ < 1 at the root and the exact maximization-by-parts map contracts there.
bool information_dominance(const ModelSpec& model, const Vector& ml, const Vector& theta, int m) {
  const Vector g = grad_log_selection_probability(SelectionRule::sms(), model, theta, m);
  const Matrix Hpr = *analytic_hessian_log_selection_probability(SelectionRule::sms(), model, theta, m);
  const Matrix Hobs = -reduced_hessian(model, ml, theta);
  return g.dot(fim(model, theta).inverse() * g) < 1.0 &&
         (Hobs.inverse() * Hpr).eigenvalues().cwiseAbs().maxCoeff() < 1.0;
}

// Exponential pairs with an interior closed-form root where information dominance holds.
Problem exponential_problem(Rng& rng) {
  for (;;) {
    const int N = 2 + static_cast<int>(rng() % 10);
    const ModelSpec model = ModelSpec::exponential(2, N);
    const Vector ml = vec({0.5 + 5 * rng.uniform_open(), 0.5 + 5 * rng.uniform_open()});
    const int m = select_from_ml(SelectionRule::sms(), ml);
    if (ml[m] / ml[1 - m] < 1.5) continue;
    try {
      const EstimateResult root = psml_exponential_closed_ml(model, ml, m);
      if (root.converged && information_dominance(model, ml, root.theta_hat, m)) return {model, ml, m};
    } catch (const Error&) {
    }
  }
}

// Gaussian PSML equations written out by hand.
Vector gaussian_psml_residual(const ModelSpec& model, const Vector& ml, int m, const Vector& theta) {
  const int k = 1 - m;
  const double sigma = std::sqrt(model.pair_variance());
  const double lambda = inverse_mills((theta[m] - theta[k]) / sigma);
  Vector r(2);
  r[m] = theta[m] - (ml[m] - model.mean_variance(m) * lambda / sigma);
  r[k] = theta[k] - (ml[k] + model.mean_variance(k) * lambda / sigma);
  return r;
}

}  // namespace

TEST_CASE("psml score reduces to the score for randomized rules") {
  const ModelSpec g = ModelSpec::gaussian({1, 0.1}, 3);
  const ObservationSet x = obs({{0.3, -0.2, 1.1}, {0.5, 0.4, 0.2}});
  const Vector theta = vec({0.2, -0.1});
  const Vector s = psml_score(g, SelectionRule::randomized({0.5, 0.5}), x, theta, 1);
  CHECK(inf_dist(s, score(g, x, theta)) == 0.0);
  CHECK_THROWS_AS(psml_score(g, SelectionRule::randomized({0.5, 0.5}), x, theta), Error);
}

TEST_CASE("gaussian psml score matches the hand-written gradient") {
  Rng rng(1);
  for (int i = 0; i < 10; ++i) {
    const double s1 = 0.2 + rng.uniform_open(), s2 = 0.2 + rng.uniform_open();
    const int N = 1 + static_cast<int>(rng() % 5);
    const ModelSpec g = ModelSpec::gaussian({s1, s2}, N);
    const ObservationSet x = sample(g, vec({0, 0.3}), rng);
    const Vector theta = vec({-1 + 2 * rng.uniform_open(), -1 + 2 * rng.uniform_open()});
    const Vector ml = ml_estimate(g, x);
    const int m = select(SelectionRule::sms(), g, x);
    const int k = 1 - m;
    const double sigma = std::sqrt((s1 + s2) / N);
    const double lambda = inverse_mills((theta[m] - theta[k]) / sigma);
    Vector want(2);
    want[m] = N / (m == 0 ? s1 : s2) * (ml[m] - theta[m]) - lambda / sigma;
    want[k] = N / (k == 0 ? s1 : s2) * (ml[k] - theta[k]) + lambda / sigma;
    CHECK(inf_dist(psml_score(g, SelectionRule::sms(), x, theta), want) <= 1e-10 * (1 + want.norm()));
  }
}

TEST_CASE("exponential N=1 examples") {
  const ModelSpec e = ModelSpec::exponential(2, 1);
  const ObservationSet x = obs({{3}, {1}});
  const EstimateResult closed = psml_exponential_closed(e, x);
  CHECK(closed.theta_hat[0] == doctest::Approx(2.0));
  CHECK(closed.theta_hat[1] == doctest::Approx(2.0));
  CHECK(closed.converged);
  CHECK(closed.selected_m == 0);

  const GridBounds box = default_grid_bounds(e, ml_estimate(e, x));
  const EstimateResult grid = psml_grid_search(e, SelectionRule::sms(), x, box, 201);
  CHECK(inf_dist(grid.theta_hat, vec({2, 2})) < 1e-6);
  CHECK(psml_objective_ml(e, SelectionRule::sms(), vec({3, 1}), 0, grid.theta_hat) >=
        psml_objective_ml(e, SelectionRule::sms(), vec({3, 1}), 0, vec({3, 1})));

  try {
    psml_exponential_closed(e, obs({{2}, {1}}));
    FAIL("degenerate input must throw");
  } catch (const Error& err) {
    CHECK(err.code() == ErrorCode::Degenerate);
  }
  const EstimateResult negative = psml_exponential_closed(e, obs({{1.5}, {1}}));
  CHECK_FALSE(negative.converged);
  CHECK(negative.theta_hat[0] == doctest::Approx(0.5));
}

TEST_CASE("exponential N=1 psml selected component equals U-V") {
  const ModelSpec e = ModelSpec::exponential(2, 1);
  for (int i = 0; i < 10000; ++i) {
    Rng rng = Rng::stream(2, {static_cast<std::uint64_t>(i)});
    const ObservationSet x = sample(e, vec({5, 3}), rng);
    const Vector ml = ml_estimate(e, x);
    const int m = select_from_ml(SelectionRule::sms(), ml);
    if (std::abs(ml[m] - 2 * ml[1 - m]) < 1e-12) continue;
    const EstimateResult r = psml_exponential_closed(e, x);
    CHECK(r.theta_hat[m] == doctest::Approx(uv_estimate(e, x)[m]).epsilon(1e-12));
  }
}

TEST_CASE("U-V examples") {
  CHECK(uv_estimate(ModelSpec::uniform(2, 1), obs({{3}, {1}}))[0] == doctest::Approx(5.0));
  CHECK(uv_estimate(ModelSpec::exponential(2, 1), obs({{3}, {1}}))[0] == doctest::Approx(2.0));
  CHECK_THROWS_AS(uv_estimate(ModelSpec::gaussian({1, 1}, 1), obs({{3}, {1}})), Error);
}

TEST_CASE("U-V is Psi-unbiased") {
  const int n = 250000;
  for (bool uniform : {true, false}) {
    const ModelSpec model = uniform ? ModelSpec::uniform(2, 3) : ModelSpec::exponential(2, 1);
    const Vector theta = uniform ? vec({10, 10.2}) : vec({5, 4});
    double s = 0, ss = 0;
    for (int i = 0; i < n; ++i) {
      Rng rng = Rng::stream(3, {static_cast<std::uint64_t>(i)});
      const ObservationSet x = sample(model, theta, rng);
      const int m = select(SelectionRule::sms(), model, x);
      const double err = uv_estimate(model, x)[m] - theta[m];
      s += err;
      ss += err * err;
    }
    const double mean = s / n;
    CHECK(std::abs(mean) < 3 * std::sqrt((ss / n - mean * mean) / n));
  }
}

TEST_CASE("newton raphson on the gaussian config") {
  const ModelSpec g = ModelSpec::gaussian({1, 0.1}, 10);
  Rng rng(4);
  for (int i = 0; i < 20; ++i) {
    const ObservationSet x = sample(g, vec({0, 0.1}), rng);
    const Vector ml = ml_estimate(g, x);
    const int m = select(SelectionRule::sms(), g, x);
    if (std::abs(ml[0] - ml[1]) / std::sqrt(g.pair_variance()) < 1.0) continue;
    const EstimateResult nr = psml_newton_raphson(g, SelectionRule::sms(), x);
    CHECK(nr.converged);
    CHECK(nr.iterations <= 20);
    CHECK(nr.final_score_norm <= 1e-10);
    CHECK(inf_dist(gaussian_psml_residual(g, ml, m, nr.theta_hat), Vector::Zero(2)) <= 1e-8);
  }
}

TEST_CASE("randomized rule solvers return ML") {
  const ModelSpec g = ModelSpec::gaussian({1, 0.1}, 4);
  const SelectionRule flip = SelectionRule::randomized({0.5, 0.5});
  Rng rng(5);
  const ObservationSet x = sample(g, vec({0, 1}), rng);
  const Vector ml = ml_estimate(g, x);
  for (const EstimateResult& r :
       {psml_newton_raphson(g, flip, x, {}, 0), psml_fisher_scoring(g, flip, x, {}, 0), psml_mbp(g, flip, x, {}, MbpVariant::Exact, 0)}) {
    CHECK(r.iterations <= 1);
    CHECK(inf_dist(r.theta_hat, ml) <= 1e-12);
  }
  const EstimateResult grid = psml_grid_search(g, flip, x, default_grid_bounds(g, ml), 101, {}, 1);
  CHECK(inf_dist(grid.theta_hat, ml) <= 1e-8);
  IpsmlConfig mc;
  mc.K = 20000;
  mc.seed = 2;
  const EstimateResult ip = ipsml(g, flip, x, {}, mc, 0);
  REQUIRE(ip.theta_standard_error.has_value());
  for (int l = 0; l < 2; ++l) CHECK(std::abs(ip.theta_hat[l] - ml[l]) <= 3 * (*ip.theta_standard_error)[l] + 1e-12);
}

TEST_CASE("gaussian newton raphson and fisher scoring iterates coincide") {
  Rng rng(6);
  for (int i = 0; i < 30; ++i) {
    const Problem p = gaussian_problem(rng);
    for (int iters = 1; iters <= 6; ++iters) {
      SolverConfig cfg;
      cfg.max_iterations = iters;
      const EstimateResult nr = psml_newton_raphson_ml(p.model, SelectionRule::sms(), p.ml, p.m, cfg);
      const EstimateResult fs = psml_fisher_scoring_ml(p.model, SelectionRule::sms(), p.ml, p.m, cfg);
      CHECK(inf_dist(nr.theta_hat, fs.theta_hat) <= 1e-12 * (1 + nr.theta_hat.norm()));
    }
  }
}

TEST_CASE("gaussian MBP first iteration") {
  Rng rng(7);
  for (int i = 0; i < 20; ++i) {
    const Problem p = gaussian_problem(rng);
    SolverConfig cfg;
    cfg.max_iterations = 1;
    const EstimateResult r = psml_mbp_ml(p.model, SelectionRule::sms(), p.ml, p.m, cfg);
    const int k = 1 - p.m;
    const double sigma = std::sqrt(p.model.pair_variance());
    const double lambda = inverse_mills((p.ml[p.m] - p.ml[k]) / sigma);
    Vector want(2);
    want[p.m] = p.ml[p.m] - p.model.mean_variance(p.m) * lambda / sigma;
    want[k] = p.ml[k] + p.model.mean_variance(k) * lambda / sigma;
    CHECK(inf_dist(r.theta_hat, want) <= 1e-12 * (1 + want.norm()));
  }
}

TEST_CASE("solvers agree across gaussian and exponential fixtures") {
  Rng rng(8);
  for (int i = 0; i < 40; ++i) {
    const bool gaussian = i % 2 == 0;
    const Problem p = gaussian ? gaussian_problem(rng) : exponential_problem(rng);
    CAPTURE(i);
    CAPTURE(p.ml.transpose());
    const SelectionRule sms = SelectionRule::sms();
    const EstimateResult nr = psml_newton_raphson_ml(p.model, sms, p.ml, p.m);
    const EstimateResult fs = psml_fisher_scoring_ml(p.model, sms, p.ml, p.m);
    SolverConfig long_run;
    long_run.max_iterations = 5000;
    const EstimateResult mbp = psml_mbp_ml(p.model, sms, p.ml, p.m, long_run);
    const EstimateResult grid = psml_grid_search_ml(p.model, sms, p.ml, p.m, default_grid_bounds(p.model, p.ml), 201);
    REQUIRE(nr.converged);
    for (const EstimateResult* r : {&fs, &mbp, &grid}) CHECK(inf_dist(r->theta_hat, nr.theta_hat) <= 1e-6);
    if (!gaussian) {
      const EstimateResult closed = psml_exponential_closed_ml(p.model, p.ml, p.m);
      CHECK(inf_dist(closed.theta_hat, nr.theta_hat) <= 1e-6);
      CHECK(inf_dist(psml_score_ml(p.model, sms, p.ml, p.m, closed.theta_hat), Vector::Zero(2)) <= 1e-8);
    }
    for (const EstimateResult* r : {&nr, &fs, &mbp, &grid}) {
      if (r->converged) CHECK(r->final_score_norm <= 1e-10);
    }
    CHECK(inf_dist(psml_score_ml(p.model, sms, p.ml, p.m, grid.theta_hat), Vector::Zero(2)) <= 1e-8);
    CHECK(mbp.converged);
    CHECK(inf_dist(psml_score_ml(p.model, sms, p.ml, p.m, mbp.theta_hat), Vector::Zero(2)) <= 1e-6);
  }
}

TEST_CASE("MBP relaxed variants reach the same fixed point") {
  Rng rng(9);
  for (int i = 0; i < 10; ++i) {
    const Problem p = gaussian_problem(rng);
    SolverConfig cfg;
    cfg.max_iterations = 5000;
    const EstimateResult exact = psml_mbp_ml(p.model, SelectionRule::sms(), p.ml, p.m, cfg, MbpVariant::Exact);
    const EstimateResult newton = psml_mbp_ml(p.model, SelectionRule::sms(), p.ml, p.m, cfg, MbpVariant::NewtonRelaxed);
    const EstimateResult fisher = psml_mbp_ml(p.model, SelectionRule::sms(), p.ml, p.m, cfg, MbpVariant::FisherRelaxed);
    CHECK(exact.converged);
    CHECK(inf_dist(newton.theta_hat, exact.theta_hat) <= 1e-6);
    CHECK(inf_dist(fisher.theta_hat, exact.theta_hat) <= 1e-6);
  }
}

TEST_CASE("solver config validation") {
  SolverConfig bad;
  bad.max_iterations = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = {};
  bad.score_tolerance = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = {};
  bad.step_damping = 1.5;
  CHECK_THROWS_AS(bad.validate(), Error);
  CHECK_THROWS_AS(psml_newton_raphson(ModelSpec::uniform(2, 1), SelectionRule::sms(), obs({{1}, {2}})), Error);
}

TEST_CASE("gaussian psml moves toward ML as the noise shrinks") {
  const ObservationSet x = obs({{0.9}, {0.2}});
  double prev = std::numeric_limits<double>::infinity();
  for (double s : {1000.0, 100.0, 10.0, 1.0}) {
    const ModelSpec g = ModelSpec::gaussian({s, s}, 1);
    const EstimateResult r = psml_newton_raphson(g, SelectionRule::sms(), x);
    REQUIRE(r.converged);
    const double d = inf_dist(r.theta_hat, ml_estimate(g, x));
    CHECK(d < prev);
    prev = d;
  }
}

TEST_CASE("ipsml agrees with the analytic-gradient PSML") {
  const ModelSpec g = ModelSpec::gaussian({1, 0.1}, 10);
  const ObservationSet x = obs({std::vector<double>(10, 0.8), std::vector<double>(10, 0.1)});
  const EstimateResult fs = psml_fisher_scoring(g, SelectionRule::sms(), x);
  IpsmlConfig mc;
  mc.K = 200000;
  mc.fd_step = 0.05;
  mc.seed = 11;
  const EstimateResult ip = ipsml(g, SelectionRule::sms(), x, {}, mc);
  REQUIRE(ip.theta_standard_error.has_value());
  for (int l = 0; l < 2; ++l) {
    CAPTURE(l);
    CHECK(std::abs(ip.theta_hat[l] - fs.theta_hat[l]) < 3 * (*ip.theta_standard_error)[l]);
  }
  const EstimateResult again = ipsml(g, SelectionRule::sms(), x, {}, mc);
  CHECK(again.theta_hat == ip.theta_hat);
}
