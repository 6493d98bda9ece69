#include <doctest.h>

#include <cmath>
#include <numbers>

#include "psel/errors.hpp"
#include "psel/model.hpp"
#include "psel/rng.hpp"

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

// Random regular model with a valid θ and one sampled data set.
struct Fixture {
  ModelSpec model;
  Vector theta;
  ObservationSet x;
};

Fixture random_fixture(Rng& rng, bool gaussian) {
  const int M = 2 + static_cast<int>(rng() % 2);
  const int N = 1 + static_cast<int>(rng() % 6);
  Fixture f;
  if (gaussian) {
    std::vector<double> vars(M);
    for (auto& v : vars) v = 0.1 + 3.0 * rng.uniform_open();
    f.model = ModelSpec::gaussian(vars, N);
    f.theta = Vector(M);
    for (int m = 0; m < M; ++m) f.theta[m] = -3.0 + 6.0 * rng.uniform_open();
  } else {
    f.model = ModelSpec::exponential(M, N);
    f.theta = Vector(M);
    for (int m = 0; m < M; ++m) f.theta[m] = 0.5 + 5.0 * rng.uniform_open();
  }
  f.x = sample(f.model, f.theta, rng);
  return f;
}

}  // namespace

TEST_CASE("log likelihood examples") {
  CHECK(log_likelihood(ModelSpec::exponential(2, 1), obs({{1}, {1}}), vec({1, 1})) == doctest::Approx(-2.0));
  CHECK(log_likelihood(ModelSpec::gaussian({1, 1}, 1), obs({{0}, {0}}), vec({0, 0})) ==
        doctest::Approx(-std::log(2 * std::numbers::pi)));
  CHECK(log_likelihood(ModelSpec::uniform(2, 2), obs({{1, 3}, {1, 1}}), vec({2, 2})) ==
        -std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS(log_likelihood(ModelSpec::exponential(2, 1), obs({{1}}), vec({1, 1})), Error);
}

TEST_CASE("score examples") {
  const Vector g = score(ModelSpec::gaussian({1, 1}, 1), obs({{1}, {0}}), vec({0, 0}));
  CHECK(g[0] == doctest::Approx(1.0));
  CHECK(g[1] == doctest::Approx(0.0));
  const Vector e = score(ModelSpec::exponential(2, 1), obs({{2}, {1}}), vec({1, 1}));
  CHECK(e[0] == doctest::Approx(1.0));
  CHECK(e[1] == doctest::Approx(0.0));
  try {
    score(ModelSpec::uniform(2, 1), obs({{1}, {1}}), vec({2, 2}));
    FAIL("uniform score must throw");
  } catch (const Error& err) {
    CHECK(err.code() == ErrorCode::NonRegularFamily);
    CHECK(std::string(err.what()).find("non-regular family") != std::string::npos);
  }
}

TEST_CASE("hessian and fim examples") {
  const ModelSpec g = ModelSpec::gaussian({1, 0.1}, 10);
  Rng rng(3);
  const ObservationSet x = sample(g, vec({0, 0.1}), rng);
  const Matrix H = hessian(g, x, vec({0, 0.1}));
  CHECK(H(0, 0) == doctest::Approx(-10.0));
  CHECK(H(1, 1) == doctest::Approx(-100.0));
  CHECK(H(0, 1) == 0.0);
  const Matrix F = fim(g, vec({0, 0.1}));
  CHECK(F(0, 0) == doctest::Approx(10.0));
  CHECK(F(1, 1) == doctest::Approx(100.0));

  const Matrix He = hessian(ModelSpec::exponential(2, 1), obs({{1}, {1}}), vec({1, 1}));
  CHECK(He(0, 0) == doctest::Approx(-1.0));
  const Matrix Fe = fim(ModelSpec::exponential(2, 1), vec({5, 5}));
  CHECK(Fe(0, 0) == doctest::Approx(1.0 / 25));
  CHECK(Fe(1, 1) == doctest::Approx(1.0 / 25));
  CHECK_THROWS_AS(fim(ModelSpec::uniform(2, 1), vec({1, 1})), Error);
}

TEST_CASE("ml and mvu examples") {
  CHECK(ml_estimate(ModelSpec::uniform(2, 3), obs({{1, 3, 2}, {1, 1, 1}}))[0] == 3.0);
  CHECK(ml_estimate(ModelSpec::gaussian({1, 1}, 2), obs({{1, 3}, {0, 0}}))[0] == 2.0);
  CHECK(ml_estimate(ModelSpec::exponential(2, 2), obs({{4, 6}, {1, 1}}))[0] == 5.0);
  CHECK(mvu_estimate_uniform(ModelSpec::uniform(2, 3), obs({{1, 3, 2}, {1, 1, 1}}))[0] == doctest::Approx(4.0));
  CHECK(mvu_estimate_uniform(ModelSpec::uniform(2, 1), obs({{2.5}, {1}}))[0] == doctest::Approx(5.0));
  CHECK_THROWS_AS(mvu_estimate_uniform(ModelSpec::exponential(2, 1), obs({{1}, {1}})), Error);
}

TEST_CASE("model validation") {
  CHECK_THROWS_AS(ModelSpec::gaussian({1}, 1), Error);
  CHECK_THROWS_AS(ModelSpec::gaussian({1, -1}, 1), Error);
  CHECK_THROWS_AS(ModelSpec::exponential(2, 0), Error);
  CHECK_THROWS_AS(validate_theta(ModelSpec::exponential(2, 1), vec({1, -1})), Error);
  CHECK_THROWS_AS(validate_theta(ModelSpec::exponential(2, 1), vec({1, 1, 1})), Error);
  CHECK(ModelSpec::gaussian({1, 0.1}, 10).pair_variance() == doctest::Approx(0.11));
}

TEST_CASE("sampling respects support and is deterministic") {
  Rng a(9), b(9);
  const ModelSpec u = ModelSpec::uniform(2, 50);
  const ObservationSet xa = sample(u, vec({10, 10}), a);
  const ObservationSet xb = sample(u, vec({10, 10}), b);
  CHECK(xa.populations == xb.populations);
  for (const auto& pop : xa.populations)
    for (double y : pop) {
      CHECK(y > 0.0);
      CHECK(y <= 10.0);
    }
}

TEST_CASE("exponential sample mean over 1e6 draws") {
  Rng rng(21);
  const ModelSpec e = ModelSpec::exponential(2, 500000);
  const ObservationSet x = sample(e, vec({5, 5}), rng);
  const Vector mean = ml_estimate(e, x);
  const double se = 5.0 / std::sqrt(1e6);
  CHECK(std::abs(0.5 * (mean[0] + mean[1]) - 5.0) < 3 * se);
}

TEST_CASE("mvu is unconditionally unbiased") {
  const ModelSpec u = ModelSpec::uniform(2, 3);
  const int n = 100000;
  double s = 0, ss = 0;
  for (int i = 0; i < n; ++i) {
    Rng rng = Rng::stream(4, {static_cast<std::uint64_t>(i)});
    const double v = mvu_estimate_uniform(u, sample(u, vec({10, 10.2}), rng))[0];
    s += v;
    ss += v * v;
  }
  const double mean = s / n;
  const double se = std::sqrt((ss / n - mean * mean) / n);
  CHECK(std::abs(mean - 10.0) < 3 * se);
}

TEST_CASE("score and hessian agree with finite differences") {
  Rng rng(31);
  for (int i = 0; i < 20; ++i) {
    const Fixture f = random_fixture(rng, i % 2 == 0);
    const int M = f.model.M;
    const Vector g = score(f.model, f.x, f.theta);
    const Matrix H = hessian(f.model, f.x, f.theta);
    for (int l = 0; l < M; ++l) {
      const double h = 1e-5 * (1.0 + std::abs(f.theta[l]));
      Vector up = f.theta, dn = f.theta;
      up[l] += h;
      dn[l] -= h;
      const double fd = (log_likelihood(f.model, f.x, up) - log_likelihood(f.model, f.x, dn)) / (2 * h);
      CHECK(std::abs(fd - g[l]) <= 1e-6 * (1.0 + std::abs(g[l])));
      const Vector dg = (score(f.model, f.x, up) - score(f.model, f.x, dn)) / (2 * h);
      for (int j = 0; j < M; ++j) CHECK(std::abs(dg[j] - H(j, l)) <= 1e-6 * (1.0 + std::abs(H(j, l))));
    }
    CHECK((H - H.transpose()).norm() == 0.0);
  }
}

TEST_CASE("score vanishes at the ML estimate") {
  Rng rng(32);
  for (int i = 0; i < 20; ++i) {
    const Fixture f = random_fixture(rng, i % 2 == 1);
    const Vector ml = ml_estimate(f.model, f.x);
    CHECK(score(f.model, f.x, ml).lpNorm<Eigen::Infinity>() <= 1e-10);
  }
}

TEST_CASE("fim equals minus the expected hessian") {
  const ModelSpec e = ModelSpec::exponential(2, 3);
  const Vector theta = vec({2, 4});
  const int n = 100000;
  Vector s = Vector::Zero(2), ss = Vector::Zero(2);
  for (int i = 0; i < n; ++i) {
    Rng rng = Rng::stream(5, {static_cast<std::uint64_t>(i)});
    const Matrix H = hessian(e, sample(e, theta, rng), theta);
    for (int m = 0; m < 2; ++m) {
      s[m] += -H(m, m);
      ss[m] += H(m, m) * H(m, m);
    }
  }
  const Matrix F = fim(e, theta);
  for (int m = 0; m < 2; ++m) {
    const double mean = s[m] / n;
    const double se = std::sqrt((ss[m] / n - mean * mean) / n);
    CHECK(std::abs(mean - F(m, m)) < 3 * se);
  }
  const ModelSpec g = ModelSpec::gaussian({1, 0.1}, 10);
  Rng rng(6);
  CHECK((fim(g, vec({0, 1})) + hessian(g, sample(g, vec({0, 1}), rng), vec({0, 1}))).norm() == 0.0);
}

TEST_CASE("reduced likelihood calculus matches the full data forms") {
  Rng rng(33);
  for (int i = 0; i < 10; ++i) {
    const Fixture f = random_fixture(rng, i % 2 == 0);
    const Vector ml = ml_estimate(f.model, f.x);
    const Vector t2 = f.theta * 1.1 + Vector::Constant(f.model.M, 0.05);
    const double diff_full = log_likelihood(f.model, f.x, f.theta) - log_likelihood(f.model, f.x, t2);
    const double diff_red = reduced_log_likelihood(f.model, ml, f.theta) - reduced_log_likelihood(f.model, ml, t2);
    CHECK(diff_red == doctest::Approx(diff_full).epsilon(1e-10));
    CHECK((reduced_score(f.model, ml, f.theta) - score(f.model, f.x, f.theta)).norm() <= 1e-9);
    CHECK((reduced_hessian(f.model, ml, f.theta) - hessian(f.model, f.x, f.theta)).norm() <= 1e-9);
  }
}

TEST_CASE("sample_ml follows the ML sampling distribution") {
  // Exponential N=3: mean θ, variance θ²/N. Uniform N=2: mean 2θ/3.
  const ModelSpec e = ModelSpec::exponential(2, 3);
  const ModelSpec u = ModelSpec::uniform(2, 2);
  const int n = 200000;
  double se_sum = 0, se_sq = 0, su = 0;
  for (int i = 0; i < n; ++i) {
    const Vector a = sample_ml(e, vec({4, 1}), derive_seed(8, {static_cast<std::uint64_t>(i)}));
    se_sum += a[0];
    se_sq += a[0] * a[0];
    su += sample_ml(u, vec({3, 1}), derive_seed(9, {static_cast<std::uint64_t>(i)}))[0];
  }
  const double mean = se_sum / n;
  CHECK(std::abs(mean - 4.0) < 3 * std::sqrt(16.0 / 3 / n));
  CHECK(std::abs(se_sq / n - mean * mean - 16.0 / 3) < 0.1);
  CHECK(std::abs(su / n - 2.0) < 3 * std::sqrt(0.5 / n));
}
