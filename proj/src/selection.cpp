#include "psel/selection.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <numeric>

#include "psel/batching.hpp"
#include "psel/errors.hpp"
#include "psel/special.hpp"

namespace psel {

namespace {

void check_index(const ModelSpec& model, int m) {
  if (m < 0 || m >= model.M) fail(ErrorCode::InvalidArgument, "selected index out of range");
}

bool two_population_sms(const SelectionRule& rule, const ModelSpec& model) {
  return rule.kind == RuleKind::SMS && model.M == 2 && model.family != Family::Uniform;
}

double log_sum_exp(const std::vector<double>& terms) {
  if (terms.empty()) return -std::numeric_limits<double>::infinity();
  double top = terms.front();
  for (double t : terms) top = std::max(top, t);
  double s = 0.0;
  for (double t : terms) s += std::exp(t - top);
  return top + std::log(s);
}

// log Σ_{j=0}^{N−1} C(N+j−1, j) q^N (1−q)^j
double log_negative_binomial_cdf(int N, double q) {
  std::vector<double> terms;
  terms.reserve(N);
  const double lq = std::log(q);
  const double lp = std::log1p(-q);
  for (int j = 0; j < N; ++j) terms.push_back(log_binomial(N + j - 1.0, j) + N * lq + j * lp);
  return log_sum_exp(terms);
}

int draw_selection(const SelectionRule& rule, const ModelSpec& model, const Vector& theta, std::uint64_t key) {
  const Vector ml = sample_ml(model, theta, key);
  if (rule.kind == RuleKind::SMS) return select_from_ml(rule, ml);
  Rng rng(derive_seed(key, {stream_tag::select}));
  return select_from_ml(rule, ml, &rng);
}

}  // namespace

SelectionRule SelectionRule::sms() { return {}; }

SelectionRule SelectionRule::randomized(std::vector<double> weights) {
  SelectionRule rule;
  rule.kind = RuleKind::Randomized;
  rule.weights = std::move(weights);
  return rule;
}

void SelectionRule::validate(int M) const {
  if (kind == RuleKind::SMS) {
    if (!weights.empty()) fail(ErrorCode::InvalidArgument, "SMS rule takes no weights");
    return;
  }
  if (static_cast<int>(weights.size()) != M) fail(ErrorCode::DimensionMismatch, "one weight per population required");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) fail(ErrorCode::InvalidArgument, "weights must be nonnegative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) fail(ErrorCode::InvalidArgument, "weights must sum to 1");
}

int select_from_ml(const SelectionRule& rule, const Vector& ml_hat, Rng* rng) {
  if (rule.kind == RuleKind::SMS) {
    int best = 0;
    for (int m = 1; m < ml_hat.size(); ++m)
      if (ml_hat[m] > ml_hat[best]) best = m;
    return best;
  }
  if (rng == nullptr) fail(ErrorCode::InvalidArgument, "randomized rule needs a random number generator");
  const double u = rng->uniform_open();
  double cumulative = 0.0;
  int last = 0;
  for (int m = 0; m < static_cast<int>(rule.weights.size()); ++m) {
    if (rule.weights[m] <= 0.0) continue;
    cumulative += rule.weights[m];
    last = m;
    if (u < cumulative) return m;
  }
  return last;
}

int select(const SelectionRule& rule, const ModelSpec& model, const ObservationSet& x, Rng* rng) {
  rule.validate(model.M);
  return select_from_ml(rule, ml_estimate(model, x), rng);
}

GaussianSmsContext gaussian_sms_context(const ModelSpec& model, const Vector& theta, int m) {
  check_index(model, m);
  const double sigma2 = model.pair_variance();
  const int k = 1 - m;
  return {(theta[m] - theta[k]) / std::sqrt(sigma2), sigma2};
}

ExponentialSmsContext exponential_sms_context(const ModelSpec& model, const Vector& theta, int m) {
  if (model.family != Family::Exponential || model.M != 2) {
    fail(ErrorCode::InvalidArgument, "exponential context needs the two-population exponential model");
  }
  check_index(model, m);
  validate_theta(model, theta);
  const int k = 1 - m;
  const int N = model.N;
  const double q = theta[m] / (theta[m] + theta[k]);
  const double log_p = log_negative_binomial_cdf(N, q);
  const double lq = std::log(q);
  const double lp = std::log1p(-q);
  std::vector<double> terms;
  for (int j = 0; j + 2 <= N; ++j) terms.push_back(log_binomial(N + j, j) + N * lq + j * lp);
  const double h = terms.empty() ? 0.0 : std::exp(log_sum_exp(terms) - log_p);
  const double alpha = std::exp(log_binomial(2.0 * N - 1.0, N) + N * lq + N * lp - log_p);
  const double f = (1.0 - q) * (q * h - 1.0);
  return {q, alpha, f, h};
}

bool has_analytic_selection(const SelectionRule& rule, const ModelSpec& model) {
  return rule.kind == RuleKind::Randomized || two_population_sms(rule, model);
}

double log_selection_probability(const SelectionRule& rule, const ModelSpec& model, const Vector& theta, int m) {
  rule.validate(model.M);
  check_index(model, m);
  if (rule.kind == RuleKind::Randomized) return std::log(rule.weights[m]);
  if (!two_population_sms(rule, model)) {
    fail(ErrorCode::UnsupportedAnalytic, "no closed-form selection probability for this model");
  }
  validate_theta(model, theta);
  if (model.family == Family::GaussianLinear) return log_normal_cdf(gaussian_sms_context(model, theta, m).delta);
  const int k = 1 - m;
  return log_negative_binomial_cdf(model.N, theta[m] / (theta[m] + theta[k]));
}

ProbabilityEstimate selection_probability(const SelectionRule& rule, const ModelSpec& model, const Vector& theta,
                                          int m, const McOptions& opts) {
  rule.validate(model.M);
  check_index(model, m);
  validate_theta(model, theta);
  if (has_analytic_selection(rule, model)) {
    if (rule.kind == RuleKind::Randomized) return {rule.weights[m], 0.0, 0};
    if (model.family == Family::GaussianLinear) {
      return {normal_cdf(gaussian_sms_context(model, theta, m).delta), 0.0, 0};
    }
    return {std::exp(log_selection_probability(rule, model, theta, m)), 0.0, 0};
  }
  if (opts.replications < 1) fail(ErrorCode::InvalidArgument, "replications must be positive");
  const auto counts = run_batches<long long>(opts.replications, opts.workers, [&](const BatchRange& r) {
    long long hits = 0;
    for (long long i = r.begin; i < r.end; ++i) {
      const auto key = derive_seed(opts.seed, {stream_tag::selection_probability, static_cast<std::uint64_t>(i)});
      if (draw_selection(rule, model, theta, key) == m) ++hits;
    }
    return hits;
  });
  const long long hits = std::accumulate(counts.begin(), counts.end(), 0LL);
  const double K = static_cast<double>(opts.replications);
  const double p = hits / K;
  return {p, std::sqrt(p * (1.0 - p) / K), opts.replications};
}

Vector grad_log_selection_probability(const SelectionRule& rule, const ModelSpec& model, const Vector& theta, int m) {
  rule.validate(model.M);
  check_index(model, m);
  validate_theta(model, theta);
  if (rule.kind == RuleKind::Randomized) return Vector::Zero(model.M);
  if (!two_population_sms(rule, model)) {
    fail(ErrorCode::UnsupportedAnalytic, "no closed-form selection gradient; use the simulated gradient");
  }
  const int k = 1 - m;
  Vector g = Vector::Zero(2);
  if (model.family == Family::GaussianLinear) {
    const auto ctx = gaussian_sms_context(model, theta, m);
    const double slope = inverse_mills(ctx.delta) / std::sqrt(ctx.sigma2);
    g[m] = slope;
    g[k] = -slope;
    return g;
  }
  const auto ctx = exponential_sms_context(model, theta, m);
  g[m] = -model.N * ctx.f / theta[m];
  g[k] = model.N * ctx.f / theta[k];
  return g;
}

std::optional<Matrix> analytic_hessian_log_selection_probability(const SelectionRule& rule, const ModelSpec& model,
                                                                 const Vector& theta, int m) {
  rule.validate(model.M);
  check_index(model, m);
  validate_theta(model, theta);
  if (rule.kind == RuleKind::Randomized) return Matrix::Zero(model.M, model.M);
  if (!two_population_sms(rule, model)) return std::nullopt;
  const int k = 1 - m;
  Matrix H(2, 2);
  if (model.family == Family::GaussianLinear) {
    const auto ctx = gaussian_sms_context(model, theta, m);
    const double c = c_factor(ctx.delta) / ctx.sigma2;
    H << c, -c, -c, c;
    return H;
  }
  const auto ctx = exponential_sms_context(model, theta, m);
  const double n = model.N;
  const double a = ctx.alpha;
  const double e = n * (1.0 - 2.0 * ctx.q - a);
  H(m, m) = n * a * (e - 1.0) / (theta[m] * theta[m]);
  H(k, k) = n * a * (e + 1.0) / (theta[k] * theta[k]);
  H(m, k) = H(k, m) = -n * a * e / (theta[m] * theta[k]);
  return H;
}

Matrix hessian_log_selection_probability(const SelectionRule& rule, const ModelSpec& model, const Vector& theta,
                                         int m) {
  if (rule.kind == RuleKind::SMS && model.family != Family::GaussianLinear) {
    fail(ErrorCode::UnsupportedAnalytic, "selection Hessian is analytic only for the Gaussian model");
  }
  auto H = analytic_hessian_log_selection_probability(rule, model, theta, m);
  if (!H) fail(ErrorCode::UnsupportedAnalytic, "selection Hessian is analytic only for two Gaussian populations");
  return *H;
}

GradientEstimate mc_grad_log_selection_probability(const SelectionRule& rule, const ModelSpec& model,
                                                   const Vector& theta, int m, long long K,
                                                   std::optional<double> step, std::uint64_t seed, int workers) {
  rule.validate(model.M);
  check_index(model, m);
  validate_theta(model, theta);
  if (K < 1) fail(ErrorCode::InvalidArgument, "K must be positive");
  if (step && !(*step > 0.0)) fail(ErrorCode::InvalidArgument, "finite-difference step must be positive");
  GradientEstimate out{Vector::Zero(model.M), Vector::Zero(model.M), K};
  for (int l = 0; l < model.M; ++l) {
    const double h = step ? *step : 0.05 * (1.0 + std::abs(theta[l]));
    Vector plus = theta;
    Vector minus = theta;
    plus[l] += 0.5 * h;
    minus[l] -= 0.5 * h;
    validate_theta(model, minus);
    // Accumulates hits on each side and joint hits, for the covariance term.
    const auto sums = run_batches<std::array<long long, 3>>(K, workers, [&](const BatchRange& r) {
      std::array<long long, 3> acc{0, 0, 0};
      for (long long i = r.begin; i < r.end; ++i) {
        const auto key = derive_seed(seed, {stream_tag::gradient, static_cast<std::uint64_t>(l),
                                            static_cast<std::uint64_t>(i)});
        const bool a = draw_selection(rule, model, plus, key) == m;
        const bool b = draw_selection(rule, model, minus, key) == m;
        acc[0] += a;
        acc[1] += b;
        acc[2] += a && b;
      }
      return acc;
    });
    std::array<long long, 3> total{0, 0, 0};
    for (const auto& s : sums)
      for (int i = 0; i < 3; ++i) total[i] += s[i];
    if (total[0] == 0 || total[1] == 0) {
      fail(ErrorCode::ZeroFrequency, "selection never observed at a perturbed point; increase K");
    }
    const double n = static_cast<double>(K);
    const double pa = total[0] / n;
    const double pb = total[1] / n;
    const double pab = total[2] / n;
    out.value[l] = (std::log(pa) - std::log(pb)) / h;
    const double var = (pa * (1.0 - pa)) / (pa * pa) + (pb * (1.0 - pb)) / (pb * pb) - 2.0 * (pab - pa * pb) / (pa * pb);
    out.standard_error[l] = std::sqrt(std::max(var, 0.0) / n) / h;
  }
  return out;
}

}  // namespace psel
