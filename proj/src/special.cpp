#include "psel/special.hpp"

#include <cmath>
#include <numbers>

namespace psel {

namespace {

constexpr double kTailSwitch = -8.0;
// 1 + c cancels well before the other tail forms are needed.
constexpr double kPlusOneSwitch = -2.0;
constexpr int kFractionDepth = 200;

// For z > 0 returns (t, s) with t = 1/(z + s) and s = 2/(z + 3/(z + ...)), so the
// Mills ratio (1 − Φ(z))/φ(z) equals 1/(z + t).
struct Tail {
  double t;
  double s;
};

Tail mills_tail(double z) {
  double s = 0.0;
  for (int k = kFractionDepth; k >= 2; --k) s = k / (z + s);
  return {1.0 / (z + s), s};
}

}  // namespace

double normal_pdf(double x) { return std::exp(-0.5 * x * x) * (0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x * (0.5 * std::numbers::sqrt2)); }

double log_normal_cdf(double x) {
  if (x < kTailSwitch) {
    const double z = -x;
    const Tail tail = mills_tail(z);
    return -0.5 * z * z - 0.5 * std::log(2.0 * std::numbers::pi) - std::log(z + tail.t);
  }
  if (x > 0.0) return std::log1p(-normal_cdf(-x));
  return std::log(normal_cdf(x));
}

double inverse_mills(double x) {
  if (x < kTailSwitch) {
    const double z = -x;
    return z + mills_tail(z).t;
  }
  return normal_pdf(x) / normal_cdf(x);
}

double c_factor(double delta) {
  if (delta < kTailSwitch) {
    const double z = -delta;
    const double t = mills_tail(z).t;
    return -(z + t) * t;
  }
  const double lambda = inverse_mills(delta);
  return -lambda * (delta + lambda);
}

double c_factor_plus_one(double delta) {
  if (delta < kPlusOneSwitch) {
    const Tail tail = mills_tail(-delta);
    return tail.t * (tail.s - tail.t);
  }
  return 1.0 + c_factor(delta);
}

double zeta_factor(double delta, double kappa) {
  return 1.0 - kappa * c_factor(delta) / c_factor_plus_one(delta);
}

double log_binomial(double n, double k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

}  // namespace psel
