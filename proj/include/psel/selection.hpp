#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "psel/model.hpp"
#include "psel/rng.hpp"

namespace psel {

enum class RuleKind { SMS, Randomized };

struct SelectionRule {
  RuleKind kind = RuleKind::SMS;
  std::vector<double> weights;  // Randomized only

  static SelectionRule sms();
  static SelectionRule randomized(std::vector<double> weights);

  void validate(int M) const;

  bool operator==(const SelectionRule&) const = default;
};

/// Monte-Carlo controls shared by the simulation-based paths.
struct McOptions {
  long long replications = 100000;
  std::uint64_t seed = 0;
  int workers = 1;
};

struct ProbabilityEstimate {
  double value = 0.0;
  double standard_error = 0.0;
  long long replications = 0;  // 0 for analytic values
};

struct GaussianSmsContext {
  double delta;   // (θ_m − θ_k)/σ
  double sigma2;  // (σ_1² + σ_2²)/N
};

struct ExponentialSmsContext {
  double q;      // θ_m/(θ_m + θ_k)
  double alpha;  // conditional bias coefficient
  double f;
  double h;
};

struct GradientEstimate {
  Vector value;
  Vector standard_error;
  long long replications = 0;
};

/// SMS picks the largest sufficient statistic, ties to the lowest index.
/// Randomized draws from the weights and requires rng.
int select(const SelectionRule& rule, const ModelSpec& model, const ObservationSet& x, Rng* rng = nullptr);
int select_from_ml(const SelectionRule& rule, const Vector& ml_hat, Rng* rng = nullptr);

GaussianSmsContext gaussian_sms_context(const ModelSpec& model, const Vector& theta, int m);
ExponentialSmsContext exponential_sms_context(const ModelSpec& model, const Vector& theta, int m);

/// True when Pr(Ψ=m;θ) and its gradient have closed forms for this model/rule.
bool has_analytic_selection(const SelectionRule& rule, const ModelSpec& model);

/// Analytic when available; otherwise a frequency estimate using opts.
ProbabilityEstimate selection_probability(const SelectionRule& rule, const ModelSpec& model, const Vector& theta,
                                          int m, const McOptions& opts = {});

/// Analytic log Pr(Ψ=m;θ); throws UnsupportedAnalytic otherwise.
double log_selection_probability(const SelectionRule& rule, const ModelSpec& model, const Vector& theta, int m);

Vector grad_log_selection_probability(const SelectionRule& rule, const ModelSpec& model, const Vector& theta, int m);

/// Gaussian SMS and randomized rules only.
Matrix hessian_log_selection_probability(const SelectionRule& rule, const ModelSpec& model, const Vector& theta,
                                         int m);

/// Second derivative of log Pr wherever a closed form is known, which adds the
/// two-population exponential SMS case. Empty otherwise.
std::optional<Matrix> analytic_hessian_log_selection_probability(const SelectionRule& rule, const ModelSpec& model,
                                                                 const Vector& theta, int m);

/// Simulated central difference of log frequency at θ ± step/2·e_l. The same
/// random numbers are used on both sides. step defaults to 0.05(1 + |θ_l|).
GradientEstimate mc_grad_log_selection_probability(const SelectionRule& rule, const ModelSpec& model,
                                                   const Vector& theta, int m, long long K,
                                                   std::optional<double> step, std::uint64_t seed, int workers = 1);

}  // namespace psel
