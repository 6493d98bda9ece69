#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "psel/model.hpp"
#include "psel/selection.hpp"

namespace psel {

enum class PsfimMethod { Definition, ScoreForm, HessianForm, ClosedForm };

std::string method_name(PsfimMethod method);

struct PsfimResult {
  int m = 0;
  Matrix J;
  PsfimMethod method = PsfimMethod::ClosedForm;
  std::optional<Matrix> mc_standard_error;
  /// Jackknife standard error of [J⁻¹]_{m,m}; zero for analytic results.
  double inverse_diagonal_se = 0.0;
  long long accepted = 0;
  double acceptance_rate = 1.0;
};

struct ComponentBound {
  int m = 0;
  double pr_select = 0.0;
  double pr_se = 0.0;
  double bound = 0.0;  // [J_m⁻¹]_{m,m}
  double bound_se = 0.0;
};

struct PsiCrbReport {
  std::vector<ComponentBound> per_component;
  double aggregate = 0.0;
  double aggregate_se = 0.0;
  Vector theta;
  SelectionRule rule;
  ModelSpec model;
  PsfimMethod method = PsfimMethod::ClosedForm;
};

/// Post-selection FIM J_m(θ). Definition, ScoreForm and HessianForm are
/// conditional Monte-Carlo averages obtained by rejection sampling on Ψ = m;
/// ClosedForm covers the two-population Gaussian SMS model and the randomized rule.
PsfimResult psfim(const ModelSpec& model, const SelectionRule& rule, const Vector& theta, int m, PsfimMethod method,
                  const McOptions& opts = {});

/// Exact PSFIM wherever the selection probability has analytic derivatives:
/// randomized rules, two-population Gaussian SMS (closed form) and
/// two-population exponential SMS (conditional moments). Empty otherwise.
std::optional<Matrix> psfim_analytic(const ModelSpec& model, const SelectionRule& rule, const Vector& theta, int m);

Matrix psfim_closed_gaussian(const Vector& theta, const std::vector<double>& sigma2s, int N, int m);
Matrix psfim_inverse_gaussian(const Vector& theta, const std::vector<double>& sigma2s, int N, int m);

PsiCrbReport psi_crb(const ModelSpec& model, const SelectionRule& rule, const Vector& theta, PsfimMethod method,
                     const McOptions& opts = {});

PsiCrbReport psi_crb_gaussian_closed(const Vector& theta, const std::vector<double>& sigma2s, int N);

double psi_crb_exponential_n1(double theta_m, double theta_k);
double psi_crb_exponential_n1(const ModelSpec& model, const Vector& theta);

/// Column m holds ∇θ b_m(θ) + e_m.
using BiasGradientProvider = std::function<Matrix(const Vector& theta)>;

double biased_psi_crb(const ModelSpec& model, const SelectionRule& rule, const Vector& theta,
                      const BiasGradientProvider& provider, const McOptions& opts = {});

/// Entry (j, m) = E[θ̂_j^ML − θ_j | Ψ = m].
Matrix analytic_conditional_bias(const ModelSpec& model, const SelectionRule& rule, const Vector& theta);

/// ∇θ b_m + e_m for the ML estimator, column by column, from the analytic biases.
Matrix analytic_ml_bias_gradient(const ModelSpec& model, const SelectionRule& rule, const Vector& theta);

}  // namespace psel
