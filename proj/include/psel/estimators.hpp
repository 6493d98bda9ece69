#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "psel/model.hpp"
#include "psel/selection.hpp"

namespace psel {

enum class EstimatorMethod {
  ML,
  MVU,
  UV,
  ClosedForm,
  GridSearch,
  NewtonRaphson,
  FisherScoring,
  MbpExact,
  MbpNewton,
  MbpFisher,
  Ipsml,
};

enum class MbpVariant { Exact, NewtonRelaxed, FisherRelaxed };

std::string estimator_method_name(EstimatorMethod method);

struct SolverConfig {
  int max_iterations = 200;
  double score_tolerance = 1e-10;
  double step_damping = 1.0;
  /// Starting point; the ML estimate when empty.
  std::optional<Vector> initial_theta;

  void validate() const;
};

struct EstimateResult {
  Vector theta_hat;
  int selected_m = 0;
  EstimatorMethod method = EstimatorMethod::ML;
  int iterations = 0;
  double final_score_norm = 0.0;
  bool converged = true;
  /// Grid search only: the best grid point lies on the box boundary.
  bool boundary_hit = false;
  /// IPSML only: Monte-Carlo standard error of each component.
  std::optional<Vector> theta_standard_error;
};

struct GridBounds {
  Vector lower;
  Vector upper;
};

struct IpsmlConfig {
  long long K = 100000;
  std::optional<double> fd_step;  // default 0.05(1 + |θ_l|)
  std::uint64_t seed = 0;
  /// Fisher-scoring relaxation when true, Newton relaxation otherwise.
  bool fisher = true;
  int workers = 1;
  /// Stop when the update's ∞-norm falls below this.
  double theta_tolerance = 1e-8;
};

// Every estimator comes in two forms. The ObservationSet form computes the ML
// statistic and, for SMS rules, the selected index; randomized rules need the
// index passed explicitly. The statistic form takes both directly.

/// ∇θ log f(x | Ψ = m; θ).
Vector psml_score(const ModelSpec& model, const SelectionRule& rule, const ObservationSet& x, const Vector& theta,
                  std::optional<int> selected = std::nullopt);
Vector psml_score_ml(const ModelSpec& model, const SelectionRule& rule, const Vector& ml_hat, int m,
                     const Vector& theta);

/// log f(x; θ) − log Pr(Ψ = m; θ) up to a θ-free constant; −∞ off the domain.
double psml_objective_ml(const ModelSpec& model, const SelectionRule& rule, const Vector& ml_hat, int m,
                         const Vector& theta);

/// ∇²θ log f(x | Ψ = m; θ) from the analytic selection Hessian.
Matrix psml_hessian_ml(const ModelSpec& model, const SelectionRule& rule, const Vector& ml_hat, int m,
                       const Vector& theta);

GridBounds default_grid_bounds(const ModelSpec& model, const Vector& ml_hat);

EstimateResult psml_grid_search(const ModelSpec& model, const SelectionRule& rule, const ObservationSet& x,
                                const GridBounds& bounds, int resolution, const SolverConfig& cfg = {},
                                std::optional<int> selected = std::nullopt);
EstimateResult psml_grid_search_ml(const ModelSpec& model, const SelectionRule& rule, const Vector& ml_hat, int m,
                                   const GridBounds& bounds, int resolution, const SolverConfig& cfg = {});

EstimateResult psml_newton_raphson(const ModelSpec& model, const SelectionRule& rule, const ObservationSet& x,
                                   const SolverConfig& cfg = {}, std::optional<int> selected = std::nullopt);
EstimateResult psml_newton_raphson_ml(const ModelSpec& model, const SelectionRule& rule, const Vector& ml_hat, int m,
                                      const SolverConfig& cfg = {});

EstimateResult psml_fisher_scoring(const ModelSpec& model, const SelectionRule& rule, const ObservationSet& x,
                                   const SolverConfig& cfg = {}, std::optional<int> selected = std::nullopt);
EstimateResult psml_fisher_scoring_ml(const ModelSpec& model, const SelectionRule& rule, const Vector& ml_hat, int m,
                                      const SolverConfig& cfg = {});

EstimateResult psml_mbp(const ModelSpec& model, const SelectionRule& rule, const ObservationSet& x,
                        const SolverConfig& cfg = {}, MbpVariant variant = MbpVariant::Exact,
                        std::optional<int> selected = std::nullopt);
EstimateResult psml_mbp_ml(const ModelSpec& model, const SelectionRule& rule, const Vector& ml_hat, int m,
                           const SolverConfig& cfg = {}, MbpVariant variant = MbpVariant::Exact);

EstimateResult ipsml(const ModelSpec& model, const SelectionRule& rule, const ObservationSet& x,
                     const SolverConfig& cfg, const IpsmlConfig& mc, std::optional<int> selected = std::nullopt);
EstimateResult ipsml_ml(const ModelSpec& model, const SelectionRule& rule, const Vector& ml_hat, int m,
                        const SolverConfig& cfg, const IpsmlConfig& mc);

/// Two exponential populations under SMS. N = 1 uses the explicit solution,
/// N ≥ 2 bisects the scalar fixed point in q̂_m.
EstimateResult psml_exponential_closed(const ModelSpec& model, const ObservationSet& x);
EstimateResult psml_exponential_closed_ml(const ModelSpec& model, const Vector& ml_hat, int m,
                                          const SolverConfig& cfg = {});

/// U-V estimate of both components, each as if it were selected.
Vector uv_estimate(const ModelSpec& model, const ObservationSet& x);
Vector uv_estimate_ml(const ModelSpec& model, const Vector& ml_hat);

}  // namespace psel
