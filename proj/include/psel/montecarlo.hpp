#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "psel/bounds.hpp"
#include "psel/estimators.hpp"
#include "psel/model.hpp"
#include "psel/selection.hpp"

namespace psel {

enum class SweepAxis { None, N, Theta };

struct Sweep {
  SweepAxis axis = SweepAxis::None;
  int component = 0;  // zero-based; Theta axis only
  std::vector<double> grid;

  bool operator==(const Sweep&) const = default;
};

struct ExperimentConfig {
  ModelSpec model;
  Vector theta_true;
  SelectionRule rule;
  std::vector<std::string> estimators;
  long long replications = 10000;
  std::uint64_t seed = 1;
  Sweep sweep;
  SolverConfig solver;
  int grid_resolution = 201;
  IpsmlConfig ipsml;
  int workers = 1;

  void validate() const;
};

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

/// Known estimator identifiers, in canonical order.
const std::vector<std::string>& estimator_ids();

/// Throws InvalidArgument when the estimator cannot run on this model/rule.
void check_estimator_supported(const std::string& id, const ModelSpec& model, const SelectionRule& rule);

/// Runs estimator `id` on the ML statistic with selected index m.
EstimateResult run_estimator(const std::string& id, const ModelSpec& model, const SelectionRule& rule,
                             const Vector& ml_hat, int m, const ExperimentConfig& cfg);

/// Ψ-bias per (j, m): indicator-weighted E[(θ̂_j − θ_j)1{Ψ=m}] and conditional
/// E[θ̂_j − θ_j | Ψ=m]. Conditional entries of an empty bin are NaN.
struct PsiBiasTable {
  Matrix indicator;
  Matrix indicator_se;
  Matrix conditional;
  Matrix conditional_se;
  Vector frequency;
  Vector frequency_se;
  std::vector<long long> counts;
  long long total = 0;

  bool bin_empty(int m) const { return counts.at(m) == 0; }
};

struct BiasSample {
  int m;
  Vector error;  // θ̂ − θ
};

PsiBiasTable empirical_psi_bias(const std::vector<BiasSample>& samples, int M);

struct SummaryRow {
  double sweep_value = 0.0;
  std::string estimator;
  double psmse = 0.0;
  double psmse_se = 0.0;
  double bias_sel = 0.0;
  double bias_sel_se = 0.0;
  double bias_unsel = 0.0;
  double bias_unsel_se = 0.0;
  Vector conditional_mse;
  PsiBiasTable bias;
  double psi_crb = 0.0;         // NaN when unavailable
  double biased_psi_crb = 0.0;  // NaN when unavailable
  long long failures = 0;
  long long nonconverged = 0;
};

struct McSummary {
  ExperimentConfig config;
  SweepAxis axis = SweepAxis::None;
  std::vector<SummaryRow> rows;
  int workers = 1;
};

McSummary run_experiment(const ExperimentConfig& cfg);

/// Aggregate Ψ-CRB at theta where a closed or semi-analytic form exists; NaN otherwise.
double reference_psi_crb(const ModelSpec& model, const SelectionRule& rule, const Vector& theta);

/// FD of the Monte-Carlo conditional bias of estimator `id` with common random numbers.
BiasGradientProvider make_mc_bias_gradient_provider(const ExperimentConfig& base, const std::string& id,
                                                    double relative_step);

struct ZetaRow {
  double delta;
  double sigma1_sq;
  double kappa;
  double zeta;
};

struct ZetaSurface {
  int N = 10;
  double sigma2_sq = 1.0;
  std::vector<ZetaRow> rows;
};

struct PresetOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<long long> replications;
  bool fast = false;
  std::optional<int> workers;
};

const std::vector<std::string>& preset_names();

/// Accepts the full preset name or its short prefix ("fig3", "fig4", "fig56", "fig78").
std::string canonical_preset(const std::string& name);

/// The experiment a preset runs, after overrides. Throws for the ζ surface.
ExperimentConfig preset_config(const std::string& name, const PresetOverrides& overrides = {});

ZetaSurface zeta_surface();

using PresetResult = std::variant<McSummary, ZetaSurface>;
PresetResult run_preset(const std::string& name, const PresetOverrides& overrides = {});

}  // namespace psel
