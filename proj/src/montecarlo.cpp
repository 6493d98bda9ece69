#include "psel/montecarlo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "psel/batching.hpp"
#include "psel/errors.hpp"
#include "psel/linalg.hpp"
#include "psel/special.hpp"

namespace psel {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kMaxFailureRate = 0.01;

bool same_vector(const Vector& a, const Vector& b) {
  return a.size() == b.size() && (a.array() == b.array()).all();
}

bool same_optional_vector(const std::optional<Vector>& a, const std::optional<Vector>& b) {
  if (a.has_value() != b.has_value()) return false;
  return !a || same_vector(*a, *b);
}

// Per-estimator accumulator layout within one batch.
struct Layout {
  int M;
  std::size_t width() const { return 3 + 2 * M + M * M; }
  static constexpr std::size_t valid = 0;
  static constexpr std::size_t failures = 1;
  static constexpr std::size_t nonconverged = 2;
  std::size_t count(int m) const { return 3 + m; }
  std::size_t sq(int m) const { return 3 + M + m; }
  std::size_t err(int j, int m) const { return 3 + 2 * M + j * M + m; }
};

struct BatchResult {
  std::vector<std::vector<double>> sums;  // one per estimator
  std::vector<std::string> first_error;   // one per estimator
};

double ratio(double num, double den) { return den > 0.0 ? num / den : kNaN; }

PsiBiasTable bias_table(const std::vector<std::vector<double>>& batches, const Layout& L) {
  const int M = L.M;
  PsiBiasTable t;
  t.indicator = t.indicator_se = t.conditional = t.conditional_se = Matrix::Zero(M, M);
  t.frequency = t.frequency_se = Vector::Zero(M);
  t.counts.assign(M, 0);
  double total_valid = 0.0;
  for (const auto& b : batches) total_valid += b[Layout::valid];
  t.total = static_cast<long long>(total_valid);
  for (int m = 0; m < M; ++m) {
    double c = 0.0;
    for (const auto& b : batches) c += b[L.count(m)];
    t.counts[m] = static_cast<long long>(c);
    std::tie(t.frequency[m], t.frequency_se[m]) =
        jackknife(batches, [&](const std::vector<double>& s) { return ratio(s[L.count(m)], s[Layout::valid]); });
    for (int j = 0; j < M; ++j) {
      std::tie(t.indicator(j, m), t.indicator_se(j, m)) =
          jackknife(batches, [&](const std::vector<double>& s) { return ratio(s[L.err(j, m)], s[Layout::valid]); });
      std::tie(t.conditional(j, m), t.conditional_se(j, m)) =
          jackknife(batches, [&](const std::vector<double>& s) { return ratio(s[L.err(j, m)], s[L.count(m)]); });
    }
  }
  return t;
}

std::vector<BatchResult> simulate_point(const ExperimentConfig& cfg, const ModelSpec& model, const Vector& theta,
                                        const std::vector<std::string>& ids) {
  const Layout L{model.M};
  return run_batches<BatchResult>(cfg.replications, cfg.workers, [&](const BatchRange& r) {
    BatchResult out;
    out.sums.assign(ids.size(), std::vector<double>(L.width(), 0.0));
    out.first_error.assign(ids.size(), "");
    for (long long i = r.begin; i < r.end; ++i) {
      const auto key = derive_seed(cfg.seed, {stream_tag::sample, static_cast<std::uint64_t>(i)});
      const Vector ml = sample_ml(model, theta, key);
      int m = 0;
      if (cfg.rule.kind == RuleKind::SMS) {
        m = select_from_ml(cfg.rule, ml);
      } else {
        Rng rng(derive_seed(key, {stream_tag::select}));
        m = select_from_ml(cfg.rule, ml, &rng);
      }
      for (std::size_t e = 0; e < ids.size(); ++e) {
        auto& acc = out.sums[e];
        try {
          const EstimateResult est = run_estimator(ids[e], model, cfg.rule, ml, m, cfg);
          if (!est.theta_hat.allFinite()) fail(ErrorCode::Degenerate, "non-finite estimate");
          acc[Layout::valid] += 1.0;
          if (!est.converged) acc[Layout::nonconverged] += 1.0;
          acc[L.count(m)] += 1.0;
          const Vector err = est.theta_hat - theta;
          acc[L.sq(m)] += err[m] * err[m];
          for (int j = 0; j < model.M; ++j) acc[L.err(j, m)] += err[j];
        } catch (const Error& ex) {
          acc[Layout::failures] += 1.0;
          if (out.first_error[e].empty()) out.first_error[e] = ex.what();
        }
      }
    }
    return out;
  });
}

std::vector<std::vector<double>> estimator_batches(const std::vector<BatchResult>& batches, std::size_t e) {
  std::vector<std::vector<double>> out;
  out.reserve(batches.size());
  for (const auto& b : batches) out.push_back(b.sums[e]);
  return out;
}

std::pair<ModelSpec, Vector> sweep_point(const ExperimentConfig& cfg, double value) {
  ModelSpec model = cfg.model;
  Vector theta = cfg.theta_true;
  if (cfg.sweep.axis == SweepAxis::N) model.N = static_cast<int>(std::lround(value));
  if (cfg.sweep.axis == SweepAxis::Theta) theta[cfg.sweep.component] = value;
  return {model, theta};
}

double biased_reference(const std::string& id, const ModelSpec& model, const SelectionRule& rule,
                        const Vector& theta) {
  if (id != "ml") return kNaN;
  try {
    return biased_psi_crb(model, rule, theta,
                          [&](const Vector& t) { return analytic_ml_bias_gradient(model, rule, t); });
  } catch (const Error&) {
    return kNaN;
  }
}

}  // namespace

const std::vector<std::string>& estimator_ids() {
  static const std::vector<std::string> ids = {
      "ml",       "mvu",      "uv",       "psml",     "psml_closed",     "psml_grid",
      "psml_nr",  "psml_fs",  "psml_mbp", "psml_mbp_newton", "psml_mbp_fisher", "ipsml",
  };
  return ids;
}

void check_estimator_supported(const std::string& id, const ModelSpec& model, const SelectionRule& rule) {
  const auto& ids = estimator_ids();
  if (std::find(ids.begin(), ids.end(), id) == ids.end()) {
    fail(ErrorCode::InvalidArgument, "unknown estimator '" + id + "'");
  }
  if (id == "ml") return;
  if (id == "mvu") {
    if (model.family != Family::Uniform) fail(ErrorCode::InvalidArgument, "mvu applies to the uniform family");
    return;
  }
  if (id == "uv") {
    if (model.family == Family::GaussianLinear || model.M != 2) {
      fail(ErrorCode::InvalidArgument, "uv applies to two uniform or exponential populations");
    }
    return;
  }
  if (!model.regular()) fail(ErrorCode::InvalidArgument, id + " needs a regular family (not uniform)");
  if (id == "psml_closed" && (model.family != Family::Exponential || model.M != 2 || rule.kind != RuleKind::SMS)) {
    fail(ErrorCode::InvalidArgument, "psml_closed applies to two exponential populations under SMS");
  }
  if (id != "ipsml" && !has_analytic_selection(rule, model)) {
    fail(ErrorCode::InvalidArgument, id + " needs an analytic selection probability; use ipsml");
  }
}

EstimateResult run_estimator(const std::string& id, const ModelSpec& model, const SelectionRule& rule,
                             const Vector& ml_hat, int m, const ExperimentConfig& cfg) {
  auto plain = [&](Vector theta, EstimatorMethod method) {
    EstimateResult r;
    r.theta_hat = std::move(theta);
    r.selected_m = m;
    r.method = method;
    r.iterations = 0;
    r.final_score_norm = kNaN;
    r.converged = true;
    return r;
  };
  if (id == "ml") return plain(ml_hat, EstimatorMethod::ML);
  if (id == "mvu") return plain(ml_hat * ((model.N + 1.0) / model.N), EstimatorMethod::MVU);
  if (id == "uv") return plain(uv_estimate_ml(model, ml_hat), EstimatorMethod::UV);
  if (id == "psml") {
    if (model.family == Family::Exponential && model.M == 2 && rule.kind == RuleKind::SMS) {
      return psml_exponential_closed_ml(model, ml_hat, m, cfg.solver);
    }
    return psml_newton_raphson_ml(model, rule, ml_hat, m, cfg.solver);
  }
  if (id == "psml_closed") return psml_exponential_closed_ml(model, ml_hat, m, cfg.solver);
  if (id == "psml_grid") {
    return psml_grid_search_ml(model, rule, ml_hat, m, default_grid_bounds(model, ml_hat), cfg.grid_resolution,
                               cfg.solver);
  }
  if (id == "psml_nr") return psml_newton_raphson_ml(model, rule, ml_hat, m, cfg.solver);
  if (id == "psml_fs") return psml_fisher_scoring_ml(model, rule, ml_hat, m, cfg.solver);
  if (id == "psml_mbp") return psml_mbp_ml(model, rule, ml_hat, m, cfg.solver, MbpVariant::Exact);
  if (id == "psml_mbp_newton") return psml_mbp_ml(model, rule, ml_hat, m, cfg.solver, MbpVariant::NewtonRelaxed);
  if (id == "psml_mbp_fisher") return psml_mbp_ml(model, rule, ml_hat, m, cfg.solver, MbpVariant::FisherRelaxed);
  if (id == "ipsml") {
    IpsmlConfig mc = cfg.ipsml;
    mc.workers = 1;
    return ipsml_ml(model, rule, ml_hat, m, cfg.solver, mc);
  }
  fail(ErrorCode::InvalidArgument, "unknown estimator '" + id + "'");
}

void ExperimentConfig::validate() const {
  model.validate();
  validate_theta(model, theta_true);
  rule.validate(model.M);
  solver.validate();
  if (replications < 1) fail(ErrorCode::InvalidArgument, "replications must be at least 1");
  if (workers < 1) fail(ErrorCode::InvalidArgument, "workers must be at least 1");
  if (grid_resolution < 2) fail(ErrorCode::InvalidArgument, "grid_resolution must be at least 2");
  if (ipsml.K < 1) fail(ErrorCode::InvalidArgument, "ipsml.K must be at least 1");
  if (estimators.empty()) fail(ErrorCode::InvalidArgument, "at least one estimator is required");
  if (sweep.axis != SweepAxis::None) {
    if (sweep.grid.empty()) fail(ErrorCode::InvalidArgument, "sweep grid must be nonempty");
    if (!std::is_sorted(sweep.grid.begin(), sweep.grid.end())) fail(ErrorCode::InvalidArgument, "sweep grid must be sorted");
    if (sweep.axis == SweepAxis::Theta && (sweep.component < 0 || sweep.component >= model.M)) {
      fail(ErrorCode::InvalidArgument, "sweep component out of range");
    }
    for (double v : sweep.grid) {
      if (sweep.axis == SweepAxis::N && (v < 1.0 || v != std::floor(v))) {
        fail(ErrorCode::InvalidArgument, "N sweep values must be positive integers");
      }
      const auto [m, t] = sweep_point(*this, v);
      validate_theta(m, t);
    }
  }
  for (const auto& id : estimators) check_estimator_supported(id, model, rule);
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  return a.model == b.model && same_vector(a.theta_true, b.theta_true) && a.rule == b.rule &&
         a.estimators == b.estimators && a.replications == b.replications && a.seed == b.seed && a.sweep == b.sweep &&
         a.solver.max_iterations == b.solver.max_iterations && a.solver.score_tolerance == b.solver.score_tolerance &&
         a.solver.step_damping == b.solver.step_damping &&
         same_optional_vector(a.solver.initial_theta, b.solver.initial_theta) &&
         a.grid_resolution == b.grid_resolution && a.ipsml.K == b.ipsml.K && a.ipsml.fd_step == b.ipsml.fd_step &&
         a.ipsml.seed == b.ipsml.seed && a.ipsml.fisher == b.ipsml.fisher &&
         a.ipsml.theta_tolerance == b.ipsml.theta_tolerance && a.workers == b.workers;
}

PsiBiasTable empirical_psi_bias(const std::vector<BiasSample>& samples, int M) {
  if (M < 1) fail(ErrorCode::InvalidArgument, "M must be positive");
  const Layout L{M};
  const auto ranges = batch_ranges(static_cast<long long>(samples.size()));
  std::vector<std::vector<double>> batches;
  for (const auto& r : ranges) {
    std::vector<double> acc(L.width(), 0.0);
    for (long long i = r.begin; i < r.end; ++i) {
      const auto& s = samples[static_cast<std::size_t>(i)];
      if (s.m < 0 || s.m >= M || s.error.size() != M) fail(ErrorCode::DimensionMismatch, "bias sample shape");
      acc[Layout::valid] += 1.0;
      acc[L.count(s.m)] += 1.0;
      acc[L.sq(s.m)] += s.error[s.m] * s.error[s.m];
      for (int j = 0; j < M; ++j) acc[L.err(j, s.m)] += s.error[j];
    }
    batches.push_back(std::move(acc));
  }
  return bias_table(batches, L);
}

double reference_psi_crb(const ModelSpec& model, const SelectionRule& rule, const Vector& theta) {
  try {
    if (!model.regular()) return kNaN;
    if (rule.kind == RuleKind::SMS && model.family == Family::GaussianLinear && model.M == 2) {
      return psi_crb_gaussian_closed(theta, model.noise_variances, model.N).aggregate;
    }
    if (rule.kind == RuleKind::SMS && model.family == Family::Exponential && model.M == 2 && model.N == 1) {
      return psi_crb_exponential_n1(model, theta);
    }
    if (!has_analytic_selection(rule, model)) return kNaN;
    double total = 0.0;
    for (int m = 0; m < model.M; ++m) {
      const double pr = selection_probability(rule, model, theta, m).value;
      if (!(pr > 0.0)) continue;
      const Matrix J = *psfim_analytic(model, rule, theta, m);
      total += pr * symmetric_inverse(J, ErrorCode::SingularPsfim)(m, m);
    }
    return total;
  } catch (const Error&) {
    return kNaN;
  }
}

McSummary run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  McSummary summary;
  summary.config = cfg;
  summary.axis = cfg.sweep.axis;
  summary.workers = cfg.workers;
  std::vector<double> points = cfg.sweep.axis == SweepAxis::None ? std::vector<double>{kNaN} : cfg.sweep.grid;
  for (double value : points) {
    const auto [model, theta] = sweep_point(cfg, value);
    const Layout L{model.M};
    const auto batches = simulate_point(cfg, model, theta, cfg.estimators);
    const double bound = reference_psi_crb(model, cfg.rule, theta);
    for (std::size_t e = 0; e < cfg.estimators.size(); ++e) {
      const auto sums = estimator_batches(batches, e);
      SummaryRow row;
      row.sweep_value = value;
      row.estimator = cfg.estimators[e];
      double failures = 0.0;
      double nonconverged = 0.0;
      for (const auto& b : sums) {
        failures += b[Layout::failures];
        nonconverged += b[Layout::nonconverged];
      }
      row.failures = static_cast<long long>(failures);
      row.nonconverged = static_cast<long long>(nonconverged);
      if (failures > kMaxFailureRate * static_cast<double>(cfg.replications)) {
        std::string first;
        for (const auto& b : batches)
          if (first.empty()) first = b.first_error[e];
        std::ostringstream msg;
        msg << "estimator " << row.estimator << " failed on " << row.failures << " of " << cfg.replications
            << " replications";
        if (cfg.sweep.axis != SweepAxis::None) msg << " at sweep value " << value;
        msg << " (first error: " << first << ")";
        fail(ErrorCode::EstimatorFailureRate, msg.str());
      }
      std::tie(row.psmse, row.psmse_se) = jackknife(sums, [&](const std::vector<double>& s) {
        double total = 0.0;
        for (int m = 0; m < model.M; ++m) total += s[L.sq(m)];
        return ratio(total, s[Layout::valid]);
      });
      std::tie(row.bias_sel, row.bias_sel_se) = jackknife(sums, [&](const std::vector<double>& s) {
        double total = 0.0;
        for (int m = 0; m < model.M; ++m) total += s[L.err(m, m)];
        return ratio(total, s[Layout::valid]);
      });
      std::tie(row.bias_unsel, row.bias_unsel_se) = jackknife(sums, [&](const std::vector<double>& s) {
        double total = 0.0;
        for (int m = 0; m < model.M; ++m)
          for (int j = 0; j < model.M; ++j)
            if (j != m) total += s[L.err(j, m)];
        return ratio(total, s[Layout::valid]);
      });
      row.bias = bias_table(sums, L);
      row.conditional_mse = Vector(model.M);
      for (int m = 0; m < model.M; ++m) {
        double sq = 0.0;
        for (const auto& b : sums) sq += b[L.sq(m)];
        row.conditional_mse[m] = ratio(sq, static_cast<double>(row.bias.counts[m]));
      }
      row.psi_crb = bound;
      row.biased_psi_crb = biased_reference(row.estimator, model, cfg.rule, theta);
      summary.rows.push_back(std::move(row));
    }
  }
  return summary;
}

BiasGradientProvider make_mc_bias_gradient_provider(const ExperimentConfig& base, const std::string& id,
                                                    double relative_step) {
  if (!(relative_step > 0.0)) fail(ErrorCode::InvalidArgument, "relative_step must be positive");
  return [base, id, relative_step](const Vector& theta) {
    const ModelSpec& model = base.model;
    validate_theta(model, theta);
    check_estimator_supported(id, model, base.rule);
    const Layout L{model.M};
    auto conditional_bias = [&](const Vector& t) {
      const auto batches = simulate_point(base, model, t, {id});
      const auto table = bias_table(estimator_batches(batches, 0), L);
      Vector b(model.M);
      for (int m = 0; m < model.M; ++m) b[m] = table.conditional(m, m);
      return b;
    };
    Matrix G = Matrix::Identity(model.M, model.M);
    for (int l = 0; l < model.M; ++l) {
      const double h = relative_step * (1.0 + std::abs(theta[l]));
      Vector plus = theta;
      Vector minus = theta;
      plus[l] += 0.5 * h;
      minus[l] -= 0.5 * h;
      const Vector slope = (conditional_bias(plus) - conditional_bias(minus)) / h;
      for (int m = 0; m < model.M; ++m) G(l, m) += slope[m];
    }
    return G;
  };
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {"fig3_uniform", "fig4_zeta_surface", "fig56_gaussian",
                                                 "fig78_exponential"};
  return names;
}

std::string canonical_preset(const std::string& name) {
  for (const auto& full : preset_names()) {
    if (name == full || name == full.substr(0, full.find('_'))) return full;
  }
  fail(ErrorCode::UnknownPreset, "unknown preset '" + name + "'");
}

ExperimentConfig preset_config(const std::string& name, const PresetOverrides& overrides) {
  const std::string preset = canonical_preset(name);
  ExperimentConfig cfg;
  cfg.rule = SelectionRule::sms();
  if (preset == "fig3_uniform") {
    cfg.model = ModelSpec::uniform(2, 1);
    cfg.theta_true = Vector(2);
    cfg.theta_true << 10.0, 10.2;
    cfg.estimators = {"ml", "mvu", "uv"};
    cfg.replications = 250000;
    cfg.sweep = {SweepAxis::N, 0, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10}};
  } else if (preset == "fig56_gaussian") {
    cfg.model = ModelSpec::gaussian({1.0, 0.1}, 1);
    cfg.theta_true = Vector(2);
    cfg.theta_true << 0.0, 0.1;
    cfg.estimators = {"ml", "psml_nr", "psml_mbp"};
    cfg.replications = 20000;
    cfg.sweep = {SweepAxis::N, 0, {1, 2, 5, 10, 20, 50, 100}};
  } else if (preset == "fig78_exponential") {
    cfg.model = ModelSpec::exponential(2, 1);
    cfg.theta_true = Vector(2);
    cfg.theta_true << 5.0, 1.0;
    cfg.estimators = {"ml", "psml"};
    cfg.replications = 100000;
    cfg.sweep = {SweepAxis::Theta, 1, {1, 2, 3, 4, 5, 6, 7, 8, 9}};
  } else {
    fail(ErrorCode::InvalidArgument, "preset " + preset + " is a deterministic table, not an experiment");
  }
  if (overrides.replications) cfg.replications = *overrides.replications;
  if (overrides.fast) cfg.replications = std::max<long long>(1, cfg.replications / 10);
  if (overrides.seed) cfg.seed = *overrides.seed;
  if (overrides.workers) cfg.workers = *overrides.workers;
  return cfg;
}

ZetaSurface zeta_surface() {
  ZetaSurface surface;
  for (int s = 0; s <= 20; ++s) {
    const double sigma1_sq = std::pow(10.0, -1.0 + s / 10.0);
    const double kappa = sigma1_sq / (sigma1_sq + surface.sigma2_sq);
    for (int d = 0; d <= 100; ++d) {
      const double delta = (d - 50) / 10.0;
      surface.rows.push_back({delta, sigma1_sq, kappa, zeta_factor(delta, kappa)});
    }
  }
  return surface;
}

PresetResult run_preset(const std::string& name, const PresetOverrides& overrides) {
  const std::string preset = canonical_preset(name);
  if (preset == "fig4_zeta_surface") return zeta_surface();
  return run_experiment(preset_config(preset, overrides));
}

}  // namespace psel
