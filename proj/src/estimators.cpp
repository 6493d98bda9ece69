#include "psel/estimators.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <optional>

#include "psel/bounds.hpp"
#include "psel/errors.hpp"
#include "psel/linalg.hpp"

namespace psel {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr int kMaxHalvings = 60;

bool in_domain(const ModelSpec& model, const Vector& theta) {
  if (!theta.allFinite()) return false;
  if (model.family == Family::GaussianLinear) return true;
  return (theta.array() > 0.0).all();
}

int resolve_selected(const ModelSpec& model, const SelectionRule& rule, const Vector& ml_hat,
                     std::optional<int> selected) {
  if (selected) {
    if (*selected < 0 || *selected >= model.M) fail(ErrorCode::InvalidArgument, "selected index out of range");
    return *selected;
  }
  if (rule.kind == RuleKind::Randomized) {
    fail(ErrorCode::InvalidArgument, "randomized rule: pass the realized selection index");
  }
  return select_from_ml(rule, ml_hat);
}

void check_problem(const ModelSpec& model, const SelectionRule& rule, const Vector& ml_hat, int m) {
  model.validate();
  rule.validate(model.M);
  if (ml_hat.size() != model.M) fail(ErrorCode::DimensionMismatch, "statistic length differs from population count");
  if (m < 0 || m >= model.M) fail(ErrorCode::InvalidArgument, "selected index out of range");
  if (!model.regular()) fail(ErrorCode::NonRegularFamily, "non-regular family: PSML needs a regular likelihood");
}

Vector starting_point(const ModelSpec& model, const Vector& ml_hat, const SolverConfig& cfg) {
  Vector theta = cfg.initial_theta ? *cfg.initial_theta : ml_hat;
  if (theta.size() != model.M) fail(ErrorCode::DimensionMismatch, "initial point has the wrong length");
  if (!in_domain(model, theta)) fail(ErrorCode::InvalidArgument, "initial point outside the parameter space");
  return theta;
}

double inf_norm(const Vector& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

EstimateResult make_result(const Vector& theta, int m, EstimatorMethod method) {
  EstimateResult r;
  r.theta_hat = theta;
  r.selected_m = m;
  r.method = method;
  return r;
}

// Damped ascent on the PSML objective along direction(θ, score), halving the
// step whenever the objective would drop or θ would leave the parameter space.
EstimateResult damped_ascent(const ModelSpec& model, const SelectionRule& rule, const Vector& ml_hat, int m,
                             const SolverConfig& cfg, EstimatorMethod method,
                             const std::function<Vector(const Vector&, const Vector&)>& direction) {
  Vector theta = starting_point(model, ml_hat, cfg);
  EstimateResult r = make_result(theta, m, method);
  r.converged = false;
  double objective = psml_objective_ml(model, rule, ml_hat, m, theta);
  for (int it = 1; it <= cfg.max_iterations; ++it) {
    const Vector s = psml_score_ml(model, rule, ml_hat, m, theta);
    r.iterations = it;
    r.final_score_norm = inf_norm(s);
    r.theta_hat = theta;
    if (r.final_score_norm <= cfg.score_tolerance) {
      r.converged = true;
      return r;
    }
    const Vector d = direction(theta, s);
    double step = cfg.step_damping;
    bool moved = false;
    for (int k = 0; k <= kMaxHalvings; ++k, step *= 0.5) {
      const Vector candidate = theta + step * d;
      if (!in_domain(model, candidate)) continue;
      const double value = psml_objective_ml(model, rule, ml_hat, m, candidate);
      if (value >= objective - 1e-13 * (1.0 + std::abs(objective))) {
        theta = candidate;
        objective = std::max(objective, value);
        moved = true;
        break;
      }
    }
    if (!moved) break;
  }
  r.theta_hat = theta;
  r.final_score_norm = inf_norm(psml_score_ml(model, rule, ml_hat, m, theta));
  r.converged = r.final_score_norm <= cfg.score_tolerance;
  return r;
}

// Solves ∇θ log f(x; θ) = g for θ. Empty when the exponential quadratic has no real root.
std::optional<Vector> solve_likelihood_equation(const ModelSpec& model, const Vector& ml_hat, const Vector& g) {
  Vector theta(model.M);
  const double n = model.N;
  for (int l = 0; l < model.M; ++l) {
    if (model.family == Family::GaussianLinear) {
      theta[l] = ml_hat[l] - model.noise_variances[l] * g[l] / n;
    } else {
      // g θ² + N θ − N ȳ = 0, positive root in cancellation-free form
      const double disc = 1.0 + 4.0 * g[l] * ml_hat[l] / n;
      if (!(disc >= 0.0)) return std::nullopt;
      theta[l] = 2.0 * ml_hat[l] / (1.0 + std::sqrt(disc));
    }
  }
  return theta;
}

// Exact MBP step. When the full target has no root, the target is pulled toward
// the current score until one exists; fixed points are unchanged.
Vector mbp_exact_step(const ModelSpec& model, const Vector& ml_hat, const Vector& theta, const Vector& g) {
  const Vector here = reduced_score(model, ml_hat, theta);
  double blend = 1.0;
  for (int k = 0; k <= kMaxHalvings; ++k, blend *= 0.5) {
    if (auto next = solve_likelihood_equation(model, ml_hat, blend * g + (1.0 - blend) * here)) return *next;
  }
  fail(ErrorCode::InformationDominanceViolated, "likelihood equation has no real root");
}

Vector mc_psml_gradient(const ModelSpec& model, const SelectionRule& rule, const Vector& ml_hat, int m,
                        const Vector& theta, const IpsmlConfig& mc, Vector* se) {
  const auto est = mc_grad_log_selection_probability(rule, model, theta, m, mc.K, mc.fd_step, mc.seed, mc.workers);
  if (se) *se = est.standard_error;
  return reduced_score(model, ml_hat, theta) - est.value;
}

Matrix relaxed_metric(const ModelSpec& model, const Vector& ml_hat, const Vector& theta, bool fisher) {
  return fisher ? fim(model, theta) : Matrix(-reduced_hessian(model, ml_hat, theta));
}

}  // namespace

std::string estimator_method_name(EstimatorMethod method) {
  switch (method) {
    case EstimatorMethod::ML: return "ml";
    case EstimatorMethod::MVU: return "mvu";
    case EstimatorMethod::UV: return "uv";
    case EstimatorMethod::ClosedForm: return "psml_closed";
    case EstimatorMethod::GridSearch: return "psml_grid";
    case EstimatorMethod::NewtonRaphson: return "psml_nr";
    case EstimatorMethod::FisherScoring: return "psml_fs";
    case EstimatorMethod::MbpExact: return "psml_mbp";
    case EstimatorMethod::MbpNewton: return "psml_mbp_newton";
    case EstimatorMethod::MbpFisher: return "psml_mbp_fisher";
    case EstimatorMethod::Ipsml: return "ipsml";
  }
  return "unknown";
}

void SolverConfig::validate() const {
  if (max_iterations < 1) fail(ErrorCode::InvalidArgument, "max_iterations must be at least 1");
  if (!(score_tolerance > 0.0)) fail(ErrorCode::InvalidArgument, "score_tolerance must be positive");
  if (!(step_damping > 0.0 && step_damping <= 1.0)) fail(ErrorCode::InvalidArgument, "step_damping must lie in (0, 1]");
}

Vector psml_score_ml(const ModelSpec& model, const SelectionRule& rule, const Vector& ml_hat, int m,
                     const Vector& theta) {
  check_problem(model, rule, ml_hat, m);
  validate_theta(model, theta);
  return reduced_score(model, ml_hat, theta) - grad_log_selection_probability(rule, model, theta, m);
}

Vector psml_score(const ModelSpec& model, const SelectionRule& rule, const ObservationSet& x, const Vector& theta,
                  std::optional<int> selected) {
  const Vector ml = ml_estimate(model, x);
  return psml_score_ml(model, rule, ml, resolve_selected(model, rule, ml, selected), theta);
}

double psml_objective_ml(const ModelSpec& model, const SelectionRule& rule, const Vector& ml_hat, int m,
                         const Vector& theta) {
  if (!in_domain(model, theta)) return kNegInf;
  return reduced_log_likelihood(model, ml_hat, theta) - log_selection_probability(rule, model, theta, m);
}

Matrix psml_hessian_ml(const ModelSpec& model, const SelectionRule& rule, const Vector& ml_hat, int m,
                       const Vector& theta) {
  check_problem(model, rule, ml_hat, m);
  validate_theta(model, theta);
  const auto h_sel = analytic_hessian_log_selection_probability(rule, model, theta, m);
  if (!h_sel) fail(ErrorCode::UnsupportedAnalytic, "post-selection Hessian needs an analytic selection Hessian");
  return reduced_hessian(model, ml_hat, theta) - *h_sel;
}

GridBounds default_grid_bounds(const ModelSpec& model, const Vector& ml_hat) {
  GridBounds b{Vector(model.M), Vector(model.M)};
  for (int l = 0; l < model.M; ++l) {
    if (model.family == Family::GaussianLinear) {
      const double spread = 10.0 * std::sqrt(model.noise_variances[l] / model.N) + 2.0 * inf_norm(ml_hat - Vector::Constant(model.M, ml_hat[l]));
      b.lower[l] = ml_hat[l] - spread;
      b.upper[l] = ml_hat[l] + spread;
    } else {
      b.lower[l] = ml_hat[l] / 50.0;
      b.upper[l] = ml_hat[l] * 50.0;
    }
  }
  return b;
}

EstimateResult psml_grid_search_ml(const ModelSpec& model, const SelectionRule& rule, const Vector& ml_hat, int m,
                                   const GridBounds& bounds, int resolution, const SolverConfig& cfg) {
  check_problem(model, rule, ml_hat, m);
  cfg.validate();
  const int M = model.M;
  if (resolution < 2) fail(ErrorCode::InvalidArgument, "grid resolution must be at least 2");
  if (bounds.lower.size() != M || bounds.upper.size() != M) fail(ErrorCode::DimensionMismatch, "grid bounds length");
  if (!bounds.lower.allFinite() || !bounds.upper.allFinite() || !(bounds.lower.array() < bounds.upper.array()).all()) {
    fail(ErrorCode::InvalidArgument, "grid bounds must be finite with lower < upper");
  }
  const Vector spacing = (bounds.upper - bounds.lower) / (resolution - 1);

  std::vector<int> index(M, 0);
  std::vector<int> best_index(M, 0);
  double best = kNegInf;
  Vector point(M);
  for (;;) {
    for (int l = 0; l < M; ++l) point[l] = bounds.lower[l] + index[l] * spacing[l];
    const double value = psml_objective_ml(model, rule, ml_hat, m, point);
    if (value > best) {
      best = value;
      best_index = index;
    }
    int l = 0;
    while (l < M && ++index[l] == resolution) index[l++] = 0;
    if (l == M) break;
  }
  if (best == kNegInf) fail(ErrorCode::Degenerate, "objective is −∞ on the whole grid");

  EstimateResult r = make_result(Vector(M), m, EstimatorMethod::GridSearch);
  for (int l = 0; l < M; ++l) {
    r.theta_hat[l] = bounds.lower[l] + best_index[l] * spacing[l];
    if (best_index[l] == 0 || best_index[l] == resolution - 1) r.boundary_hit = true;
  }

  // Coordinate-wise bisection on the post-selection score, repeated until the
  // point stops moving.
  Vector theta = r.theta_hat;
  auto score_component = [&](int l, double value) {
    Vector probe = theta;
    probe[l] = value;
    if (!in_domain(model, probe)) return std::numeric_limits<double>::quiet_NaN();
    return psml_score_ml(model, rule, ml_hat, m, probe)[l];
  };
  const bool polish = analytic_hessian_log_selection_probability(rule, model, theta, m).has_value();
  const int max_passes = polish ? 20 : 100 * cfg.max_iterations;
  int pass = 0;
  for (; pass < max_passes; ++pass) {
    double moved = 0.0;
    for (int l = 0; l < M; ++l) {
      double width = spacing[l];
      double lo = theta[l] - width;
      double hi = theta[l] + width;
      double s_lo = score_component(l, lo);
      double s_hi = score_component(l, hi);
      for (int grow = 0; grow < 8 && !(s_lo > 0.0 && s_hi < 0.0); ++grow) {
        width *= 2.0;
        if (!(s_lo > 0.0)) {
          lo = theta[l] - width;
          if (model.family != Family::GaussianLinear && lo <= 0.0) lo = theta[l] * std::ldexp(1.0, -(grow + 1));
          s_lo = score_component(l, lo);
        }
        if (!(s_hi < 0.0)) {
          hi = theta[l] + width;
          s_hi = score_component(l, hi);
        }
      }
      if (!(s_lo > 0.0 && s_hi < 0.0)) continue;
      for (int k = 0; k < 200; ++k) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        const double s_mid = score_component(l, mid);
        if (s_mid > 0.0) {
          lo = mid;
        } else if (s_mid < 0.0) {
          hi = mid;
        } else {
          lo = hi = mid;
          break;
        }
      }
      const double next = 0.5 * (lo + hi);
      moved = std::max(moved, std::abs(next - theta[l]));
      theta[l] = next;
    }
    if (moved <= 1e-14 * (1.0 + inf_norm(theta))) {
      ++pass;
      break;
    }
  }
  r.theta_hat = theta;
  r.iterations = pass;
  r.final_score_norm = inf_norm(psml_score_ml(model, rule, ml_hat, m, theta));
  if (polish && r.final_score_norm > cfg.score_tolerance) {
    // Newton polish from the refined grid point.
    SolverConfig local = cfg;
    local.initial_theta = theta;
    try {
      const EstimateResult nr = psml_newton_raphson_ml(model, rule, ml_hat, m, local);
      if (psml_objective_ml(model, rule, ml_hat, m, nr.theta_hat) >= psml_objective_ml(model, rule, ml_hat, m, theta)) {
        r.theta_hat = nr.theta_hat;
        r.iterations += nr.iterations;
        r.final_score_norm = nr.final_score_norm;
      }
    } catch (const Error&) {
    }
  }
  r.converged = r.final_score_norm <= cfg.score_tolerance;
  return r;
}

EstimateResult psml_grid_search(const ModelSpec& model, const SelectionRule& rule, const ObservationSet& x,
                                const GridBounds& bounds, int resolution, const SolverConfig& cfg,
                                std::optional<int> selected) {
  const Vector ml = ml_estimate(model, x);
  return psml_grid_search_ml(model, rule, ml, resolve_selected(model, rule, ml, selected), bounds, resolution, cfg);
}

EstimateResult psml_newton_raphson_ml(const ModelSpec& model, const SelectionRule& rule, const Vector& ml_hat, int m,
                                      const SolverConfig& cfg) {
  check_problem(model, rule, ml_hat, m);
  cfg.validate();
  return damped_ascent(model, rule, ml_hat, m, cfg, EstimatorMethod::NewtonRaphson,
                       [&](const Vector& theta, const Vector& s) -> Vector {
                         const Matrix H = psml_hessian_ml(model, rule, ml_hat, m, theta);
                         Vector d = -solve_checked(H, s, ErrorCode::SingularHessian);
                         if (d.dot(s) <= 0.0) {
                           // Not an ascent direction: fall back to the expected curvature.
                           const auto J = psfim_analytic(model, rule, theta, m);
                           if (J) d = solve_checked(*J, s, ErrorCode::SingularHessian);
                         }
                         return d;
                       });
}

EstimateResult psml_newton_raphson(const ModelSpec& model, const SelectionRule& rule, const ObservationSet& x,
                                   const SolverConfig& cfg, std::optional<int> selected) {
  const Vector ml = ml_estimate(model, x);
  return psml_newton_raphson_ml(model, rule, ml, resolve_selected(model, rule, ml, selected), cfg);
}

EstimateResult psml_fisher_scoring_ml(const ModelSpec& model, const SelectionRule& rule, const Vector& ml_hat, int m,
                                      const SolverConfig& cfg) {
  check_problem(model, rule, ml_hat, m);
  cfg.validate();
  return damped_ascent(model, rule, ml_hat, m, cfg, EstimatorMethod::FisherScoring,
                       [&](const Vector& theta, const Vector& s) -> Vector {
                         const auto J = psfim_analytic(model, rule, theta, m);
                         if (!J) fail(ErrorCode::UnsupportedAnalytic, "Fisher scoring needs an analytic PSFIM");
                         const Matrix H = -*J;
                         return -solve_checked(H, s, ErrorCode::SingularPsfim);
                       });
}

EstimateResult psml_fisher_scoring(const ModelSpec& model, const SelectionRule& rule, const ObservationSet& x,
                                   const SolverConfig& cfg, std::optional<int> selected) {
  const Vector ml = ml_estimate(model, x);
  return psml_fisher_scoring_ml(model, rule, ml, resolve_selected(model, rule, ml, selected), cfg);
}

EstimateResult psml_mbp_ml(const ModelSpec& model, const SelectionRule& rule, const Vector& ml_hat, int m,
                           const SolverConfig& cfg, MbpVariant variant) {
  check_problem(model, rule, ml_hat, m);
  cfg.validate();
  const EstimatorMethod method = variant == MbpVariant::Exact           ? EstimatorMethod::MbpExact
                                 : variant == MbpVariant::NewtonRelaxed ? EstimatorMethod::MbpNewton
                                                                        : EstimatorMethod::MbpFisher;
  Vector theta = starting_point(model, ml_hat, cfg);
  const double limit = 1e3 * std::max(theta.norm(), 1.0);
  EstimateResult r = make_result(theta, m, method);
  r.converged = false;
  for (int it = 1; it <= cfg.max_iterations; ++it) {
    const Vector s = psml_score_ml(model, rule, ml_hat, m, theta);
    r.iterations = it;
    r.final_score_norm = inf_norm(s);
    r.theta_hat = theta;
    if (r.final_score_norm <= cfg.score_tolerance) {
      r.converged = true;
      return r;
    }
    Vector next;
    if (variant == MbpVariant::Exact) {
      next = mbp_exact_step(model, ml_hat, theta, grad_log_selection_probability(rule, model, theta, m));
    } else {
      const Matrix metric = relaxed_metric(model, ml_hat, theta, variant == MbpVariant::FisherRelaxed);
      const Vector d = solve_checked(metric, s, ErrorCode::SingularHessian);
      double step = 1.0;
      next = theta + d;
      for (int k = 0; k < kMaxHalvings && !in_domain(model, next); ++k) {
        step *= 0.5;
        next = theta + step * d;
      }
    }
    if (!in_domain(model, next) || next.norm() > limit) {
      fail(ErrorCode::InformationDominanceViolated, "maximization-by-parts iterates diverge");
    }
    theta = next;
  }
  r.theta_hat = theta;
  r.final_score_norm = inf_norm(psml_score_ml(model, rule, ml_hat, m, theta));
  r.converged = r.final_score_norm <= cfg.score_tolerance;
  return r;
}

EstimateResult psml_mbp(const ModelSpec& model, const SelectionRule& rule, const ObservationSet& x,
                        const SolverConfig& cfg, MbpVariant variant, std::optional<int> selected) {
  const Vector ml = ml_estimate(model, x);
  return psml_mbp_ml(model, rule, ml, resolve_selected(model, rule, ml, selected), cfg, variant);
}

EstimateResult ipsml_ml(const ModelSpec& model, const SelectionRule& rule, const Vector& ml_hat, int m,
                        const SolverConfig& cfg, const IpsmlConfig& mc) {
  check_problem(model, rule, ml_hat, m);
  cfg.validate();
  if (!(mc.theta_tolerance > 0.0)) fail(ErrorCode::InvalidArgument, "theta_tolerance must be positive");
  Vector theta = starting_point(model, ml_hat, cfg);
  EstimateResult r = make_result(theta, m, EstimatorMethod::Ipsml);
  r.converged = false;
  Vector se(model.M);
  for (int it = 1; it <= cfg.max_iterations; ++it) {
    const Vector s = mc_psml_gradient(model, rule, ml_hat, m, theta, mc, &se);
    const Matrix metric_inv = symmetric_inverse(relaxed_metric(model, ml_hat, theta, mc.fisher), ErrorCode::SingularHessian);
    const Vector update = metric_inv * s;
    const Vector update_se = (metric_inv * se.asDiagonal() * se.asDiagonal() * metric_inv.transpose()).diagonal().cwiseSqrt();
    r.iterations = it;
    r.final_score_norm = inf_norm(s);
    const bool small = inf_norm(update) < mc.theta_tolerance;
    const bool within_noise = (update.cwiseAbs().array() <= update_se.array()).all();
    if (small || within_noise) {
      r.converged = true;
      break;
    }
    double step = cfg.step_damping;
    Vector next = theta + step * update;
    for (int k = 0; k < kMaxHalvings && !in_domain(model, next); ++k) {
      step *= 0.5;
      next = theta + step * update;
    }
    if (!in_domain(model, next)) break;
    theta = next;
  }
  r.theta_hat = theta;

  // Standard error of the fixed point: linearize the simulated score around θ̂.
  Matrix jac(model.M, model.M);
  for (int j = 0; j < model.M; ++j) {
    const double h = mc.fd_step ? *mc.fd_step : 0.05 * (1.0 + std::abs(theta[j]));
    Vector plus = theta;
    Vector minus = theta;
    plus[j] += 0.5 * h;
    minus[j] -= 0.5 * h;
    if (!in_domain(model, minus)) minus = theta;
    jac.col(j) = (mc_psml_gradient(model, rule, ml_hat, m, plus, mc, nullptr) -
                  mc_psml_gradient(model, rule, ml_hat, m, minus, mc, nullptr)) /
                 (plus[j] - minus[j]);
  }
  mc_psml_gradient(model, rule, ml_hat, m, theta, mc, &se);
  const Matrix jac_inv = jac.fullPivLu().inverse();
  r.theta_standard_error = (jac_inv * se.asDiagonal() * se.asDiagonal() * jac_inv.transpose()).diagonal().cwiseSqrt();
  return r;
}

EstimateResult ipsml(const ModelSpec& model, const SelectionRule& rule, const ObservationSet& x,
                     const SolverConfig& cfg, const IpsmlConfig& mc, std::optional<int> selected) {
  const Vector ml = ml_estimate(model, x);
  return ipsml_ml(model, rule, ml, resolve_selected(model, rule, ml, selected), cfg, mc);
}

EstimateResult psml_exponential_closed_ml(const ModelSpec& model, const Vector& ml_hat, int m,
                                          const SolverConfig& cfg) {
  if (model.family != Family::Exponential || model.M != 2) {
    fail(ErrorCode::InvalidArgument, "closed-form PSML needs two exponential populations");
  }
  const SelectionRule rule = SelectionRule::sms();
  check_problem(model, rule, ml_hat, m);
  if (!(ml_hat.array() > 0.0).all()) fail(ErrorCode::InvalidArgument, "exponential statistics must be positive");
  const int k = 1 - m;
  EstimateResult r = make_result(Vector(2), m, EstimatorMethod::ClosedForm);
  if (model.N == 1) {
    const double ym = ml_hat[m];
    const double yk = ml_hat[k];
    if (ym == 2.0 * yk) fail(ErrorCode::Degenerate, "y_m = 2 y_k has no PSML solution");
    r.theta_hat[m] = ym - yk;
    r.theta_hat[k] = yk * (ym - yk) / (ym - 2.0 * yk);
    r.iterations = 1;
  } else {
    const double ratio = ml_hat[k] / ml_hat[m];
    auto shrink = [&](double q) {
      Vector t(2);
      t[m] = q;
      t[k] = 1.0 - q;
      return exponential_sms_context(model, t, m).f;
    };
    auto residual = [&](double q) {
      const double f = shrink(q);
      return q * (1.0 + ratio * (1.0 - f) / (1.0 + f)) - 1.0;
    };
    // residual(1⁻) = ratio > 0; walk down to the first sign change.
    double hi = 1.0 - 1e-9;
    double lo = hi;
    bool bracketed = false;
    for (int j = 1; j < 1000; ++j) {
      lo = 1.0 - j * 1e-3;
      if (residual(lo) < 0.0) {
        bracketed = true;
        break;
      }
      hi = lo;
    }
    if (!bracketed) fail(ErrorCode::FixedPointNotBracketed, "no root of the PSML fixed point in (0, 1)");
    int steps = 0;
    while (hi - lo > 1e-14 && steps < 200) {
      const double mid = 0.5 * (lo + hi);
      if (residual(mid) < 0.0) {
        lo = mid;
      } else {
        hi = mid;
      }
      ++steps;
    }
    const double f = shrink(0.5 * (lo + hi));
    r.theta_hat[m] = ml_hat[m] / (1.0 - f);
    r.theta_hat[k] = ml_hat[k] / (1.0 + f);
    r.iterations = steps;
  }
  if (in_domain(model, r.theta_hat)) {
    r.final_score_norm = inf_norm(psml_score_ml(model, rule, ml_hat, m, r.theta_hat));
    r.converged = r.final_score_norm <= cfg.score_tolerance;
  } else {
    r.final_score_norm = std::numeric_limits<double>::quiet_NaN();
    r.converged = false;
  }
  return r;
}

EstimateResult psml_exponential_closed(const ModelSpec& model, const ObservationSet& x) {
  const Vector ml = ml_estimate(model, x);
  return psml_exponential_closed_ml(model, ml, select_from_ml(SelectionRule::sms(), ml));
}

Vector uv_estimate_ml(const ModelSpec& model, const Vector& ml_hat) {
  if (model.M != 2) fail(ErrorCode::InvalidArgument, "U-V estimator needs two populations");
  const double n = model.N;
  Vector out(2);
  if (model.family == Family::Uniform) {
    const Vector mvu = ml_hat * ((n + 1.0) / n);
    for (int j = 0; j < 2; ++j) {
      const int k = 1 - j;
      out[j] = mvu[j] - mvu[k] * std::pow(mvu[k] / mvu[j], n - 1.0) / (n + 1.0);
    }
    return out;
  }
  if (model.family == Family::Exponential) {
    for (int j = 0; j < 2; ++j) {
      const int k = 1 - j;
      out[j] = ml_hat[j] - ml_hat[k] * std::pow(ml_hat[k] / ml_hat[j], n - 1.0);
    }
    return out;
  }
  fail(ErrorCode::InvalidArgument, "U-V estimator is defined for the uniform and exponential families");
}

Vector uv_estimate(const ModelSpec& model, const ObservationSet& x) { return uv_estimate_ml(model, ml_estimate(model, x)); }

}  // namespace psel
