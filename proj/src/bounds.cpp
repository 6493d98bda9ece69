#include "psel/bounds.hpp"

#include <cmath>
#include <limits>

#include "psel/batching.hpp"
#include "psel/errors.hpp"
#include "psel/linalg.hpp"
#include "psel/special.hpp"

namespace psel {

namespace {

bool gaussian_pair_sms(const ModelSpec& model, const SelectionRule& rule) {
  return rule.kind == RuleKind::SMS && model.family == Family::GaussianLinear && model.M == 2;
}

bool exponential_pair_sms(const ModelSpec& model, const SelectionRule& rule) {
  return rule.kind == RuleKind::SMS && model.family == Family::Exponential && model.M == 2;
}

void require_regular(const ModelSpec& model) {
  if (!model.regular()) {
    fail(ErrorCode::NonRegularFamily, "non-regular family: the post-selection Fisher information does not exist");
  }
}

void check_inputs(const ModelSpec& model, const SelectionRule& rule, const Vector& theta) {
  model.validate();
  rule.validate(model.M);
  require_regular(model);
  validate_theta(model, theta);
}

double nan() { return std::numeric_limits<double>::quiet_NaN(); }

ModelSpec gaussian_pair(const std::vector<double>& sigma2s, int N) {
  if (sigma2s.size() != 2) fail(ErrorCode::InvalidArgument, "closed form needs exactly two populations");
  return ModelSpec::gaussian(sigma2s, N);
}

PsfimResult psfim_mc(const ModelSpec& model, const SelectionRule& rule, const Vector& theta, int m,
                     PsfimMethod method, const McOptions& opts) {
  if (opts.replications < kBatches) fail(ErrorCode::InvalidArgument, "too few replications for batch errors");
  const int M = model.M;
  std::optional<Vector> g_exact;
  if (has_analytic_selection(rule, model)) g_exact = grad_log_selection_probability(rule, model, theta, m);
  std::optional<Matrix> h_sel;
  if (method == PsfimMethod::HessianForm) {
    h_sel = analytic_hessian_log_selection_probability(rule, model, theta, m);
    if (!h_sel) fail(ErrorCode::UnsupportedAnalytic, "Hessian form needs an analytic selection Hessian");
  }

  // Accumulator layout: [attempts, accepted, Σs (M), Σssᵀ (M²), ΣH (M²)].
  const std::size_t width = 2 + M + 2 * M * M;
  const bool accept_all = rule.kind == RuleKind::Randomized;
  const auto batches = run_batches<std::vector<double>>(opts.replications, opts.workers, [&](const BatchRange& r) {
    std::vector<double> acc(width, 0.0);
    const long long quota = r.end - r.begin;
    const long long cap = 10000 + 1000 * quota;
    long long accepted = 0;
    long long attempt = 0;
    while (accepted < quota) {
      if (attempt >= cap) fail(ErrorCode::ZeroFrequency, "conditional sampling acceptance rate too low");
      const auto key = derive_seed(opts.seed, {stream_tag::psfim, static_cast<std::uint64_t>(method),
                                               static_cast<std::uint64_t>(m), static_cast<std::uint64_t>(r.index),
                                               static_cast<std::uint64_t>(attempt)});
      ++attempt;
      const Vector ml = sample_ml(model, theta, key);
      if (!accept_all && select_from_ml(rule, ml) != m) continue;
      ++accepted;
      const Vector s = reduced_score(model, ml, theta);
      const Matrix H = reduced_hessian(model, ml, theta);
      for (int i = 0; i < M; ++i) {
        acc[2 + i] += s[i];
        for (int j = 0; j < M; ++j) {
          acc[2 + M + i * M + j] += s[i] * s[j];
          acc[2 + M + M * M + i * M + j] += H(i, j);
        }
      }
    }
    acc[0] = static_cast<double>(attempt);
    acc[1] = static_cast<double>(accepted);
    return acc;
  });

  auto assemble = [&](const std::vector<double>& sums) {
    const double n = sums[1];
    Vector mean_s(M);
    Matrix mean_ss(M, M);
    Matrix mean_h(M, M);
    for (int i = 0; i < M; ++i) {
      mean_s[i] = sums[2 + i] / n;
      for (int j = 0; j < M; ++j) {
        mean_ss(i, j) = sums[2 + M + i * M + j] / n;
        mean_h(i, j) = sums[2 + M + M * M + i * M + j] / n;
      }
    }
    const Vector g = g_exact ? *g_exact : mean_s;
    switch (method) {
      case PsfimMethod::Definition: {
        Matrix J = mean_ss - mean_s * g.transpose() - g * mean_s.transpose() + g * g.transpose();
        return Matrix(0.5 * (J + J.transpose()));
      }
      case PsfimMethod::ScoreForm: return Matrix(mean_ss - g * g.transpose());
      case PsfimMethod::HessianForm: return Matrix(-mean_h + *h_sel);
      case PsfimMethod::ClosedForm: break;
    }
    return Matrix(Matrix::Constant(M, M, nan()));
  };

  PsfimResult out;
  out.m = m;
  out.method = method;
  Matrix se(M, M);
  for (int i = 0; i < M; ++i) {
    for (int j = 0; j < M; ++j) {
      const auto [value, err] = jackknife(batches, [&](const std::vector<double>& s) { return assemble(s)(i, j); });
      se(i, j) = err;
    }
  }
  std::vector<double> total(width, 0.0);
  for (const auto& b : batches)
    for (std::size_t i = 0; i < width; ++i) total[i] += b[i];
  out.J = assemble(total);
  out.mc_standard_error = se;
  out.accepted = static_cast<long long>(total[1]);
  out.acceptance_rate = accept_all ? rule.weights[m] : total[1] / total[0];
  symmetric_inverse(out.J, ErrorCode::SingularPsfim);
  out.inverse_diagonal_se = jackknife(batches, [&](const std::vector<double>& s) {
                              const Matrix J = assemble(s);
                              const double det = J.determinant();
                              if (det == 0.0) return nan();
                              return Matrix(J.inverse())(m, m);
                            }).second;
  return out;
}

}  // namespace

std::string method_name(PsfimMethod method) {
  switch (method) {
    case PsfimMethod::Definition: return "definition";
    case PsfimMethod::ScoreForm: return "score";
    case PsfimMethod::HessianForm: return "hessian";
    case PsfimMethod::ClosedForm: return "closed";
  }
  return "unknown";
}

Matrix psfim_closed_gaussian(const Vector& theta, const std::vector<double>& sigma2s, int N, int m) {
  const ModelSpec model = gaussian_pair(sigma2s, N);
  validate_theta(model, theta);
  const auto ctx = gaussian_sms_context(model, theta, m);
  const double c = c_factor(ctx.delta) / ctx.sigma2;
  Matrix J(2, 2);
  J << N / sigma2s[0] + c, -c, -c, N / sigma2s[1] + c;
  return J;
}

Matrix psfim_inverse_gaussian(const Vector& theta, const std::vector<double>& sigma2s, int N, int m) {
  const ModelSpec model = gaussian_pair(sigma2s, N);
  validate_theta(model, theta);
  const auto ctx = gaussian_sms_context(model, theta, m);
  const double c = c_factor(ctx.delta);
  const double c1 = c_factor_plus_one(ctx.delta);
  if (!(c1 > 0.0)) fail(ErrorCode::SingularPsfim, "c(Δ) = −1");
  const double s1 = sigma2s[0];
  const double s2 = sigma2s[1];
  Matrix D(2, 2);
  D << s1 * s1, -s1 * s2, -s1 * s2, s2 * s2;
  Matrix Sigma = Matrix::Zero(2, 2);
  Sigma(0, 0) = s1;
  Sigma(1, 1) = s2;
  return (Sigma - (c / (N * ctx.sigma2 * c1)) * D) / N;
}

std::optional<Matrix> psfim_analytic(const ModelSpec& model, const SelectionRule& rule, const Vector& theta, int m) {
  check_inputs(model, rule, theta);
  if (rule.kind == RuleKind::Randomized) return fim(model, theta);
  if (gaussian_pair_sms(model, rule)) return psfim_closed_gaussian(theta, model.noise_variances, model.N, m);
  if (exponential_pair_sms(model, rule)) {
    const int k = 1 - m;
    const auto ctx = exponential_sms_context(model, theta, m);
    const double n = model.N;
    Matrix J = *analytic_hessian_log_selection_probability(rule, model, theta, m);
    J(m, m) += n * (1.0 + 2.0 * ctx.alpha) / (theta[m] * theta[m]);
    J(k, k) += n * (1.0 - 2.0 * ctx.alpha) / (theta[k] * theta[k]);
    return J;
  }
  return std::nullopt;
}

PsfimResult psfim(const ModelSpec& model, const SelectionRule& rule, const Vector& theta, int m, PsfimMethod method,
                  const McOptions& opts) {
  check_inputs(model, rule, theta);
  if (m < 0 || m >= model.M) fail(ErrorCode::InvalidArgument, "selected index out of range");
  if (method != PsfimMethod::ClosedForm) return psfim_mc(model, rule, theta, m, method, opts);
  if (rule.kind != RuleKind::Randomized && !gaussian_pair_sms(model, rule)) {
    fail(ErrorCode::UnsupportedClosedForm, "closed-form PSFIM exists for two Gaussian populations only");
  }
  PsfimResult out;
  out.m = m;
  out.method = method;
  out.J = *psfim_analytic(model, rule, theta, m);
  symmetric_inverse(out.J, ErrorCode::SingularPsfim);
  return out;
}

PsiCrbReport psi_crb_gaussian_closed(const Vector& theta, const std::vector<double>& sigma2s, int N) {
  const ModelSpec model = gaussian_pair(sigma2s, N);
  validate_theta(model, theta);
  PsiCrbReport report;
  report.theta = theta;
  report.rule = SelectionRule::sms();
  report.model = model;
  report.method = PsfimMethod::ClosedForm;
  const double total_variance = sigma2s[0] + sigma2s[1];
  for (int m = 0; m < 2; ++m) {
    const double delta = gaussian_sms_context(model, theta, m).delta;
    ComponentBound cb;
    cb.m = m;
    cb.pr_select = normal_cdf(delta);
    cb.bound = sigma2s[m] / N * zeta_factor(delta, sigma2s[m] / total_variance);
    report.aggregate += cb.pr_select * cb.bound;
    report.per_component.push_back(cb);
  }
  return report;
}

PsiCrbReport psi_crb(const ModelSpec& model, const SelectionRule& rule, const Vector& theta, PsfimMethod method,
                     const McOptions& opts) {
  check_inputs(model, rule, theta);
  if (method == PsfimMethod::ClosedForm && gaussian_pair_sms(model, rule)) {
    return psi_crb_gaussian_closed(theta, model.noise_variances, model.N);
  }
  PsiCrbReport report;
  report.theta = theta;
  report.rule = rule;
  report.model = model;
  report.method = method;
  double variance = 0.0;
  for (int m = 0; m < model.M; ++m) {
    ComponentBound cb;
    cb.m = m;
    McOptions pr_opts = opts;
    pr_opts.seed = derive_seed(opts.seed, {stream_tag::selection_probability, static_cast<std::uint64_t>(m)});
    const auto pr = selection_probability(rule, model, theta, m, pr_opts);
    cb.pr_select = pr.value;
    cb.pr_se = pr.standard_error;
    if (cb.pr_select > 0.0 || method == PsfimMethod::ClosedForm) {
      const auto J = psfim(model, rule, theta, m, method, opts);
      cb.bound = symmetric_inverse(J.J, ErrorCode::SingularPsfim)(m, m);
      cb.bound_se = J.inverse_diagonal_se;
    } else {
      cb.bound = nan();
    }
    if (cb.pr_select > 0.0) {
      report.aggregate += cb.pr_select * cb.bound;
      variance += std::pow(cb.pr_select * cb.bound_se, 2) + std::pow(cb.bound * cb.pr_se, 2);
    }
    report.per_component.push_back(cb);
  }
  report.aggregate_se = std::sqrt(variance);
  return report;
}

double psi_crb_exponential_n1(double theta_m, double theta_k) {
  if (!(theta_m > 0.0) || !(theta_k > 0.0)) fail(ErrorCode::InvalidArgument, "exponential parameters must be positive");
  return (theta_m * theta_m * theta_m + theta_k * theta_k * theta_k) / (theta_m + theta_k);
}

double psi_crb_exponential_n1(const ModelSpec& model, const Vector& theta) {
  if (model.family != Family::Exponential || model.M != 2) {
    fail(ErrorCode::InvalidArgument, "closed form needs the two-population exponential model");
  }
  if (model.N != 1) fail(ErrorCode::InvalidArgument, "closed form holds for N = 1 only");
  validate_theta(model, theta);
  return psi_crb_exponential_n1(theta[0], theta[1]);
}

double biased_psi_crb(const ModelSpec& model, const SelectionRule& rule, const Vector& theta,
                      const BiasGradientProvider& provider, const McOptions& opts) {
  check_inputs(model, rule, theta);
  const Matrix G = provider(theta);
  if (G.rows() != model.M || G.cols() != model.M) fail(ErrorCode::DimensionMismatch, "bias gradient must be M×M");
  double total = 0.0;
  for (int m = 0; m < model.M; ++m) {
    McOptions pr_opts = opts;
    pr_opts.seed = derive_seed(opts.seed, {stream_tag::selection_probability, static_cast<std::uint64_t>(m)});
    const double pr = selection_probability(rule, model, theta, m, pr_opts).value;
    if (!(pr > 0.0)) continue;
    auto J = psfim_analytic(model, rule, theta, m);
    if (!J) {
      const bool hessian_ok = analytic_hessian_log_selection_probability(rule, model, theta, m).has_value();
      J = psfim(model, rule, theta, m, hessian_ok ? PsfimMethod::HessianForm : PsfimMethod::Definition, opts).J;
    }
    const Vector v = G.col(m);
    total += pr * v.dot(symmetric_inverse(*J, ErrorCode::SingularPsfim) * v);
  }
  return total;
}

Matrix analytic_conditional_bias(const ModelSpec& model, const SelectionRule& rule, const Vector& theta) {
  check_inputs(model, rule, theta);
  if (rule.kind == RuleKind::Randomized) return Matrix::Zero(model.M, model.M);
  Matrix B(2, 2);
  if (gaussian_pair_sms(model, rule)) {
    for (int m = 0; m < 2; ++m) {
      const int k = 1 - m;
      const auto ctx = gaussian_sms_context(model, theta, m);
      const double scale = inverse_mills(ctx.delta) / (model.N * std::sqrt(ctx.sigma2));
      B(m, m) = model.noise_variances[m] * scale;
      B(k, m) = -model.noise_variances[k] * scale;
    }
    return B;
  }
  if (exponential_pair_sms(model, rule)) {
    for (int m = 0; m < 2; ++m) {
      const int k = 1 - m;
      const double alpha = exponential_sms_context(model, theta, m).alpha;
      B(m, m) = theta[m] * alpha;
      B(k, m) = -theta[k] * alpha;
    }
    return B;
  }
  fail(ErrorCode::UnsupportedAnalytic, "conditional bias is analytic for two Gaussian or exponential populations");
}

Matrix analytic_ml_bias_gradient(const ModelSpec& model, const SelectionRule& rule, const Vector& theta) {
  check_inputs(model, rule, theta);
  Matrix G = Matrix::Identity(model.M, model.M);
  if (rule.kind == RuleKind::Randomized) return G;
  if (gaussian_pair_sms(model, rule)) {
    for (int m = 0; m < 2; ++m) {
      const int k = 1 - m;
      const auto ctx = gaussian_sms_context(model, theta, m);
      const double slope = model.noise_variances[m] * c_factor(ctx.delta) / (model.N * ctx.sigma2);
      G(m, m) += slope;
      G(k, m) -= slope;
    }
    return G;
  }
  if (exponential_pair_sms(model, rule)) {
    for (int m = 0; m < 2; ++m) {
      const int k = 1 - m;
      const auto ctx = exponential_sms_context(model, theta, m);
      const double e = model.N * (1.0 - 2.0 * ctx.q - ctx.alpha);
      G(m, m) += ctx.alpha * (1.0 + e);
      G(k, m) -= theta[m] * ctx.alpha * e / theta[k];
    }
    return G;
  }
  fail(ErrorCode::UnsupportedAnalytic, "bias gradient is analytic for two Gaussian or exponential populations");
}

}  // namespace psel
