#include "psel/model.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "psel/errors.hpp"

namespace psel {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void require_regular(const ModelSpec& model) {
  if (!model.regular()) {
    fail(ErrorCode::NonRegularFamily,
         "non-regular family: the uniform likelihood does not satisfy the regularity conditions");
  }
}

}  // namespace

ModelSpec ModelSpec::gaussian(std::vector<double> noise_variances, int N) {
  ModelSpec model;
  model.family = Family::GaussianLinear;
  model.M = static_cast<int>(noise_variances.size());
  model.N = N;
  model.noise_variances = std::move(noise_variances);
  model.validate();
  return model;
}

ModelSpec ModelSpec::exponential(int M, int N) {
  ModelSpec model;
  model.family = Family::Exponential;
  model.M = M;
  model.N = N;
  model.validate();
  return model;
}

ModelSpec ModelSpec::uniform(int M, int N) {
  ModelSpec model;
  model.family = Family::Uniform;
  model.M = M;
  model.N = N;
  model.validate();
  return model;
}

void ModelSpec::validate() const {
  if (M < 2) fail(ErrorCode::InvalidArgument, "model needs at least two populations");
  if (N < 1) fail(ErrorCode::InvalidArgument, "sample count N must be at least 1");
  if (family == Family::GaussianLinear) {
    if (static_cast<int>(noise_variances.size()) != M) {
      fail(ErrorCode::DimensionMismatch, "noise_variances must have one entry per population");
    }
    for (double v : noise_variances) {
      if (!(v > 0.0) || !std::isfinite(v)) fail(ErrorCode::InvalidArgument, "noise variances must be positive");
    }
  } else if (!noise_variances.empty()) {
    fail(ErrorCode::InvalidArgument, "noise_variances only apply to the gaussian_linear family");
  }
}

double ModelSpec::pair_variance() const {
  if (family != Family::GaussianLinear || M != 2) {
    fail(ErrorCode::InvalidArgument, "pair variance is defined for the two-population Gaussian model");
  }
  return (noise_variances[0] + noise_variances[1]) / N;
}

double ModelSpec::mean_variance(int m) const { return noise_variances.at(m) / N; }

std::string family_name(Family family) {
  switch (family) {
    case Family::GaussianLinear: return "gaussian_linear";
    case Family::Exponential: return "exponential";
    case Family::Uniform: return "uniform";
  }
  return "unknown";
}

void validate_theta(const ModelSpec& model, const Vector& theta) {
  if (theta.size() != model.M) fail(ErrorCode::DimensionMismatch, "theta length differs from population count");
  for (int m = 0; m < model.M; ++m) {
    if (!std::isfinite(theta[m])) fail(ErrorCode::InvalidArgument, "theta must be finite");
    if (model.family != Family::GaussianLinear && !(theta[m] > 0.0)) {
      fail(ErrorCode::InvalidArgument, "theta must be positive for the " + family_name(model.family) + " family");
    }
  }
}

void validate_observations(const ModelSpec& model, const ObservationSet& x) {
  if (static_cast<int>(x.populations.size()) != model.M) {
    fail(ErrorCode::DimensionMismatch, "observation set has the wrong number of populations");
  }
  for (const auto& y : x.populations) {
    if (y.empty()) fail(ErrorCode::InvalidArgument, "empty population");
    if (static_cast<int>(y.size()) != model.N) {
      fail(ErrorCode::DimensionMismatch, "population size differs from N");
    }
  }
}

double log_likelihood(const ModelSpec& model, const ObservationSet& x, const Vector& theta) {
  validate_observations(model, x);
  validate_theta(model, theta);
  double total = 0.0;
  for (int m = 0; m < model.M; ++m) {
    for (double y : x.populations[m]) {
      switch (model.family) {
        case Family::GaussianLinear: {
          const double v = model.noise_variances[m];
          const double r = y - theta[m];
          total += -0.5 * std::log(2.0 * std::numbers::pi * v) - 0.5 * r * r / v;
          break;
        }
        case Family::Exponential:
          if (!(y > 0.0)) return kNegInf;
          total += -std::log(theta[m]) - y / theta[m];
          break;
        case Family::Uniform:
          if (!(y > 0.0) || y > theta[m]) return kNegInf;
          total += -std::log(theta[m]);
          break;
      }
    }
  }
  return total;
}

Vector score(const ModelSpec& model, const ObservationSet& x, const Vector& theta) {
  require_regular(model);
  validate_theta(model, theta);
  return reduced_score(model, ml_estimate(model, x), theta);
}

Matrix hessian(const ModelSpec& model, const ObservationSet& x, const Vector& theta) {
  require_regular(model);
  validate_theta(model, theta);
  return reduced_hessian(model, ml_estimate(model, x), theta);
}

Matrix fim(const ModelSpec& model, const Vector& theta) {
  require_regular(model);
  validate_theta(model, theta);
  Matrix J = Matrix::Zero(model.M, model.M);
  for (int m = 0; m < model.M; ++m) {
    J(m, m) = model.family == Family::GaussianLinear ? model.N / model.noise_variances[m]
                                                      : model.N / (theta[m] * theta[m]);
  }
  return J;
}

ObservationSet sample(const ModelSpec& model, const Vector& theta, Rng& rng) {
  validate_theta(model, theta);
  ObservationSet x;
  x.populations.assign(model.M, std::vector<double>(model.N));
  for (int m = 0; m < model.M; ++m) {
    for (double& y : x.populations[m]) {
      switch (model.family) {
        case Family::GaussianLinear:
          y = theta[m] + std::sqrt(model.noise_variances[m]) * rng.standard_normal();
          break;
        case Family::Exponential:
          y = -theta[m] * std::log(rng.uniform_open());
          break;
        case Family::Uniform:
          y = theta[m] * rng.uniform_open();
          break;
      }
    }
  }
  return x;
}

Vector ml_estimate(const ModelSpec& model, const ObservationSet& x) {
  validate_observations(model, x);
  Vector out(model.M);
  for (int m = 0; m < model.M; ++m) {
    const auto& y = x.populations[m];
    if (model.family == Family::Uniform) {
      double top = y.front();
      for (double v : y) top = std::max(top, v);
      out[m] = top;
    } else {
      double sum = 0.0;
      for (double v : y) sum += v;
      out[m] = sum / static_cast<double>(y.size());
    }
  }
  return out;
}

Vector mvu_estimate_uniform(const ModelSpec& model, const ObservationSet& x) {
  if (model.family != Family::Uniform) fail(ErrorCode::InvalidArgument, "MVU estimate is defined for the uniform family");
  return ml_estimate(model, x) * ((model.N + 1.0) / model.N);
}

double reduced_log_likelihood(const ModelSpec& model, const Vector& ml_hat, const Vector& theta) {
  double total = 0.0;
  const double n = model.N;
  for (int m = 0; m < model.M; ++m) {
    switch (model.family) {
      case Family::GaussianLinear: {
        const double r = ml_hat[m] - theta[m];
        total += -0.5 * n * r * r / model.noise_variances[m];
        break;
      }
      case Family::Exponential:
        if (!(theta[m] > 0.0)) return kNegInf;
        total += -n * std::log(theta[m]) - n * ml_hat[m] / theta[m];
        break;
      case Family::Uniform:
        if (!(theta[m] > 0.0) || ml_hat[m] > theta[m]) return kNegInf;
        total += -n * std::log(theta[m]);
        break;
    }
  }
  return total;
}

Vector reduced_score(const ModelSpec& model, const Vector& ml_hat, const Vector& theta) {
  require_regular(model);
  Vector g(model.M);
  for (int m = 0; m < model.M; ++m) {
    if (model.family == Family::GaussianLinear) {
      g[m] = model.N * (ml_hat[m] - theta[m]) / model.noise_variances[m];
    } else {
      g[m] = model.N * (ml_hat[m] - theta[m]) / (theta[m] * theta[m]);
    }
  }
  return g;
}

Matrix reduced_hessian(const ModelSpec& model, const Vector& ml_hat, const Vector& theta) {
  require_regular(model);
  Matrix H = Matrix::Zero(model.M, model.M);
  for (int m = 0; m < model.M; ++m) {
    if (model.family == Family::GaussianLinear) {
      H(m, m) = -model.N / model.noise_variances[m];
    } else {
      H(m, m) = model.N * (theta[m] - 2.0 * ml_hat[m]) / (theta[m] * theta[m] * theta[m]);
    }
  }
  return H;
}

Vector sample_ml(const ModelSpec& model, const Vector& theta, std::uint64_t key) {
  Vector out(model.M);
  const double n = model.N;
  for (int m = 0; m < model.M; ++m) {
    Rng rng(derive_seed(key, {static_cast<std::uint64_t>(m)}));
    switch (model.family) {
      case Family::GaussianLinear:
        out[m] = theta[m] + std::sqrt(model.noise_variances[m] / n) * rng.standard_normal();
        break;
      case Family::Exponential:
        if (model.N == 1) {
          out[m] = -theta[m] * std::log(rng.uniform_open());
        } else {
          std::gamma_distribution<double> gamma(n, 1.0);
          out[m] = theta[m] * gamma(rng) / n;
        }
        break;
      case Family::Uniform:
        out[m] = theta[m] * std::pow(rng.uniform_open(), 1.0 / n);
        break;
    }
  }
  return out;
}

}  // namespace psel
