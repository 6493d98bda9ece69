#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "psel/rng.hpp"

namespace psel {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class Family { GaussianLinear, Exponential, Uniform };

/// Independent populations sharing a sample count N. Population indices are
/// zero-based throughout the library.
struct ModelSpec {
  Family family = Family::GaussianLinear;
  int M = 2;
  int N = 1;
  std::vector<double> noise_variances;  // GaussianLinear only

  static ModelSpec gaussian(std::vector<double> noise_variances, int N);
  static ModelSpec exponential(int M, int N);
  static ModelSpec uniform(int M, int N);

  void validate() const;
  bool regular() const { return family != Family::Uniform; }

  /// σ² = (σ_1² + σ_2²)/N of the two-population Gaussian model.
  double pair_variance() const;
  /// Noise variance divided by N for population m.
  double mean_variance(int m) const;

  bool operator==(const ModelSpec&) const = default;
};

struct ObservationSet {
  std::vector<std::vector<double>> populations;
  std::optional<std::uint64_t> seed;
};

std::string family_name(Family family);

/// Throws InvalidArgument/DimensionMismatch when theta is not a valid parameter.
void validate_theta(const ModelSpec& model, const Vector& theta);
void validate_observations(const ModelSpec& model, const ObservationSet& x);

/// Returns −infinity where the density is zero.
double log_likelihood(const ModelSpec& model, const ObservationSet& x, const Vector& theta);
Vector score(const ModelSpec& model, const ObservationSet& x, const Vector& theta);
Matrix hessian(const ModelSpec& model, const ObservationSet& x, const Vector& theta);
Matrix fim(const ModelSpec& model, const Vector& theta);

ObservationSet sample(const ModelSpec& model, const Vector& theta, Rng& rng);

/// Per-population sufficient statistic: sample mean, or sample maximum for uniform.
Vector ml_estimate(const ModelSpec& model, const ObservationSet& x);
Vector mvu_estimate_uniform(const ModelSpec& model, const ObservationSet& x);

// The likelihood calculus depends on x only through the ML estimate. The
// functions below take that statistic directly; the log-likelihood is exact up
// to a term that does not depend on theta.
double reduced_log_likelihood(const ModelSpec& model, const Vector& ml_hat, const Vector& theta);
Vector reduced_score(const ModelSpec& model, const Vector& ml_hat, const Vector& theta);
Matrix reduced_hessian(const ModelSpec& model, const Vector& ml_hat, const Vector& theta);

/// Draws the ML statistic from its exact sampling distribution. Population m
/// uses the stream derive_seed(key, {m}).
Vector sample_ml(const ModelSpec& model, const Vector& theta, std::uint64_t key);

}  // namespace psel
