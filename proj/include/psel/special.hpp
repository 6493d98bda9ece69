#pragma once

namespace psel {

/// Standard normal density.
double normal_pdf(double x);

/// Standard normal cdf, Φ(x).
double normal_cdf(double x);

/// log Φ(x), finite for every finite x.
double log_normal_cdf(double x);

/// Inverse Mills ratio φ(x)/Φ(x).
double inverse_mills(double x);

/// c(Δ) = −λΔ − λ², with λ = φ(Δ)/Φ(Δ). Lies in (−1, 0].
double c_factor(double delta);

/// 1 + c(Δ), evaluated without cancellation for Δ ≪ 0.
double c_factor_plus_one(double delta);

/// ζ(Δ, κ) = 1 − κ·c(Δ)/(1 + c(Δ)).
double zeta_factor(double delta, double kappa);

/// log of the binomial coefficient C(n, k).
double log_binomial(double n, double k);

}  // namespace psel
