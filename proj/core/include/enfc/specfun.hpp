#pragma once

// Scalar special functions for Gamma-distribution math. All routines are
// pure and operate in double precision.

namespace enfc::specfun {

/// ln Γ(x) for x > 0. Lanczos approximation (g = 7, 9 terms) with upward
/// recurrence below 0.5 and a Stirling series for large arguments.
/// Throws DomainError for x <= 0 or non-finite x.
double ln_gamma(double x);

/// ψ(x) = d/dx ln Γ(x) for x > 0.
double digamma(double x);

/// Regularized lower incomplete gamma P(a, x) = γ(a, x) / Γ(a).
/// Series for x < a + 1, Lentz continued fraction for the complement otherwise.
double reg_lower_inc_gamma(double a, double x);

/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x), computed
/// directly where it is the accurate branch.
double reg_upper_inc_gamma(double a, double x);

/// Solves P(a, x) = p for x. Newton steps inside a maintained bracket,
/// falling back to bisection whenever a step leaves the bracket.
/// Requires a > 0 and 0 < p < 1.
double inv_reg_lower_inc_gamma(double a, double p);

}  // namespace enfc::specfun
