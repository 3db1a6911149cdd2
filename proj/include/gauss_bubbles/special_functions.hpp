#pragma once

namespace gb {

/// Regularized lower incomplete gamma P(s, x) = gamma(s, x) / Gamma(s).
/// Series for x < s + 1, Lentz continued fraction for the complement otherwise.
double regularized_gamma_p(double s, double x);
/// Q(s, x) = 1 - P(s, x), computed without cancellation in the upper tail.
double regularized_gamma_q(double s, double x);

/// P(chi^2_dof <= x).
inline double chi_square_cdf(int dof, double x) {
  return x <= 0.0 ? 0.0 : regularized_gamma_p(0.5 * dof, 0.5 * x);
}

/// Surface measure of the unit k-sphere in R^{k+1}: 2 pi^{(k+1)/2} / Gamma((k+1)/2).
double sphere_area(int k);

}  // namespace gb
