#include "gauss_bubbles/special_functions.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "gauss_bubbles/errors.hpp"

namespace gb {
namespace {

constexpr int kMaxTerms = 10'000;
constexpr double kEps = 1e-16;

double gamma_series(double s, double x) {
  double term = 1.0 / s;
  double sum = term;
  for (int n = 1; n < kMaxTerms; ++n) {
    term *= x / (s + n);
    sum += term;
    if (std::abs(term) < std::abs(sum) * kEps) break;
  }
  return sum * std::exp(-x + s * std::log(x) - std::lgamma(s));
}

double gamma_continued_fraction(double s, double x) {
  constexpr double tiny = std::numeric_limits<double>::min() / kEps;
  double b = x + 1.0 - s;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < kMaxTerms; ++i) {
    const double an = -i * (i - s);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kEps) break;
  }
  return std::exp(-x + s * std::log(x) - std::lgamma(s)) * h;
}

void check_args(double s, double x) {
  if (!(s > 0.0)) throw DomainError("incomplete gamma needs s > 0");
  if (!(x >= 0.0)) throw DomainError("incomplete gamma needs x >= 0");
}

}  // namespace

double regularized_gamma_p(double s, double x) {
  check_args(s, x);
  if (x == 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  return x < s + 1.0 ? gamma_series(s, x) : 1.0 - gamma_continued_fraction(s, x);
}

double regularized_gamma_q(double s, double x) {
  check_args(s, x);
  if (x == 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  return x < s + 1.0 ? 1.0 - gamma_series(s, x) : gamma_continued_fraction(s, x);
}

double sphere_area(int k) {
  if (k < 0) throw DomainError("sphere dimension must be >= 0");
  const double half = 0.5 * (k + 1);
  return 2.0 * std::exp(half * std::log(std::numbers::pi) - std::lgamma(half));
}

}  // namespace gb
