#pragma once

// Shared helpers for the test suite: independent reference implementations
// kept deliberately naive so they cannot share bugs with the library.

#include <cmath>
#include <cstdint>
#include <vector>

namespace testsupport {

// Regularized lower incomplete gamma P(a, x) by series / continued fraction.
inline double gamma_p(double a, double x) {
  if (x <= 0.0) return 0.0;
  const double lg = std::lgamma(a);
  if (x < a + 1.0) {
    double term = 1.0 / a, sum = term, ap = a;
    for (int i = 0; i < 500; ++i) {
      ap += 1.0;
      term *= x / ap;
      sum += term;
      if (std::abs(term) < std::abs(sum) * 1e-16) break;
    }
    return sum * std::exp(-x + a * std::log(x) - lg);
  }
  // Lentz continued fraction for Q(a, x)
  const double tiny = 1e-300;
  double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
  for (int i = 1; i <= 500; ++i) {
    const double an = -static_cast<double>(i) * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-16) break;
  }
  return 1.0 - std::exp(-x + a * std::log(x) - lg) * h;
}

// Upper tail of chi-square with k degrees of freedom.
inline double chi_square_tail(double stat, double k) {
  return 1.0 - gamma_p(k / 2.0, stat / 2.0);
}

// Chi-square goodness-of-fit p-value for equiprobable cells.
inline double uniform_cells_p(const std::vector<std::uint64_t>& counts) {
  std::uint64_t total = 0;
  for (auto c : counts) total += c;
  const double expect = static_cast<double>(total) / counts.size();
  double stat = 0.0;
  for (auto c : counts) {
    const double d = static_cast<double>(c) - expect;
    stat += d * d / expect;
  }
  return chi_square_tail(stat, static_cast<double>(counts.size() - 1));
}

}  // namespace testsupport
