#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "cubetimes/oracles.hpp"

namespace cubetimes {

// Sorted sample set with survival / quantile / distribution-test queries.
// Survival uses the ">=" convention: survival(t) = #{x >= t} / n.
class EmpiricalLaw {
 public:
  explicit EmpiricalLaw(std::vector<double> samples) : xs_(std::move(samples)) {
    if (xs_.empty()) throw std::invalid_argument("EmpiricalLaw: empty sample");
    std::sort(xs_.begin(), xs_.end());
  }
  explicit EmpiricalLaw(std::span<const double> samples)
      : EmpiricalLaw(std::vector<double>(samples.begin(), samples.end())) {}

  std::size_t size() const noexcept { return xs_.size(); }
  const std::vector<double>& values() const noexcept { return xs_; }
  double min() const noexcept { return xs_.front(); }
  double max() const noexcept { return xs_.back(); }

  double survival(double t) const noexcept {
    const auto it = std::lower_bound(xs_.begin(), xs_.end(), t);
    return static_cast<double>(xs_.end() - it) / static_cast<double>(xs_.size());
  }

  double cdf(double t) const noexcept {
    const auto it = std::upper_bound(xs_.begin(), xs_.end(), t);
    return static_cast<double>(it - xs_.begin()) / static_cast<double>(xs_.size());
  }

  double quantile(double q) const {
    if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("quantile: q must lie in [0,1]");
    if (q == 0.0) return xs_.front();
    const std::size_t idx = static_cast<std::size_t>(
        std::min<double>(std::ceil(q * static_cast<double>(xs_.size())),
                         static_cast<double>(xs_.size())));
    return xs_[idx - 1];
  }

  double mean() const noexcept {
    detail::Kahan acc;
    for (double x : xs_) acc.add(x);
    return acc.sum / static_cast<double>(xs_.size());
  }

  // Sample variance (n-1 in the denominator); 0 for a single point.
  double variance() const noexcept {
    if (xs_.size() < 2) return 0.0;
    const double m = mean();
    detail::Kahan acc;
    for (double x : xs_) acc.add((x - m) * (x - m));
    return acc.sum / static_cast<double>(xs_.size() - 1);
  }

 private:
  std::vector<double> xs_;
};

inline double normal_cdf(double x) noexcept { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Inverse standard normal CDF: Acklam's rational approximation polished by
// one Halley step against erfc, good to full double precision.
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("normal_quantile: p must lie in (0,1)");
  static constexpr double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                  -2.759285104469687e+02, 1.383577518672690e+02,
                                  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                  -1.556989798598866e+02, 6.680131188771972e+01,
                                  -1.328068155288572e+01};
  static constexpr double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                  -2.400758277161838e+00, -2.549732539343734e+00,
                                  4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                  2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double plow = 0.02425;
  double x;
  if (p < plow) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    const double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double e = normal_cdf(x) - p;
  const double u = e * std::sqrt(2.0 * M_PI) * std::exp(x * x / 2.0);
  return x - u / (1.0 + x * u / 2.0);
}

// Complementary Kolmogorov distribution Q(u) = P(sup|B| > u). Direct
// alternating series capped at 100 terms for moderate u; the theta-dual form
// below u = 0.755, where the direct series converges slowly. Absolute error
// under 1e-10 in both regimes.
inline double kolmogorov_p(double u) {
  if (u < 0.0) throw std::invalid_argument("kolmogorov_p: statistic must be >= 0");
  if (u < 0.2) return 1.0;
  if (u < 0.755) {
    const double v = M_PI * M_PI / (8.0 * u * u);
    const double w = std::sqrt(2.0 * M_PI) / u;
    return 1.0 - w * (std::exp(-v) + std::exp(-9.0 * v) + std::exp(-25.0 * v));
  }
  if (u >= 6.8116) return 0.0;
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * u * u);
    sum += (k % 2 == 1) ? term : -term;
    if (term < 1e-16) break;
  }
  const double q = 2.0 * sum;
  return q < 0.0 ? 0.0 : (q > 1.0 ? 1.0 : q);
}

struct KsResult {
  double statistic = 0;  // sup-distance D
  double p_value = 1;    // asymptotic Kolmogorov p
};

// One-sample KS against the unit exponential.
inline KsResult ks_exponential(const EmpiricalLaw& law) {
  const std::size_t n = law.size();
  if (n < 10) throw std::invalid_argument("ks_exponential: need at least 10 samples");
  const auto& xs = law.values();
  double d = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double f = xs[i] <= 0.0 ? 0.0 : -std::expm1(-xs[i]);
    d = std::max(d, std::max(f - static_cast<double>(i) / n,
                             static_cast<double>(i + 1) / n - f));
  }
  return KsResult{d, kolmogorov_p(std::sqrt(static_cast<double>(n)) * d)};
}

// Two-sample KS; ties advance both sides before the gap is read.
inline KsResult ks_two_sample(const EmpiricalLaw& a, const EmpiricalLaw& b) {
  const std::size_t na = a.size(), nb = b.size();
  if (na < 10 || nb < 10) throw std::invalid_argument("ks_two_sample: need at least 10 per side");
  const auto& xa = a.values();
  const auto& xb = b.values();
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < na && j < nb) {
    const double va = xa[i], vb = xb[j];
    if (va <= vb)
      while (i < na && xa[i] == va) ++i;
    if (vb <= va)
      while (j < nb && xb[j] == vb) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  const double ne = static_cast<double>(na) * static_cast<double>(nb) / (na + nb);
  return KsResult{d, kolmogorov_p(std::sqrt(ne) * d)};
}

struct MeanCi {
  double mean = 0;
  double se = 0;
  double half_width = 0;
  double level = 0;
  double lo = 0;
  double hi = 0;
  bool covers(double value) const noexcept { return lo <= value && value <= hi; }
};

// Normal-theory confidence interval for the mean.
inline MeanCi mean_ci(const EmpiricalLaw& law, double level = 0.95) {
  if (law.size() < 30) throw std::invalid_argument("mean_ci: need at least 30 samples");
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("mean_ci: level must lie in (0,1)");
  MeanCi out;
  out.level = level;
  out.mean = law.mean();
  out.se = std::sqrt(law.variance() / static_cast<double>(law.size()));
  out.half_width = normal_quantile(0.5 + level / 2.0) * out.se;
  out.lo = out.mean - out.half_width;
  out.hi = out.mean + out.half_width;
  return out;
}

struct ZResult {
  double z = 0;
  double p_value = 1;  // two-sided
};

inline ZResult two_proportion_z(std::uint64_t hits1, std::uint64_t n1, std::uint64_t hits2,
                                std::uint64_t n2) {
  if (n1 == 0 || n2 == 0) throw std::invalid_argument("two_proportion_z: empty side");
  if (hits1 > n1 || hits2 > n2) throw std::invalid_argument("two_proportion_z: hits exceed trials");
  const double p1 = static_cast<double>(hits1) / n1;
  const double p2 = static_cast<double>(hits2) / n2;
  const double pooled = static_cast<double>(hits1 + hits2) / (static_cast<double>(n1) + n2);
  const double se = std::sqrt(pooled * (1.0 - pooled) * (1.0 / n1 + 1.0 / n2));
  ZResult out;
  out.z = se == 0.0 ? 0.0 : (p1 - p2) / se;
  out.p_value = std::erfc(std::abs(out.z) / std::sqrt(2.0));
  return out;
}

struct QuenchedSummary {
  std::vector<double> grid;      // t values
  std::vector<double> mean;      // across-environment mean of inner survivals
  std::vector<double> variance;  // across-environment (population) variance
  std::size_t environments = 0;
};

// Aggregates per-environment laws of the raw hit time. The inner estimate at
// grid point t is P_env(Theta > floor(scale * t)), i.e. survival at
// floor(scale * t) + 1 under the ">=" convention.
inline QuenchedSummary quenched_aggregate(std::span<const EmpiricalLaw> envs,
                                          std::span<const double> grid, double scale) {
  if (envs.size() < 2) throw std::invalid_argument("quenched_aggregate: need >= 2 environments");
  if (grid.empty()) throw std::invalid_argument("quenched_aggregate: empty grid");
  if (!(scale > 0.0)) throw std::invalid_argument("quenched_aggregate: scale must be > 0");
  QuenchedSummary out;
  out.environments = envs.size();
  out.grid.assign(grid.begin(), grid.end());
  out.mean.resize(grid.size());
  out.variance.resize(grid.size());
  const double e = static_cast<double>(envs.size());
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const double threshold = std::floor(scale * grid[g]) + 1.0;
    detail::Kahan sum, sumsq;
    for (const EmpiricalLaw& law : envs) {
      const double s = law.survival(threshold);
      sum.add(s);
      sumsq.add(s * s);
    }
    const double m = sum.sum / e;
    out.mean[g] = m;
    out.variance[g] = std::max(0.0, sumsq.sum / e - m * m);
  }
  return out;
}

}  // namespace cubetimes
