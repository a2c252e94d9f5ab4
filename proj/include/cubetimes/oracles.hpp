#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "cubetimes/noise.hpp"

namespace cubetimes {

namespace detail {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct Kahan {
  double sum = 0, carry = 0;
  void add(double x) {
    const double y = x - carry;
    const double t = sum + y;
    carry = (t - sum) - y;
    sum = t;
  }
};

// log k! for k = 0..n, by running sum; relative error ~ n ulps, which the
// rational-arithmetic test oracle bounds for real use.
inline std::vector<double> log_factorials(std::uint32_t n) {
  std::vector<double> lf(n + 1, 0.0);
  for (std::uint32_t k = 1; k <= n; ++k) lf[k] = lf[k - 1] + std::log(static_cast<double>(k));
  return lf;
}

struct LogBinom {
  std::vector<double> lf;
  explicit LogBinom(std::uint32_t n) : lf(log_factorials(n)) {}
  double operator()(std::uint32_t n, std::uint32_t k) const { return lf[n] - lf[k] - lf[n - k]; }
};

// log p_r(t) for r = 0..n, where p_r(t) = P(r distinct indices drawn in t
// uniform draws from {1..n}). Forward recursion p'[r] = p[r] r/n +
// p[r-1] (n-r+1)/n: all coefficients are nonnegative, so the rounding error
// stays near t ulps. The closed inclusion-exclusion form is useless here,
// its alternating terms dwarf the result for t of order n.
inline std::vector<double> occupancy_log_pmf(std::uint32_t n, std::uint64_t t) {
  if (n < 1) throw std::invalid_argument("occupancy: n must be >= 1");
  std::vector<double> p(n + 1, 0.0);
  p[0] = 1.0;
  const double nd = static_cast<double>(n);
  const std::uint32_t rmax = static_cast<std::uint32_t>(std::min<std::uint64_t>(n, t));
  std::uint32_t top = 0;  // largest r with mass so far; keeps the sweep O(min(t,n)) wide
  for (std::uint64_t s = 0; s < t; ++s) {
    const std::uint32_t hi = std::min<std::uint32_t>(top + 1, rmax);
    for (std::uint32_t r = hi; r >= 1; --r)
      p[r] = p[r] * (static_cast<double>(r) / nd) + p[r - 1] * (static_cast<double>(n - r + 1) / nd);
    p[0] = 0.0;
    top = hi;
    if (top == n && p[n] == 1.0) break;  // fully collected; fixed point
  }
  std::vector<double> lp(n + 1, kNegInf);
  for (std::uint32_t r = 0; r <= n; ++r)
    if (p[r] > 0.0) lp[r] = std::log(p[r]);
  return lp;
}

}  // namespace detail

// Law of the number of distinct indices seen in I(1..t); p[r] = 0 for
// r > min(t, n), and p sums to 1.
struct OccupancyDistribution {
  std::uint32_t n;
  std::uint64_t t;
  std::vector<double> p;
};

inline OccupancyDistribution occupancy_pmf(std::uint32_t n, std::uint64_t t) {
  const auto lp = detail::occupancy_log_pmf(n, t);
  OccupancyDistribution out{n, t, std::vector<double>(n + 1, 0.0)};
  for (std::uint32_t r = 0; r <= n; ++r)
    if (lp[r] != detail::kNegInf) out.p[r] = std::exp(lp[r]);
  return out;
}

// P(coupling time <= t): the chance that t draws cover all n indices.
inline double coupling_time_cdf(std::uint32_t n, std::uint64_t t) {
  if (n < 1) throw std::invalid_argument("coupling_time_cdf: n must be >= 1");
  if (t < n) return 0.0;
  const auto lp = detail::occupancy_log_pmf(n, t);
  return lp[n] == detail::kNegInf ? 0.0 : std::exp(lp[n]);
}

// E(coupling time) = n * H_n, from the geometric-spacings decomposition.
inline double expected_coupling_time(std::uint32_t n) {
  if (n < 1) throw std::invalid_argument("expected_coupling_time: n must be >= 1");
  detail::Kahan acc;
  for (std::uint32_t k = n; k >= 1; --k) acc.add(1.0 / k);
  return static_cast<double>(n) * acc.sum;
}

// Var(coupling time) = sum_k n (k-1) / (n-k+1)^2; the k = 1 stage is
// deterministic and contributes zero.
inline double variance_coupling_time(std::uint32_t n) {
  if (n < 1) throw std::invalid_argument("variance_coupling_time: n must be >= 1");
  detail::Kahan acc;
  for (std::uint32_t k = 2; k <= n; ++k) {
    const double d = static_cast<double>(n - k + 1);
    acc.add(static_cast<double>(n) * static_cast<double>(k - 1) / (d * d));
  }
  return acc.sum;
}

namespace detail {

// log P(heat-bath walk from all-plus sits at a fixed point with d minus spins
// after t steps): refreshed coordinates are a uniform r-set carrying iid
// signs, unrefreshed ones still read +1.
inline double equilibrium_log_pointwise(std::uint32_t n, std::uint64_t t, std::uint32_t d,
                                        const std::vector<double>& lp, const LogBinom& lb) {
  const double ln2 = std::log(2.0);
  double lmax = kNegInf;
  std::vector<double> terms;
  terms.reserve(n - d + 1);
  for (std::uint32_t r = d; r <= n; ++r) {
    if (lp[r] == kNegInf) continue;
    const double lt = lp[r] + lb(n - d, r - d) - lb(n, r) - static_cast<double>(r) * ln2;
    terms.push_back(lt);
    if (lt > lmax) lmax = lt;
  }
  if (terms.empty() || lmax == kNegInf) return kNegInf;
  Kahan acc;
  for (double lt : terms) acc.add(std::exp(lt - lmax));
  return lmax + std::log(acc.sum);
}

}  // namespace detail

// P(walk(t) = z) for any fixed z at Hamming distance d from the start.
inline double equilibrium_pointwise(std::uint32_t n, std::uint64_t t, std::uint32_t d) {
  if (n < 1) throw std::invalid_argument("equilibrium_pointwise: n must be >= 1");
  if (d > n) throw std::invalid_argument("equilibrium_pointwise: d must lie in [0,n]");
  const detail::LogBinom lb(n);
  const auto lp = detail::occupancy_log_pmf(n, t);
  const double le = detail::equilibrium_log_pointwise(n, t, d, lp, lb);
  return le == detail::kNegInf ? 0.0 : std::exp(le);
}

// Total variation distance to the uniform measure after t heat-bath steps.
// Sums over distance classes in log space so deep-subuniform masses at large
// n do not flush to zero before they are weighed.
inline double tv_distance_to_uniform(std::uint32_t n, std::uint64_t t) {
  if (n < 1) throw std::invalid_argument("tv_distance_to_uniform: n must be >= 1");
  const detail::LogBinom lb(n);
  const auto lp = detail::occupancy_log_pmf(n, t);
  const double logu = -static_cast<double>(n) * std::log(2.0);
  detail::Kahan acc;
  for (std::uint32_t d = 0; d <= n; ++d) {
    const double a = detail::equilibrium_log_pointwise(n, t, d, lp, lb);
    double lterm;
    if (a == detail::kNegInf) {
      lterm = lb(n, d) + logu;
    } else {
      const double hi = std::max(a, logu);
      const double gap = std::abs(a - logu);
      if (gap == 0.0) continue;
      lterm = lb(n, d) + hi + std::log(-std::expm1(-gap));
    }
    acc.add(std::exp(lterm));
  }
  const double tv = 0.5 * acc.sum;
  return tv < 0.0 ? 0.0 : (tv > 1.0 ? 1.0 : tv);
}

// P(birth-death chain with up-rate (n-i)/n, down-rate i/n, started at 2,
// reaches 0 before it returns to 2). First-step decomposition plus a
// tridiagonal absorption solve over the transient states {1} u {3..n};
// the closed form is 2/n^2 (the path is forced: 2 -> 1 -> 0).
inline double ehrenfest_zero_before_return(std::uint32_t n) {
  if (n < 2) throw std::invalid_argument("ehrenfest_zero_before_return: n must be >= 2");

  // h(1): both neighbours of 1 are absorbing (0 hits, 2 fails).
  const double h1 = 1.0 / n;

  // Block 3..n: h(i) = (i/n) h(i-1) + ((n-i)/n) h(i+1), h(2) = 0 boundary,
  // no source anywhere, solved by the Thomas algorithm.
  double h3 = 0.0;
  if (n >= 3) {
    const std::size_t m = n - 2;  // unknowns h(3..n)
    std::vector<double> diag(m, 1.0), lower(m, 0.0), upper(m, 0.0), rhs(m, 0.0);
    for (std::size_t k = 0; k < m; ++k) {
      const double i = static_cast<double>(k + 3);
      if (k > 0) lower[k] = -i / n;                    // couples to h(i-1)
      if (k + 1 < m) upper[k] = -(n - i) / n;          // couples to h(i+1)
      // k == 0: the i/n mass lands on absorbing state 2 (value 0);
      // k == m-1: the up-rate is (n-n)/n = 0.
    }
    for (std::size_t k = 1; k < m; ++k) {
      const double w = lower[k] / diag[k - 1];
      diag[k] -= w * upper[k - 1];
      rhs[k] -= w * rhs[k - 1];
    }
    std::vector<double> h(m, 0.0);
    h[m - 1] = rhs[m - 1] / diag[m - 1];
    for (std::size_t k = m - 1; k-- > 0;) h[k] = (rhs[k] - upper[k] * h[k + 1]) / diag[k];
    h3 = h[0];
  }

  return (2.0 / n) * h1 + (static_cast<double>(n - 2) / n) * h3;
}

// Monte Carlo companion: count excursions from state 2 that visit 0 before
// coming back to 2.
inline std::uint64_t ehrenfest_zero_before_return_mc(std::uint32_t n, std::uint64_t excursions,
                                                     std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("ehrenfest_zero_before_return_mc: n must be >= 2");
  NoiseStream ns(seed);
  std::uint64_t hits = 0;
  for (std::uint64_t e = 0; e < excursions; ++e) {
    std::uint32_t x = 2;
    do {
      const double u = ns.next_u();
      x = (u < static_cast<double>(x) / n) ? x - 1 : x + 1;
      if (x == 0) {
        ++hits;
        break;
      }
    } while (x != 2);
  }
  return hits;
}

// (1 - p)^k in the log domain; exact at the p = 0, p = 1 and k = 0 edges.
inline double geometric_tail(double p, std::uint64_t k) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("geometric_tail: p must lie in [0,1]");
  if (k == 0) return 1.0;
  if (p == 0.0) return 1.0;
  if (p == 1.0) return 0.0;
  return std::exp(static_cast<double>(k) * std::log1p(-p));
}

}  // namespace cubetimes
