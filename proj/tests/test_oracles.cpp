#include <catch2/catch_amalgamated.hpp>

#include <gmpxx.h>

#include <cmath>
#include <vector>

#include "cubetimes/noise.hpp"
#include "cubetimes/oracles.hpp"

using namespace cubetimes;

namespace {

// Exact occupancy law of the coordinate-coupon process in rational
// arithmetic: r distinct indices seen after t uniform draws from {1..n}.
std::vector<mpq_class> occupancy_exact(std::uint32_t n, std::uint64_t t) {
  std::vector<mpq_class> p(n + 1, mpq_class(0));
  p[0] = 1;
  for (std::uint64_t s = 0; s < t; ++s) {
    std::vector<mpq_class> q(n + 1, mpq_class(0));
    for (std::uint32_t r = 0; r <= n; ++r) {
      if (p[r] == 0) continue;
      q[r] += p[r] * r / n;
      if (r < n) q[r + 1] += p[r] * (n - r) / n;
    }
    p.swap(q);
  }
  return p;
}

// Full-state distribution of the heat-bath walk from all-plus, n <= 16.
// State x encodes spins as bits (set = +1); exact up to double round-off.
std::vector<double> chain_distribution(std::uint32_t n, std::uint64_t t) {
  const std::size_t states = std::size_t{1} << n;
  std::vector<double> mu(states, 0.0), nu(states, 0.0);
  mu[states - 1] = 1.0;
  for (std::uint64_t s = 0; s < t; ++s) {
    std::fill(nu.begin(), nu.end(), 0.0);
    for (std::size_t x = 0; x < states; ++x) {
      for (std::uint32_t i = 0; i < n; ++i) {
        const std::size_t y = x ^ (std::size_t{1} << i);
        nu[x] += (mu[x] + mu[y]) / (2.0 * n);
      }
    }
    mu.swap(nu);
  }
  return mu;
}

}  // namespace

TEST_CASE("occupancy law, frozen small cases") {
  const auto p22 = occupancy_pmf(2, 2);
  REQUIRE(p22.p.size() == 3);
  CHECK_THAT(p22.p[0], Catch::Matchers::WithinAbs(0.0, 1e-15));
  CHECK_THAT(p22.p[1], Catch::Matchers::WithinAbs(0.5, 1e-13));
  CHECK_THAT(p22.p[2], Catch::Matchers::WithinAbs(0.5, 1e-13));

  const auto p32 = occupancy_pmf(3, 2);
  CHECK_THAT(p32.p[1], Catch::Matchers::WithinAbs(1.0 / 3.0, 1e-13));
  CHECK_THAT(p32.p[2], Catch::Matchers::WithinAbs(2.0 / 3.0, 1e-13));
  CHECK_THAT(p32.p[3], Catch::Matchers::WithinAbs(0.0, 1e-15));

  const auto p40 = occupancy_pmf(4, 0);
  CHECK(p40.p[0] == 1.0);
}

TEST_CASE("occupancy law matches exact rational recursion") {
  for (std::uint32_t n : {2u, 5u, 12u, 20u}) {
    for (std::uint64_t t : {0ull, 1ull, 3ull, 7ull, 20ull, 61ull}) {
      const auto exact = occupancy_exact(n, t);
      const auto got = occupancy_pmf(n, t);
      for (std::uint32_t r = 0; r <= n; ++r) {
        const double want = exact[r].get_d();
        REQUIRE_THAT(got.p[r], Catch::Matchers::WithinAbs(want, 1e-13 + 1e-12 * want));
      }
    }
  }
}

TEST_CASE("occupancy law stays normalized at scale") {
  for (std::uint64_t t : {1ull, 50ull, 500ull, 5000ull}) {
    const auto occ = occupancy_pmf(100, t);
    detail::Kahan total;
    for (double p : occ.p) total.add(p);
    REQUIRE_THAT(total.sum, Catch::Matchers::WithinAbs(1.0, 1e-12));
  }
}

TEST_CASE("coupling time: closed moments for n = 2 and collection cdf") {
  REQUIRE(expected_coupling_time(1) == 1.0);
  REQUIRE(variance_coupling_time(1) == 0.0);
  CHECK_THAT(expected_coupling_time(2), Catch::Matchers::WithinAbs(3.0, 1e-12));
  CHECK_THAT(variance_coupling_time(2), Catch::Matchers::WithinAbs(2.0, 1e-12));
  // P(T <= 3) at n = 2: the second coupon arrives within two more draws.
  CHECK_THAT(coupling_time_cdf(2, 3), Catch::Matchers::WithinAbs(0.75, 1e-12));
  CHECK(coupling_time_cdf(2, 1) == 0.0);
  CHECK(coupling_time_cdf(5, 4) == 0.0);

  // cdf is nondecreasing in t
  double prev = 0.0;
  for (std::uint64_t t = 0; t <= 300; t += 3) {
    const double c = coupling_time_cdf(16, t);
    REQUIRE(c >= prev - 1e-15);
    prev = c;
  }
}

TEST_CASE("coupling expectation sits inside its logarithmic envelope") {
  for (std::uint32_t n : {2u, 10u, 100u, 1000u, 100000u}) {
    const double e = expected_coupling_time(n);
    const double dn = static_cast<double>(n);
    REQUIRE(e <= dn * (1.0 + std::log(dn)) + 1e-9);
    REQUIRE(e >= dn * std::log(dn - 1.0) - 1e-9);
  }
}

TEST_CASE("pointwise equilibrium at tiny times has closed form") {
  // t = 0: all mass on the start corner.
  CHECK_THAT(equilibrium_pointwise(5, 0, 0), Catch::Matchers::WithinAbs(1.0, 1e-14));
  CHECK_THAT(equilibrium_pointwise(5, 0, 3), Catch::Matchers::WithinAbs(0.0, 1e-14));
  // t = 1: stay with probability 1/2, else a uniform flipped coordinate.
  CHECK_THAT(equilibrium_pointwise(7, 1, 0), Catch::Matchers::WithinAbs(0.5, 1e-13));
  CHECK_THAT(equilibrium_pointwise(7, 1, 1), Catch::Matchers::WithinAbs(1.0 / 14.0, 1e-13));
  CHECK_THAT(equilibrium_pointwise(7, 1, 2), Catch::Matchers::WithinAbs(0.0, 1e-14));
}

TEST_CASE("pointwise equilibrium and tv distance match the full chain") {
  for (std::uint32_t n : {3u, 5u, 8u}) {
    for (std::uint64_t t : {0ull, 1ull, 5ull, 17ull, 60ull}) {
      const auto mu = chain_distribution(n, t);
      // representative of hamming class d: first d spins minus
      for (std::uint32_t d = 0; d <= n; ++d) {
        std::size_t x = (std::size_t{1} << n) - 1;
        for (std::uint32_t i = 0; i < d; ++i) x ^= std::size_t{1} << i;
        REQUIRE_THAT(equilibrium_pointwise(n, t, d),
                     Catch::Matchers::WithinAbs(mu[x], 1e-12));
      }
      const double unif = std::ldexp(1.0, -static_cast<int>(n));
      double tv = 0.0;
      for (double m : mu) tv += std::abs(m - unif);
      tv /= 2.0;
      REQUIRE_THAT(tv_distance_to_uniform(n, t), Catch::Matchers::WithinAbs(tv, 1e-12));
    }
  }
}

TEST_CASE("tv distance starts at 1 - 2^-n and decreases") {
  CHECK_THAT(tv_distance_to_uniform(10, 0),
             Catch::Matchers::WithinAbs(1.0 - std::ldexp(1.0, -10), 1e-14));
  double prev = 1.0;
  for (std::uint64_t t = 0; t <= 60; ++t) {
    const double tv = tv_distance_to_uniform(10, t);
    REQUIRE(tv <= prev + 1e-14);
    REQUIRE(tv >= 0.0);
    prev = tv;
  }
  // far beyond the mixing window the distance is negligible
  REQUIRE(tv_distance_to_uniform(10, 230) <= 1e-6);
}

TEST_CASE("absorption probability equals two over n squared") {
  for (std::uint32_t n : {2u, 3u, 4u, 5u, 8u, 16u, 50u, 200u, 500u}) {
    const double want = 2.0 / (static_cast<double>(n) * static_cast<double>(n));
    REQUIRE_THAT(ehrenfest_zero_before_return(n), Catch::Matchers::WithinAbs(want, 1e-12));
  }
}

TEST_CASE("absorption probability by direct excursion counting") {
  const std::uint32_t n = 10;
  const std::uint64_t excursions = 200000;
  const std::uint64_t hits =
      ehrenfest_zero_before_return_mc(n, excursions, derive_seed(17, lane_tag("ehrenfest"), 0));
  const double p = static_cast<double>(hits) / static_cast<double>(excursions);
  const double want = 0.02;
  const double se = std::sqrt(want * (1.0 - want) / static_cast<double>(excursions));
  REQUIRE(std::abs(p - want) <= 4.0 * se);
}

TEST_CASE("geometric tail") {
  CHECK(geometric_tail(0.5, 0) == 1.0);
  CHECK(geometric_tail(0.0, 1000) == 1.0);
  CHECK(geometric_tail(1.0, 3) == 0.0);
  CHECK_THAT(geometric_tail(0.5, 3), Catch::Matchers::WithinAbs(0.125, 1e-15));
  // (1 - n^-1)^n approaches e^-1 from below at rate 1/(2n)
  CHECK_THAT(geometric_tail(1e-4, 10000),
             Catch::Matchers::WithinAbs(std::exp(-1.0), 5e-5));
  REQUIRE_THROWS_AS(geometric_tail(-0.1, 1), std::invalid_argument);
  REQUIRE_THROWS_AS(geometric_tail(1.1, 1), std::invalid_argument);
}
