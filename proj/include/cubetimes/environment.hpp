#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "cubetimes/configuration.hpp"
#include "cubetimes/noise.hpp"
#include "cubetimes/walk.hpp"

namespace cubetimes {

// Site percolation on the hypercube at density n^-gamma, realized lazily: a
// vertex is black iff a keyed 64-bit PRF of (seed, vertex) falls below
// theta = round(2^64 * n^-gamma). Nothing is materialized, so one object
// serves walks over 2^n vertices; repeated queries always agree.
//
// The PRF folds per-coordinate keys (splitmix64 stream of the seed) with XOR
// over the minus spins, then finalizes with a full-avalanche mix. The fold
// makes single-flip updates O(1); the finalizer breaks its linearity.
class RandomEnvironment {
 public:
  RandomEnvironment(std::uint32_t n, double gamma, std::uint64_t seed)
      : n_(n), gamma_(gamma), seed_(seed) {
    if (n < 1) throw std::invalid_argument("RandomEnvironment: n must be >= 1");
    if (!(gamma > 0.0 && gamma < 1.0))
      throw std::invalid_argument("RandomEnvironment: gamma must lie in (0,1)");
    key_base_ = mix64(seed ^ lane_tag("environment"));
    fold_init_ = mix64(key_base_ + kGolden);

    const long double p = std::exp(-static_cast<long double>(gamma) *
                                   std::log(static_cast<long double>(n)));
    const long double scaled = std::ldexp(p, 64) + 0.5L;
    const long double max64 = 18446744073709551615.0L;
    theta_ = scaled >= max64 ? UINT64_MAX : static_cast<std::uint64_t>(scaled);
  }

  std::uint32_t dimension() const noexcept { return n_; }
  double gamma() const noexcept { return gamma_; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t theta() const noexcept { return theta_; }

  // Exact Bernoulli parameter of one vertex: theta / 2^64.
  double black_probability() const noexcept {
    return std::ldexp(static_cast<double>(theta_), -64);
  }

  std::uint64_t coordinate_key(std::uint32_t i) const noexcept { return mix_at(key_base_, i); }

  // Fold of a full configuration; O(n/64 + minus count).
  std::uint64_t fold(const Configuration& c) const {
    if (c.dimension() != n_)
      throw std::invalid_argument("RandomEnvironment: configuration dimension mismatch");
    std::uint64_t h = fold_init_;
    const auto& words = c.words();
    for (std::size_t wi = 0; wi < words.size(); ++wi) {
      std::uint64_t minus = ~words[wi];
      if (wi + 1 == words.size()) minus &= c.top_mask();
      while (minus) {
        const int b = std::countr_zero(minus);
        minus &= minus - 1;
        h ^= coordinate_key(static_cast<std::uint32_t>(wi * 64 + b + 1));
      }
    }
    return h;
  }

  bool member_of_fold(std::uint64_t fold_value) const noexcept {
    return mix64(fold_value) < theta_;
  }

  std::uint64_t fold_init() const noexcept { return fold_init_; }

 private:
  std::uint32_t n_;
  double gamma_;
  std::uint64_t seed_;
  std::uint64_t key_base_;
  std::uint64_t fold_init_;
  std::uint64_t theta_;
};

inline bool environment_member(const RandomEnvironment& env, const Configuration& c) {
  return env.member_of_fold(env.fold(c));
}

struct HitSample {
  std::uint32_t n = 0;
  double gamma = 0;
  std::uint64_t env_seed = 0;
  std::uint64_t walk_seed = 0;
  std::uint64_t theta = 0;  // hit time, valid unless censored
  bool censored = true;
};

// Flip walk from all-plus through the environment; theta is the first t >= 0
// with walk(t) black. t = 0 is checked first: a black start hits immediately
// (an inf over t > 0 would be ill-defined on that event).
inline HitSample random_set_hit(std::uint32_t n, double gamma, std::uint64_t env_seed,
                                std::uint64_t walk_seed, std::uint64_t horizon = 0) {
  if (n < 2) throw std::invalid_argument("random_set_hit: n must be >= 2");
  const RandomEnvironment env(n, gamma, env_seed);

  HitSample out;
  out.n = n;
  out.gamma = gamma;
  out.env_seed = env_seed;
  out.walk_seed = walk_seed;
  if (horizon == 0)
    horizon = static_cast<std::uint64_t>(
                  50.0 * std::pow(static_cast<double>(n), gamma)) + 1;

  Configuration c(n);
  std::uint64_t fold = env.fold(c);
  if (env.member_of_fold(fold)) {
    out.theta = 0;
    out.censored = false;
    return out;
  }

  NoiseStream ns(walk_seed);
  for (std::uint64_t t = 1; t <= horizon; ++t) {
    const Step s = ns.next(n);
    c.flip(s.index);
    fold ^= env.coordinate_key(s.index);
    if (env.member_of_fold(fold)) {
      out.theta = t;
      out.censored = false;
      break;
    }
  }
  return out;
}

}  // namespace cubetimes
