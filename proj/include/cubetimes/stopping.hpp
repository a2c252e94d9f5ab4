#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "cubetimes/configuration.hpp"
#include "cubetimes/noise.hpp"
#include "cubetimes/walk.hpp"

namespace cubetimes {

struct CouplingSample {
  std::uint32_t n;
  std::uint64_t seed;
  std::uint64_t t;  // coupling time
};

namespace detail {

// Content-signature keys shared by every visited-set structure. Fixed base:
// the signature only has to be a function of the configuration.
constexpr std::uint64_t kSigBase = 0x76697369746564ull;

inline std::uint64_t sig_key(std::uint32_t i) noexcept { return mix_at(kSigBase, i); }

// Saturating default horizon 100 * 2^n / f for the set-return family.
inline std::uint64_t set_return_horizon(std::uint32_t n, std::uint64_t f) {
  const long double cap = 2.0e18L;
  const long double h = 100.0L * std::exp2l(static_cast<long double>(n)) /
                        static_cast<long double>(f ? f : 1);
  return h >= cap ? static_cast<std::uint64_t>(cap) : static_cast<std::uint64_t>(h) + 1;
}

// Small set of explicit configurations, queried once per walk step. Lookup
// goes through a 64-bit signature bucket, then exact comparison against the
// stored snapshots, so hits are never false.
class SnapshotSet {
 public:
  // Returns false if an equal configuration was already present.
  bool insert(const Configuration& c, std::uint64_t sig) {
    auto [it, fresh] = buckets_.try_emplace(sig);
    if (!fresh) {
      for (std::size_t idx : it->second)
        if (snapshots_[idx] == c) return false;
    }
    it->second.push_back(snapshots_.size());
    snapshots_.push_back(c);
    return true;
  }

  bool contains(const Configuration& c, std::uint64_t sig) const {
    const auto it = buckets_.find(sig);
    if (it == buckets_.end()) return false;
    for (std::size_t idx : it->second)
      if (snapshots_[idx] == c) return true;
    return false;
  }

  std::size_t size() const noexcept { return snapshots_.size(); }

 private:
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> buckets_;
  std::vector<Configuration> snapshots_;
};

// Walk state plus a rolling content signature. For n <= 64 the signature is
// the packed word itself (exact); otherwise it is the XOR of per-coordinate
// keys over the minus spins, updated in O(1) per step.
struct SigWalker {
  Configuration c;
  std::uint64_t sig;
  bool exact;

  explicit SigWalker(std::uint32_t n) : c(n), sig(0), exact(n <= 64) {
    if (exact) sig = c.words()[0];
  }

  void flip(std::uint32_t i) {
    c.flip(i);
    sig = exact ? c.words()[0] : sig ^ sig_key(i);
  }

  void heat_bath(std::uint32_t i, double u) {
    const int s = heat_bath_spin(u);
    if (c.spin(i) != s) flip(i);
  }

  void apply(WalkKind kind, std::uint32_t i, double u) {
    if (kind == WalkKind::Flip)
      flip(i);
    else
      heat_bath(i, u);
  }
};

}  // namespace detail

// Coupon-collector form of the coupling time: smallest t with every index in
// {1..n} present in I(1..t). Identical in law and pathwise equal to the
// meeting time of the coupled walks started at opposite corners, since a
// coordinate agrees from its first redraw on. Consumes full (index, u) pairs.
inline std::uint64_t coupling_time_direct(std::uint32_t n, std::uint64_t seed,
                                          std::uint64_t cap = 0) {
  if (n < 1) throw std::invalid_argument("coupling_time_direct: n must be >= 1");
  if (cap == 0)
    cap = static_cast<std::uint64_t>(50.0 * n * (1.0 + std::log(static_cast<double>(n)))) + 1;
  NoiseStream ns(seed);
  std::vector<std::uint64_t> marked((n + 63) / 64, 0);
  std::uint32_t missing = n;
  for (std::uint64_t t = 1; t <= cap; ++t) {
    const std::uint32_t i = ns.next(n).index;
    std::uint64_t& w = marked[(i - 1) >> 6];
    const std::uint64_t m = 1ull << ((i - 1) & 63);
    if (!(w & m)) {
      w |= m;
      if (--missing == 0) return t;
    }
  }
  throw std::runtime_error("coupling_time_direct: horizon exceeded");
}

// Same law assembled from its independent-spacings decomposition: 1 plus a
// sum over k = 2..n of geometric(1 - (k-1)/n) stages, sampled by inverse CDF.
inline std::uint64_t coupling_time_geometric(std::uint32_t n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("coupling_time_geometric: n must be >= 1");
  NoiseStream ns(seed);
  std::uint64_t t = 1;
  for (std::uint32_t k = 2; k <= n; ++k) {
    const double p = 1.0 - static_cast<double>(k - 1) / n;
    const double u = ns.next_u();
    // trials-until-success: P(G = g) = (1-p)^(g-1) p, g >= 1
    t += 1 + static_cast<std::uint64_t>(std::floor(std::log1p(-u) / std::log1p(-p)));
  }
  return t;
}

struct SelfReturnSample {
  std::uint32_t n = 0;
  std::uint64_t seed = 0;
  std::uint64_t horizon = 0;
  std::uint64_t s = 0;       // first self-intersection time, valid unless censored
  bool s_censored = true;
  std::uint64_t gamma1 = 0;  // first adjacent index repeat, valid unless censored
  bool gamma1_censored = true;
  bool agree = false;        // both observed and equal
};

// Flip walk from the all-plus corner. s = inf(k >= 2 : xi(k) in V[0,k-1]),
// gamma1 = inf(k >= 2 : I(k) = I(k-1)), both capped at the horizon. The walk
// can only revisit via an even-multiplicity index window, so s <= gamma1
// pathwise whenever gamma1 is observed.
inline SelfReturnSample self_return(std::uint32_t n, std::uint64_t seed, std::uint64_t horizon) {
  if (n < 2) throw std::invalid_argument("self_return: n must be >= 2");
  if (horizon < 2) throw std::invalid_argument("self_return: horizon must be >= 2");

  SelfReturnSample out;
  out.n = n;
  out.seed = seed;
  out.horizon = horizon;

  NoiseStream ns(seed);
  detail::SigWalker walker(n);

  // signature -> time of first visit; digest collisions (multi-word configs
  // only) spill into a side list so every candidate stays reachable.
  std::unordered_map<std::uint64_t, std::uint64_t> first_visit;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> spill;
  std::vector<std::uint32_t> history;  // I(1..t), used to confirm candidates
  history.reserve(256);
  first_visit.emplace(walker.sig, 0);

  // Revisit confirmation for inexact signatures: xi(j) == xi(k) iff every
  // index in I(j+1..k) occurs an even number of times.
  auto confirms = [&](std::uint64_t j, std::uint64_t k) {
    std::unordered_map<std::uint32_t, std::uint32_t> parity;
    for (std::uint64_t a = j; a < k; ++a) parity[history[static_cast<std::size_t>(a)]] ^= 1u;
    for (const auto& [idx, odd] : parity)
      if (odd) return false;
    return true;
  };

  std::uint32_t prev_index = 0;
  std::uint64_t t = 0;
  while (t < horizon && (out.s_censored || out.gamma1_censored)) {
    ++t;
    const std::uint32_t i = ns.next(n).index;
    if (out.gamma1_censored && t >= 2 && i == prev_index) {
      out.gamma1 = t;
      out.gamma1_censored = false;
    }
    prev_index = i;

    if (out.s_censored) {
      history.push_back(i);
      walker.flip(i);
      bool hit = false;
      if (auto it = first_visit.find(walker.sig); it != first_visit.end())
        hit = walker.exact || confirms(it->second, t);
      if (!hit && !spill.empty()) {
        for (const auto& [sg, j] : spill)
          if (sg == walker.sig && confirms(j, t)) {
            hit = true;
            break;
          }
      }
      if (hit) {
        out.s = t;
        out.s_censored = false;
      } else if (!first_visit.emplace(walker.sig, t).second) {
        spill.emplace_back(walker.sig, t);
      }
    }
  }

  out.agree = !out.s_censored && !out.gamma1_censored && out.s == out.gamma1;
  return out;
}

struct SetReturnSample {
  std::uint32_t n = 0;
  double gamma = 0;
  std::uint64_t seed = 0;
  WalkKind kind = WalkKind::Flip;
  std::uint64_t m = 0;       // prefix length floor(n^gamma); 0 for fixed sets
  std::uint64_t f_size = 0;  // distinct configurations in the target set
  std::uint64_t r = 0;       // first return time, valid unless censored
  bool censored = true;
  std::uint64_t horizon = 0;
};

// F = distinct configurations among xi(0..m), m = floor(n^gamma); the sample
// holds the first t > m with walk(t) in F. The flip walk is the default: a
// lazy walk re-enters F immediately with probability >= 1/2, which destroys
// the scaling this experiment measures.
inline SetReturnSample prefix_return(std::uint32_t n, double gamma, std::uint64_t seed,
                                     WalkKind kind = WalkKind::Flip,
                                     std::uint64_t horizon = 0) {
  if (n < 2) throw std::invalid_argument("prefix_return: n must be >= 2");
  if (!(gamma > 0.0 && gamma < 1.0))
    throw std::invalid_argument("prefix_return: gamma must lie in (0,1)");

  SetReturnSample out;
  out.n = n;
  out.gamma = gamma;
  out.seed = seed;
  out.kind = kind;
  out.m = static_cast<std::uint64_t>(std::floor(std::pow(static_cast<double>(n), gamma)));

  NoiseStream ns(seed);
  detail::SigWalker walker(n);
  detail::SnapshotSet f;
  f.insert(walker.c, walker.sig);
  for (std::uint64_t t = 1; t <= out.m; ++t) {
    const Step s = ns.next(n);
    walker.apply(kind, s.index, s.u);
    f.insert(walker.c, walker.sig);
  }
  out.f_size = f.size();

  out.horizon = horizon ? horizon : detail::set_return_horizon(n, out.f_size);
  for (std::uint64_t t = out.m + 1; t <= out.horizon; ++t) {
    const Step s = ns.next(n);
    walker.apply(kind, s.index, s.u);
    if (f.contains(walker.c, walker.sig)) {
      out.r = t;
      out.censored = false;
      break;
    }
  }
  return out;
}

// First t > 0 with walk(t) in F, for an explicit target set.
inline SetReturnSample fixed_set_return(std::uint32_t n, std::span<const Configuration> f,
                                        const Configuration& start, std::uint64_t seed,
                                        WalkKind kind = WalkKind::Flip,
                                        std::uint64_t horizon = 0) {
  if (f.empty()) throw std::invalid_argument("fixed_set_return: target set is empty");
  if (start.dimension() != n)
    throw std::invalid_argument("fixed_set_return: start dimension mismatch");

  detail::SnapshotSet set;
  for (const Configuration& c : f) {
    if (c.dimension() != n)
      throw std::invalid_argument("fixed_set_return: member dimension mismatch");
    std::uint64_t sig = 0;
    if (n <= 64) {
      sig = c.words()[0];
    } else {
      sig = 0;
      for (std::uint32_t i = 1; i <= n; ++i)
        if (c.spin(i) == -1) sig ^= detail::sig_key(i);
    }
    set.insert(c, sig);
    if (c == start) throw std::invalid_argument("fixed_set_return: start lies in the target set");
  }

  SetReturnSample out;
  out.n = n;
  out.seed = seed;
  out.kind = kind;
  out.f_size = set.size();
  out.horizon = horizon ? horizon : detail::set_return_horizon(n, out.f_size);

  NoiseStream ns(seed);
  detail::SigWalker walker(n);
  walker.c = start;
  if (walker.exact) {
    walker.sig = start.words()[0];
  } else {
    walker.sig = 0;
    for (std::uint32_t i = 1; i <= n; ++i)
      if (start.spin(i) == -1) walker.sig ^= detail::sig_key(i);
  }

  for (std::uint64_t t = 1; t <= out.horizon; ++t) {
    const Step s = ns.next(n);
    walker.apply(kind, s.index, s.u);
    if (set.contains(walker.c, walker.sig)) {
      out.r = t;
      out.censored = false;
      break;
    }
  }
  return out;
}

// Smallest integer b with empirical P(X >= b) <= 1/e. The sandwich
// P(X >= b) <= 1/e < P(X >= b-1) holds on the estimating sample by
// minimality, since the survival function is nonincreasing in b.
inline std::uint64_t estimate_beta(std::span<const std::uint64_t> samples) {
  if (samples.empty()) throw std::invalid_argument("estimate_beta: empty sample");
  std::vector<std::uint64_t> xs(samples.begin(), samples.end());
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  const double target = std::exp(-1.0);
  auto survival = [&](std::uint64_t b) {
    const auto it = std::lower_bound(xs.begin(), xs.end(), b);
    return static_cast<double>(xs.end() - it) / n;
  };
  std::uint64_t lo = 1, hi = xs.back() + 1;
  while (lo < hi) {
    const std::uint64_t mid = lo + (hi - lo) / 2;
    if (survival(mid) <= target)
      hi = mid;
    else
      lo = mid + 1;
  }
  return lo;
}

struct DisjointCount {
  std::uint64_t disjoint = 0;
  std::uint64_t runs = 0;
  double probability() const { return runs ? static_cast<double>(disjoint) / runs : 1.0; }
};

namespace detail {

inline bool segments_disjoint_once(std::uint32_t n, std::uint64_t s, std::uint64_t u,
                                   std::uint64_t seed) {
  NoiseStream ns(seed);
  SigWalker walker(n);
  SnapshotSet first;
  first.insert(walker.c, walker.sig);
  for (std::uint64_t t = 1; t <= s; ++t) {
    walker.flip(ns.next(n).index);
    first.insert(walker.c, walker.sig);
  }
  for (std::uint64_t t = 1; t <= u; ++t) {
    walker.flip(ns.next(n).index);
    if (first.contains(walker.c, walker.sig)) return false;
  }
  return true;
}

}  // namespace detail

// Monte Carlo estimate of P(V[0,s] and V[s+1,s+u] are disjoint) for the flip
// walk; the reflection identity swaps (s, u) for (u-1, s+1).
inline DisjointCount disjoint_segments_probability(std::uint32_t n, std::uint64_t s,
                                                   std::uint64_t u, std::uint64_t runs,
                                                   std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("disjoint_segments_probability: n must be >= 1");
  if (runs < 1) throw std::invalid_argument("disjoint_segments_probability: runs must be >= 1");
  DisjointCount out;
  out.runs = runs;
  for (std::uint64_t r = 0; r < runs; ++r) {
    if (detail::segments_disjoint_once(n, s, u, derive_seed(seed, lane_tag("segments"), r)))
      ++out.disjoint;
  }
  return out;
}

}  // namespace cubetimes
