#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "cubetimes/noise.hpp"

namespace cubetimes {

// Window of coordinate indices (i_1, ..., i_2l).
struct PatternWindow {
  std::vector<std::uint32_t> indices;
  std::uint32_t level() const {
    if (indices.empty() || indices.size() % 2 != 0)
      throw std::invalid_argument("PatternWindow: length must be a positive even number");
    return static_cast<std::uint32_t>(indices.size() / 2);
  }
};

namespace detail {

// Membership test behind is_in_J_l, on a window of length 2l.
//
// The defining clauses are (a) every index occurs an even number of times and
// (b) no contiguous sub-window of length 2m, m < l, satisfies the definition
// at level m. Both reduce to prefix parities: the sub-window (a+1..b) has all
// multiplicities even iff parity(a) == parity(b), and the shortest even
// sub-window anywhere inside is automatically minimal, hence in some J_m. So
// the window is in J_l iff its 2l+1 prefix parities are pairwise distinct
// except for the forced match parity(0) == parity(2l).
//
// Parities are exact dense bitsets: values are remapped to bit positions in
// order of first appearance (at most 2l of them), one word while l <= 32.
inline bool window_in_J(std::span<const std::uint32_t> w) {
  const std::size_t len = w.size();

  if (len <= 32) {  // linear containers beat hashing at this size
    std::uint32_t values[32];
    std::uint64_t seen[33];
    std::size_t nvalues = 0;
    std::uint64_t sig = 0;
    seen[0] = 0;
    for (std::size_t k = 0; k < len; ++k) {
      std::size_t b = 0;
      while (b < nvalues && values[b] != w[k]) ++b;
      if (b == nvalues) values[nvalues++] = w[k];
      sig ^= 1ull << b;
      if (k + 1 < len) {
        for (std::size_t j = 0; j <= k; ++j)
          if (seen[j] == sig) return false;
        seen[k + 1] = sig;
      }
    }
    return sig == 0;
  }

  if (len <= 64) {
    std::unordered_map<std::uint32_t, std::size_t> bit;
    bit.reserve(len);
    std::unordered_set<std::uint64_t> seen;
    seen.reserve(len + 1);
    std::uint64_t sig = 0;
    seen.insert(0);
    for (std::size_t k = 0; k < len; ++k) {
      const auto [it, fresh] = bit.try_emplace(w[k], bit.size());
      sig ^= 1ull << it->second;
      if (k + 1 < len && !seen.insert(sig).second) return false;
    }
    return sig == 0;
  }

  // Wide windows: multi-word parity bitset, deduplicated by a mixed digest
  // with exact confirmation on digest collisions.
  const std::size_t nw = (len + 63) / 64;
  std::unordered_map<std::uint32_t, std::size_t> bit;
  bit.reserve(len);
  std::vector<std::uint64_t> sig(nw, 0);
  std::vector<std::vector<std::uint64_t>> prefixes;
  prefixes.reserve(len);
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> seen;
  seen.reserve(len + 1);
  auto digest = [&]() {
    std::uint64_t h = 0x70617269ull;
    for (std::uint64_t x : sig) h = mix64(h ^ x);
    return h;
  };
  prefixes.push_back(sig);
  seen[digest()].push_back(0);
  for (std::size_t k = 0; k < len; ++k) {
    const auto [it, fresh] = bit.try_emplace(w[k], bit.size());
    const std::size_t b = it->second;
    sig[b >> 6] ^= 1ull << (b & 63);
    if (k + 1 == len) break;
    auto& bucket = seen[digest()];
    for (std::size_t idx : bucket)
      if (prefixes[idx] == sig) return false;
    bucket.push_back(prefixes.size());
    prefixes.push_back(sig);
  }
  return std::all_of(sig.begin(), sig.end(), [](std::uint64_t x) { return x == 0; });
}

}  // namespace detail

inline bool is_in_J_l(std::span<const std::uint32_t> w) {
  if (w.empty() || w.size() % 2 != 0)
    throw std::invalid_argument("is_in_J_l: window length must be a positive even number");
  return detail::window_in_J(w);
}

inline bool is_in_J_l(const PatternWindow& w) {
  w.level();  // validates shape
  return detail::window_in_J(std::span<const std::uint32_t>(w.indices));
}

// First time k >= 2l (1-based, k <= min(len, horizon)) whose trailing window
// (i_{k-2l+1}, ..., i_k) lies in J_l; nullopt when no such k exists.
inline std::optional<std::uint64_t> scan_first_gamma(std::span<const std::uint32_t> seq,
                                                     std::uint32_t l,
                                                     std::uint64_t horizon) {
  if (l < 1) throw std::invalid_argument("scan_first_gamma: level must be >= 1");
  const std::uint64_t limit = std::min<std::uint64_t>(seq.size(), horizon);
  for (std::uint64_t k = 2ull * l; k <= limit; ++k) {
    if (detail::window_in_J(seq.subspan(static_cast<std::size_t>(k - 2ull * l),
                                        static_cast<std::size_t>(2ull * l))))
      return k;
  }
  return std::nullopt;
}

}  // namespace cubetimes
