#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "cubetimes/noise.hpp"

namespace cubetimes {

// Point of {-1,+1}^N, 64 spins per word, set bit <=> spin +1. Padding bits in
// the top word are kept zero so equality, distance and digests work word-wise.
class Configuration {
 public:
  explicit Configuration(std::uint32_t n, int fill = +1) : n_(n) {
    if (n == 0) throw std::invalid_argument("Configuration: dimension must be >= 1");
    if (fill != +1 && fill != -1) throw std::invalid_argument("Configuration: fill spin must be +1 or -1");
    words_.assign((n + 63) / 64, fill == +1 ? ~0ull : 0ull);
    if (fill == +1) words_.back() &= top_mask();
  }

  std::uint32_t dimension() const noexcept { return n_; }

  // i is 1-based throughout, matching the index stream convention.
  int spin(std::uint32_t i) const {
    check_index(i);
    return (words_[(i - 1) >> 6] >> ((i - 1) & 63)) & 1u ? +1 : -1;
  }

  void set_spin(std::uint32_t i, int s) {
    check_index(i);
    const std::uint64_t m = 1ull << ((i - 1) & 63);
    if (s == +1)
      words_[(i - 1) >> 6] |= m;
    else if (s == -1)
      words_[(i - 1) >> 6] &= ~m;
    else
      throw std::invalid_argument("set_spin: spin must be +1 or -1");
  }

  void flip(std::uint32_t i) {
    check_index(i);
    words_[(i - 1) >> 6] ^= 1ull << ((i - 1) & 63);
  }

  std::uint32_t minus_count() const noexcept {
    std::uint32_t plus = 0;
    for (std::uint64_t w : words_) plus += static_cast<std::uint32_t>(std::popcount(w));
    return n_ - plus;
  }

  bool operator==(const Configuration& o) const noexcept {
    return n_ == o.n_ && words_ == o.words_;
  }

  const std::vector<std::uint64_t>& words() const noexcept { return words_; }

  // 64-bit content digest: equal configurations digest equally for any salt.
  std::uint64_t digest(std::uint64_t salt = 0) const noexcept {
    std::uint64_t h = mix64(salt ^ (0x636f6e6669ull + n_));
    for (std::uint64_t w : words_) h = mix64(h ^ w);
    return h;
  }

  std::uint64_t top_mask() const noexcept {
    const std::uint32_t r = n_ & 63;
    return r == 0 ? ~0ull : (1ull << r) - 1;
  }

 private:
  void check_index(std::uint32_t i) const {
    if (i < 1 || i > n_) throw std::out_of_range("Configuration: coordinate index out of range");
  }

  std::uint32_t n_;
  std::vector<std::uint64_t> words_;
};

inline std::uint32_t hamming_distance(const Configuration& a, const Configuration& b) {
  if (a.dimension() != b.dimension())
    throw std::invalid_argument("hamming_distance: dimension mismatch");
  const auto& wa = a.words();
  const auto& wb = b.words();
  std::uint32_t d = 0;
  for (std::size_t k = 0; k < wa.size(); ++k)
    d += static_cast<std::uint32_t>(std::popcount(wa[k] ^ wb[k]));
  return d;
}

struct ConfigurationHash {
  std::size_t operator()(const Configuration& c) const noexcept {
    return static_cast<std::size_t>(c.digest());
  }
};

}  // namespace cubetimes
