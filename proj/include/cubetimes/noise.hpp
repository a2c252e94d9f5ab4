#pragma once

#include <cstdint>

namespace cubetimes {

// splitmix64 finalizer; full-avalanche 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z ^= z >> 30;
  z *= 0xbf58476d1ce4e5b9ull;
  z ^= z >> 27;
  z *= 0x94d049bb133111ebull;
  z ^= z >> 31;
  return z;
}

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ull;

// Output of the splitmix64 sequence seeded at `base`, position i. Pure
// counter form: any position is addressable in O(1) with no carried state.
constexpr std::uint64_t mix_at(std::uint64_t base, std::uint64_t i) noexcept {
  return mix64(base + (i + 1) * kGolden);
}

// FNV-1a of a C string; tags seed-derivation lanes by experiment name.
constexpr std::uint64_t lane_tag(const char* s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (; *s; ++s) h = (h ^ static_cast<unsigned char>(*s)) * 0x100000001b3ull;
  return h;
}

// Seed for (master, lane, index). Chained mixing rather than a single XOR so
// that distinct triples collide only on full 64-bit coincidences.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t lane,
                                    std::uint64_t index) noexcept {
  std::uint64_t h = mix64(master ^ kGolden);
  h = mix64(h ^ lane);
  h = mix64(h ^ index);
  return h;
}

struct Step {
  std::uint32_t index;  // coordinate, 1-based
  double u;             // uniform in [0,1)
};

// Noise source for one walk: the shared (I(t), U(t)) pairs that drive every
// dynamics here. Counter-based splitmix64 underneath, so output t is a pure
// function of (seed, t) and streams can be replayed or farmed out freely.
//
// Consumption order is part of the contract: next() draws the index first,
// then u, and every walk-driving operation consumes full pairs even when the
// dynamics ignores u. Identical seeds therefore mean identical index
// sequences across walk kinds.
class NoiseStream {
 public:
  explicit NoiseStream(std::uint64_t seed) noexcept : base_(seed) {}
  NoiseStream(std::uint64_t master, std::uint64_t stream_id) noexcept
      : base_(derive_seed(master, lane_tag("stream"), stream_id)) {}

  std::uint64_t raw() noexcept { return mix_at(base_, pos_++); }

  // Uniform on {1..n}; multiply-shift bounded sampling, no rejection loop.
  std::uint32_t next_index(std::uint32_t n) noexcept {
    return 1 + static_cast<std::uint32_t>(
                   (static_cast<unsigned __int128>(raw()) * n) >> 64);
  }

  // Uniform in [0,1) with 53 random bits.
  double next_u() noexcept { return static_cast<double>(raw() >> 11) * 0x1.0p-53; }

  Step next(std::uint32_t n) noexcept {
    const std::uint32_t i = next_index(n);
    return Step{i, next_u()};
  }

  std::uint64_t seed() const noexcept { return base_; }
  std::uint64_t position() const noexcept { return pos_; }

 private:
  std::uint64_t base_;
  std::uint64_t pos_ = 0;
};

}  // namespace cubetimes
