#pragma once

#include <cstdint>
#include <stdexcept>

#include "cubetimes/configuration.hpp"
#include "cubetimes/noise.hpp"

namespace cubetimes {

// HeatBath: coordinate I(t) is redrawn from u, so the walk may hold its place.
// Flip: coordinate I(t) is negated unconditionally; u is ignored (period 2).
enum class WalkKind { HeatBath, Flip };

// u < 1/2 sets the coordinate to +1, anything else to -1. Ties at exactly 1/2
// land on the -1 side; the event has probability zero and is fixed here once.
inline int heat_bath_spin(double u) noexcept { return u < 0.5 ? +1 : -1; }

inline void step(Configuration& c, WalkKind kind, std::uint32_t i, double u) {
  if (kind == WalkKind::HeatBath)
    c.set_spin(i, heat_bath_spin(u));
  else
    c.flip(i);
}

inline void step(Configuration& c, WalkKind kind, NoiseStream& noise) {
  const Step s = noise.next(c.dimension());
  step(c, kind, s.index, s.u);
}

// Both heat-bath walks absorb the same (i, u): coordinate i agrees afterwards,
// and a coordinate that agrees never disagrees again.
inline void coupled_step(Configuration& a, Configuration& b, std::uint32_t i, double u) {
  if (a.dimension() != b.dimension())
    throw std::invalid_argument("coupled_step: dimension mismatch");
  const int s = heat_bath_spin(u);
  a.set_spin(i, s);
  b.set_spin(i, s);
}

inline void coupled_step(Configuration& a, Configuration& b, NoiseStream& noise) {
  const Step s = noise.next(a.dimension());
  coupled_step(a, b, s.index, s.u);
}

}  // namespace cubetimes
