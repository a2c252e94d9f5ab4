#include <catch2/catch_amalgamated.hpp>

#include <vector>

#include "cubetimes/noise.hpp"
#include "support.hpp"

using namespace cubetimes;

TEST_CASE("streams replay exactly from the same seed") {
  NoiseStream a(42), b(42);
  for (int k = 0; k < 1000; ++k) {
    const Step sa = a.next(17), sb = b.next(17);
    REQUIRE(sa.index == sb.index);
    REQUIRE(sa.u == sb.u);
  }
  REQUIRE(a.position() == 2000);  // a pair consumes two raw values
}

TEST_CASE("distinct seeds and lanes decorrelate streams") {
  NoiseStream a(1), b(2);
  std::uint32_t equal = 0;
  for (int k = 0; k < 4096; ++k)
    if (a.raw() == b.raw()) ++equal;
  REQUIRE(equal == 0);

  REQUIRE(derive_seed(7, lane_tag("couple"), 0) != derive_seed(7, lane_tag("env"), 0));
  REQUIRE(derive_seed(7, lane_tag("couple"), 0) != derive_seed(7, lane_tag("couple"), 1));
  REQUIRE(derive_seed(7, lane_tag("couple"), 0) != derive_seed(8, lane_tag("couple"), 0));
}

TEST_CASE("indices are 1-based, in range, and uniform") {
  const std::uint32_t n = 13;
  NoiseStream ns(2026);
  std::vector<std::uint64_t> counts(n, 0);
  for (int k = 0; k < 130000; ++k) {
    const std::uint32_t i = ns.next_index(n);
    REQUIRE(i >= 1);
    REQUIRE(i <= n);
    ++counts[i - 1];
  }
  REQUIRE(testsupport::uniform_cells_p(counts) > 1e-4);
}

TEST_CASE("uniforms live in [0,1) and fill the unit interval evenly") {
  NoiseStream ns(7);
  std::vector<std::uint64_t> cells(16, 0);
  double mean = 0.0;
  const int reps = 160000;
  for (int k = 0; k < reps; ++k) {
    const double u = ns.next_u();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    mean += u;
    ++cells[static_cast<std::size_t>(u * 16.0)];
  }
  mean /= reps;
  // se of the mean of reps uniforms is (1/sqrt(12)) / sqrt(reps)
  REQUIRE(std::abs(mean - 0.5) < 4.0 * (1.0 / std::sqrt(12.0)) / std::sqrt(double(reps)));
  REQUIRE(testsupport::uniform_cells_p(cells) > 1e-4);
}

TEST_CASE("next draws index first, then u") {
  NoiseStream a(99), b(99);
  const Step s = a.next(10);
  const std::uint64_t r1 = b.raw(), r2 = b.raw();
  REQUIRE(s.index == 1 + static_cast<std::uint32_t>((static_cast<unsigned __int128>(r1) * 10) >> 64));
  REQUIRE(s.u == static_cast<double>(r2 >> 11) * 0x1.0p-53);
}

TEST_CASE("position counts raw draws and seed is preserved") {
  NoiseStream ns(5);
  REQUIRE(ns.seed() == 5);
  REQUIRE(ns.position() == 0);
  ns.raw();
  ns.next_u();
  REQUIRE(ns.position() == 2);
}
