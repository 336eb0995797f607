#include <doctest.h>

#include <cmath>

#include "dab/random.hpp"

using dab::CounterRng;

TEST_CASE("counter rng is a pure function of key and counter") {
  CounterRng a(42, {1, 2}), b(42, {1, 2}), c(42, {2, 1});
  CHECK(a.bits(7) == b.bits(7));
  CHECK(a.bits(7) != c.bits(7));
  CHECK(a.sub(3).bits(0) == b.sub(3).bits(0));
  CHECK(a.sub(3).bits(0) != a.sub(4).bits(0));
}

TEST_CASE("normal and uniform moments") {
  CounterRng r(9);
  const int n = 200000;
  double s = 0, ss = 0, u = 0;
  for (int i = 0; i < n; ++i) {
    double z = r.normal(std::uint64_t(i));
    s += z;
    ss += z * z;
    double x = r.uniform(std::uint64_t(i));
    CHECK_UNARY(x >= 0.0 && x < 1.0);
    u += x;
  }
  CHECK(std::abs(s / n) < 0.01);
  CHECK(std::abs(ss / n - 1.0) < 0.01);
  CHECK(std::abs(u / n - 0.5) < 0.005);
  for (int i = 0; i < 1000; ++i) CHECK(r.below(std::uint64_t(i), 17) < 17);
}
