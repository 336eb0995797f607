#ifndef DAB_RANDOM_HPP
#define DAB_RANDOM_HPP

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>

namespace dab {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// -----------------------------------------------------------------------------
/// Stateless counter-based generator. Every draw is a pure function of
/// (key, counter), so results do not depend on evaluation order or threading.
class CounterRng {
 public:
  constexpr explicit CounterRng(std::uint64_t seed) : key_(mix64(seed)) {}
  constexpr CounterRng(std::uint64_t seed, std::initializer_list<std::uint64_t> path)
      : key_(mix64(seed)) {
    for (auto p : path) key_ = mix64(key_ ^ mix64(p + 0x632be59bd9b4e019ULL));
  }

  /// Derived stream for a sub-key.
  constexpr CounterRng sub(std::uint64_t k) const {
    CounterRng r(0);
    r.key_ = mix64(key_ ^ mix64(k + 0x632be59bd9b4e019ULL));
    return r;
  }

  constexpr std::uint64_t bits(std::uint64_t counter) const {
    return mix64(key_ ^ mix64(counter ^ 0xd1b54a32d192ed03ULL));
  }
  /// Uniform in [0, 1).
  double uniform(std::uint64_t counter) const {
    return double(bits(counter) >> 11) * 0x1.0p-53;
  }
  /// Uniform integer in [0, n) by multiply-shift.
  std::uint64_t below(std::uint64_t counter, std::uint64_t n) const {
    return std::uint64_t((static_cast<unsigned __int128>(bits(counter)) * n) >> 64);
  }
  /// Standard normal via Box-Muller on counters 2c and 2c+1.
  double normal(std::uint64_t counter) const {
    const double u1 = 1.0 - uniform(2 * counter);
    const double u2 = uniform(2 * counter + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  std::uint64_t key() const { return key_; }

 private:
  std::uint64_t key_;
};

}  // namespace dab

#endif  // DAB_RANDOM_HPP
