#ifndef DAB_TEST_SUPPORT_HPP
#define DAB_TEST_SUPPORT_HPP

#include <cmath>
#include <cstdint>

#include "dab/grid.hpp"
#include "dab/osse.hpp"
#include "dab/random.hpp"

namespace dab::test {

inline Vector randn(std::size_t n, std::uint64_t seed, double scale = 1.0) {
  CounterRng rng(seed, {0x7e57});
  Vector v(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) v[Eigen::Index(i)] = scale * rng.normal(i);
  return v;
}

inline GridPtr two_var_grid(std::size_t n_lat = 4, std::size_t n_lon = 8) {
  return make_grid(GridSpec::regular(n_lat, n_lon, {"500", "850"},
                                     {{"z", "m2 s-2", VariableKind::UpperAir, 1.0},
                                      {"t", "K", VariableKind::UpperAir, 0.5}}));
}

inline StateField random_state(const GridPtr &g, std::uint64_t seed, Hours t = 0,
                               double scale = 1.0) {
  return StateField(g, randn(g->size(), seed, scale), t);
}

/// Observation record of `values` at the observed cells of `mask`.
inline ObsRecord make_obs(const Vector &values, const ObsMask &mask, Hours t) {
  ObsRecord r;
  r.time = t;
  r.observed = mask;
  r.values = Vector::Constant(values.size(), std::nan(""));
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) r.values[Eigen::Index(i)] = values[Eigen::Index(i)];
  return r;
}

}  // namespace dab::test

#endif
