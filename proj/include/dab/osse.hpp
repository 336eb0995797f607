#ifndef DAB_OSSE_HPP
#define DAB_OSSE_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dab/dynamics.hpp"
#include "dab/grid.hpp"

namespace dab {

// -----------------------------------------------------------------------------
/// Observation error standard deviation per (variable, level); an empty
/// optional marks an unobserved variable/level.
class ObsErrorTable {
 public:
  using Key = std::pair<std::string, std::string>;

  /// Error levels for z, t, q, u, v on nine pressure levels plus t2m, u10,
  /// v10 and msl at the surface; q at 50/200/250 hPa is unobserved.
  static ObsErrorTable standard();
  /// One entry per (variable, level) taken from VariableSpec::obs_sigma.
  static ObsErrorTable from_grid(const GridSpec &grid);

  void set(const std::string &var, const std::string &level, std::optional<double> sigma);
  /// Looks up (name, level); falls back to splitting names like "z500" into
  /// ("z", "500") for single-level grids. Throws ConfigError if nothing matches.
  std::optional<double> sigma(const std::string &var, const std::string &level) const;
  /// Per-channel sigma for a grid, in channel order.
  std::vector<std::optional<double>> channel_sigmas(const GridSpec &grid) const;

  const std::map<Key, std::optional<double>> &entries() const { return entries_; }

 private:
  std::map<Key, std::optional<double>> entries_;
};

struct MaskSpec {
  double masked_ratio = 0.9;
  std::uint64_t seed = 0;
  bool regenerate_each_time = true;
};

/// Flat observed-flag bitmap in canonical layout: 1 = observed, 0 = masked.
using ObsMask = std::vector<std::uint8_t>;

struct ObsRecord {
  Hours time = 0;
  /// Dense vector in canonical layout; NaN where not observed.
  Vector values;
  ObsMask observed;
  std::size_t count() const;
};

struct ObsSet {
  GridPtr grid;
  Hours cadence = 3;
  std::vector<ObsRecord> records;

  /// Records with start <= time < end.
  std::vector<const ObsRecord *> window(Hours start, Hours end) const;
  const ObsRecord *at(Hours time) const;
};

/// Truth trajectory saved every `save_every` hours, starting with x0.
std::vector<StateField> run_truth(const DynamicsModel &model, const StateField &x0, Hours horizon,
                                  Hours save_every);

/// Number of masked cells per channel: round-half-away(ratio * cells).
std::size_t masked_count(double ratio, std::size_t cells);

ObsMask generate_mask(const GridSpec &grid, const MaskSpec &spec, Hours time);

/// Keyed N(0, 1) noise for every cell of a state at `time`; a pure function
/// of (seed, time, variable, level, cell).
Vector observation_noise(const GridSpec &grid, std::uint64_t seed, Hours time);

ObsSet simulate_observations(const std::vector<StateField> &truth, const ObsErrorTable &table,
                             const MaskSpec &mask_spec, Hours cadence);

/// H: observed values in canonical flatten order.
Vector apply_obs_operator(const StateField &state, const ObsMask &mask);
Vector apply_obs_operator(const Vector &state, const ObsMask &mask);
/// H^T: scatter into a zero state vector.
Vector obs_operator_adjoint(const Vector &obs, const ObsMask &mask);
std::vector<std::size_t> observed_indices(const ObsMask &mask);

}  // namespace dab

#endif  // DAB_OSSE_HPP
