#ifndef DAB_GRID_HPP
#define DAB_GRID_HPP

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace dab {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Model time in whole hours.
using Hours = std::int64_t;

enum class VariableKind { UpperAir, Surface };

struct VariableSpec {
  std::string name;
  std::string units;
  VariableKind kind = VariableKind::Surface;
  /// Observation error standard deviation; empty when the variable is not observed.
  std::optional<double> obs_sigma;

  bool operator==(const VariableSpec &) const = default;
};

// -----------------------------------------------------------------------------
/// Lat-lon grid carrying one or more variables on a shared set of levels.
/// Longitudes are implicit: n_lon uniform periodic points starting at 0.
/// The canonical flat layout is [variable][level][lat][lon].
class GridSpec {
 public:
  GridSpec(std::vector<double> lat_deg, std::size_t n_lon,
           std::vector<std::string> levels, std::vector<VariableSpec> variables);

  /// Equally spaced cell-centre latitudes that avoid the poles.
  static GridSpec regular(std::size_t n_lat, std::size_t n_lon,
                          std::vector<std::string> levels,
                          std::vector<VariableSpec> variables);
  /// Degenerate 1-variable, 1-level, 1-latitude ring of m points.
  static GridSpec ring(std::size_t m, std::string name = "x",
                       std::optional<double> obs_sigma = 1.0);

  std::size_t n_lat() const { return lat_deg_.size(); }
  std::size_t n_lon() const { return n_lon_; }
  std::size_t n_level() const { return levels_.size(); }
  std::size_t n_var() const { return variables_.size(); }
  std::size_t cells() const { return n_lat() * n_lon_; }
  std::size_t channels() const { return n_var() * n_level(); }
  /// Total flattened dimension m.
  std::size_t size() const { return channels() * cells(); }

  const std::vector<double> &lat_deg() const { return lat_deg_; }
  const std::vector<std::string> &levels() const { return levels_; }
  const std::vector<VariableSpec> &variables() const { return variables_; }

  std::optional<std::size_t> variable_index(const std::string &name) const;
  std::optional<std::size_t> level_index(const std::string &label) const;

  std::size_t index(std::size_t var, std::size_t level, std::size_t lat,
                    std::size_t lon) const {
    return ((var * n_level() + level) * n_lat() + lat) * n_lon_ + lon;
  }
  std::size_t channel_offset(std::size_t var, std::size_t level) const {
    return (var * n_level() + level) * cells();
  }
  double lon_deg(std::size_t k) const { return 360.0 * double(k) / double(n_lon_); }

  bool operator==(const GridSpec &) const = default;

 private:
  std::vector<double> lat_deg_;
  std::size_t n_lon_;
  std::vector<std::string> levels_;
  std::vector<VariableSpec> variables_;
};

using GridPtr = std::shared_ptr<const GridSpec>;

inline GridPtr make_grid(GridSpec g) { return std::make_shared<const GridSpec>(std::move(g)); }

// -----------------------------------------------------------------------------
/// A full model state on a grid at one time.
class StateField {
 public:
  StateField(GridPtr grid, Vector values, Hours time);
  /// Zero state.
  StateField(GridPtr grid, Hours time);

  const GridSpec &grid() const { return *grid_; }
  const GridPtr &grid_ptr() const { return grid_; }
  const Vector &values() const { return values_; }
  Hours time() const { return time_; }

  double at(std::size_t var, std::size_t level, std::size_t lat, std::size_t lon) const {
    return values_[grid_->index(var, level, lat, lon)];
  }
  auto channel(std::size_t var, std::size_t level) const {
    return values_.segment(Eigen::Index(grid_->channel_offset(var, level)),
                           Eigen::Index(grid_->cells()));
  }

  bool operator==(const StateField &o) const;

 private:
  GridPtr grid_;
  Vector values_;
  Hours time_;
};

/// Latitude weights cos(lat)/mean(cos(lat)); the result has mean 1.
Vector latitude_weights(const GridSpec &grid);

Vector flatten(const StateField &state);
StateField unflatten(const Vector &values, const GridPtr &grid, Hours time = 0);

// -----------------------------------------------------------------------------
struct VarStats {
  double mean = 0.0;
  double std = 1.0;
};

/// Per-variable scalar mean and standard deviation (population).
struct NormStats {
  std::map<std::string, VarStats> by_variable;
  const VarStats &at(const std::string &name) const;
};

NormStats compute_norm_stats(std::span<const StateField> series);
StateField normalize(const StateField &state, const NormStats &stats);
StateField denormalize(const StateField &state, const NormStats &stats);

struct Climatology {
  GridPtr grid;
  Vector mean;
  StateField as_state(Hours time = 0) const { return StateField(grid, mean, time); }
};

Climatology compute_climatology(std::span<const StateField> truth_series);

}  // namespace dab

#endif  // DAB_GRID_HPP
