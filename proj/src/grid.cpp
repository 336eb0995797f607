#include "dab/grid.hpp"

#include <cmath>
#include <numbers>
#include <set>

#include "dab/error.hpp"

namespace dab {

// -----------------------------------------------------------------------------
GridSpec::GridSpec(std::vector<double> lat_deg, std::size_t n_lon,
                   std::vector<std::string> levels, std::vector<VariableSpec> variables)
    : lat_deg_(std::move(lat_deg)), n_lon_(n_lon), levels_(std::move(levels)),
      variables_(std::move(variables)) {
  if (lat_deg_.empty()) throw DimensionError("grid needs at least one latitude");
  if (n_lon_ < 1) throw DimensionError("grid needs at least one longitude");
  if (levels_.empty()) throw DimensionError("grid needs at least one level");
  if (variables_.empty()) throw DimensionError("grid needs at least one variable");
  for (double lat : lat_deg_) {
    if (!(std::abs(lat) <= 90.0)) throw DimensionError("latitude outside [-90, 90]");
  }
  if (lat_deg_.size() > 1) {
    const bool up = lat_deg_[1] > lat_deg_[0];
    for (std::size_t j = 1; j < lat_deg_.size(); ++j) {
      if ((lat_deg_[j] > lat_deg_[j - 1]) != up || lat_deg_[j] == lat_deg_[j - 1])
        throw DimensionError("latitudes must be strictly monotone");
    }
  }
  std::set<std::string> names;
  for (const auto &v : variables_) {
    if (!names.insert(v.name).second)
      throw DimensionError("duplicate variable name '" + v.name + "'");
    if (v.obs_sigma && !(*v.obs_sigma >= 0.0))
      throw ConfigError("negative observation sigma for '" + v.name + "'");
  }
}

GridSpec GridSpec::regular(std::size_t n_lat, std::size_t n_lon,
                           std::vector<std::string> levels,
                           std::vector<VariableSpec> variables) {
  std::vector<double> lats(n_lat);
  const double d = 180.0 / double(n_lat);
  for (std::size_t j = 0; j < n_lat; ++j) lats[j] = -90.0 + d * (double(j) + 0.5);
  return GridSpec(std::move(lats), n_lon, std::move(levels), std::move(variables));
}

GridSpec GridSpec::ring(std::size_t m, std::string name, std::optional<double> obs_sigma) {
  return GridSpec({0.0}, m, {"surface"},
                  {VariableSpec{std::move(name), "1", VariableKind::Surface, obs_sigma}});
}

std::optional<std::size_t> GridSpec::variable_index(const std::string &name) const {
  for (std::size_t i = 0; i < variables_.size(); ++i)
    if (variables_[i].name == name) return i;
  return std::nullopt;
}

std::optional<std::size_t> GridSpec::level_index(const std::string &label) const {
  for (std::size_t i = 0; i < levels_.size(); ++i)
    if (levels_[i] == label) return i;
  return std::nullopt;
}

// -----------------------------------------------------------------------------
StateField::StateField(GridPtr grid, Vector values, Hours time)
    : grid_(std::move(grid)), values_(std::move(values)), time_(time) {
  if (!grid_) throw DimensionError("state without grid");
  if (std::size_t(values_.size()) != grid_->size())
    throw DimensionError("state length " + std::to_string(values_.size()) +
                         " does not match grid size " + std::to_string(grid_->size()));
  if (!values_.allFinite()) throw NumericalError("state contains non-finite values");
}

StateField::StateField(GridPtr grid, Hours time)
    : StateField(grid, Vector::Zero(Eigen::Index(grid ? grid->size() : 0)), time) {}

bool StateField::operator==(const StateField &o) const {
  return time_ == o.time_ && *grid_ == *o.grid_ && values_ == o.values_;
}

// -----------------------------------------------------------------------------
Vector latitude_weights(const GridSpec &grid) {
  const std::size_t n = grid.n_lat();
  Vector c(Eigen::Index(n), 1);
  for (std::size_t j = 0; j < n; ++j)
    c[Eigen::Index(j)] = std::cos(grid.lat_deg()[j] * std::numbers::pi / 180.0);
  const double mean = c.mean();
  return c / mean;
}

Vector flatten(const StateField &state) { return state.values(); }

StateField unflatten(const Vector &values, const GridPtr &grid, Hours time) {
  return StateField(grid, values, time);
}

// -----------------------------------------------------------------------------
const VarStats &NormStats::at(const std::string &name) const {
  auto it = by_variable.find(name);
  if (it == by_variable.end())
    throw MissingStatsError("no normalization statistics for variable '" + name + "'");
  return it->second;
}

NormStats compute_norm_stats(std::span<const StateField> series) {
  if (series.empty()) throw DimensionError("empty series for normalization statistics");
  const GridSpec &g = series.front().grid();
  NormStats out;
  const std::size_t per_var = g.n_level() * g.cells();
  for (std::size_t v = 0; v < g.n_var(); ++v) {
    // Welford accumulation over all levels, cells and times of the variable.
    double mean = 0.0, m2 = 0.0;
    std::size_t count = 0;
    for (const auto &s : series) {
      if (!(s.grid() == g)) throw DimensionError("series mixes grids");
      const auto block = s.values().segment(Eigen::Index(g.channel_offset(v, 0)),
                                            Eigen::Index(per_var));
      for (double x : block) {
        ++count;
        const double delta = x - mean;
        mean += delta / double(count);
        m2 += delta * (x - mean);
      }
    }
    const double sd = std::sqrt(m2 / double(count));
    if (!(sd > 0.0))
      throw DegenerateStatsError("variable '" + g.variables()[v].name +
                                 "' has zero standard deviation");
    out.by_variable[g.variables()[v].name] = VarStats{mean, sd};
  }
  return out;
}

namespace {

StateField affine_per_variable(const StateField &state, const NormStats &stats, bool forward) {
  const GridSpec &g = state.grid();
  Vector v = state.values();
  const auto per_var = Eigen::Index(g.n_level() * g.cells());
  for (std::size_t i = 0; i < g.n_var(); ++i) {
    const VarStats &s = stats.at(g.variables()[i].name);
    auto block = v.segment(Eigen::Index(g.channel_offset(i, 0)), per_var);
    if (forward)
      block = (block.array() - s.mean) / s.std;
    else
      block = block.array() * s.std + s.mean;
  }
  return StateField(state.grid_ptr(), std::move(v), state.time());
}

}  // namespace

StateField normalize(const StateField &state, const NormStats &stats) {
  return affine_per_variable(state, stats, true);
}

StateField denormalize(const StateField &state, const NormStats &stats) {
  return affine_per_variable(state, stats, false);
}

Climatology compute_climatology(std::span<const StateField> truth_series) {
  if (truth_series.empty()) throw DimensionError("empty series for climatology");
  const GridPtr &g = truth_series.front().grid_ptr();
  // Running mean keeps magnitudes bounded for long series.
  Vector mean = Vector::Zero(Eigen::Index(g->size()));
  double n = 0.0;
  for (const auto &s : truth_series) {
    if (!(s.grid() == *g)) throw DimensionError("series mixes grids");
    n += 1.0;
    mean += (s.values() - mean) / n;
  }
  return Climatology{g, std::move(mean)};
}

}  // namespace dab
