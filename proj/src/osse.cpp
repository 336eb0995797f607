#include "dab/osse.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numeric>

#include "dab/error.hpp"
#include "dab/kernels.hpp"
#include "dab/random.hpp"

namespace dab {

namespace {

constexpr std::uint64_t kMaskStream = 1;
constexpr std::uint64_t kNoiseStream = 2;

}  // namespace

// -----------------------------------------------------------------------------
ObsErrorTable ObsErrorTable::standard() {
  const std::vector<std::string> lv = {"50", "200", "250", "300", "500", "700", "850", "925", "1000"};
  const std::vector<double> z = {588, 525, 542, 381, 242, 186, 148, 138, 377};
  const std::vector<double> t = {1.480, 1.225, 1.225, 1.090, 1.069, 1.385, 1.954, 2.364, 3.070};
  const std::vector<double> u = {3.196, 4.519, 4.764, 4.686, 4.235, 3.600, 2.327, 2.107, 3.763};
  const std::vector<double> v = {2.787, 4.036, 4.476, 4.872, 4.010, 3.350, 2.692, 3.363, 2.825};
  const std::vector<std::optional<double>> q = {std::nullopt, std::nullopt, std::nullopt,
                                                0.00012,      0.00043,      0.00087,
                                                0.00115,      0.00121,      0.00130};
  ObsErrorTable tab;
  for (std::size_t i = 0; i < lv.size(); ++i) {
    tab.set("z", lv[i], z[i]);
    tab.set("t", lv[i], t[i]);
    tab.set("u", lv[i], u[i]);
    tab.set("v", lv[i], v[i]);
    tab.set("q", lv[i], q[i]);
  }
  tab.set("t2m", "surface", 3.935);
  tab.set("u10", "surface", 1.940);
  tab.set("v10", "surface", 1.920);
  tab.set("msl", "surface", 100.0);
  return tab;
}

ObsErrorTable ObsErrorTable::from_grid(const GridSpec &grid) {
  ObsErrorTable tab;
  for (const auto &var : grid.variables())
    for (const auto &lev : grid.levels()) tab.set(var.name, lev, var.obs_sigma);
  return tab;
}

void ObsErrorTable::set(const std::string &var, const std::string &level,
                        std::optional<double> sigma) {
  if (sigma && !(*sigma >= 0.0)) throw ConfigError("negative observation error for " + var);
  entries_[{var, level}] = sigma;
}

std::optional<double> ObsErrorTable::sigma(const std::string &var, const std::string &level) const {
  if (auto it = entries_.find({var, level}); it != entries_.end()) return it->second;
  // "z500" -> ("z", "500")
  const auto split = std::find_if(var.begin(), var.end(), [](char c) { return std::isdigit(c); });
  if (split != var.begin() && split != var.end() &&
      std::all_of(split, var.end(), [](char c) { return std::isdigit(c); })) {
    if (auto it = entries_.find({std::string(var.begin(), split), std::string(split, var.end())});
        it != entries_.end())
      return it->second;
  }
  if (auto it = entries_.find({var, "surface"}); it != entries_.end() && level == "surface")
    return it->second;
  throw ConfigError("no observation error entry for variable '" + var + "' at level '" + level +
                    "'");
}

std::vector<std::optional<double>> ObsErrorTable::channel_sigmas(const GridSpec &grid) const {
  std::vector<std::optional<double>> out;
  out.reserve(grid.channels());
  for (const auto &var : grid.variables())
    for (const auto &lev : grid.levels()) out.push_back(sigma(var.name, lev));
  return out;
}

// -----------------------------------------------------------------------------
std::size_t ObsRecord::count() const {
  return std::size_t(std::count(observed.begin(), observed.end(), std::uint8_t{1}));
}

std::vector<const ObsRecord *> ObsSet::window(Hours start, Hours end) const {
  std::vector<const ObsRecord *> out;
  for (const auto &r : records)
    if (r.time >= start && r.time < end) out.push_back(&r);
  return out;
}

const ObsRecord *ObsSet::at(Hours time) const {
  for (const auto &r : records)
    if (r.time == time) return &r;
  return nullptr;
}

// -----------------------------------------------------------------------------
std::vector<StateField> run_truth(const DynamicsModel &model, const StateField &x0, Hours horizon,
                                  Hours save_every) {
  if (horizon < 0 || save_every <= 0 || horizon % save_every != 0)
    throw ConfigError("save interval must divide the truth horizon");
  std::vector<StateField> out;
  out.reserve(std::size_t(horizon / save_every) + 1);
  out.push_back(x0);
  for (Hours t = save_every; t <= horizon; t += save_every)
    out.push_back(forecast_hta(model, out.back(), save_every));
  return out;
}

std::size_t masked_count(double ratio, std::size_t cells) {
  if (!(ratio >= 0.0 && ratio < 1.0)) throw ConfigError("masked ratio must be in [0, 1)");
  return std::size_t(std::llround(ratio * double(cells)));
}

ObsMask generate_mask(const GridSpec &grid, const MaskSpec &spec, Hours time) {
  const std::size_t cells = grid.cells();
  const std::size_t n_masked = masked_count(spec.masked_ratio, cells);
  const Hours key_time = spec.regenerate_each_time ? time : 0;
  ObsMask mask(grid.size(), 1);
  std::vector<std::uint32_t> perm(cells);
  for (std::size_t v = 0; v < grid.n_var(); ++v) {
    for (std::size_t l = 0; l < grid.n_level(); ++l) {
      const CounterRng rng(spec.seed, {kMaskStream, std::uint64_t(key_time), v, l});
      std::iota(perm.begin(), perm.end(), 0u);
      // Partial Fisher-Yates: the first n_masked slots are a uniform sample.
      for (std::size_t i = 0; i < n_masked; ++i) {
        const std::size_t j = i + std::size_t(rng.below(i, cells - i));
        std::swap(perm[i], perm[j]);
      }
      const std::size_t off = grid.channel_offset(v, l);
      for (std::size_t i = 0; i < n_masked; ++i) mask[off + perm[i]] = 0;
    }
  }
  return mask;
}

Vector observation_noise(const GridSpec &grid, std::uint64_t seed, Hours time) {
  Vector eps(Eigen::Index(grid.size()));
  for (std::size_t v = 0; v < grid.n_var(); ++v) {
    for (std::size_t l = 0; l < grid.n_level(); ++l) {
      const CounterRng rng(seed, {kNoiseStream, std::uint64_t(time), v, l});
      const std::size_t off = grid.channel_offset(v, l);
      for (std::size_t c = 0; c < grid.cells(); ++c) eps[Eigen::Index(off + c)] = rng.normal(c);
    }
  }
  return eps;
}

ObsSet simulate_observations(const std::vector<StateField> &truth, const ObsErrorTable &table,
                             const MaskSpec &mask_spec, Hours cadence) {
  if (cadence <= 0) throw ConfigError("observation cadence must be positive");
  ObsSet out;
  if (truth.empty()) return out;
  out.grid = truth.front().grid_ptr();
  out.cadence = cadence;
  const GridSpec &g = *out.grid;
  const auto sig = table.channel_sigmas(g);
  const double nan = std::numeric_limits<double>::quiet_NaN();

  std::vector<const StateField *> picks;
  for (const auto &s : truth)
    if (s.time() % cadence == 0) picks.push_back(&s);
  for (std::size_t i = 1; i < picks.size(); ++i)
    if (picks[i]->time() - picks[i - 1]->time() != cadence)
      throw ConfigError("truth series does not cover every observation time");

  out.records.resize(picks.size());
  kernels::parallel_for(picks.size(), [&](std::size_t i) {
    const StateField &x = *picks[i];
    ObsRecord &rec = out.records[i];
    rec.time = x.time();
    rec.observed = generate_mask(g, mask_spec, x.time());
    const Vector eps = observation_noise(g, mask_spec.seed, x.time());
    rec.values = Vector::Constant(Eigen::Index(g.size()), nan);
    for (std::size_t ch = 0; ch < g.channels(); ++ch) {
      const std::size_t off = ch * g.cells();
      for (std::size_t c = 0; c < g.cells(); ++c) {
        const std::size_t idx = off + c;
        if (!sig[ch]) {
          rec.observed[idx] = 0;
        } else if (rec.observed[idx]) {
          rec.values[Eigen::Index(idx)] = x.values()[Eigen::Index(idx)] + *sig[ch] * eps[Eigen::Index(idx)];
        }
      }
    }
  });
  return out;
}

// -----------------------------------------------------------------------------
std::vector<std::size_t> observed_indices(const ObsMask &mask) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) idx.push_back(i);
  return idx;
}

Vector apply_obs_operator(const Vector &state, const ObsMask &mask) {
  if (mask.size() != std::size_t(state.size())) throw DimensionError("mask does not match state");
  const auto idx = observed_indices(mask);
  Vector y(Eigen::Index(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) y[Eigen::Index(i)] = state[Eigen::Index(idx[i])];
  return y;
}

Vector apply_obs_operator(const StateField &state, const ObsMask &mask) {
  return apply_obs_operator(state.values(), mask);
}

Vector obs_operator_adjoint(const Vector &obs, const ObsMask &mask) {
  const auto idx = observed_indices(mask);
  if (idx.size() != std::size_t(obs.size())) throw DimensionError("observation vector does not match mask");
  Vector x = Vector::Zero(Eigen::Index(mask.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) x[Eigen::Index(idx[i])] = obs[Eigen::Index(i)];
  return x;
}

}  // namespace dab
