#ifndef DAB_CONFIG_HPP
#define DAB_CONFIG_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dab/cycle.hpp"
#include "dab/dynamics.hpp"
#include "dab/osse.hpp"

namespace dab {

struct ModelConfig {
  std::string type = "lorenz96";  // lorenz96 | advection
  Lorenz96Params lorenz96;
  // advection
  std::size_t n_lat = 16;
  std::size_t n_lon = 32;
  std::vector<std::string> levels = {"500"};
  std::vector<VariableSpec> variables;
  AdvectionParams advection;
  std::vector<Hours> supported_leads = {3, 6, 12, 24};
  /// Forecast-model overrides; absent means the truth model also forecasts.
  std::optional<nlohmann::json> twin;
};

struct TruthConfig {
  Hours spinup_hours = 1200;
  Hours horizon_hours = 2400;
  Hours save_every_hours = 3;
  double initial_perturbation = 0.01;
  double train_fraction = 0.5;
  double val_fraction = 0.1;
  Hours shard_hours = 720;
  /// Noise added to the truth before the 24 h background forecasts.
  double background_ic_noise = 0.0;
};

struct OsseConfig {
  /// Uniform sigma for every variable; otherwise grid/standard table sigmas.
  std::optional<double> obs_sigma;
  bool standard_table = false;
  std::vector<double> mask_ratios = {0.9, 0.95};
  Hours cadence_hours = 3;
};

struct DaConfig {
  std::string method = "3dvar";
  double mask_ratio = 0.9;
  /// Multiplier on the estimated background variances.
  double b_scale = 1.0;
  LbfgsConfig solver;
  std::size_t ensemble_size = 20;
  double inflation = 1.0;
  double localization = 0.0;
  double hybrid_beta = 0.5;
  double regressor_train_ratio = 0.9;
};

struct EvalConfig {
  double skill_threshold = 0.6;
  Hours launch_interval_hours = 336;
  Hours max_lead_hours = 288;
  Hours lead_step_hours = 6;
};

struct RunConfig {
  std::string name = "run";
  std::filesystem::path output_root = "dab_out";
  std::uint64_t seed = 1;
  ModelConfig model;
  TruthConfig truth;
  OsseConfig osse;
  DaConfig da;
  CycleConfig cycle;
  EvalConfig eval;
};

/// Parses and validates a configuration; unknown keys raise ConfigError.
RunConfig parse_config(const nlohmann::json &j);
RunConfig load_config(const std::filesystem::path &path);

/// Truth model and forecast model (the twin when configured).
ModelPtr make_truth_model(const RunConfig &cfg);
ModelPtr make_forecast_model(const RunConfig &cfg);

/// Error table implied by the osse section for the model grid.
ObsErrorTable make_error_table(const RunConfig &cfg, const GridSpec &grid);

}  // namespace dab

#endif  // DAB_CONFIG_HPP
