#ifndef DAB_CYCLE_HPP
#define DAB_CYCLE_HPP

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dab/assimilation.hpp"
#include "dab/metrics.hpp"

namespace dab {

enum class Method { None, ThreeDVar, FourDVar, EnKF, Hybrid, Regressor };

std::string to_string(Method m);
Method parse_method(const std::string &name);

struct HtaaConfig {
  bool enabled = false;
  /// Oldest anchor considered, in hours before the target time.
  Hours anchor_span = 24;
};

struct CycleConfig {
  Hours window_hours = 12;
  Hours obs_cadence_hours = 3;
  std::size_t n_cycles = 0;
  Method method = Method::ThreeDVar;
  /// Lead times the forecast model is invoked with when building backgrounds.
  std::vector<Hours> forecast_leads = {6, 12, 24};
  HtaaConfig htaa;
  std::size_t spin_up_cycles = 10;
  /// Start of the first window; truth must exist 24 h earlier.
  Hours first_window_start = 24;
  /// Multiplier on B^{1/2} noise added to the truth snapshot the first
  /// background is forecast from; 0 starts from the exact snapshot.
  double initial_perturbation = 0.0;

  LbfgsConfig solver;
  EnkfConfig enkf;
  std::size_t ensemble_size = 20;
  double hybrid_beta = 0.5;
};

/// Everything a method may need besides the model and the observations.
struct DaSetup {
  BackgroundCov b;
  ObsCov r;
  Climatology climatology;
  std::optional<IncrementRegressor> regressor;
};

struct CycleDiagnostics {
  bool failed = false;
  std::string message;
  int iterations = 0;
  std::string exit_reason;
  double initial_cost = 0.0;
  double final_cost = 0.0;
};

struct CycleRecord {
  std::size_t index = 0;
  Hours window_start = 0;
  StateField background;
  StateField analysis;
  std::vector<FieldScore> background_scores;
  std::vector<FieldScore> analysis_scores;
  CycleDiagnostics diagnostics;
  Hours anchor_time = 0;
  std::size_t background_calls = 0;
};

/// Analysis kept for background construction (ensemble members when present).
struct AnalysisEntry {
  Hours time = 0;
  StateField state;
  std::vector<StateField> members;
};

struct BackgroundChoice {
  Hours anchor_time = 0;
  std::vector<Hours> steps;
};

/// Truth snapshots addressed by time.
class TruthIndex {
 public:
  explicit TruthIndex(const std::vector<StateField> &series);
  const StateField &at(Hours t) const;
  bool contains(Hours t) const { return by_time_.count(t) != 0; }

 private:
  std::map<Hours, const StateField *> by_time_;
};

/// 24 h forecast from the truth snapshot one day before the first window.
StateField initial_background(const DynamicsModel &model, const StateField &truth_t0_minus_24h,
                              std::span<const Hours> leads = {});

/// Picks the anchor analysis and lead decomposition for a background at `target`.
/// HTAA off: the latest analysis. HTAA on: among analyses within the anchor
/// span, the one needing the fewest model calls, ties going to the most recent.
BackgroundChoice choose_background(const std::vector<AnalysisEntry> &history, Hours target,
                                   const CycleConfig &cfg);

StateField build_background(const DynamicsModel &model, const std::vector<AnalysisEntry> &history,
                            Hours target, const CycleConfig &cfg);

std::vector<CycleRecord> run_cycle(const DynamicsModel &model, const std::vector<StateField> &truth,
                                   const ObsSet &obs, const CycleConfig &cfg, const DaSetup &setup);

struct ForecastLaunch {
  Hours init_time = 0;
  std::vector<Hours> leads;
  std::vector<StateField> states;
  std::vector<std::vector<FieldScore>> scores;
};

/// Forecasts every `step` hours up to `max_lead` (leads beyond the truth are dropped).
ForecastLaunch launch_medium_range(const DynamicsModel &model, const StateField &analysis,
                                   const TruthIndex &truth, const Climatology &climatology,
                                   std::span<const Hours> leads = {}, Hours max_lead = 288,
                                   Hours step = 6);

/// Post-spin-up time means of analysis (or background) scores.
SummaryTable summarize_cycle(const std::vector<CycleRecord> &records, std::size_t spin_up,
                             bool backgrounds = false);

}  // namespace dab

#endif  // DAB_CYCLE_HPP
