#ifndef DAB_METRICS_HPP
#define DAB_METRICS_HPP

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dab/grid.hpp"

namespace dab {

struct MetricSeries {
  std::string metric;
  std::string variable;
  std::string level;
  std::vector<std::pair<Hours, double>> points;  // (time or lead, value)
};

struct FieldScore {
  std::string variable;
  std::string level;
  double rmse = 0.0;
  double acc = 0.0;  // NaN when undefined
};

struct SummaryRow {
  std::string variable;
  std::string level;
  double rmse = 0.0;
  double acc = 0.0;
  std::size_t samples = 0;
};

struct SummaryTable {
  std::vector<SummaryRow> rows;
};

/// Mean over samples of the latitude-weighted spatial RMSE of one (variable, level).
double rmse_latweighted(std::span<const StateField> candidates, std::span<const StateField> truths,
                        const std::string &variable, const std::string &level);

/// Latitude-weighted anomaly correlation pooled over samples, weights applied
/// to the numerator and to both variance factors.
double acc_latweighted(std::span<const StateField> candidates, std::span<const StateField> truths,
                       const Climatology &climatology, const std::string &variable,
                       const std::string &level);

/// Mean over variables, levels and cells of L(j) |candidate - truth|.
double l1_latweighted(const StateField &candidate, const StateField &truth);

/// Largest lead with value above threshold before the series first drops to or below it.
Hours skill_horizon(const MetricSeries &acc_series, double threshold = 0.6);

/// RMSE and ACC of every (variable, level) for one sample.
std::vector<FieldScore> score_state(const StateField &candidate, const StateField &truth,
                                    const Climatology &climatology);

/// Time means per (variable, level) over a list of per-sample scores; NaN ACCs are skipped.
SummaryTable summarize(const std::vector<std::vector<FieldScore>> &per_sample);

}  // namespace dab

#endif  // DAB_METRICS_HPP
