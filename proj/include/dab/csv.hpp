#ifndef DAB_CSV_HPP
#define DAB_CSV_HPP

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dab/metrics.hpp"

namespace dab {

/// One row of the metric CSV: time_or_lead, variable, level, metric, value.
struct CsvRow {
  std::string time_or_lead;
  std::string variable;
  std::string level;
  std::string metric;
  double value = 0.0;

  bool operator==(const CsvRow &) const = default;
};

inline constexpr const char *kCsvHeader = "time_or_lead,variable,level,metric,value";

/// Rows ordered by time, then by the order the series were given in.
std::vector<CsvRow> series_rows(std::span<const MetricSeries> series);
/// Summary rows carry "mean" in the time column.
std::vector<CsvRow> summary_rows(const SummaryTable &table);

std::string format_csv(std::span<const CsvRow> rows);
std::vector<CsvRow> parse_csv(const std::string &text);

void export_csv(std::span<const MetricSeries> series, const std::filesystem::path &path);
void export_csv(std::span<const CsvRow> rows, const std::filesystem::path &path);

/// %.17g, so a parse of the text gives back the same double.
std::string format_double(double v);

}  // namespace dab

#endif  // DAB_CSV_HPP
