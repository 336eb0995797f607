#include "dab/csv.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numeric>

#include "dab/container.hpp"
#include "dab/error.hpp"

namespace dab {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<CsvRow> series_rows(std::span<const MetricSeries> series) {
  struct Key {
    Hours t;
    std::size_t s, p;
  };
  std::vector<Key> keys;
  for (std::size_t s = 0; s < series.size(); ++s)
    for (std::size_t p = 0; p < series[s].points.size(); ++p)
      keys.push_back({series[s].points[p].first, s, p});
  std::stable_sort(keys.begin(), keys.end(), [](const Key &a, const Key &b) {
    return a.t != b.t ? a.t < b.t : a.s < b.s;
  });
  std::vector<CsvRow> rows;
  rows.reserve(keys.size());
  for (const auto &k : keys) {
    const auto &ms = series[k.s];
    rows.push_back({std::to_string(k.t), ms.variable, ms.level, ms.metric, ms.points[k.p].second});
  }
  return rows;
}

std::vector<CsvRow> summary_rows(const SummaryTable &table) {
  std::vector<CsvRow> rows;
  for (const auto &r : table.rows) {
    rows.push_back({"mean", r.variable, r.level, "rmse", r.rmse});
    rows.push_back({"mean", r.variable, r.level, "acc", r.acc});
  }
  return rows;
}

namespace {

std::string quote(const std::string &s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

// RFC 4180 record splitting; returns false at end of input.
bool next_record(const std::string &text, std::size_t &pos, std::vector<std::string> &fields) {
  fields.clear();
  if (pos >= text.size()) return false;
  std::string cur;
  bool quoted = false;
  while (pos < text.size()) {
    const char c = text[pos++];
    if (quoted) {
      if (c == '"') {
        if (pos < text.size() && text[pos] == '"') {
          cur += '"';
          ++pos;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && pos < text.size() && text[pos] == '\n') ++pos;
      break;
    } else {
      cur += c;
    }
  }
  if (quoted) throw FormatError("unterminated quoted CSV field");
  fields.push_back(std::move(cur));
  return true;
}

}  // namespace

std::string format_csv(std::span<const CsvRow> rows) {
  std::string out = std::string(kCsvHeader) + "\r\n";
  for (const auto &r : rows) {
    out += quote(r.time_or_lead) + ',' + quote(r.variable) + ',' + quote(r.level) + ',' +
           quote(r.metric) + ',' + format_double(r.value) + "\r\n";
  }
  return out;
}

std::vector<CsvRow> parse_csv(const std::string &text) {
  std::size_t pos = 0;
  std::vector<std::string> f;
  if (!next_record(text, pos, f) || f.size() != 5) throw FormatError("CSV header must have 5 columns");
  std::vector<CsvRow> rows;
  while (next_record(text, pos, f)) {
    if (f.size() == 1 && f[0].empty()) continue;
    if (f.size() != 5) throw FormatError("CSV row " + std::to_string(rows.size() + 1) + " has " +
                                         std::to_string(f.size()) + " columns");
    rows.push_back({f[0], f[1], f[2], f[3], std::strtod(f[4].c_str(), nullptr)});
  }
  return rows;
}

void export_csv(std::span<const CsvRow> rows, const std::filesystem::path &path) {
  write_text_atomic(path, format_csv(rows));
}

void export_csv(std::span<const MetricSeries> series, const std::filesystem::path &path) {
  const auto rows = series_rows(series);
  export_csv(std::span<const CsvRow>(rows), path);
}

}  // namespace dab
