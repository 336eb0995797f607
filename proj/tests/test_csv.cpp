#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "dab/container.hpp"
#include "dab/csv.hpp"

using namespace dab;

TEST_CASE("empty series gives a header-only file") {
  auto p = std::filesystem::temp_directory_path() / "dab_csv_empty.csv";
  export_csv(std::span<const MetricSeries>{}, p);
  CHECK(read_text(p) == std::string(kCsvHeader) + "\r\n");
  std::filesystem::remove(p);
}

TEST_CASE("rows roundtrip with five columns") {
  std::vector<MetricSeries> s = {{"rmse", "z", "500", {{12, 1.25}, {0, 0.1}}},
                                 {"acc", "z,quoted", "500", {{0, 0.9}}}};
  auto rows = series_rows(s);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].time_or_lead == "0");
  CHECK(rows[0].metric == "rmse");
  CHECK(rows[1].metric == "acc");
  CHECK(rows[2].time_or_lead == "12");
  auto text = format_csv(rows);
  CHECK(text.find("\"z,quoted\"") != std::string::npos);
  CHECK(parse_csv(text) == rows);

  SummaryTable t{{{"t", "850", 1.0 / 3.0, 0.5, 4}}};
  auto sr = summary_rows(t);
  CHECK(sr.front().time_or_lead == "mean");
  CHECK(parse_csv(format_csv(sr)) == sr);

  CHECK(std::stod(format_double(0.1)) == 0.1);
  CHECK(format_double(std::numeric_limits<double>::quiet_NaN()) == "nan");
}
