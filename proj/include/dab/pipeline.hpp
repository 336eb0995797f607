#ifndef DAB_PIPELINE_HPP
#define DAB_PIPELINE_HPP

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "dab/config.hpp"

namespace dab::pipeline {

namespace fs = std::filesystem;

inline const std::vector<std::string> kSplits = {"train", "val", "test"};

/// On-disk layout of one experiment, rooted at output_root/name.
struct Layout {
  fs::path root;

  fs::path truth(const std::string &split) const { return root / "truth" / split; }
  fs::path background(const std::string &split) const { return root / "background" / split; }
  fs::path obs(const std::string &split) const { return root / "obs" / split; }
  fs::path obsmask(double ratio, const std::string &split) const;
  fs::path grid_file() const { return root / "grid.json"; }
  fs::path norm_stats_file() const { return root / "norm_stats.json"; }
  fs::path climatology_file() const { return root / "climatology.dab"; }
  fs::path error_table_file() const { return root / "obs_error_table.json"; }
  fs::path run(const std::string &id) const { return root / "runs" / id; }
  fs::path forecast(const std::string &id) const { return root / "forecast" / id; }
  fs::path eval(const std::string &id) const { return root / "eval" / id; }
  fs::path report_file() const { return root / "report.txt"; }
};

Layout layout(const RunConfig &cfg);

/// "partial_0.90" style directory name.
std::string ratio_tag(double ratio);
/// Run directory name: method, mask ratio and HTAA flag.
std::string run_id(const RunConfig &cfg);

/// Split boundaries in model hours: train [0, b1), val [b1, b2), test [b2, horizon].
std::pair<Hours, Hours> split_bounds(const RunConfig &cfg);

/// Time-sharded state series under `dir` (times.json plus shard_NNN.dab).
void write_series(const fs::path &dir, const std::vector<StateField> &series, Hours shard_hours);
std::vector<StateField> read_series(const fs::path &dir, const GridPtr &grid);

void cmd_truth(const RunConfig &cfg, std::ostream &log);
void cmd_obs(const RunConfig &cfg, std::ostream &log);
void cmd_cycle(const RunConfig &cfg, std::ostream &log);
/// `from` empty means the analysis of the configured run.
void cmd_forecast(const RunConfig &cfg, const fs::path &from, std::ostream &log);
void cmd_eval(const RunConfig &cfg, std::ostream &log);
/// Returns the table text; it is also written to report.txt.
std::string cmd_report(const RunConfig &cfg, std::ostream &log);

}  // namespace dab::pipeline

#endif  // DAB_PIPELINE_HPP
