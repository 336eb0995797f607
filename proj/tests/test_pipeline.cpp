#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "dab/container.hpp"

namespace fs = std::filesystem;

namespace {

const char *kConfig = R"({
  "name": "tiny",
  "seed": 3,
  "model": {"type": "lorenz96", "lorenz96": {"m": 40, "forcing": 8.0}},
  "truth": {"spinup_hours": 240, "horizon_hours": 960, "save_every_hours": 3,
            "initial_perturbation": 1.0, "train_fraction": 0.5, "val_fraction": 0.1,
            "shard_hours": 240, "background_ic_noise": 0.2},
  "osse": {"obs_sigma": 1.0, "mask_ratios": [0.9], "cadence_hours": 3},
  "da": {"method": "enkf", "mask_ratio": 0.9, "ensemble_size": 10, "localization": 2.0},
  "cycle": {"window_hours": 12, "spin_up_cycles": 2, "initial_perturbation": 1.0},
  "eval": {"launch_interval_hours": 168, "max_lead_hours": 48, "lead_step_hours": 6}
})";

struct Run {
  int code;
  std::string err;
};

Run run_cli(const fs::path &work, const std::string &args) {
  const fs::path err = work / "stderr.txt";
  const std::string cmd = "DAB_ROOT='" + (work / "out").string() + "' '" DAB_CLI_PATH "' " + args +
                          " --config '" + (work / "cfg.json").string() + "' 2> '" + err.string() +
                          "' > '" + (work / "stdout.txt").string() + "'";
  const int rc = std::system(cmd.c_str());
  return {WEXITSTATUS(rc), dab::read_text(err)};
}

std::map<std::string, std::string> snapshot(const fs::path &root) {
  std::map<std::string, std::string> files;
  for (auto &e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = dab::read_text(e.path());
  return files;
}

fs::path fresh(const std::string &name) {
  auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  dab::write_text_atomic(dir / "cfg.json", kConfig);
  return dir;
}

}  // namespace

TEST_CASE("missing upstream data names the expected path") {
  auto w = fresh("dab_pipeline_missing");
  REQUIRE(run_cli(w, "truth").code == 0);
  auto r = run_cli(w, "cycle");
  CHECK(r.code != 0);
  CHECK(r.err.find("obs") != std::string::npos);
  CHECK(r.err.find((w / "out" / "tiny").string()) != std::string::npos);
  fs::remove_all(w);
}

TEST_CASE("bad invocations fail") {
  auto w = fresh("dab_pipeline_bad");
  CHECK(run_cli(w, "").code != 0);
  dab::write_text_atomic(w / "cfg.json", R"({"truth": {"horizen_hours": 10}})");
  auto r = run_cli(w, "truth");
  CHECK(r.code == 1);
  CHECK(r.err.find("horizen_hours") != std::string::npos);
  fs::remove_all(w);
}

TEST_CASE("pipeline is byte-identical across runs") {
  std::map<std::string, std::string> first;
  for (int pass = 0; pass < 2; ++pass) {
    auto w = fresh("dab_pipeline_det");
    for (const char *step : {"truth", "obs", "cycle", "forecast", "eval", "report"}) {
      auto r = run_cli(w, step);
      REQUIRE_MESSAGE(r.code == 0, step << ": " << r.err);
    }
    auto root = w / "out" / "tiny";
    CHECK(fs::exists(root / "truth" / "test"));
    CHECK(fs::exists(root / "obsmask" / "partial_0.90" / "test"));
    CHECK(fs::exists(root / "report.txt"));
    auto snap = snapshot(root);
    if (pass == 0) {
      first = snap;
      // truth is idempotent on its own
      auto again = run_cli(w, "truth");
      CHECK(again.code == 0);
      CHECK(snapshot(root) == snap);
    } else {
      CHECK(snap.size() == first.size());
      for (auto &[k, v] : first) CHECK_MESSAGE(snap[k] == v, k);
    }
    fs::remove_all(w);
  }
}
