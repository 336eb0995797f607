// dab: command-line driver for the OSSE pipeline.
#include <cstdlib>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "dab/error.hpp"
#include "dab/pipeline.hpp"

namespace {

dab::RunConfig load(const std::string &path, std::optional<std::uint64_t> seed) {
  dab::RunConfig cfg = dab::load_config(path);
  if (const char *root = std::getenv("DAB_ROOT"); root && *root) cfg.output_root = root;
  if (seed) cfg.seed = *seed;
  return cfg;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"desk-scale data assimilation and OSSE harness"};
  app.require_subcommand(1);

  std::string config;
  std::optional<std::uint64_t> seed;
  std::string from;
  auto common = [&](CLI::App *sub) {
    sub->add_option("--config,-c", config, "run configuration (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "override every seed in the configuration");
  };

  auto *truth = app.add_subcommand("truth", "integrate the truth run and write the dataset");
  auto *obs = app.add_subcommand("obs", "simulate observations and masks");
  auto *cycle = app.add_subcommand("cycle", "run the cycling experiment");
  auto *forecast = app.add_subcommand("forecast", "launch medium-range forecasts from analyses");
  auto *eval = app.add_subcommand("eval", "write metric CSVs");
  auto *report = app.add_subcommand("report", "print the summary table");
  for (auto *s : {truth, obs, cycle, forecast, eval, report}) common(s);
  forecast->add_option("--from", from, "analysis container (default: the configured run)");

  CLI11_PARSE(app, argc, argv);

  try {
    const dab::RunConfig cfg = load(config, seed);
    namespace p = dab::pipeline;
    if (*truth) p::cmd_truth(cfg, std::cerr);
    if (*obs) p::cmd_obs(cfg, std::cerr);
    if (*cycle) p::cmd_cycle(cfg, std::cerr);
    if (*forecast) p::cmd_forecast(cfg, from, std::cerr);
    if (*eval) p::cmd_eval(cfg, std::cerr);
    if (*report) std::cout << p::cmd_report(cfg, std::cerr);
  } catch (const dab::Error &e) {
    std::cerr << "dab: error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception &e) {
    std::cerr << "dab: unexpected failure: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
