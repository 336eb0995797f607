#include "dab/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "dab/container.hpp"
#include "dab/csv.hpp"
#include "dab/error.hpp"
#include "dab/kernels.hpp"
#include "dab/random.hpp"

namespace dab::pipeline {

using nlohmann::json;

namespace {

constexpr std::uint64_t kInitStream = 0x74727574ULL;
constexpr std::uint64_t kBgNoiseStream = 0x62676963ULL;

const double kNaN = std::numeric_limits<double>::quiet_NaN();

void require(const fs::path &p, const char *what) {
  if (!fs::exists(p))
    throw MissingDataError(std::string(what) + " not found at " + p.string() +
                           "; run the upstream command first");
}

json read_json(const fs::path &p) {
  require(p, "file");
  try {
    return json::parse(read_text(p));
  } catch (const json::exception &e) {
    throw FormatError("cannot parse " + p.string() + ": " + e.what());
  }
}

void write_json(const fs::path &p, const json &j) { write_text_atomic(p, j.dump(1) + "\n"); }

double num_or_nan(const json &j) { return j.is_null() ? kNaN : j.get<double>(); }

// --- grid and sidecars ------------------------------------------------------
json grid_json(const GridSpec &g) {
  json vars = json::array();
  for (const auto &v : g.variables()) {
    json jv{{"name", v.name}, {"units", v.units},
            {"kind", v.kind == VariableKind::UpperAir ? "upper-air" : "surface"}};
    jv["obs_sigma"] = v.obs_sigma ? json(*v.obs_sigma) : json(nullptr);
    vars.push_back(jv);
  }
  return json{{"lat_deg", g.lat_deg()}, {"n_lon", g.n_lon()}, {"levels", g.levels()}, {"variables", vars}};
}

json scores_json(const std::vector<FieldScore> &s) {
  json a = json::array();
  for (const auto &f : s) {
    a.push_back({{"variable", f.variable}, {"level", f.level}, {"rmse", f.rmse},
                 {"acc", std::isnan(f.acc) ? json(nullptr) : json(f.acc)}});
  }
  return a;
}

std::vector<FieldScore> scores_from_json(const json &a) {
  std::vector<FieldScore> out;
  for (const auto &f : a)
    out.push_back({f.at("variable").get<std::string>(), f.at("level").get<std::string>(),
                   num_or_nan(f.at("rmse")), num_or_nan(f.at("acc"))});
  return out;
}

json summary_json(const SummaryTable &t) {
  json a = json::array();
  for (const auto &r : t.rows)
    a.push_back({{"variable", r.variable}, {"level", r.level}, {"rmse", r.rmse},
                 {"acc", std::isnan(r.acc) ? json(nullptr) : json(r.acc)}, {"samples", r.samples}});
  return a;
}

// --- raw series (values may be NaN, e.g. observations) ----------------------
struct RawSeries {
  std::vector<Hours> times;
  std::vector<Vector> values;
};

void write_raw(const fs::path &dir, const GridSpec &g, const RawSeries &s, Hours shard_hours) {
  fs::create_directories(dir);
  // Stale shards from an earlier run with other settings must not survive.
  for (const auto &e : fs::directory_iterator(dir))
    if (e.path().extension() == ".dab") fs::remove(e.path());

  json shards = json::array();
  std::size_t i = 0;
  const Hours t0 = s.times.empty() ? 0 : s.times.front();
  while (i < s.times.size()) {
    const Hours shard = (s.times[i] - t0) / shard_hours;
    std::size_t j = i;
    while (j < s.times.size() && (s.times[j] - t0) / shard_hours == shard) ++j;

    ContainerHeader h;
    h.dims = {j - i, g.n_var(), g.n_level(), g.n_lat(), g.n_lon()};
    h.index_order = "time,variable,level,lat,lon";
    for (const auto &v : g.variables()) h.variables.push_back(v.name);
    h.levels = g.levels();
    h.times.assign(s.times.begin() + std::ptrdiff_t(i), s.times.begin() + std::ptrdiff_t(j));
    std::vector<float> data;
    data.reserve((j - i) * g.size());
    for (std::size_t k = i; k < j; ++k)
      for (Eigen::Index n = 0; n < s.values[k].size(); ++n) data.push_back(float(s.values[k][n]));

    char name[32];
    std::snprintf(name, sizeof name, "shard_%03zu.dab", std::size_t(shard));
    write_container(dir / name, h, data);
    shards.push_back({{"file", name}, {"first", h.times.front()}, {"last", h.times.back()}});
    i = j;
  }
  write_json(dir / "times.json", json{{"times", s.times}, {"shards", shards}});
}

RawSeries read_raw(const fs::path &dir, const GridSpec &g) {
  require(dir / "times.json", "series index");
  const json idx = read_json(dir / "times.json");
  RawSeries s;
  for (const auto &sh : idx.at("shards")) {
    const Container c = read_container(dir / sh.at("file").get<std::string>());
    const auto &d = c.header.dims;
    if (d.size() != 5 || d[1] != g.n_var() || d[2] != g.n_level() || d[3] != g.n_lat() ||
        d[4] != g.n_lon())
      throw FormatError("shard " + (dir / sh.at("file").get<std::string>()).string() +
                        " does not match the configured grid");
    const std::size_t m = g.size();
    for (std::size_t t = 0; t < d[0]; ++t) {
      Vector v(static_cast<Eigen::Index>(m));
      for (std::size_t n = 0; n < m; ++n) v[Eigen::Index(n)] = double(c.data[t * m + n]);
      s.times.push_back(c.header.times[t]);
      s.values.push_back(std::move(v));
    }
  }
  if (s.times != idx.at("times").get<std::vector<Hours>>())
    throw FormatError("shards under " + dir.string() + " disagree with times.json");
  return s;
}

// --- truth -----------------------------------------------------------------
StateField initial_state(const RunConfig &cfg, const GridPtr &grid) {
  const GridSpec &g = *grid;
  Vector x(static_cast<Eigen::Index>(g.size()));
  if (cfg.model.type == "lorenz96") {
    const CounterRng rng(cfg.seed, {kInitStream});
    for (Eigen::Index i = 0; i < x.size(); ++i)
      x[i] = cfg.model.lorenz96.forcing + cfg.truth.initial_perturbation * rng.normal(std::uint64_t(i));
    return StateField(grid, std::move(x), 0);
  }
  // Smooth waves with seeded phases; amplitude scales with the obs error.
  constexpr double deg = 3.14159265358979323846 / 180.0;
  for (std::size_t v = 0; v < g.n_var(); ++v) {
    const double amp = 10.0 * g.variables()[v].obs_sigma.value_or(1.0);
    for (std::size_t l = 0; l < g.n_level(); ++l) {
      const CounterRng rng(cfg.seed, {kInitStream, v, l});
      for (std::size_t j = 0; j < g.n_lat(); ++j) {
        const double phi = g.lat_deg()[j] * deg;
        for (std::size_t k = 0; k < g.n_lon(); ++k) {
          const double lam = g.lon_deg(k) * deg;
          double val = amp * std::sin(phi);
          for (std::uint64_t w = 1; w <= 3; ++w)
            val += amp * (0.5 + rng.uniform(2 * w)) / double(w) * std::cos(phi) *
                   std::sin(double(w) * lam + 6.283185307179586 * rng.uniform(2 * w + 1));
          x[Eigen::Index(g.index(v, l, j, k))] = val;
        }
      }
    }
  }
  return StateField(grid, std::move(x), 0);
}

std::string split_of(Hours t, std::pair<Hours, Hours> b) {
  return t < b.first ? "train" : t < b.second ? "val" : "test";
}

GridPtr load_grid(const RunConfig &cfg, const Layout &L) {
  const GridPtr grid = make_truth_model(cfg)->grid();
  require(L.grid_file(), "grid description");
  if (read_json(L.grid_file()) != grid_json(*grid))
    throw ConfigError("stored grid at " + L.grid_file().string() + " differs from the configuration");
  return grid;
}

std::vector<StateField> to_states(const RawSeries &s, const GridPtr &grid) {
  std::vector<StateField> out;
  out.reserve(s.times.size());
  for (std::size_t i = 0; i < s.times.size(); ++i) out.emplace_back(grid, s.values[i], s.times[i]);
  return out;
}

RawSeries to_raw(const std::vector<StateField> &states) {
  RawSeries s;
  for (const auto &x : states) {
    s.times.push_back(x.time());
    s.values.push_back(x.values());
  }
  return s;
}

Climatology load_climatology(const Layout &L, const GridPtr &grid) {
  require(L.climatology_file(), "climatology");
  const auto states = container_to_states(read_container(L.climatology_file()), grid);
  if (states.size() != 1) throw FormatError("climatology container must hold one field");
  return Climatology{grid, states.front().values()};
}

// --- observations ----------------------------------------------------------
ObsSet load_obs(const RunConfig &cfg, const Layout &L, const GridPtr &grid, const std::string &split,
                double ratio) {
  const RawSeries dense = read_raw(L.obs(split), *grid);
  const fs::path mdir = L.obsmask(ratio, split);
  if (!fs::exists(mdir / "times.json"))
    throw MissingDataError("no masks for ratio " + format_double(ratio) + " at " + mdir.string() +
                           "; add the ratio to osse.mask_ratios and rerun `dab obs`");
  const RawSeries masks = read_raw(mdir, *grid);
  if (masks.times != dense.times) throw FormatError("mask times differ from observation times");
  ObsSet set;
  set.grid = grid;
  set.cadence = cfg.osse.cadence_hours;
  for (std::size_t i = 0; i < dense.times.size(); ++i) {
    ObsRecord r;
    r.time = dense.times[i];
    r.values = dense.values[i];
    r.observed.assign(grid->size(), 0);
    for (Eigen::Index n = 0; n < r.values.size(); ++n) {
      if (!std::isnan(r.values[n]) && masks.values[i][n] != 0.0)
        r.observed[std::size_t(n)] = 1;
      else
        r.values[n] = kNaN;
    }
    set.records.push_back(std::move(r));
  }
  return set;
}

// Mean square of background minus truth per channel over the training split.
BackgroundCov estimate_b(const RunConfig &cfg, const Layout &L, const GridPtr &grid) {
  const GridSpec &g = *grid;
  const auto truth = to_states(read_raw(L.truth("train"), g), grid);
  const auto bgs = to_states(read_raw(L.background("train"), g), grid);
  const TruthIndex ti(truth);
  std::vector<double> var(g.channels(), 0.0);
  std::size_t n = 0;
  for (const auto &b : bgs) {
    if (!ti.contains(b.time())) continue;
    const Vector d = b.values() - ti.at(b.time()).values();
    for (std::size_t ch = 0; ch < g.channels(); ++ch)
      var[ch] += d.segment(Eigen::Index(ch * g.cells()), Eigen::Index(g.cells())).squaredNorm();
    ++n;
  }
  if (n == 0) throw MissingDataError("no training backgrounds to estimate B from");
  for (double &v : var) v = cfg.da.b_scale * v / double(n * g.cells());
  return BackgroundCov(grid, var);
}

CycleConfig cycle_config(const RunConfig &cfg) {
  CycleConfig c = cfg.cycle;
  c.method = parse_method(cfg.da.method);
  c.obs_cadence_hours = cfg.osse.cadence_hours;
  c.solver = cfg.da.solver;
  c.ensemble_size = cfg.da.ensemble_size;
  c.hybrid_beta = cfg.da.hybrid_beta;
  c.enkf = EnkfConfig{cfg.da.inflation, cfg.da.localization, cfg.seed};
  return c;
}

// First window start in the test split and the number of windows that fit.
std::pair<Hours, std::size_t> test_windows(const RunConfig &cfg, const ObsSet &obs) {
  const Hours w = cfg.cycle.window_hours;
  const Hours b2 = split_bounds(cfg).second;
  Hours first = b2 + 24;
  first = ((first + w - 1) / w) * w;
  if (obs.records.empty()) return {first, 0};
  const Hours last_obs = obs.records.back().time;
  const Hours span = last_obs + cfg.osse.cadence_hours - first;
  const std::size_t fit = span >= w ? std::size_t(span / w) : 0;
  return {first, cfg.cycle.n_cycles ? std::min(cfg.cycle.n_cycles, fit) : fit};
}

IncrementRegressor train_regressor(const RunConfig &cfg, const Layout &L, const GridPtr &grid,
                                   const DynamicsModel &model, const ObsCov &r, std::ostream &log) {
  const auto truth = to_states(read_raw(L.truth("train"), *grid), grid);
  const auto bgs = to_states(read_raw(L.background("train"), *grid), grid);
  const ObsSet obs = load_obs(cfg, L, grid, "train", cfg.da.regressor_train_ratio);
  const TruthIndex ti(truth);
  const Hours w = cfg.cycle.window_hours;
  const Hours end = split_bounds(cfg).first;

  std::vector<const StateField *> picks;
  for (const auto &b : bgs)
    if (ti.contains(b.time()) && obs.at(b.time()) && b.time() + w <= end) picks.push_back(&b);
  std::vector<Vector> grads(picks.size());
  kernels::parallel_for(picks.size(), [&](std::size_t i) {
    const Hours t = picks[i]->time();
    grads[i] = obs_term_gradient(*picks[i], obs.window(t, t + w), r, model, Window{t, t + w});
  });
  std::vector<TrainingSample> samples;
  for (std::size_t i = 0; i < picks.size(); ++i)
    samples.push_back({*picks[i], obs.at(picks[i]->time()), grads[i], ti.at(picks[i]->time())});
  auto reg = fit_increment_regressor(samples);
  log << "regressor: " << samples.size() << " samples, " << reg.train_cells
      << " cells, weighted L2 " << format_double(reg.train_l2) << ", weighted L1 "
      << format_double(reg.train_l1) << (reg.ridge_lambda > 0 ? " (ridge)" : "") << "\n";
  return reg;
}

json regressor_json(const IncrementRegressor &reg) {
  return json{{"coefficients", reg.coefficients}, {"ridge_lambda", reg.ridge_lambda},
              {"train_l2", reg.train_l2}, {"train_l1", reg.train_l1}, {"train_cells", reg.train_cells}};
}

struct RunData {
  std::vector<Hours> times;
  std::vector<std::vector<FieldScore>> analysis, background;
  std::vector<std::size_t> index;
};

RunData read_records(const fs::path &file) {
  require(file, "cycle records");
  RunData d;
  std::istringstream in(read_text(file));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    d.index.push_back(j.at("index").get<std::size_t>());
    d.times.push_back(j.at("window_start").get<Hours>());
    d.analysis.push_back(scores_from_json(j.at("analysis")));
    d.background.push_back(scores_from_json(j.at("background")));
  }
  return d;
}

std::vector<std::string> run_dirs(const fs::path &parent) {
  require(parent, "run directory");
  std::vector<std::string> ids;
  for (const auto &e : fs::directory_iterator(parent))
    if (e.is_directory()) ids.push_back(e.path().filename().string());
  std::sort(ids.begin(), ids.end());
  return ids;
}

void add_series(std::vector<MetricSeries> &out, const std::string &prefix, const std::vector<Hours> &t,
                const std::vector<std::vector<FieldScore>> &scores) {
  if (scores.empty()) return;
  for (std::size_t f = 0; f < scores.front().size(); ++f) {
    MetricSeries rm{prefix + "_rmse", scores.front()[f].variable, scores.front()[f].level, {}};
    MetricSeries ac{prefix + "_acc", rm.variable, rm.level, {}};
    for (std::size_t i = 0; i < t.size(); ++i) {
      rm.points.emplace_back(t[i], scores[i][f].rmse);
      ac.points.emplace_back(t[i], scores[i][f].acc);
    }
    out.push_back(std::move(rm));
    out.push_back(std::move(ac));
  }
}

}  // namespace

// -----------------------------------------------------------------------------
fs::path Layout::obsmask(double ratio, const std::string &split) const {
  return root / "obsmask" / ratio_tag(ratio) / split;
}

Layout layout(const RunConfig &cfg) { return Layout{cfg.output_root / cfg.name}; }

std::string ratio_tag(double ratio) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "partial_%.2f", ratio);
  return buf;
}

std::string run_id(const RunConfig &cfg) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.2f", cfg.da.mask_ratio);
  return cfg.da.method + "_m" + buf + (cfg.cycle.htaa.enabled ? "_htaa" : "");
}

std::pair<Hours, Hours> split_bounds(const RunConfig &cfg) {
  const Hours h = cfg.truth.horizon_hours;
  auto snap = [](double v) { return Hours(std::floor(v / 24.0)) * 24; };
  return {snap(cfg.truth.train_fraction * double(h)),
          snap((cfg.truth.train_fraction + cfg.truth.val_fraction) * double(h))};
}

void write_series(const fs::path &dir, const std::vector<StateField> &series, Hours shard_hours) {
  if (series.empty()) throw MissingDataError("refusing to write an empty series to " + dir.string());
  write_raw(dir, series.front().grid(), to_raw(series), shard_hours);
}

std::vector<StateField> read_series(const fs::path &dir, const GridPtr &grid) {
  return to_states(read_raw(dir, *grid), grid);
}

// -----------------------------------------------------------------------------
void cmd_truth(const RunConfig &cfg, std::ostream &log) {
  const Layout L = layout(cfg);
  const ModelPtr truth_model = make_truth_model(cfg);
  const ModelPtr fc_model = make_forecast_model(cfg);
  const GridPtr grid = truth_model->grid();
  const auto bounds = split_bounds(cfg);
  if (bounds.first < 24 || bounds.second <= bounds.first || bounds.second + 48 > cfg.truth.horizon_hours)
    throw ConfigError("truth horizon too short for the train/val/test split");

  StateField x0 = initial_state(cfg, grid);
  if (cfg.truth.spinup_hours > 0)
    x0 = StateField(grid, forecast_hta(*truth_model, x0, cfg.truth.spinup_hours).values(), 0);
  const auto truth = run_truth(*truth_model, x0, cfg.truth.horizon_hours, cfg.truth.save_every_hours);
  log << "truth: " << truth.size() << " states to " << cfg.truth.horizon_hours << " h\n";

  std::map<std::string, std::vector<StateField>> split;
  for (const auto &x : truth) split[split_of(x.time(), bounds)].push_back(x);
  for (const auto &s : kSplits) write_series(L.truth(s), split.at(s), cfg.truth.shard_hours);

  const NormStats stats = compute_norm_stats(split.at("train"));
  json js = json::object();
  for (const auto &[name, vs] : stats.by_variable) js[name] = {{"mean", vs.mean}, {"std", vs.std}};
  write_json(L.norm_stats_file(), js);

  const Climatology clim = compute_climatology(split.at("test"));
  const auto clim_c = states_to_container(std::vector<StateField>{clim.as_state(0)});
  write_container(L.climatology_file(), clim_c.header, clim_c.data);
  write_json(L.grid_file(), grid_json(*grid));

  const ObsErrorTable table = make_error_table(cfg, *grid);
  json jt = json::array();
  const auto sig = table.channel_sigmas(*grid);
  for (std::size_t v = 0; v < grid->n_var(); ++v)
    for (std::size_t l = 0; l < grid->n_level(); ++l) {
      const auto &s = sig[v * grid->n_level() + l];
      jt.push_back({{"variable", grid->variables()[v].name}, {"level", grid->levels()[l]},
                    {"sigma", s ? json(*s) : json(nullptr)}});
    }
  write_json(L.error_table_file(), jt);

  // 24 h backgrounds from (optionally perturbed) truth at every window start.
  const TruthIndex ti(truth);
  std::vector<Hours> bt;
  for (const auto &x : truth)
    if (x.time() >= 24 && x.time() % cfg.cycle.window_hours == 0) bt.push_back(x.time());
  std::vector<std::optional<StateField>> bg(bt.size());
  kernels::parallel_for(bt.size(), [&](std::size_t i) {
    const StateField &x = ti.at(bt[i] - 24);
    Vector v = x.values();
    if (cfg.truth.background_ic_noise > 0) {
      const CounterRng rng(cfg.seed, {kBgNoiseStream, std::uint64_t(bt[i])});
      for (std::size_t var = 0; var < grid->n_var(); ++var) {
        const double sd = cfg.truth.background_ic_noise * stats.at(grid->variables()[var].name).std;
        const std::size_t off = grid->channel_offset(var, 0);
        const std::size_t len = grid->n_level() * grid->cells();
        for (std::size_t n = off; n < off + len; ++n) v[Eigen::Index(n)] += sd * rng.normal(n);
      }
    }
    bg[i] = forecast_hta(*fc_model, StateField(grid, std::move(v), x.time()), 24,
                         cfg.cycle.forecast_leads);
  });
  std::map<std::string, std::vector<StateField>> bsplit;
  for (auto &b : bg) bsplit[split_of(b->time(), bounds)].push_back(std::move(*b));
  for (const auto &s : kSplits) {
    if (!bsplit.count(s)) throw ConfigError("no background times fall in the " + s + " split");
    write_series(L.background(s), bsplit.at(s), cfg.truth.shard_hours);
  }
  log << "wrote " << L.root.string() << "\n";
}

void cmd_obs(const RunConfig &cfg, std::ostream &log) {
  const Layout L = layout(cfg);
  const GridPtr grid = load_grid(cfg, L);
  const ObsErrorTable table = make_error_table(cfg, *grid);
  std::size_t n_records = 0;
  for (const auto &s : kSplits) {
    const auto truth = read_series(L.truth(s), grid);
    // Dense observations; masks select from these, so a masked set equals
    // direct simulation at that ratio (noise is keyed per cell, not per draw).
    const ObsSet dense = simulate_observations(truth, table, MaskSpec{0.0, cfg.seed, true},
                                               cfg.osse.cadence_hours);
    RawSeries raw;
    for (const auto &r : dense.records) {
      raw.times.push_back(r.time);
      raw.values.push_back(r.values);
    }
    write_raw(L.obs(s), *grid, raw, cfg.truth.shard_hours);
    n_records += raw.times.size();

    for (double ratio : cfg.osse.mask_ratios) {
      RawSeries m;
      m.times = raw.times;
      for (Hours t : raw.times) {
        const ObsMask mask = generate_mask(*grid, MaskSpec{ratio, cfg.seed, true}, t);
        Vector v(static_cast<Eigen::Index>(mask.size()));
        for (std::size_t n = 0; n < mask.size(); ++n) v[Eigen::Index(n)] = mask[n];
        m.values.push_back(std::move(v));
      }
      write_raw(L.obsmask(ratio, s), *grid, m, cfg.truth.shard_hours);
    }
  }
  log << "obs: " << n_records << " observation times, " << cfg.osse.mask_ratios.size()
      << " mask ratio(s)\n";
}

void cmd_cycle(const RunConfig &cfg, std::ostream &log) {
  const Layout L = layout(cfg);
  const GridPtr grid = load_grid(cfg, L);
  const ModelPtr model = make_forecast_model(cfg);
  const ObsErrorTable table = make_error_table(cfg, *grid);
  require(L.obs("test"), "observations");
  const ObsSet obs = load_obs(cfg, L, grid, "test", cfg.da.mask_ratio);
  const auto truth = read_series(L.truth("test"), grid);

  DaSetup setup{estimate_b(cfg, L, grid), ObsCov::from_table(grid, table), load_climatology(L, grid),
                std::nullopt};
  CycleConfig cc = cycle_config(cfg);
  std::tie(cc.first_window_start, cc.n_cycles) = test_windows(cfg, obs);
  if (cc.n_cycles == 0) throw ConfigError("test split holds no complete assimilation window");

  const std::string id = run_id(cfg);
  const fs::path dir = L.run(id);
  fs::create_directories(dir);
  if (cc.method == Method::Regressor) {
    setup.regressor = train_regressor(cfg, L, grid, *model, setup.r, log);
    write_json(dir / "regressor.json", regressor_json(*setup.regressor));
  }

  const auto records = run_cycle(*model, truth, obs, cc, setup);

  std::string lines;
  std::vector<StateField> an, bg;
  std::size_t failures = 0, calls = 0;
  for (const auto &r : records) {
    json j{{"index", r.index},
           {"window_start", r.window_start},
           {"anchor_time", r.anchor_time},
           {"background_calls", r.background_calls},
           {"failed", r.diagnostics.failed},
           {"message", r.diagnostics.message},
           {"iterations", r.diagnostics.iterations},
           {"exit_reason", r.diagnostics.exit_reason},
           {"initial_cost", r.diagnostics.initial_cost},
           {"final_cost", r.diagnostics.final_cost},
           {"background", scores_json(r.background_scores)},
           {"analysis", scores_json(r.analysis_scores)}};
    lines += j.dump() + "\n";
    an.push_back(r.analysis);
    bg.push_back(r.background);
    failures += r.diagnostics.failed;
    calls += r.background_calls;
  }
  write_text_atomic(dir / "records.jsonl", lines);
  const auto ca = states_to_container(an), cb = states_to_container(bg);
  write_container(dir / "analysis.dab", ca.header, ca.data);
  write_container(dir / "background.dab", cb.header, cb.data);

  const auto sa = summarize_cycle(records, cc.spin_up_cycles);
  const auto sb = summarize_cycle(records, cc.spin_up_cycles, true);
  write_json(dir / "summary.json", json{{"run", id},
                                        {"n_cycles", records.size()},
                                        {"spin_up_cycles", cc.spin_up_cycles},
                                        {"failures", failures},
                                        {"background_calls", calls},
                                        {"analysis", summary_json(sa)},
                                        {"background", summary_json(sb)}});
  log << "cycle " << id << ": " << records.size() << " cycles, " << failures << " failed\n";
  for (const auto &r : sa.rows)
    log << "  " << r.variable << "@" << r.level << " analysis rmse " << format_double(r.rmse) << "\n";
}

void cmd_forecast(const RunConfig &cfg, const fs::path &from, std::ostream &log) {
  const Layout L = layout(cfg);
  const GridPtr grid = load_grid(cfg, L);
  const fs::path src = from.empty() ? L.run(run_id(cfg)) / "analysis.dab" : from;
  require(src, "analysis container");
  const std::string id = src.parent_path().filename().string();
  const auto analyses = container_to_states(read_container(src), grid);
  const auto truth = read_series(L.truth("test"), grid);
  const TruthIndex ti(truth);
  const Climatology clim = load_climatology(L, grid);
  const ModelPtr model = make_forecast_model(cfg);

  const std::size_t skip = std::min(cfg.cycle.spin_up_cycles, analyses.size());
  std::vector<const StateField *> inits;
  for (std::size_t i = skip; i < analyses.size(); ++i)
    if ((analyses[i].time() - analyses[skip].time()) % cfg.eval.launch_interval_hours == 0)
      inits.push_back(&analyses[i]);

  const fs::path dir = L.forecast(id);
  fs::create_directories(dir);
  for (const auto &e : fs::directory_iterator(dir))
    if (e.path().extension() == ".dab") fs::remove(e.path());
  std::vector<ForecastLaunch> launches(inits.size());
  kernels::parallel_for(inits.size(), [&](std::size_t i) {
    launches[i] = launch_medium_range(*model, *inits[i], ti, clim, cfg.cycle.forecast_leads,
                                      cfg.eval.max_lead_hours, cfg.eval.lead_step_hours);
  });
  std::string lines;
  for (const auto &fl : launches) {
    for (std::size_t k = 0; k < fl.leads.size(); ++k)
      lines += json{{"init_time", fl.init_time}, {"lead", fl.leads[k]}, {"scores", scores_json(fl.scores[k])}}
                   .dump() +
               "\n";
    const auto c = states_to_container(fl.states);
    write_container(dir / ("launch_" + std::to_string(fl.init_time) + ".dab"), c.header, c.data);
  }
  write_text_atomic(dir / "scores.jsonl", lines);
  log << "forecast " << id << ": " << launches.size() << " launches\n";
}

void cmd_eval(const RunConfig &cfg, std::ostream &log) {
  const Layout L = layout(cfg);
  const auto ids = run_dirs(L.root / "runs");
  if (ids.empty()) throw MissingDataError("no cycling runs under " + (L.root / "runs").string());
  for (const auto &id : ids) {
    const RunData d = read_records(L.run(id) / "records.jsonl");
    const fs::path out = L.eval(id);
    fs::create_directories(out);

    std::vector<MetricSeries> series;
    add_series(series, "analysis", d.times, d.analysis);
    add_series(series, "background", d.times, d.background);
    export_csv(std::span<const MetricSeries>(series), out / "cycle.csv");

    std::vector<std::vector<FieldScore>> pa, pb;
    for (std::size_t i = 0; i < d.index.size(); ++i)
      if (d.index[i] >= cfg.cycle.spin_up_cycles) {
        pa.push_back(d.analysis[i]);
        pb.push_back(d.background[i]);
      }
    std::vector<CsvRow> rows;
    for (auto [tag, per] : {std::pair{"analysis", &pa}, std::pair{"background", &pb}})
      for (const auto &r : summarize(*per).rows) {
        rows.push_back({"mean", r.variable, r.level, std::string(tag) + "_rmse", r.rmse});
        rows.push_back({"mean", r.variable, r.level, std::string(tag) + "_acc", r.acc});
      }

    const fs::path fsc = L.forecast(id) / "scores.jsonl";
    if (fs::exists(fsc)) {
      // Lead means over launches.
      std::map<Hours, std::vector<std::vector<FieldScore>>> by_lead;
      std::istringstream in(read_text(fsc));
      std::string line;
      while (std::getline(in, line))
        if (!line.empty()) {
          const json j = json::parse(line);
          by_lead[j.at("lead").get<Hours>()].push_back(scores_from_json(j.at("scores")));
        }
      std::vector<MetricSeries> fsr;
      for (const auto &[lead, per] : by_lead) {
        const auto tab = summarize(per);
        for (std::size_t f = 0; f < tab.rows.size(); ++f) {
          if (fsr.size() < 2 * tab.rows.size()) {
            fsr.push_back({"forecast_rmse", tab.rows[f].variable, tab.rows[f].level, {}});
            fsr.push_back({"forecast_acc", tab.rows[f].variable, tab.rows[f].level, {}});
          }
          fsr[2 * f].points.emplace_back(lead, tab.rows[f].rmse);
          fsr[2 * f + 1].points.emplace_back(lead, tab.rows[f].acc);
        }
      }
      export_csv(std::span<const MetricSeries>(fsr), out / "forecast.csv");
      for (std::size_t f = 1; f < fsr.size(); f += 2)
        rows.push_back({"horizon", fsr[f].variable, fsr[f].level, "skill_horizon_hours",
                        double(skill_horizon(fsr[f], cfg.eval.skill_threshold))});
    }
    export_csv(std::span<const CsvRow>(rows), out / "summary.csv");
    log << "eval " << id << ": " << d.times.size() << " cycles\n";
  }
}

std::string cmd_report(const RunConfig &cfg, std::ostream &log) {
  const Layout L = layout(cfg);
  const GridPtr grid = load_grid(cfg, L);
  const auto ids = run_dirs(L.root / "eval");
  if (ids.empty()) throw MissingDataError("no evaluations under " + (L.root / "eval").string());

  struct Line {
    std::string run, var, level;
    double rmse = kNaN, acc = kNaN, bg_rmse = kNaN, horizon = kNaN;
  };
  std::vector<Line> lines;
  Hours first = std::numeric_limits<Hours>::max(), last = 0;
  for (const auto &id : ids) {
    const fs::path f = L.eval(id) / "summary.csv";
    require(f, "evaluation summary");
    std::map<std::pair<std::string, std::string>, Line> by;
    std::vector<std::pair<std::string, std::string>> order;
    for (const auto &r : parse_csv(read_text(f))) {
      const auto key = std::pair{r.variable, r.level};
      if (!by.count(key)) {
        by[key] = Line{id, r.variable, r.level};
        order.push_back(key);
      }
      Line &ln = by[key];
      if (r.metric == "analysis_rmse") ln.rmse = r.value;
      if (r.metric == "analysis_acc") ln.acc = r.value;
      if (r.metric == "background_rmse") ln.bg_rmse = r.value;
      if (r.metric == "skill_horizon_hours") ln.horizon = r.value;
    }
    for (const auto &k : order) lines.push_back(by[k]);
    const RunData d = read_records(L.run(id) / "records.jsonl");
    for (std::size_t i = 0; i < d.index.size(); ++i)
      if (d.index[i] >= cfg.cycle.spin_up_cycles) {
        first = std::min(first, d.times[i]);
        last = std::max(last, d.times[i]);
      }
  }

  // Climatology as a no-skill reference over the evaluated analysis times.
  const auto truth = read_series(L.truth("test"), grid);
  const Climatology clim = load_climatology(L, grid);
  std::vector<std::vector<FieldScore>> cs;
  for (const auto &x : truth)
    if (x.time() >= first && x.time() <= last && x.time() % cfg.cycle.window_hours == 0)
      cs.push_back(score_state(clim.as_state(x.time()), x, clim));
  for (const auto &r : summarize(cs).rows) lines.push_back(Line{"climatology", r.variable, r.level, r.rmse, r.acc});

  auto cell = [](double v, int prec) {
    char b[32];
    if (std::isnan(v)) return std::string("-");
    std::snprintf(b, sizeof b, "%.*f", prec, v);
    return std::string(b);
  };
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-28s %-8s %-8s %12s %8s %12s %10s\n", "run", "variable", "level",
                "rmse", "acc", "bg_rmse", "skill_h");
  out << buf;
  for (const auto &ln : lines) {
    std::snprintf(buf, sizeof buf, "%-28s %-8s %-8s %12s %8s %12s %10s\n", ln.run.c_str(), ln.var.c_str(),
                  ln.level.c_str(), cell(ln.rmse, 4).c_str(), cell(ln.acc, 3).c_str(),
                  cell(ln.bg_rmse, 4).c_str(), cell(ln.horizon, 0).c_str());
    out << buf;
  }
  const std::string text = out.str();
  write_text_atomic(L.report_file(), text);
  log << "report written to " << L.report_file().string() << "\n";
  return text;
}

}  // namespace dab::pipeline
