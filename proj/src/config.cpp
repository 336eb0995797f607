#include "dab/config.hpp"

#include <fstream>
#include <set>

#include "dab/container.hpp"
#include "dab/error.hpp"

namespace dab {

namespace {

using nlohmann::json;

/// Reads keys from one JSON object and rejects whatever was not read.
class Section {
 public:
  Section(const json &j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + " must be an object");
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions()) return;
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError("unknown key '" + path_ + "." + it.key() + "'");
  }

  bool has(const std::string &k) {
    seen_.insert(k);
    return j_.contains(k) && !j_.at(k).is_null();
  }
  template <class T>
  void read(const std::string &k, T &out) {
    if (!has(k)) return;
    try {
      j_.at(k).get_to(out);
    } catch (const json::exception &e) {
      throw ConfigError("bad value for '" + path_ + "." + k + "': " + e.what());
    }
  }
  Section sub(const std::string &k) {
    seen_.insert(k);
    return Section(j_.at(k), path_ + "." + k);
  }
  const json &raw(const std::string &k) {
    seen_.insert(k);
    return j_.at(k);
  }

 private:
  const json &j_;
  std::string path_;
  std::set<std::string> seen_;
};

VariableKind parse_kind(const std::string &s) {
  if (s == "upper-air") return VariableKind::UpperAir;
  if (s == "surface") return VariableKind::Surface;
  throw ConfigError("variable kind must be 'upper-air' or 'surface'");
}

void parse_solver(Section s, LbfgsConfig &c) {
  s.read("max_iterations", c.max_iterations);
  s.read("grad_tol", c.grad_tol);
  s.read("memory", c.memory);
}

}  // namespace

RunConfig parse_config(const json &j) {
  RunConfig c;
  Section root(j, "config");
  root.read("name", c.name);
  std::string out_root;
  root.read("output_root", out_root);
  if (!out_root.empty()) c.output_root = out_root;
  root.read("seed", c.seed);

  if (root.has("model")) {
    Section m = root.sub("model");
    m.read("type", c.model.type);
    m.read("supported_leads", c.model.supported_leads);
    if (m.has("lorenz96")) {
      Section l = m.sub("lorenz96");
      l.read("m", c.model.lorenz96.m);
      l.read("forcing", c.model.lorenz96.forcing);
      l.read("substep_hours", c.model.lorenz96.substep_hours);
      l.read("hours_per_mtu", c.model.lorenz96.hours_per_mtu);
    }
    if (m.has("advection")) {
      Section a = m.sub("advection");
      a.read("n_lat", c.model.n_lat);
      a.read("n_lon", c.model.n_lon);
      a.read("levels", c.model.levels);
      a.read("omega_deg_per_hour", c.model.advection.omega_deg_per_hour);
      a.read("kappa", c.model.advection.kappa);
      if (a.has("variables")) {
        for (const auto &v : a.raw("variables")) {
          Section vs(v, "config.model.advection.variables[]");
          VariableSpec spec;
          vs.read("name", spec.name);
          vs.read("units", spec.units);
          std::string kind = "surface";
          vs.read("kind", kind);
          spec.kind = parse_kind(kind);
          double sigma = 0.0;
          if (vs.has("obs_sigma")) {
            vs.read("obs_sigma", sigma);
            spec.obs_sigma = sigma;
          }
          c.model.variables.push_back(std::move(spec));
        }
      }
    }
    if (m.has("twin")) {
      const json &t = m.raw("twin");
      Section ts(t, "config.model.twin");
      for (const char *k : {"forcing", "damping", "damping_center", "omega_deg_per_hour", "kappa"})
        ts.has(k);
      c.model.twin = t;
    }
  }
  if (c.model.type != "lorenz96" && c.model.type != "advection")
    throw ConfigError("model.type must be 'lorenz96' or 'advection'");
  c.model.lorenz96.supported_leads = c.model.supported_leads;
  c.model.advection.supported_leads = c.model.supported_leads;
  if (c.model.type == "advection" && c.model.variables.empty())
    c.model.variables = {VariableSpec{"z500", "m2 s-2", VariableKind::UpperAir, 242.0}};

  if (root.has("truth")) {
    Section t = root.sub("truth");
    t.read("spinup_hours", c.truth.spinup_hours);
    t.read("horizon_hours", c.truth.horizon_hours);
    t.read("save_every_hours", c.truth.save_every_hours);
    t.read("initial_perturbation", c.truth.initial_perturbation);
    t.read("train_fraction", c.truth.train_fraction);
    t.read("val_fraction", c.truth.val_fraction);
    t.read("shard_hours", c.truth.shard_hours);
    t.read("background_ic_noise", c.truth.background_ic_noise);
  }
  if (c.truth.train_fraction < 0 || c.truth.val_fraction < 0 ||
      c.truth.train_fraction + c.truth.val_fraction >= 1.0)
    throw ConfigError("train and validation fractions must leave room for a test split");
  if (c.truth.shard_hours <= 0 || c.truth.save_every_hours <= 0)
    throw ConfigError("shard and save intervals must be positive");

  if (root.has("osse")) {
    Section o = root.sub("osse");
    double sigma = 0.0;
    if (o.has("obs_sigma")) {
      o.read("obs_sigma", sigma);
      c.osse.obs_sigma = sigma;
    }
    o.read("standard_table", c.osse.standard_table);
    o.read("mask_ratios", c.osse.mask_ratios);
    o.read("cadence_hours", c.osse.cadence_hours);
  }
  for (double r : c.osse.mask_ratios)
    if (!(r >= 0.0 && r < 1.0)) throw ConfigError("mask ratios must be in [0, 1)");

  if (root.has("da")) {
    Section d = root.sub("da");
    d.read("method", c.da.method);
    d.read("mask_ratio", c.da.mask_ratio);
    d.read("b_scale", c.da.b_scale);
    if (d.has("solver")) parse_solver(d.sub("solver"), c.da.solver);
    d.read("ensemble_size", c.da.ensemble_size);
    d.read("inflation", c.da.inflation);
    d.read("localization", c.da.localization);
    d.read("hybrid_beta", c.da.hybrid_beta);
    d.read("regressor_train_ratio", c.da.regressor_train_ratio);
  }
  parse_method(c.da.method);

  if (root.has("cycle")) {
    Section s = root.sub("cycle");
    s.read("window_hours", c.cycle.window_hours);
    s.read("n_cycles", c.cycle.n_cycles);
    s.read("spin_up_cycles", c.cycle.spin_up_cycles);
    s.read("forecast_leads", c.cycle.forecast_leads);
    s.read("initial_perturbation", c.cycle.initial_perturbation);
    if (s.has("htaa")) {
      Section h = s.sub("htaa");
      h.read("enabled", c.cycle.htaa.enabled);
      h.read("anchor_span", c.cycle.htaa.anchor_span);
    }
  }
  c.cycle.obs_cadence_hours = c.osse.cadence_hours;

  if (root.has("eval")) {
    Section e = root.sub("eval");
    e.read("skill_threshold", c.eval.skill_threshold);
    e.read("launch_interval_hours", c.eval.launch_interval_hours);
    e.read("max_lead_hours", c.eval.max_lead_hours);
    e.read("lead_step_hours", c.eval.lead_step_hours);
  }

  c.cycle.method = parse_method(c.da.method);
  c.cycle.solver = c.da.solver;
  c.cycle.ensemble_size = c.da.ensemble_size;
  c.cycle.hybrid_beta = c.da.hybrid_beta;
  c.cycle.enkf = EnkfConfig{c.da.inflation, c.da.localization, c.seed};
  return c;
}

RunConfig load_config(const std::filesystem::path &path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::exception &e) {
    throw ConfigError("cannot parse " + path.string() + ": " + e.what());
  }
  return parse_config(j);
}

namespace {

GridPtr advection_grid(const RunConfig &cfg) {
  return make_grid(GridSpec::regular(cfg.model.n_lat, cfg.model.n_lon, cfg.model.levels,
                                     cfg.model.variables));
}

ModelPtr build_model(const RunConfig &cfg, const json *twin) {
  auto num = [&](const char *k, double def) {
    return twin && twin->contains(k) ? twin->at(k).get<double>() : def;
  };
  if (cfg.model.type == "lorenz96") {
    Lorenz96Params p = cfg.model.lorenz96;
    p.forcing = num("forcing", p.forcing);
    p.damping = num("damping", p.damping);
    p.damping_center = num("damping_center", p.damping_center);
    return std::make_shared<Lorenz96Model>(p);
  }
  AdvectionParams p = cfg.model.advection;
  p.omega_deg_per_hour = num("omega_deg_per_hour", p.omega_deg_per_hour);
  p.kappa = num("kappa", p.kappa);
  return std::make_shared<LatLonAdvectionModel>(advection_grid(cfg), p);
}

}  // namespace

ModelPtr make_truth_model(const RunConfig &cfg) { return build_model(cfg, nullptr); }

ModelPtr make_forecast_model(const RunConfig &cfg) {
  return build_model(cfg, cfg.model.twin ? &*cfg.model.twin : nullptr);
}

ObsErrorTable make_error_table(const RunConfig &cfg, const GridSpec &grid) {
  if (cfg.osse.obs_sigma) {
    ObsErrorTable t;
    for (const auto &v : grid.variables())
      for (const auto &l : grid.levels()) t.set(v.name, l, *cfg.osse.obs_sigma);
    return t;
  }
  if (cfg.osse.standard_table) return ObsErrorTable::standard();
  return ObsErrorTable::from_grid(grid);
}

}  // namespace dab
