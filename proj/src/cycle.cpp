#include "dab/cycle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dab/error.hpp"
#include "dab/kernels.hpp"
#include "dab/random.hpp"

namespace dab {

std::string to_string(Method m) {
  switch (m) {
    case Method::None: return "none";
    case Method::ThreeDVar: return "3dvar";
    case Method::FourDVar: return "4dvar";
    case Method::EnKF: return "enkf";
    case Method::Hybrid: return "hybrid";
    case Method::Regressor: return "regressor";
  }
  return "unknown";
}

Method parse_method(const std::string &name) {
  for (Method m : {Method::None, Method::ThreeDVar, Method::FourDVar, Method::EnKF, Method::Hybrid,
                   Method::Regressor})
    if (to_string(m) == name) return m;
  throw ConfigError("unknown DA method '" + name + "'");
}

// -----------------------------------------------------------------------------
TruthIndex::TruthIndex(const std::vector<StateField> &series) {
  for (const auto &s : series) by_time_[s.time()] = &s;
}

const StateField &TruthIndex::at(Hours t) const {
  auto it = by_time_.find(t);
  if (it == by_time_.end()) throw MissingDataError("no truth at " + std::to_string(t) + " h");
  return *it->second;
}

StateField initial_background(const DynamicsModel &model, const StateField &truth_t0_minus_24h,
                              std::span<const Hours> leads) {
  return forecast_hta(model, truth_t0_minus_24h, 24, leads);
}

BackgroundChoice choose_background(const std::vector<AnalysisEntry> &history, Hours target,
                                   const CycleConfig &cfg) {
  if (history.empty()) throw CycleInitError("no analysis available for background");
  const Hours min_lead = *std::min_element(cfg.forecast_leads.begin(), cfg.forecast_leads.end());

  if (!cfg.htaa.enabled) {
    const AnalysisEntry &latest = history.back();
    if (target - latest.time < min_lead)
      throw CycleInitError("latest analysis is too close to the target time");
    return {latest.time, greedy_decompose(target - latest.time, cfg.forecast_leads).steps};
  }

  std::optional<BackgroundChoice> best;
  for (auto it = history.rbegin(); it != history.rend(); ++it) {
    const Hours lead = target - it->time;
    if (lead < min_lead) continue;
    if (lead > cfg.htaa.anchor_span) break;
    LeadDecomposition plan;
    try {
      plan = greedy_decompose(lead, cfg.forecast_leads);
    } catch (const DecompositionError &) {
      continue;
    }
    // Strict comparison keeps the most recent anchor on ties.
    if (!best || plan.steps.size() < best->steps.size()) best = BackgroundChoice{it->time, plan.steps};
  }
  if (!best) throw CycleInitError("no admissible anchor analysis for " + std::to_string(target) + " h");
  return *best;
}

namespace {

const AnalysisEntry &entry_at(const std::vector<AnalysisEntry> &history, Hours t) {
  for (const auto &e : history)
    if (e.time == t) return e;
  throw CycleInitError("anchor analysis missing");
}

StateField run_steps(const DynamicsModel &model, StateField x, const std::vector<Hours> &steps) {
  for (Hours l : steps) x = model.step(x, l);
  return x;
}

}  // namespace

StateField build_background(const DynamicsModel &model, const std::vector<AnalysisEntry> &history,
                            Hours target, const CycleConfig &cfg) {
  const auto choice = choose_background(history, target, cfg);
  return run_steps(model, entry_at(history, choice.anchor_time).state, choice.steps);
}

// -----------------------------------------------------------------------------
namespace {

bool uses_ensemble(Method m) { return m == Method::EnKF || m == Method::Hybrid; }

std::vector<StateField> initial_members(const StateField &bg, const BackgroundCov &b,
                                        std::size_t n, std::uint64_t seed) {
  const Vector sd = b.diagonal().cwiseSqrt();
  std::vector<StateField> members;
  members.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const CounterRng rng(seed, {0x696e6974ULL, k});
    Vector x = bg.values();
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] += sd[i] * rng.normal(std::uint64_t(i));
    members.emplace_back(bg.grid_ptr(), std::move(x), bg.time());
  }
  return members;
}

}  // namespace

std::vector<CycleRecord> run_cycle(const DynamicsModel &model, const std::vector<StateField> &truth,
                                   const ObsSet &obs, const CycleConfig &cfg, const DaSetup &setup) {
  std::vector<CycleRecord> records;
  if (cfg.n_cycles == 0) return records;
  if (cfg.window_hours <= 0) throw ConfigError("window length must be positive");
  if (cfg.method == Method::Regressor && !setup.regressor)
    throw ConfigError("regressor method selected without a trained regressor");
  if (uses_ensemble(cfg.method) && cfg.ensemble_size < 2)
    throw EnsembleSizeError("ensemble methods need at least two members");

  const TruthIndex truth_at(truth);
  std::shared_ptr<const Matrix> loc_root;
  if (cfg.method == Method::Hybrid && cfg.enkf.localization > 0.0 && !truth.empty())
    loc_root = std::make_shared<const Matrix>(localization_sqrt(truth.front().grid(), cfg.enkf.localization));
  std::vector<AnalysisEntry> history;
  records.reserve(cfg.n_cycles);

  for (std::size_t k = 0; k < cfg.n_cycles; ++k) {
    const Hours start = cfg.first_window_start + Hours(k) * cfg.window_hours;
    const Window window{start, start + cfg.window_hours};

    // Background (and ensemble) for this window.
    std::optional<StateField> bg;
    std::vector<StateField> members;
    Hours anchor;
    std::size_t calls;
    if (k == 0) {
      const auto plan = greedy_decompose(24, cfg.forecast_leads);
      anchor = start - 24;
      calls = plan.steps.size();
      StateField x0 = truth_at.at(anchor);
      if (cfg.initial_perturbation > 0.0) {
        const CounterRng rng(cfg.enkf.seed, {0x69633030ULL});
        Vector xi(static_cast<Eigen::Index>(setup.b.control_size()));
        for (Eigen::Index i = 0; i < xi.size(); ++i) xi[i] = rng.normal(std::uint64_t(i));
        x0 = StateField(x0.grid_ptr(), x0.values() + cfg.initial_perturbation * setup.b.sqrt_apply(xi),
                        anchor);
      }
      bg = run_steps(model, x0, plan.steps);
      if (uses_ensemble(cfg.method))
        members = initial_members(*bg, setup.b, cfg.ensemble_size, cfg.enkf.seed);
    } else {
      const auto choice = choose_background(history, start, cfg);
      const AnalysisEntry &a = entry_at(history, choice.anchor_time);
      anchor = choice.anchor_time;
      calls = choice.steps.size();
      bg = run_steps(model, a.state, choice.steps);
      if (uses_ensemble(cfg.method)) {
        members.resize(a.members.size(), a.members.front());
        kernels::parallel_for(a.members.size(), [&](std::size_t n) {
          members[n] = run_steps(model, a.members[n], choice.steps);
        });
      }
    }

    CycleRecord rec{k, start, *bg, *bg, {}, {}, {}, anchor, calls};
    std::vector<StateField> analysis_members;
    try {
      const ObsRecord *at_start = obs.at(start);
      auto need_start = [&]() -> const ObsRecord & {
        if (!at_start) throw MissingDataError("no observations at " + std::to_string(start) + " h");
        return *at_start;
      };
      switch (cfg.method) {
        case Method::None:
          break;
        case Method::ThreeDVar:
          rec.analysis = threedvar(*bg, setup.b, need_start(), setup.r).analysis;
          break;
        case Method::FourDVar: {
          const auto res = minimize_4dvar(*bg, setup.b, obs.window(window.start, window.end),
                                          setup.r, model, window, cfg.solver);
          rec.analysis = res.analysis;
          rec.diagnostics.iterations = res.iterations;
          rec.diagnostics.exit_reason = res.exit_reason;
          rec.diagnostics.initial_cost = res.cost.front();
          rec.diagnostics.final_cost = res.cost.back();
          break;
        }
        case Method::EnKF: {
          EnkfConfig ec = cfg.enkf;
          ec.seed = mix64(cfg.enkf.seed ^ mix64(k + 1));
          const auto ea = enkf_analysis_4d(EnsembleState{members}, obs.window(window.start, window.end),
                                           setup.r, model, window, ec);
          rec.analysis = StateField(bg->grid_ptr(), ensemble_stats(ea).mean, start);
          analysis_members = ea.members;
          break;
        }
        case Method::Hybrid: {
          // 4DVar with the hybrid covariance; the ensemble is updated by the
          // EnKF and recentred on the variational analysis.
          const EnsembleState ef{members};
          const HybridCov hb = hybrid_cov(setup.b, ensemble_stats(ef), cfg.hybrid_beta, loc_root);
          const auto wobs = obs.window(window.start, window.end);
          const auto res = minimize_4dvar(*bg, hb, wobs, setup.r, model, window, cfg.solver);
          rec.analysis = res.analysis;
          rec.diagnostics.iterations = res.iterations;
          rec.diagnostics.exit_reason = res.exit_reason;
          rec.diagnostics.initial_cost = res.cost.front();
          rec.diagnostics.final_cost = res.cost.back();
          EnkfConfig ec = cfg.enkf;
          ec.seed = mix64(cfg.enkf.seed ^ mix64(k + 1));
          auto ea = enkf_analysis_4d(ef, wobs, setup.r, model, window, ec);
          const Vector shift = rec.analysis.values() - ensemble_stats(ea).mean;
          for (auto &m : ea.members) m = StateField(m.grid_ptr(), m.values() + shift, m.time());
          analysis_members = std::move(ea.members);
          break;
        }
        case Method::Regressor: {
          const Vector grad =
              obs_term_gradient(*bg, obs.window(window.start, window.end), setup.r, model, window);
          rec.analysis = apply_regressor(*setup.regressor, *bg, need_start(), grad).analysis;
          break;
        }
      }
    } catch (const Error &e) {
      // Degrade to the background and keep cycling; the failure stays visible.
      rec.analysis = *bg;
      rec.diagnostics.failed = true;
      rec.diagnostics.message = e.what();
      analysis_members = members;
    }
    if (uses_ensemble(cfg.method) && analysis_members.empty()) analysis_members = members;

    const StateField &xt = truth_at.at(start);
    rec.background_scores = score_state(rec.background, xt, setup.climatology);
    rec.analysis_scores = score_state(rec.analysis, xt, setup.climatology);

    history.push_back(AnalysisEntry{start, rec.analysis, std::move(analysis_members)});
    // Anything older than the anchor span can never be chosen again.
    const Hours horizon = std::max(cfg.htaa.anchor_span, cfg.window_hours);
    while (history.size() > 1 && history.front().time < start + cfg.window_hours - horizon)
      history.erase(history.begin());
    records.push_back(std::move(rec));
  }
  return records;
}

// -----------------------------------------------------------------------------
ForecastLaunch launch_medium_range(const DynamicsModel &model, const StateField &analysis,
                                   const TruthIndex &truth, const Climatology &climatology,
                                   std::span<const Hours> leads, Hours max_lead, Hours step) {
  if (step <= 0) throw ConfigError("forecast output step must be positive");
  const std::span<const Hours> lead_set = leads.empty() ? model.supported_leads() : leads;
  ForecastLaunch out;
  out.init_time = analysis.time();
  // States at partial sums of greedy plans, shared between output leads.
  std::map<Hours, StateField> cache;
  cache.emplace(0, analysis);
  for (Hours lead = 0; lead <= max_lead; lead += step) {
    const Hours valid = analysis.time() + lead;
    if (!truth.contains(valid)) break;
    StateField x = analysis;
    if (lead > 0) {
      Hours done = 0;
      for (Hours s : greedy_decompose(lead, lead_set).steps) {
        const Hours next = done + s;
        auto it = cache.find(next);
        if (it == cache.end()) it = cache.emplace(next, model.step(cache.at(done), s)).first;
        done = next;
      }
      x = cache.at(lead);
    }
    out.leads.push_back(lead);
    out.scores.push_back(score_state(x, truth.at(valid), climatology));
    out.states.push_back(std::move(x));
  }
  return out;
}

SummaryTable summarize_cycle(const std::vector<CycleRecord> &records, std::size_t spin_up,
                             bool backgrounds) {
  std::vector<std::vector<FieldScore>> scores;
  for (const auto &r : records)
    if (r.index >= spin_up) scores.push_back(backgrounds ? r.background_scores : r.analysis_scores);
  return summarize(scores);
}

}  // namespace dab
