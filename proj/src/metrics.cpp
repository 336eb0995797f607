#include "dab/metrics.hpp"

#include <cmath>
#include <limits>
#include <map>

#include "dab/error.hpp"
#include "dab/kernels.hpp"

namespace dab {

namespace {

std::pair<std::size_t, std::size_t> locate(const GridSpec &g, const std::string &variable,
                                           const std::string &level) {
  const auto v = g.variable_index(variable);
  const auto l = g.level_index(level);
  if (!v || !l) throw AlignmentError("unknown variable/level " + variable + "@" + level);
  return {*v, *l};
}

void check_aligned(std::span<const StateField> a, std::span<const StateField> b) {
  if (a.size() != b.size()) throw AlignmentError("candidate and truth lists differ in length");
  if (a.empty()) throw AlignmentError("no samples");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!(a[i].grid() == b[i].grid())) throw AlignmentError("candidate and truth grids differ");
    if (a[i].time() != b[i].time())
      throw AlignmentError("sample " + std::to_string(i) + " times differ (" +
                           std::to_string(a[i].time()) + " vs " + std::to_string(b[i].time()) + ")");
  }
}

std::span<const double> channel_span(const StateField &s, std::size_t v, std::size_t l) {
  return {s.values().data() + s.grid().channel_offset(v, l), s.grid().cells()};
}

}  // namespace

double rmse_latweighted(std::span<const StateField> candidates, std::span<const StateField> truths,
                        const std::string &variable, const std::string &level) {
  check_aligned(candidates, truths);
  const GridSpec &g = truths.front().grid();
  const auto [v, l] = locate(g, variable, level);
  const Vector w = latitude_weights(g);
  const std::span<const double> wv(w.data(), std::size_t(w.size()));
  double total = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double s = kernels::omp::weighted_sq_diff(channel_span(candidates[i], v, l),
                                                    channel_span(truths[i], v, l), wv, g.n_lon());
    total += std::sqrt(s / double(g.cells()));
  }
  return total / double(candidates.size());
}

double acc_latweighted(std::span<const StateField> candidates, std::span<const StateField> truths,
                       const Climatology &climatology, const std::string &variable,
                       const std::string &level) {
  check_aligned(candidates, truths);
  const GridSpec &g = truths.front().grid();
  if (!(*climatology.grid == g)) throw AlignmentError("climatology grid differs");
  const auto [v, l] = locate(g, variable, level);
  const Vector w = latitude_weights(g);
  const std::size_t off = g.channel_offset(v, l);
  double num = 0.0, saa = 0.0, stt = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    for (std::size_t c = 0; c < g.cells(); ++c) {
      const auto n = Eigen::Index(off + c);
      const double wj = w[Eigen::Index(c / g.n_lon())];
      const double a = candidates[i].values()[n] - climatology.mean[n];
      const double t = truths[i].values()[n] - climatology.mean[n];
      num += wj * a * t;
      saa += wj * a * a;
      stt += wj * t * t;
    }
  }
  if (stt == 0.0) throw UndefinedAccError("truth anomalies vanish for " + variable + "@" + level);
  // A candidate equal to climatology carries no anomaly signal: ACC 0.
  if (saa == 0.0) return 0.0;
  return num / std::sqrt(saa * stt);
}

double l1_latweighted(const StateField &candidate, const StateField &truth) {
  if (!(candidate.grid() == truth.grid())) throw AlignmentError("candidate and truth grids differ");
  const GridSpec &g = truth.grid();
  const Vector w = latitude_weights(g);
  double total = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const std::size_t lat = (i / g.n_lon()) % g.n_lat();
    total += w[Eigen::Index(lat)] *
             std::abs(candidate.values()[Eigen::Index(i)] - truth.values()[Eigen::Index(i)]);
  }
  return total / double(g.size());
}

Hours skill_horizon(const MetricSeries &acc_series, double threshold) {
  Hours best = 0;
  for (const auto &[lead, value] : acc_series.points) {
    if (!(value > threshold)) break;
    best = lead;
  }
  return best;
}

std::vector<FieldScore> score_state(const StateField &candidate, const StateField &truth,
                                    const Climatology &climatology) {
  const GridSpec &g = truth.grid();
  std::vector<FieldScore> out;
  for (const auto &var : g.variables()) {
    for (const auto &lev : g.levels()) {
      FieldScore s{var.name, lev, 0.0, std::numeric_limits<double>::quiet_NaN()};
      s.rmse = rmse_latweighted({&candidate, 1}, {&truth, 1}, var.name, lev);
      try {
        s.acc = acc_latweighted({&candidate, 1}, {&truth, 1}, climatology, var.name, lev);
      } catch (const UndefinedAccError &) {
      }
      out.push_back(std::move(s));
    }
  }
  return out;
}

SummaryTable summarize(const std::vector<std::vector<FieldScore>> &per_sample) {
  SummaryTable t;
  if (per_sample.empty()) return t;
  const auto &first = per_sample.front();
  for (std::size_t f = 0; f < first.size(); ++f) {
    SummaryRow row{first[f].variable, first[f].level, 0.0, 0.0, 0};
    std::size_t acc_n = 0;
    for (const auto &sample : per_sample) {
      if (sample.size() != first.size() || sample[f].variable != row.variable ||
          sample[f].level != row.level)
        throw AlignmentError("records carry different field lists");
      row.rmse += sample[f].rmse;
      if (!std::isnan(sample[f].acc)) {
        row.acc += sample[f].acc;
        ++acc_n;
      }
      ++row.samples;
    }
    row.rmse /= double(row.samples);
    row.acc = acc_n ? row.acc / double(acc_n) : std::numeric_limits<double>::quiet_NaN();
    t.rows.push_back(std::move(row));
  }
  return t;
}

}  // namespace dab
