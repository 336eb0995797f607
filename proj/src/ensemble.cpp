#include <cmath>
#include <numbers>

#include "dab/assimilation.hpp"
#include "dab/error.hpp"
#include "dab/kernels.hpp"
#include "dab/random.hpp"

namespace dab {

EnsembleStats ensemble_stats(const EnsembleState &ensemble) {
  const std::size_t n = ensemble.size();
  if (n < 2) throw EnsembleSizeError("ensemble needs at least two members");
  const auto m = Eigen::Index(ensemble.members.front().grid().size());
  EnsembleStats out;
  out.mean = Vector::Zero(m);
  for (const auto &x : ensemble.members) {
    if (x.values().size() != m) throw DimensionError("ensemble members differ in size");
    out.mean += x.values();
  }
  out.mean /= double(n);
  out.anomalies.resize(m, Eigen::Index(n));
  const double scale = 1.0 / std::sqrt(double(n - 1));
  for (std::size_t i = 0; i < n; ++i)
    out.anomalies.col(Eigen::Index(i)) = (ensemble.members[i].values() - out.mean) * scale;
  return out;
}

// -----------------------------------------------------------------------------
Matrix localization_sqrt(const GridSpec &grid, double half_width) {
  const auto m = Eigen::Index(grid.size());
  const std::size_t cells = grid.cells();
  Matrix c(m, m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j <= i; ++j)
      c(i, j) = c(j, i) = gaspari_cohn(cell_distance(grid, std::size_t(i) % cells, std::size_t(j) % cells),
                                       half_width);
  // The taper is positive semidefinite up to rounding; clip what rounding leaves.
  Eigen::SelfAdjointEigenSolver<Matrix> es(c);
  const Vector root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

HybridCov::HybridCov(const BackgroundCov &b, Matrix anomalies, double beta,
                     std::shared_ptr<const Matrix> loc_sqrt)
    : b_(b), x_(std::move(anomalies)), beta_(beta), loc_(std::move(loc_sqrt)) {
  if (!(beta_ >= 0.0 && beta_ <= 1.0)) throw ConfigError("hybrid weight must be in [0, 1]");
  if (std::size_t(x_.rows()) != b_.state_size()) throw DimensionError("ensemble does not match B");
  if (loc_ && (loc_->rows() != x_.rows() || loc_->cols() != x_.rows()))
    throw DimensionError("localization root does not match the state size");
}

std::size_t HybridCov::control_size() const {
  const std::size_t ens = std::size_t(x_.cols()) * (loc_ ? std::size_t(x_.rows()) : 1);
  return b_.control_size() + ens;
}

Vector HybridCov::ens_sqrt_apply(const Vector &c) const {
  if (!loc_) return x_ * c;
  const Eigen::Map<const Matrix> v(c.data(), x_.rows(), x_.cols());
  return (x_.array() * (*loc_ * v).array()).rowwise().sum();
}

Vector HybridCov::ens_sqrt_transpose(const Vector &s) const {
  if (!loc_) return x_.transpose() * s;
  const Matrix w = *loc_ * (x_.array().colwise() * s.array()).matrix();
  return Eigen::Map<const Vector>(w.data(), w.size());
}

Vector HybridCov::apply(const Vector &v) const {
  return beta_ * b_.apply(v) + (1.0 - beta_) * ens_sqrt_apply(ens_sqrt_transpose(v));
}

Vector HybridCov::sqrt_apply(const Vector &c) const {
  const auto m = Eigen::Index(b_.control_size());
  return std::sqrt(beta_) * b_.sqrt_apply(c.head(m)) +
         std::sqrt(1.0 - beta_) * ens_sqrt_apply(c.tail(c.size() - m));
}

Vector HybridCov::sqrt_transpose(const Vector &s) const {
  Vector out(static_cast<Eigen::Index>(control_size()));
  const auto m = Eigen::Index(b_.control_size());
  out.head(m) = std::sqrt(beta_) * b_.sqrt_transpose(s);
  out.tail(out.size() - m) = std::sqrt(1.0 - beta_) * ens_sqrt_transpose(s);
  return out;
}

HybridCov hybrid_cov(const BackgroundCov &b, const EnsembleStats &pe, double beta,
                     std::shared_ptr<const Matrix> loc_sqrt) {
  return HybridCov(b, pe.anomalies, beta, std::move(loc_sqrt));
}

// -----------------------------------------------------------------------------
double gaspari_cohn(double distance, double half_width) {
  if (!(half_width > 0.0)) throw ConfigError("localization half width must be positive");
  const double r = std::abs(distance) / half_width;
  if (r >= 2.0) return 0.0;
  if (r <= 1.0)
    return (((-0.25 * r + 0.5) * r + 0.625) * r - 5.0 / 3.0) * r * r + 1.0;
  return ((((r / 12.0 - 0.5) * r + 0.625) * r + 5.0 / 3.0) * r - 5.0) * r + 4.0 - 2.0 / (3.0 * r);
}

double cell_distance(const GridSpec &grid, std::size_t a, std::size_t b) {
  const std::size_t nk = grid.n_lon();
  if (grid.n_lat() == 1) {
    const std::size_t d = a > b ? a - b : b - a;
    return double(std::min(d, nk - d));
  }
  constexpr double kEarthRadiusKm = 6371.0;
  const double deg = std::numbers::pi / 180.0;
  const double lat1 = grid.lat_deg()[a / nk] * deg, lat2 = grid.lat_deg()[b / nk] * deg;
  const double dlon = (grid.lon_deg(a % nk) - grid.lon_deg(b % nk)) * deg;
  const double dlat = lat2 - lat1;
  // Haversine.
  const double h = std::pow(std::sin(dlat / 2), 2) +
                   std::cos(lat1) * std::cos(lat2) * std::pow(std::sin(dlon / 2), 2);
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(h)));
}

// -----------------------------------------------------------------------------
namespace {

struct StackedObs {
  std::vector<std::size_t> index;  // state index of each observation
  std::vector<Hours> time;
  Vector value;
  Vector variance;
};

StackedObs stack(const ObsWindow &obs, const ObsCov &r) {
  StackedObs s;
  std::vector<double> val, var;
  for (const ObsRecord *rec : obs) {
    const auto idx = observed_indices(rec->observed);
    const Vector v = r.variances(rec->observed);
    for (std::size_t p = 0; p < idx.size(); ++p) {
      s.index.push_back(idx[p]);
      s.time.push_back(rec->time);
      val.push_back(rec->values[Eigen::Index(idx[p])]);
      var.push_back(v[Eigen::Index(p)]);
    }
  }
  s.value = Eigen::Map<const Vector>(val.data(), Eigen::Index(val.size()));
  s.variance = Eigen::Map<const Vector>(var.data(), Eigen::Index(var.size()));
  return s;
}

// Perturbed-observation update of the (already inflated) members `e` given
// each member's predicted observations `he`.
void perturbed_obs_update(const GridSpec &g, Matrix &e, const Matrix &he, const StackedObs &o,
                          const EnkfConfig &cfg) {
  const auto m = e.rows(), n = e.cols();
  const auto d = Eigen::Index(o.index.size());
  if (d == 0) return;
  const double scale = 1.0 / std::sqrt(double(n - 1));
  const Matrix x = (e.colwise() - e.rowwise().mean()) * scale;
  const Matrix hx = (he.colwise() - he.rowwise().mean()) * scale;
  Matrix pht = x * hx.transpose();
  Matrix hpht = hx * hx.transpose();
  if (cfg.localization > 0.0) {
    const std::size_t cells = g.cells();
    for (Eigen::Index p = 0; p < d; ++p) {
      const std::size_t cp = o.index[std::size_t(p)] % cells;
      for (Eigen::Index i = 0; i < m; ++i)
        pht(i, p) *= gaspari_cohn(cell_distance(g, std::size_t(i) % cells, cp), cfg.localization);
      for (Eigen::Index q = 0; q < d; ++q)
        hpht(q, p) *= gaspari_cohn(cell_distance(g, o.index[std::size_t(q)] % cells, cp), cfg.localization);
    }
  }
  Matrix s = hpht;
  s.diagonal() += o.variance;
  Eigen::LLT<Matrix> llt(s);
  if (llt.info() != Eigen::Success) {
    s.diagonal().array() += 1e-10 * s.trace() / double(d);
    llt.compute(s);
    if (llt.info() != Eigen::Success) throw NumericalError("EnKF innovation covariance is singular");
  }
  // Perturbations keyed by (seed, member, time), counter = state index, then
  // centred over members so the mean update is the Kalman update of the mean.
  Matrix eta(d, n);
  kernels::parallel_for(std::size_t(n), [&](std::size_t k) {
    for (Eigen::Index p = 0; p < d; ++p) {
      const CounterRng rng(cfg.seed, {0x456e4b46ULL, k, std::uint64_t(o.time[std::size_t(p)])});
      eta(p, Eigen::Index(k)) = std::sqrt(o.variance[p]) * rng.normal(o.index[std::size_t(p)]);
    }
  });
  eta.colwise() -= eta.rowwise().mean();
  const Matrix innov = (-he + eta).colwise() + o.value;
  const Matrix update = pht * llt.solve(innov);
  kernels::omp::add_columns({e.data(), std::size_t(e.size())}, {update.data(), std::size_t(update.size())},
                            std::size_t(m), std::size_t(n));
}

Matrix inflated_members(const EnsembleState &forecast, const EnkfConfig &cfg) {
  if (forecast.size() < 2) throw EnsembleSizeError("EnKF needs at least two members");
  if (!(cfg.inflation >= 1.0)) throw ConfigError("inflation factor must be >= 1");
  const auto m = Eigen::Index(forecast.members.front().grid().size());
  Matrix e(m, Eigen::Index(forecast.size()));
  for (std::size_t i = 0; i < forecast.size(); ++i) {
    if (forecast.members[i].grid() != forecast.members.front().grid())
      throw DimensionError("ensemble members live on different grids");
    e.col(Eigen::Index(i)) = forecast.members[i].values();
  }
  const Vector mean = e.rowwise().mean();
  e = (e.colwise() - mean) * cfg.inflation;
  e.colwise() += mean;
  return e;
}

EnsembleState to_ensemble(const Matrix &e, const StateField &like) {
  EnsembleState out;
  out.members.reserve(std::size_t(e.cols()));
  for (Eigen::Index k = 0; k < e.cols(); ++k) out.members.emplace_back(like.grid_ptr(), e.col(k), like.time());
  return out;
}

}  // namespace

EnsembleState enkf_analysis(const EnsembleState &forecast, const ObsRecord &obs, const ObsCov &r,
                            const EnkfConfig &cfg) {
  Matrix e = inflated_members(forecast, cfg);
  const StackedObs o = stack(ObsWindow{&obs}, r);
  Matrix he(Eigen::Index(o.index.size()), e.cols());
  for (std::size_t p = 0; p < o.index.size(); ++p) he.row(Eigen::Index(p)) = e.row(Eigen::Index(o.index[p]));
  perturbed_obs_update(forecast.members.front().grid(), e, he, o, cfg);
  return to_ensemble(e, forecast.members.front());
}

EnsembleState enkf_analysis_4d(const EnsembleState &forecast, const ObsWindow &obs, const ObsCov &r,
                               const DynamicsModel &model, const Window &window, const EnkfConfig &cfg) {
  Matrix e = inflated_members(forecast, cfg);
  const StateField &like = forecast.members.front();
  if (like.time() != window.start) throw WindowError("ensemble must be valid at the window start");
  for (const ObsRecord *rec : obs)
    if (rec->time < window.start || rec->time >= window.end)
      throw WindowError("observation at " + std::to_string(rec->time) + " h lies outside the window");
  const StackedObs o = stack(obs, r);
  const auto d = Eigen::Index(o.index.size());

  // Each member's trajectory through the window, sampled at the observations.
  Matrix he(d, e.cols());
  kernels::parallel_for(std::size_t(e.cols()), [&](std::size_t k) {
    StateField x(like.grid_ptr(), e.col(Eigen::Index(k)), window.start);
    for (Eigen::Index p = 0; p < d; ++p) {
      const Hours t = o.time[std::size_t(p)];
      if (t != x.time()) x = forecast_hta(model, x, t - x.time());
      he(p, Eigen::Index(k)) = x.values()[Eigen::Index(o.index[std::size_t(p)])];
    }
  });
  perturbed_obs_update(like.grid(), e, he, o, cfg);
  return to_ensemble(e, like);
}

}  // namespace dab
