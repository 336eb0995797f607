#include <algorithm>
#include <cmath>
#include <limits>

#include "dab/assimilation.hpp"
#include "dab/error.hpp"

namespace dab {

// -----------------------------------------------------------------------------
BackgroundCov::BackgroundCov(GridPtr grid, std::vector<double> channel_variances)
    : grid_(std::move(grid)), variances_(std::move(channel_variances)) {
  if (variances_.size() != grid_->channels())
    throw DimensionError("background variances need one value per channel");
  for (double v : variances_)
    if (!(v > 0.0)) throw ConfigError("background variances must be positive");
  diag_.resize(Eigen::Index(grid_->size()));
  for (std::size_t ch = 0; ch < grid_->channels(); ++ch)
    diag_.segment(Eigen::Index(ch * grid_->cells()), Eigen::Index(grid_->cells()))
        .setConstant(variances_[ch]);
}

BackgroundCov BackgroundCov::uniform(GridPtr grid, double variance) {
  const std::size_t n = grid->channels();
  return BackgroundCov(std::move(grid), std::vector<double>(n, variance));
}

Vector BackgroundCov::diagonal() const { return diag_; }

Vector BackgroundCov::inverse_diagonal() const {
  return diag_.unaryExpr([](double v) { return std::isinf(v) ? 0.0 : 1.0 / v; });
}

Vector BackgroundCov::apply(const Vector &v) const { return diag_.cwiseProduct(v); }

Vector BackgroundCov::sqrt_apply(const Vector &c) const { return diag_.cwiseSqrt().cwiseProduct(c); }

Vector BackgroundCov::sqrt_transpose(const Vector &s) const { return sqrt_apply(s); }

// -----------------------------------------------------------------------------
ObsCov::ObsCov(GridPtr grid, std::vector<std::optional<double>> channel_sigmas)
    : grid_(std::move(grid)), sigmas_(std::move(channel_sigmas)) {
  if (sigmas_.size() != grid_->channels())
    throw DimensionError("observation errors need one entry per channel");
}

ObsCov ObsCov::from_table(const GridPtr &grid, const ObsErrorTable &table) {
  return ObsCov(grid, table.channel_sigmas(*grid));
}

Vector ObsCov::variances(const ObsMask &mask) const {
  if (mask.size() != grid_->size()) throw DimensionError("mask does not match grid");
  std::vector<double> out;
  const std::size_t cells = grid_->cells();
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    const auto &s = sigmas_[i / cells];
    if (!s) throw ConfigError("observation present in an unobserved channel");
    out.push_back(*s * *s);
  }
  return Eigen::Map<Vector>(out.data(), Eigen::Index(out.size()));
}

// -----------------------------------------------------------------------------
namespace {

struct PreparedObs {
  Hours time;
  std::vector<std::size_t> idx;
  Vector y;
  Vector rinv;
};

std::vector<PreparedObs> prepare(const ObsWindow &obs, const ObsCov &r, const Window &w,
                                 const StateField &x0) {
  if (x0.time() != w.start) throw WindowError("initial state is not at the window start");
  std::vector<PreparedObs> out;
  for (const ObsRecord *rec : obs) {
    if (rec->time < w.start || rec->time >= w.end)
      throw WindowError("observation at " + std::to_string(rec->time) + " h outside window [" +
                        std::to_string(w.start) + ", " + std::to_string(w.end) + ")");
    PreparedObs p;
    p.time = rec->time;
    p.idx = observed_indices(rec->observed);
    p.y = apply_obs_operator(rec->values, rec->observed);
    const Vector var = r.variances(rec->observed);
    if ((var.array() <= 0.0).any())
      throw NumericalError("zero observation error in a variational cost");
    p.rinv = var.cwiseInverse();
    out.push_back(std::move(p));
  }
  std::sort(out.begin(), out.end(), [](const auto &a, const auto &b) { return a.time < b.time; });
  for (std::size_t i = 1; i < out.size(); ++i)
    if (out[i].time == out[i - 1].time) throw WindowError("duplicate observation time in window");
  return out;
}

/// Observation term and its adjoint gradient along the model trajectory from x0.
double obs_term(const StateField &x0, const std::vector<PreparedObs> &obs,
                const DynamicsModel &model, Vector *grad) {
  struct Step {
    StateField base;
    Hours lead;
  };
  std::vector<Step> steps;
  std::vector<std::size_t> reached(obs.size());
  std::vector<Vector> forcing(obs.size());
  StateField x = x0;
  double j = 0.0;
  for (std::size_t k = 0; k < obs.size(); ++k) {
    const Hours gap = obs[k].time - x.time();
    if (gap > 0) {
      for (Hours lead : greedy_decompose(gap, model.supported_leads()).steps) {
        if (grad) steps.push_back({x, lead});
        x = model.step(x, lead);
      }
    }
    reached[k] = steps.size();
    Vector d(obs[k].y.size());
    for (std::size_t i = 0; i < obs[k].idx.size(); ++i)
      d[Eigen::Index(i)] = obs[k].y[Eigen::Index(i)] - x.values()[Eigen::Index(obs[k].idx[i])];
    const Vector wd = obs[k].rinv.cwiseProduct(d);
    j += 0.5 * d.dot(wd);
    if (grad) {
      forcing[k] = Vector::Zero(x.values().size());
      for (std::size_t i = 0; i < obs[k].idx.size(); ++i)
        forcing[k][Eigen::Index(obs[k].idx[i])] = -wd[Eigen::Index(i)];
    }
  }
  if (grad) {
    Vector lambda = Vector::Zero(x0.values().size());
    std::size_t s = steps.size();
    for (std::size_t k = obs.size(); k-- > 0;) {
      for (; s > reached[k]; --s) lambda = model.adjoint(steps[s - 1].base, lambda, steps[s - 1].lead);
      lambda += forcing[k];
    }
    for (; s > 0; --s) lambda = model.adjoint(steps[s - 1].base, lambda, steps[s - 1].lead);
    *grad = std::move(lambda);
  }
  return j;
}

void check_same(const StateField &a, const StateField &b) {
  if (!(a.grid() == b.grid())) throw DimensionError("states on different grids");
}

}  // namespace

double cost_4dvar(const StateField &x0, const StateField &xb, const BackgroundCov &b,
                  const ObsWindow &obs, const ObsCov &r, const DynamicsModel &model,
                  const Window &window) {
  check_same(x0, xb);
  const auto prepared = prepare(obs, r, window, x0);
  const Vector dx = x0.values() - xb.values();
  const double jb = 0.5 * dx.dot(b.inverse_diagonal().cwiseProduct(dx));
  return jb + obs_term(x0, prepared, model, nullptr);
}

Vector grad_4dvar(const StateField &x0, const StateField &xb, const BackgroundCov &b,
                  const ObsWindow &obs, const ObsCov &r, const DynamicsModel &model,
                  const Window &window) {
  check_same(x0, xb);
  const auto prepared = prepare(obs, r, window, x0);
  Vector g;
  obs_term(x0, prepared, model, &g);
  return b.inverse_diagonal().cwiseProduct(x0.values() - xb.values()) + g;
}

Vector obs_term_gradient(const StateField &xb, const ObsWindow &obs, const ObsCov &r,
                         const DynamicsModel &model, const Window &window) {
  const auto prepared = prepare(obs, r, window, xb);
  Vector g;
  obs_term(xb, prepared, model, &g);
  return g;
}

AnalysisResult minimize_4dvar(const StateField &xb, const CovarianceOperator &b,
                              const ObsWindow &obs, const ObsCov &r, const DynamicsModel &model,
                              const Window &window, const LbfgsConfig &solver) {
  if (b.state_size() != xb.grid().size()) throw DimensionError("covariance does not match state");
  if (auto *diag = dynamic_cast<const BackgroundCov *>(&b))
    for (double v : diag->channel_variances())
      if (std::isinf(v)) throw ConfigError("4DVar control transform needs finite variances");
  const auto prepared = prepare(obs, r, window, xb);
  const GridPtr &grid = xb.grid_ptr();

  Objective f = [&](const Vector &v, Vector &g) {
    const StateField x(grid, xb.values() + b.sqrt_apply(v), xb.time());
    Vector gx;
    const double jo = obs_term(x, prepared, model, &gx);
    g = v + b.sqrt_transpose(gx);
    return 0.5 * v.squaredNorm() + jo;
  };
  const auto res = minimize_lbfgs(f, Vector::Zero(Eigen::Index(b.control_size())), solver);
  AnalysisResult out{StateField(grid, xb.values() + b.sqrt_apply(res.x), xb.time())};
  out.cost = res.cost;
  out.grad_norm = res.grad_norm;
  out.iterations = res.iterations;
  out.exit_reason = res.exit_reason;
  return out;
}

AnalysisResult threedvar(const StateField &xb, const CovarianceOperator &b, const ObsRecord &obs,
                         const ObsCov &r) {
  if (obs.time != xb.time()) throw WindowError("3DVar observations must be valid at the background time");
  const auto idx = observed_indices(obs.observed);
  const Vector var_o = r.variances(obs.observed);
  Vector x = xb.values();

  if (auto *diag = dynamic_cast<const BackgroundCov *>(&b)) {
    const Vector var_b = diag->diagonal();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const auto n = Eigen::Index(idx[i]);
      const double sb = var_b[n], so = var_o[Eigen::Index(i)];
      double w;
      if (std::isinf(sb))
        w = 1.0;
      else if (sb + so == 0.0)
        w = 0.0;
      else
        w = sb / (sb + so);
      x[n] += w * (obs.values[n] - x[n]);
    }
    return AnalysisResult{StateField(xb.grid_ptr(), std::move(x), xb.time())};
  }

  // Observation-space solve with S = (H U)(H U)^T + R.
  const std::size_t d = idx.size();
  Matrix hu(Eigen::Index(d), Eigen::Index(b.control_size()));
  Vector e = Vector::Zero(x.size());
  for (std::size_t i = 0; i < d; ++i) {
    e[Eigen::Index(idx[i])] = 1.0;
    hu.row(Eigen::Index(i)) = b.sqrt_transpose(e).transpose();
    e[Eigen::Index(idx[i])] = 0.0;
  }
  Matrix s = hu * hu.transpose();
  s.diagonal() += var_o;
  Vector innov(static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < d; ++i)
    innov[Eigen::Index(i)] = obs.values[Eigen::Index(idx[i])] - x[Eigen::Index(idx[i])];
  Eigen::LLT<Matrix> llt(s);
  if (llt.info() != Eigen::Success) throw NumericalError("3DVar innovation covariance is not positive definite");
  const Vector z = llt.solve(innov);
  x += b.sqrt_apply(hu.transpose() * z);
  return AnalysisResult{StateField(xb.grid_ptr(), std::move(x), xb.time())};
}

}  // namespace dab
