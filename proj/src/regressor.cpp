#include <cmath>

#include "dab/assimilation.hpp"
#include "dab/error.hpp"

namespace dab {

using Mat5 = Eigen::Matrix<double, kRegressorFeatures, kRegressorFeatures>;
using Vec5 = Eigen::Matrix<double, kRegressorFeatures, 1>;

IncrementRegressor IncrementRegressor::zero(std::size_t channels) {
  IncrementRegressor r;
  r.coefficients.assign(channels, std::array<double, kRegressorFeatures>{});
  return r;
}

std::array<double, kRegressorFeatures> regressor_features(const StateField &xb, const ObsRecord &obs,
                                                          const Vector &grad_feature,
                                                          std::size_t index) {
  const auto i = Eigen::Index(index);
  const double b = xb.values()[i];
  const bool seen = obs.observed[index] != 0;
  return {b, seen ? obs.values[i] : b, seen ? 1.0 : 0.0,
          grad_feature.size() ? grad_feature[i] : 0.0, 1.0};
}

IncrementRegressor fit_increment_regressor(std::span<const TrainingSample> samples) {
  if (samples.empty()) throw ConfigError("no training samples for the increment regressor");
  const GridSpec &g = samples.front().background.grid();
  const std::size_t cells = g.cells();
  if (samples.size() * cells < 100)
    throw ConfigError("increment regressor needs at least 100 training cells per channel");
  const Vector lat_w = latitude_weights(g);

  IncrementRegressor reg = IncrementRegressor::zero(g.channels());
  double sum_l2 = 0.0, sum_l1 = 0.0;
  std::size_t rows = 0;

  for (std::size_t ch = 0; ch < g.channels(); ++ch) {
    // Weighted normal equations accumulated over every (sample, cell).
    Mat5 ata = Mat5::Zero();
    Vec5 atb = Vec5::Zero();
    for (const auto &s : samples) {
      if (!(s.background.grid() == g) || !(s.truth.grid() == g) || !s.obs)
        throw DimensionError("training sample does not match the regressor grid");
      for (std::size_t c = 0; c < cells; ++c) {
        const std::size_t i = ch * cells + c;
        const auto f = regressor_features(s.background, *s.obs, s.grad_feature, i);
        const Vec5 fv = Eigen::Map<const Vec5>(f.data());
        const double w = lat_w[Eigen::Index(c / g.n_lon())];
        const double target = s.truth.values()[Eigen::Index(i)] - s.background.values()[Eigen::Index(i)];
        ata.noalias() += w * fv * fv.transpose();
        atb.noalias() += w * target * fv;
      }
    }
    // Column scaling so features with very different units share one tolerance.
    Vec5 scale = ata.diagonal().cwiseSqrt();
    for (auto &v : scale) v = v > 0.0 ? v : 1.0;
    Mat5 a = scale.cwiseInverse().asDiagonal() * ata * scale.cwiseInverse().asDiagonal();
    Vec5 rhs = scale.cwiseInverse().asDiagonal() * atb;

    Eigen::SelfAdjointEigenSolver<Mat5> es(a);
    const double emax = es.eigenvalues().maxCoeff();
    Vec5 coef;
    if (emax <= 0.0) {
      coef.setZero();
    } else if (es.eigenvalues().minCoeff() <= 1e-12 * emax) {
      const double lambda = 1e-8 * a.trace() / double(kRegressorFeatures);
      reg.ridge_lambda = std::max(reg.ridge_lambda, lambda);
      coef = (a + lambda * Mat5::Identity()).ldlt().solve(rhs);
    } else {
      coef = a.ldlt().solve(rhs);
    }
    coef = coef.cwiseQuotient(scale);
    for (std::size_t k = 0; k < kRegressorFeatures; ++k) reg.coefficients[ch][k] = coef[Eigen::Index(k)];

    for (const auto &s : samples) {
      for (std::size_t c = 0; c < cells; ++c) {
        const std::size_t i = ch * cells + c;
        const auto f = regressor_features(s.background, *s.obs, s.grad_feature, i);
        const double pred = Eigen::Map<const Vec5>(f.data()).dot(coef);
        const double target = s.truth.values()[Eigen::Index(i)] - s.background.values()[Eigen::Index(i)];
        const double w = lat_w[Eigen::Index(c / g.n_lon())];
        const double res = target - pred;
        sum_l2 += w * res * res;
        sum_l1 += w * std::abs(res);
        ++rows;
      }
    }
  }
  reg.train_cells = rows;
  reg.train_l2 = sum_l2 / double(rows);
  reg.train_l1 = sum_l1 / double(rows);
  return reg;
}

AnalysisResult apply_regressor(const IncrementRegressor &reg, const StateField &xb,
                               const ObsRecord &obs, const Vector &grad_feature) {
  const GridSpec &g = xb.grid();
  if (reg.coefficients.size() != g.channels())
    throw DimensionError("regressor channel count does not match the grid");
  if (obs.observed.size() != g.size()) throw DimensionError("observation mask does not match the grid");
  Vector x = xb.values();
  const std::size_t cells = g.cells();
  for (std::size_t ch = 0; ch < g.channels(); ++ch) {
    const auto &c = reg.coefficients[ch];
    for (std::size_t k = 0; k < cells; ++k) {
      const std::size_t i = ch * cells + k;
      const auto f = regressor_features(xb, obs, grad_feature, i);
      double inc = 0.0;
      for (std::size_t q = 0; q < kRegressorFeatures; ++q) inc += c[q] * f[q];
      x[Eigen::Index(i)] += inc;
    }
  }
  AnalysisResult out{StateField(xb.grid_ptr(), std::move(x), xb.time())};
  out.exit_reason = "regressor";
  return out;
}

}  // namespace dab
