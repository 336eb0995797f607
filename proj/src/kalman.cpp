#include <cmath>
#include <sstream>

#include "dab/assimilation.hpp"
#include "dab/error.hpp"
#include "dab/kernels.hpp"

namespace dab {

Matrix materialize_tangent(const DynamicsModel &model, const StateField &base, Hours lead) {
  const auto m = Eigen::Index(base.grid().size());
  Matrix out(m, m);
  kernels::parallel_for(std::size_t(m), [&](std::size_t i) {
    Vector e = Vector::Zero(m);
    e[Eigen::Index(i)] = 1.0;
    out.col(Eigen::Index(i)) = model.tangent(base, e, lead);
  });
  return out;
}

KalmanForecast kf_forecast(const StateField &xa, const Matrix &pa, const DynamicsModel &model,
                           Hours lead, const Matrix &q) {
  const std::size_t m = xa.grid().size();
  if (!model.is_linear() && m > 500)
    throw ConfigError("dense Kalman forecast of a nonlinear model is limited to m <= 500");
  if (std::size_t(pa.rows()) != m || std::size_t(pa.cols()) != m || q.rows() != pa.rows() ||
      q.cols() != pa.cols())
    throw DimensionError("covariance shape does not match state");
  const Matrix mm = materialize_tangent(model, xa, lead);
  return KalmanForecast{model.step(xa, lead), mm * pa * mm.transpose() + q};
}

std::pair<Vector, Matrix> kf_forecast(const Vector &xa, const Matrix &pa, const Matrix &m,
                                      const Matrix &q) {
  if (m.cols() != xa.size() || pa.rows() != m.cols() || q.rows() != m.rows())
    throw DimensionError("Kalman forecast shapes do not conform");
  return {m * xa, m * pa * m.transpose() + q};
}

Matrix selection_matrix(const ObsMask &mask) {
  const auto idx = observed_indices(mask);
  Matrix h = Matrix::Zero(Eigen::Index(idx.size()), Eigen::Index(mask.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) h(Eigen::Index(i), Eigen::Index(idx[i])) = 1.0;
  return h;
}

KalmanAnalysis kf_analysis(const Vector &xf, const Matrix &pf, const Vector &y, const Matrix &h,
                           const Matrix &r) {
  const auto m = xf.size();
  const auto d = y.size();
  if (pf.rows() != m || pf.cols() != m || h.rows() != d || h.cols() != m || r.rows() != d ||
      r.cols() != d)
    throw DimensionError("Kalman analysis shapes do not conform");
  if (d == 0) return KalmanAnalysis{xf, pf, Matrix(m, 0)};

  const Matrix pht = pf * h.transpose();
  Matrix s = h * pht + r;
  Eigen::LLT<Matrix> llt(s);
  if (llt.info() != Eigen::Success) {
    const double jitter = 1e-10 * s.trace() / double(d);
    s.diagonal().array() += jitter;
    llt.compute(s);
    if (llt.info() != Eigen::Success) {
      Eigen::SelfAdjointEigenSolver<Matrix> es(s);
      std::ostringstream msg;
      msg << "innovation covariance is singular (eigenvalues in [" << es.eigenvalues().minCoeff()
          << ", " << es.eigenvalues().maxCoeff() << "])";
      throw NumericalError(msg.str());
    }
  }
  const Matrix k = llt.solve(pht.transpose()).transpose();
  KalmanAnalysis out;
  out.mean = xf + k * (y - h * xf);
  out.cov = (Matrix::Identity(m, m) - k * h) * pf;
  out.gain = k;
  return out;
}

KalmanAnalysis kf_analysis(const Vector &xf, const Matrix &pf, const ObsRecord &obs,
                           const ObsCov &r) {
  const Vector y = apply_obs_operator(obs.values, obs.observed);
  return kf_analysis(xf, pf, y, selection_matrix(obs.observed),
                     Matrix(r.variances(obs.observed).asDiagonal()));
}

}  // namespace dab
