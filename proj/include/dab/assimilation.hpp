#ifndef DAB_ASSIMILATION_HPP
#define DAB_ASSIMILATION_HPP

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dab/dynamics.hpp"
#include "dab/grid.hpp"
#include "dab/lbfgs.hpp"
#include "dab/osse.hpp"

namespace dab {

// -----------------------------------------------------------------------------
// Covariances

/// B = U U^T exposed through its square root so variational solvers can work
/// in the control space v with x = x_b + U v.
class CovarianceOperator {
 public:
  virtual ~CovarianceOperator() = default;
  virtual std::size_t state_size() const = 0;
  virtual std::size_t control_size() const = 0;
  virtual Vector apply(const Vector &v) const = 0;
  virtual Vector sqrt_apply(const Vector &control) const = 0;
  virtual Vector sqrt_transpose(const Vector &state) const = 0;
};

/// Diagonal B with one variance per (variable, level) channel. An infinite
/// variance drops the background term for that channel.
class BackgroundCov final : public CovarianceOperator {
 public:
  BackgroundCov(GridPtr grid, std::vector<double> channel_variances);
  static BackgroundCov uniform(GridPtr grid, double variance);

  const GridSpec &grid() const { return *grid_; }
  const std::vector<double> &channel_variances() const { return variances_; }
  /// Variances expanded to the full state.
  Vector diagonal() const;
  /// B^{-1} as a diagonal (zero where the variance is infinite).
  Vector inverse_diagonal() const;

  std::size_t state_size() const override { return grid_->size(); }
  std::size_t control_size() const override { return grid_->size(); }
  Vector apply(const Vector &v) const override;
  Vector sqrt_apply(const Vector &control) const override;
  Vector sqrt_transpose(const Vector &state) const override;

 private:
  GridPtr grid_;
  std::vector<double> variances_;
  Vector diag_;
};

/// Block-diagonal R: sigma^2 I per observed (variable, level).
class ObsCov {
 public:
  ObsCov(GridPtr grid, std::vector<std::optional<double>> channel_sigmas);
  static ObsCov from_table(const GridPtr &grid, const ObsErrorTable &table);

  const std::vector<std::optional<double>> &channel_sigmas() const { return sigmas_; }
  /// sigma^2 for every observed entry, in observation order.
  Vector variances(const ObsMask &mask) const;

 private:
  GridPtr grid_;
  std::vector<std::optional<double>> sigmas_;
};

struct EnsembleState {
  std::vector<StateField> members;
  std::size_t size() const { return members.size(); }
};

struct EnsembleStats {
  Vector mean;
  /// Columns (x_n - mean) / sqrt(N - 1).
  Matrix anomalies;
  /// P^e v = X (X^T v), never materialized.
  Vector apply_cov(const Vector &v) const { return anomalies * (anomalies.transpose() * v); }
  Matrix dense_cov() const { return anomalies * anomalies.transpose(); }
};

EnsembleStats ensemble_stats(const EnsembleState &ensemble);

/// Symmetric square root of the Gaspari-Cohn taper matrix over all state
/// entries (distance between the entries' cells; channels share the taper).
Matrix localization_sqrt(const GridSpec &grid, double half_width);

/// v -> beta B v + (1 - beta) P^e v, with square root [sqrt(beta) B^{1/2}, sqrt(1-beta) X].
/// Given a taper root S, P^e becomes the Schur product C o (X X^T) with
/// square root v -> sum_n x_n o (S v_n) over N control blocks of state size.
class HybridCov final : public CovarianceOperator {
 public:
  HybridCov(const BackgroundCov &b, Matrix anomalies, double beta,
            std::shared_ptr<const Matrix> loc_sqrt = nullptr);

  double beta() const { return beta_; }
  bool localized() const { return loc_ != nullptr; }
  std::size_t state_size() const override { return b_.state_size(); }
  std::size_t control_size() const override;
  Vector apply(const Vector &v) const override;
  Vector sqrt_apply(const Vector &control) const override;
  Vector sqrt_transpose(const Vector &state) const override;

 private:
  Vector ens_sqrt_apply(const Vector &c) const;
  Vector ens_sqrt_transpose(const Vector &s) const;

  BackgroundCov b_;
  Matrix x_;
  double beta_;
  std::shared_ptr<const Matrix> loc_;
};

HybridCov hybrid_cov(const BackgroundCov &b, const EnsembleStats &pe, double beta,
                     std::shared_ptr<const Matrix> loc_sqrt = nullptr);

// -----------------------------------------------------------------------------

struct AnalysisResult {
  explicit AnalysisResult(StateField a) : analysis(std::move(a)) {}

  StateField analysis;
  std::vector<double> cost;
  std::vector<double> grad_norm;
  int iterations = 0;
  std::string exit_reason = "closed_form";
  std::optional<Matrix> covariance;
  std::optional<EnsembleState> ensemble;
};

struct Window {
  Hours start = 0;
  Hours end = 0;  // exclusive
};

using ObsWindow = std::vector<const ObsRecord *>;

// -----------------------------------------------------------------------------
// Variational

/// J = 1/2 |x0 - xb|^2_{B^-1} + 1/2 sum_k |y_k - H M_{t0->tk}(x0)|^2_{R^-1}
double cost_4dvar(const StateField &x0, const StateField &xb, const BackgroundCov &b,
                  const ObsWindow &obs, const ObsCov &r, const DynamicsModel &model,
                  const Window &window);

/// Adjoint gradient of cost_4dvar with respect to x0.
Vector grad_4dvar(const StateField &x0, const StateField &xb, const BackgroundCov &b,
                  const ObsWindow &obs, const ObsCov &r, const DynamicsModel &model,
                  const Window &window);

/// Strong-constraint 4DVar in the control space of `b`, started from x_b.
AnalysisResult minimize_4dvar(const StateField &xb, const CovarianceOperator &b,
                              const ObsWindow &obs, const ObsCov &r, const DynamicsModel &model,
                              const Window &window, const LbfgsConfig &solver = {});

/// 3DVar at the background time. Diagonal B uses the per-cell closed form;
/// other covariances are solved in observation space.
AnalysisResult threedvar(const StateField &xb, const CovarianceOperator &b, const ObsRecord &obs,
                         const ObsCov &r);

/// Gradient of the observation term 1/2 sum_k |y_k - H M(x_b)|^2_{R^-1} at x_b.
Vector obs_term_gradient(const StateField &xb, const ObsWindow &obs, const ObsCov &r,
                         const DynamicsModel &model, const Window &window);

// -----------------------------------------------------------------------------
// Kalman filter

/// Columns M e_i of the tangent-linear propagator about `base`.
Matrix materialize_tangent(const DynamicsModel &model, const StateField &base, Hours lead);

struct KalmanForecast {
  StateField mean;
  Matrix cov;
};

KalmanForecast kf_forecast(const StateField &xa, const Matrix &pa, const DynamicsModel &model,
                           Hours lead, const Matrix &q);
/// Dense-matrix form: (M x, M P M^T + Q).
std::pair<Vector, Matrix> kf_forecast(const Vector &xa, const Matrix &pa, const Matrix &m,
                                      const Matrix &q);

struct KalmanAnalysis {
  Vector mean;
  Matrix cov;
  Matrix gain;
};

KalmanAnalysis kf_analysis(const Vector &xf, const Matrix &pf, const Vector &y, const Matrix &h,
                           const Matrix &r);
/// Point-sampling H from a mask and diagonal R from ObsCov.
KalmanAnalysis kf_analysis(const Vector &xf, const Matrix &pf, const ObsRecord &obs,
                           const ObsCov &r);

/// Selection matrix of a mask (rows = observed entries).
Matrix selection_matrix(const ObsMask &mask);

// -----------------------------------------------------------------------------
// Ensemble

/// Compactly supported fifth-order piecewise rational correlation; zero beyond 2 L.
double gaspari_cohn(double distance, double half_width);

/// Distance between two horizontal cells: ring index distance when the grid
/// has one latitude, great-circle km otherwise.
double cell_distance(const GridSpec &grid, std::size_t cell_a, std::size_t cell_b);

struct EnkfConfig {
  double inflation = 1.0;
  /// Gaspari-Cohn half width in the units of cell_distance; <= 0 disables.
  double localization = 0.0;
  std::uint64_t seed = 0;
};

/// Stochastic (perturbed-observation) EnKF with multiplicative inflation and
/// optional Schur-product localization of P H^T and H P H^T.
EnsembleState enkf_analysis(const EnsembleState &forecast, const ObsRecord &obs, const ObsCov &r,
                            const EnkfConfig &cfg);

/// Asynchronous variant: members valid at the window start are updated with
/// every observation in the window, each predicted along the member's own
/// trajectory. One record at the window start gives enkf_analysis exactly.
EnsembleState enkf_analysis_4d(const EnsembleState &forecast, const ObsWindow &obs, const ObsCov &r,
                               const DynamicsModel &model, const Window &window, const EnkfConfig &cfg);

// -----------------------------------------------------------------------------
// Learned increment

/// Feature channels per (variable, level): background, mask-filled
/// observations (background where unobserved), observed flag, observation
/// term gradient, bias.
inline constexpr std::size_t kRegressorFeatures = 5;

struct IncrementRegressor {
  std::vector<std::array<double, kRegressorFeatures>> coefficients;  // per channel
  double ridge_lambda = 0.0;  // nonzero when the ridge fallback was used
  double train_l2 = 0.0;      // latitude-weighted mean squared residual
  double train_l1 = 0.0;      // latitude-weighted mean absolute residual
  std::size_t train_cells = 0;

  static IncrementRegressor zero(std::size_t channels);
};

struct TrainingSample {
  StateField background;
  const ObsRecord *obs = nullptr;
  Vector grad_feature;
  StateField truth;
};

/// Per-cell feature values for one channel slot.
std::array<double, kRegressorFeatures> regressor_features(const StateField &xb,
                                                          const ObsRecord &obs,
                                                          const Vector &grad_feature,
                                                          std::size_t index);

IncrementRegressor fit_increment_regressor(std::span<const TrainingSample> samples);

AnalysisResult apply_regressor(const IncrementRegressor &reg, const StateField &xb,
                               const ObsRecord &obs, const Vector &grad_feature);

}  // namespace dab

#endif  // DAB_ASSIMILATION_HPP
