#ifndef DAB_DYNAMICS_HPP
#define DAB_DYNAMICS_HPP

#include <memory>
#include <span>
#include <vector>

#include "dab/grid.hpp"

namespace dab {

// -----------------------------------------------------------------------------
/// Forward model with tangent-linear and adjoint. Implementations are
/// immutable; all three entry points are safe to call concurrently.
class DynamicsModel {
 public:
  virtual ~DynamicsModel() = default;

  virtual const GridPtr &grid() const = 0;
  /// Lead times (hours) accepted by step/tangent/adjoint, ascending.
  virtual const std::vector<Hours> &supported_leads() const = 0;
  virtual bool is_linear() const = 0;

  StateField step(const StateField &state, Hours lead) const;
  /// Tangent-linear propagation of `dx` about the trajectory from `base`.
  Vector tangent(const StateField &base, const Vector &dx, Hours lead) const;
  /// Adjoint propagation of a cotangent at `base.time() + lead` back to `base.time()`.
  Vector adjoint(const StateField &base, const Vector &ybar, Hours lead) const;

  bool supports(Hours lead) const;

 protected:
  virtual Vector do_step(const Vector &x, Hours lead) const = 0;
  virtual Vector do_tangent(const Vector &x, const Vector &dx, Hours lead) const = 0;
  virtual Vector do_adjoint(const Vector &x, const Vector &ybar, Hours lead) const = 0;

 private:
  void check(const StateField &state, Hours lead) const;
  void check(const Vector &v) const;
};

using ModelPtr = std::shared_ptr<const DynamicsModel>;

// -----------------------------------------------------------------------------
struct Lorenz96Params {
  std::size_t m = 40;
  double forcing = 8.0;
  /// RK4 substep in hours.
  double substep_hours = 1.5;
  /// One model time unit expressed in hours (0.05 MTU = 6 h).
  double hours_per_mtu = 120.0;
  /// Per-invocation relaxation x <- c + (1 - damping)(x - c), a stand-in for
  /// the error a learned surrogate adds on every call. Zero for the truth model.
  double damping = 0.0;
  double damping_center = 0.0;
  std::vector<Hours> supported_leads = {3, 6, 12, 24};
};

/// dx_i/dt = (x_{i+1} - x_{i-2}) x_{i-1} - x_i + F on a ring, RK4 integrated.
class Lorenz96Model final : public DynamicsModel {
 public:
  explicit Lorenz96Model(Lorenz96Params params);

  const GridPtr &grid() const override { return grid_; }
  const std::vector<Hours> &supported_leads() const override { return p_.supported_leads; }
  bool is_linear() const override { return false; }
  const Lorenz96Params &params() const { return p_; }

 protected:
  Vector do_step(const Vector &x, Hours lead) const override;
  Vector do_tangent(const Vector &x, const Vector &dx, Hours lead) const override;
  Vector do_adjoint(const Vector &x, const Vector &ybar, Hours lead) const override;

 private:
  std::size_t substeps(Hours lead) const;
  Vector rk4(const Vector &x) const;

  Lorenz96Params p_;
  GridPtr grid_;
  double h_;  // substep in model time units
};

// -----------------------------------------------------------------------------
struct AdvectionParams {
  /// Solid-body zonal rotation, degrees longitude per hour.
  double omega_deg_per_hour = 15.0;
  /// Explicit diffusion coefficient in grid units^2 per hour.
  double kappa = 0.0;
  std::vector<Hours> supported_leads = {3, 6, 12, 24};
};

/// Linear solid-body zonal advection (integer-cell shift) followed by hourly
/// explicit diffusion. The meridional part is in flux form with cos(lat)
/// weights so the latitude-weighted mean of every channel is conserved.
class LatLonAdvectionModel final : public DynamicsModel {
 public:
  LatLonAdvectionModel(GridPtr grid, AdvectionParams params);

  const GridPtr &grid() const override { return grid_; }
  const std::vector<Hours> &supported_leads() const override { return p_.supported_leads; }
  bool is_linear() const override { return true; }
  const AdvectionParams &params() const { return p_; }

  /// Shift in cells produced by one call with the given lead.
  std::size_t shift_cells(Hours lead) const;

 protected:
  Vector do_step(const Vector &x, Hours lead) const override;
  Vector do_tangent(const Vector &x, const Vector &dx, Hours lead) const override;
  Vector do_adjoint(const Vector &x, const Vector &ybar, Hours lead) const override;

 private:
  Vector apply(const Vector &x, Hours lead, bool transpose) const;

  GridPtr grid_;
  AdvectionParams p_;
  std::vector<double> up_, down_, inv_w_;
};

// -----------------------------------------------------------------------------
struct LeadDecomposition {
  Hours target_lead = 0;
  std::vector<Hours> steps;
};

/// Repeatedly takes the largest supported lead not exceeding what remains.
LeadDecomposition greedy_decompose(Hours target_lead, std::span<const Hours> supported_leads);

/// Chains model steps along the greedy decomposition, largest lead first.
/// `leads` restricts the lead set; empty means every lead the model supports.
StateField forecast_hta(const DynamicsModel &model, const StateField &state, Hours target_lead,
                        std::span<const Hours> leads = {});

}  // namespace dab

#endif  // DAB_DYNAMICS_HPP
