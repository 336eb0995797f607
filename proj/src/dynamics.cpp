#include "dab/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "dab/error.hpp"
#include "dab/kernels.hpp"

namespace dab {

namespace k = kernels::omp;

namespace {

std::span<const double> view(const Vector &v) { return {v.data(), std::size_t(v.size())}; }
std::span<double> view(Vector &v) { return {v.data(), std::size_t(v.size())}; }

}  // namespace

// -----------------------------------------------------------------------------
bool DynamicsModel::supports(Hours lead) const {
  const auto &l = supported_leads();
  return std::find(l.begin(), l.end(), lead) != l.end();
}

void DynamicsModel::check(const StateField &state, Hours lead) const {
  if (!supports(lead)) throw UnsupportedLeadError("unsupported lead " + std::to_string(lead) + " h");
  if (!(state.grid() == *grid())) throw DimensionError("state grid does not match model grid");
}

void DynamicsModel::check(const Vector &v) const {
  if (std::size_t(v.size()) != grid()->size())
    throw DimensionError("perturbation length " + std::to_string(v.size()) +
                         " does not match model size " + std::to_string(grid()->size()));
}

StateField DynamicsModel::step(const StateField &state, Hours lead) const {
  check(state, lead);
  return StateField(state.grid_ptr(), do_step(state.values(), lead), state.time() + lead);
}

Vector DynamicsModel::tangent(const StateField &base, const Vector &dx, Hours lead) const {
  check(base, lead);
  check(dx);
  return do_tangent(base.values(), dx, lead);
}

Vector DynamicsModel::adjoint(const StateField &base, const Vector &ybar, Hours lead) const {
  check(base, lead);
  check(ybar);
  return do_adjoint(base.values(), ybar, lead);
}

// -----------------------------------------------------------------------------
Lorenz96Model::Lorenz96Model(Lorenz96Params params) : p_(std::move(params)) {
  if (p_.m < 4) throw ConfigError("Lorenz96 needs m >= 4");
  if (!(p_.substep_hours > 0.0) || !(p_.hours_per_mtu > 0.0))
    throw ConfigError("Lorenz96 substep and time unit must be positive");
  if (p_.damping < 0.0 || p_.damping >= 1.0) throw ConfigError("Lorenz96 damping must be in [0, 1)");
  std::sort(p_.supported_leads.begin(), p_.supported_leads.end());
  for (Hours l : p_.supported_leads) substeps(l);
  grid_ = make_grid(GridSpec::ring(p_.m));
  h_ = p_.substep_hours / p_.hours_per_mtu;
}

std::size_t Lorenz96Model::substeps(Hours lead) const {
  const double n = double(lead) / p_.substep_hours;
  const double r = std::round(n);
  if (lead <= 0 || std::abs(n - r) > 1e-9)
    throw UnsupportedLeadError("lead " + std::to_string(lead) +
                               " h is not a positive multiple of the RK4 substep");
  return std::size_t(r);
}

Vector Lorenz96Model::rk4(const Vector &x) const {
  const std::size_t m = p_.m;
  Vector k1(m), k2(m), k3(m), k4(m), tmp(m);
  k::l96_tendency(view(x), p_.forcing, view(k1));
  tmp = x + 0.5 * h_ * k1;
  k::l96_tendency(view(tmp), p_.forcing, view(k2));
  tmp = x + 0.5 * h_ * k2;
  k::l96_tendency(view(tmp), p_.forcing, view(k3));
  tmp = x + h_ * k3;
  k::l96_tendency(view(tmp), p_.forcing, view(k4));
  return x + (h_ / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

Vector Lorenz96Model::do_step(const Vector &x0, Hours lead) const {
  Vector x = x0;
  for (std::size_t s = substeps(lead); s > 0; --s) x = rk4(x);
  if (p_.damping > 0.0)
    x = (x.array() - p_.damping_center) * (1.0 - p_.damping) + p_.damping_center;
  return x;
}

Vector Lorenz96Model::do_tangent(const Vector &x0, const Vector &dx0, Hours lead) const {
  const std::size_t m = p_.m;
  Vector x = x0, dx = dx0;
  Vector k1(m), k2(m), k3(m), k4(m), d1(m), d2(m), d3(m), d4(m), xs(m), ds(m);
  for (std::size_t s = substeps(lead); s > 0; --s) {
    k::l96_tendency(view(x), p_.forcing, view(k1));
    k::l96_tangent(view(x), view(dx), view(d1));
    xs = x + 0.5 * h_ * k1;
    ds = dx + 0.5 * h_ * d1;
    k::l96_tendency(view(xs), p_.forcing, view(k2));
    k::l96_tangent(view(xs), view(ds), view(d2));
    xs = x + 0.5 * h_ * k2;
    ds = dx + 0.5 * h_ * d2;
    k::l96_tendency(view(xs), p_.forcing, view(k3));
    k::l96_tangent(view(xs), view(ds), view(d3));
    xs = x + h_ * k3;
    ds = dx + h_ * d3;
    k::l96_tendency(view(xs), p_.forcing, view(k4));
    k::l96_tangent(view(xs), view(ds), view(d4));
    x += (h_ / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    dx += (h_ / 6.0) * (d1 + 2.0 * d2 + 2.0 * d3 + d4);
  }
  return dx * (1.0 - p_.damping);
}

Vector Lorenz96Model::do_adjoint(const Vector &x0, const Vector &ybar, Hours lead) const {
  const std::size_t m = p_.m;
  const std::size_t n = substeps(lead);
  // Forward sweep storing the substep start states.
  std::vector<Vector> starts;
  starts.reserve(n);
  Vector x = x0;
  for (std::size_t s = 0; s < n; ++s) {
    starts.push_back(x);
    x = rk4(x);
  }
  Vector a = ybar * (1.0 - p_.damping);
  Vector k1(m), k2(m), k3(m), x1(m), x2(m), x3(m), u(m);
  for (std::size_t s = n; s-- > 0;) {
    const Vector &xb = starts[s];
    k::l96_tendency(view(xb), p_.forcing, view(k1));
    x1 = xb + 0.5 * h_ * k1;
    k::l96_tendency(view(x1), p_.forcing, view(k2));
    x2 = xb + 0.5 * h_ * k2;
    k::l96_tendency(view(x2), p_.forcing, view(k3));
    x3 = xb + h_ * k3;

    Vector a_dx = a;
    Vector a_k1 = (h_ / 6.0) * a;
    Vector a_k2 = (h_ / 3.0) * a;
    Vector a_k3 = (h_ / 3.0) * a;
    const Vector a_k4 = (h_ / 6.0) * a;
    k::l96_adjoint(view(x3), view(a_k4), view(u));
    a_dx += u;
    a_k3 += h_ * u;
    k::l96_adjoint(view(x2), view(a_k3), view(u));
    a_dx += u;
    a_k2 += 0.5 * h_ * u;
    k::l96_adjoint(view(x1), view(a_k2), view(u));
    a_dx += u;
    a_k1 += 0.5 * h_ * u;
    k::l96_adjoint(view(xb), view(a_k1), view(u));
    a_dx += u;
    a = std::move(a_dx);
  }
  return a;
}

// -----------------------------------------------------------------------------
LatLonAdvectionModel::LatLonAdvectionModel(GridPtr grid, AdvectionParams params)
    : grid_(std::move(grid)), p_(std::move(params)) {
  if (!grid_) throw ConfigError("advection model without grid");
  if (p_.kappa < 0.0) throw ConfigError("diffusion coefficient must be nonnegative");
  std::sort(p_.supported_leads.begin(), p_.supported_leads.end());
  for (Hours l : p_.supported_leads) shift_cells(l);

  const std::size_t nl = grid_->n_lat();
  std::vector<double> w(nl);
  for (std::size_t j = 0; j < nl; ++j)
    w[j] = std::cos(grid_->lat_deg()[j] * std::numbers::pi / 180.0);
  up_.assign(nl, 0.0);
  down_.assign(nl, 0.0);
  inv_w_.resize(nl);
  for (std::size_t j = 0; j < nl; ++j) {
    inv_w_[j] = 1.0 / w[j];
    if (j + 1 < nl) up_[j] = p_.kappa * 0.5 * (w[j] + w[j + 1]);
    if (j > 0) down_[j] = p_.kappa * 0.5 * (w[j] + w[j - 1]);
  }
  // Explicit stability of one hourly substep.
  double worst = 0.0;
  for (std::size_t j = 0; j < nl; ++j)
    worst = std::max(worst, (grid_->n_lon() > 1 ? 2.0 * p_.kappa : 0.0) +
                                0.5 * (up_[j] + down_[j]) * inv_w_[j]);
  if (worst > 0.5) throw ConfigError("diffusion coefficient too large for hourly explicit substeps");
}

std::size_t LatLonAdvectionModel::shift_cells(Hours lead) const {
  const double cells = p_.omega_deg_per_hour * double(lead) * double(grid_->n_lon()) / 360.0;
  const double r = std::round(cells);
  if (std::abs(cells - r) > 1e-9)
    throw UnsupportedLeadError("lead " + std::to_string(lead) +
                               " h does not rotate by a whole number of cells");
  const auto n = std::int64_t(grid_->n_lon());
  return std::size_t(((std::int64_t(r) % n) + n) % n);
}

Vector LatLonAdvectionModel::apply(const Vector &x, Hours lead, bool transpose) const {
  const GridSpec &g = *grid_;
  const std::size_t rows = g.channels() * g.n_lat();
  const std::size_t s = shift_cells(lead);
  const kernels::DiffusionStencil st{g.n_lat(), g.n_lon(), p_.kappa, up_, down_, inv_w_};
  Vector a = x, b(x.size());
  if (!transpose) {
    k::zonal_shift(view(a), view(b), rows, g.n_lon(), s);
    std::swap(a, b);
  }
  if (p_.kappa > 0.0) {
    for (Hours h = 0; h < lead; ++h) {
      k::diffuse(view(a), view(b), g.channels(), st, transpose);
      std::swap(a, b);
    }
  }
  if (transpose) {
    k::zonal_shift(view(a), view(b), rows, g.n_lon(), (g.n_lon() - s) % g.n_lon());
    std::swap(a, b);
  }
  return a;
}

Vector LatLonAdvectionModel::do_step(const Vector &x, Hours lead) const { return apply(x, lead, false); }

Vector LatLonAdvectionModel::do_tangent(const Vector &, const Vector &dx, Hours lead) const {
  return apply(dx, lead, false);
}

Vector LatLonAdvectionModel::do_adjoint(const Vector &, const Vector &ybar, Hours lead) const {
  return apply(ybar, lead, true);
}

// -----------------------------------------------------------------------------
LeadDecomposition greedy_decompose(Hours target_lead, std::span<const Hours> supported_leads) {
  if (target_lead <= 0) throw DecompositionError("target lead must be positive");
  if (supported_leads.empty()) throw DecompositionError("no supported leads");
  std::vector<Hours> leads(supported_leads.begin(), supported_leads.end());
  std::sort(leads.begin(), leads.end(), std::greater<>());
  if (leads.back() <= 0) throw DecompositionError("supported leads must be positive");
  LeadDecomposition out{target_lead, {}};
  Hours remaining = target_lead;
  while (remaining > 0) {
    auto it = std::find_if(leads.begin(), leads.end(), [&](Hours l) { return l <= remaining; });
    if (it == leads.end())
      throw DecompositionError("cannot decompose " + std::to_string(target_lead) +
                               " h: remainder " + std::to_string(remaining) + " h");
    out.steps.push_back(*it);
    remaining -= *it;
  }
  return out;
}

StateField forecast_hta(const DynamicsModel &model, const StateField &state, Hours target_lead,
                        std::span<const Hours> leads) {
  if (target_lead == 0) return state;
  const auto plan = greedy_decompose(target_lead, leads.empty() ? model.supported_leads() : leads);
  StateField x = state;
  for (Hours l : plan.steps) x = model.step(x, l);
  return x;
}

}  // namespace dab
