#include "dab/kernels.hpp"

#include <cassert>
#include <vector>

namespace dab::kernels {
namespace {

// One body per kernel; the `if` clause turns the OpenMP region off for the
// serial reference.

template <bool Par>
void l96_tendency_impl(std::span<const double> x, double forcing, std::span<double> out) {
  const std::ptrdiff_t m = std::ptrdiff_t(x.size());
#pragma omp parallel for if (Par) schedule(static)
  for (std::ptrdiff_t i = 0; i < m; ++i) {
    const double xp1 = x[(i + 1) % m];
    const double xm1 = x[(i + m - 1) % m];
    const double xm2 = x[(i + m - 2) % m];
    out[i] = (xp1 - xm2) * xm1 - x[i] + forcing;
  }
}

template <bool Par>
void l96_tangent_impl(std::span<const double> x, std::span<const double> dx,
                      std::span<double> out) {
  const std::ptrdiff_t m = std::ptrdiff_t(x.size());
#pragma omp parallel for if (Par) schedule(static)
  for (std::ptrdiff_t i = 0; i < m; ++i) {
    const std::ptrdiff_t p1 = (i + 1) % m, m1 = (i + m - 1) % m, m2 = (i + m - 2) % m;
    out[i] = (dx[p1] - dx[m2]) * x[m1] + (x[p1] - x[m2]) * dx[m1] - dx[i];
  }
}

template <bool Par>
void l96_adjoint_impl(std::span<const double> x, std::span<const double> ybar,
                      std::span<double> out) {
  // Gather form of the transposed stencil so each output is written once.
  const std::ptrdiff_t m = std::ptrdiff_t(x.size());
#pragma omp parallel for if (Par) schedule(static)
  for (std::ptrdiff_t j = 0; j < m; ++j) {
    const auto at = [m](std::ptrdiff_t k) { return ((k % m) + m) % m; };
    out[j] = ybar[at(j - 1)] * x[at(j - 2)] - ybar[at(j + 2)] * x[at(j + 1)] +
             ybar[at(j + 1)] * (x[at(j + 2)] - x[at(j - 1)]) - ybar[j];
  }
}

template <bool Par>
void zonal_shift_impl(std::span<const double> in, std::span<double> out, std::size_t rows,
                      std::size_t n_lon, std::size_t shift) {
  shift %= n_lon;
#pragma omp parallel for if (Par) schedule(static)
  for (std::ptrdiff_t r = 0; r < std::ptrdiff_t(rows); ++r) {
    const std::size_t base = std::size_t(r) * n_lon;
    for (std::size_t k = 0; k < n_lon; ++k)
      out[base + (k + shift) % n_lon] = in[base + k];
  }
}

template <bool Par>
void diffuse_impl(std::span<const double> in, std::span<double> out, std::size_t channels,
                  const DiffusionStencil &st, bool transpose) {
  const std::size_t nl = st.n_lat, nk = st.n_lon;
  const std::ptrdiff_t rows = std::ptrdiff_t(channels * nl);
#pragma omp parallel for if (Par) schedule(static)
  for (std::ptrdiff_t r = 0; r < rows; ++r) {
    const std::size_t j = std::size_t(r) % nl;
    const std::size_t base = std::size_t(r) * nk;
    for (std::size_t k = 0; k < nk; ++k) {
      const std::size_t i = base + k;
      const double c = in[i];
      double zonal = 0.0;
      if (nk > 1) zonal = st.kappa * (in[base + (k + 1) % nk] + in[base + (k + nk - 1) % nk] - 2.0 * c);
      double merid = 0.0;
      if (!transpose) {
        if (j + 1 < nl) merid += st.up[j] * (in[i + nk] - c);
        if (j > 0) merid += st.down[j] * (in[i - nk] - c);
        merid *= st.inv_w[j];
      } else {
        const double cz = c * st.inv_w[j];
        if (j + 1 < nl) merid += st.up[j] * (in[i + nk] * st.inv_w[j + 1] - cz);
        if (j > 0) merid += st.down[j] * (in[i - nk] * st.inv_w[j - 1] - cz);
      }
      out[i] = c + zonal + merid;
    }
  }
}

template <bool Par>
double weighted_sq_diff_impl(std::span<const double> a, std::span<const double> b,
                             std::span<const double> row_w, std::size_t n_lon) {
  assert(a.size() == b.size());
  const std::ptrdiff_t rows = std::ptrdiff_t(a.size() / n_lon);
  const std::size_t nw = row_w.size();
  // Row partials then an ordered sum: the result does not depend on the
  // thread count, so parallel and serial agree bit for bit.
  std::vector<double> part(std::size_t(rows), 0.0);
#pragma omp parallel for if (Par) schedule(static)
  for (std::ptrdiff_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t k = 0; k < n_lon; ++k) {
      const double d = a[std::size_t(r) * n_lon + k] - b[std::size_t(r) * n_lon + k];
      s += d * d;
    }
    part[std::size_t(r)] = row_w[std::size_t(r) % nw] * s;
  }
  double total = 0.0;
  for (double p : part) total += p;
  return total;
}

template <bool Par>
void add_columns_impl(std::span<double> cols, std::span<const double> update, std::size_t rows,
                      std::size_t n_cols) {
#pragma omp parallel for if (Par) schedule(static)
  for (std::ptrdiff_t n = 0; n < std::ptrdiff_t(n_cols); ++n)
    for (std::size_t i = 0; i < rows; ++i) cols[std::size_t(n) * rows + i] += update[std::size_t(n) * rows + i];
}

}  // namespace

#define DAB_KERNEL_DEFS(NS, PAR)                                                              \
  namespace NS {                                                                              \
  void l96_tendency(std::span<const double> x, double f, std::span<double> out) {             \
    l96_tendency_impl<PAR>(x, f, out);                                                        \
  }                                                                                           \
  void l96_tangent(std::span<const double> x, std::span<const double> dx,                     \
                   std::span<double> out) {                                                   \
    l96_tangent_impl<PAR>(x, dx, out);                                                        \
  }                                                                                           \
  void l96_adjoint(std::span<const double> x, std::span<const double> ybar,                   \
                   std::span<double> out) {                                                   \
    l96_adjoint_impl<PAR>(x, ybar, out);                                                      \
  }                                                                                           \
  void zonal_shift(std::span<const double> in, std::span<double> out, std::size_t rows,       \
                   std::size_t n_lon, std::size_t shift) {                                    \
    zonal_shift_impl<PAR>(in, out, rows, n_lon, shift);                                       \
  }                                                                                           \
  void diffuse(std::span<const double> in, std::span<double> out, std::size_t channels,       \
               const DiffusionStencil &st, bool transpose) {                                  \
    diffuse_impl<PAR>(in, out, channels, st, transpose);                                      \
  }                                                                                           \
  double weighted_sq_diff(std::span<const double> a, std::span<const double> b,               \
                          std::span<const double> row_w, std::size_t n_lon) {                 \
    return weighted_sq_diff_impl<PAR>(a, b, row_w, n_lon);                                    \
  }                                                                                           \
  void add_columns(std::span<double> cols, std::span<const double> update, std::size_t rows,  \
                   std::size_t n_cols) {                                                      \
    add_columns_impl<PAR>(cols, update, rows, n_cols);                                        \
  }                                                                                           \
  }

DAB_KERNEL_DEFS(serial, false)
DAB_KERNEL_DEFS(omp, true)

#undef DAB_KERNEL_DEFS

}  // namespace dab::kernels
