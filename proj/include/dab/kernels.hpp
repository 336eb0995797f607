#ifndef DAB_KERNELS_HPP
#define DAB_KERNELS_HPP

// Inner loops shared by the models, solvers and metrics. Each kernel exists
// twice: `serial` is the reference used by tests, `omp` is what the library
// calls. Both agree bit for bit; reductions sum row partials in order.

#include <cstddef>
#include <exception>
#include <span>

namespace dab::kernels {

/// Per-latitude coefficients of the conservative diffusion stencil.
struct DiffusionStencil {
  std::size_t n_lat = 1;
  std::size_t n_lon = 1;
  double kappa = 0.0;
  std::span<const double> up;      // kappa * w_{j+1/2}, zero on the last row
  std::span<const double> down;    // kappa * w_{j-1/2}, zero on the first row
  std::span<const double> inv_w;   // 1 / w_j
};

#define DAB_KERNEL_DECLS                                                          \
  /* dx/dt of Lorenz-96 with cyclic indices. */                                   \
  void l96_tendency(std::span<const double> x, double forcing, std::span<double> out); \
  /* Jacobian of the tendency at x applied to dx. */                              \
  void l96_tangent(std::span<const double> x, std::span<const double> dx,         \
                   std::span<double> out);                                        \
  /* Transposed Jacobian at x applied to a cotangent. */                          \
  void l96_adjoint(std::span<const double> x, std::span<const double> ybar,       \
                   std::span<double> out);                                        \
  /* out[r, k] = in[r, k - shift] over `rows` periodic rows. */                   \
  void zonal_shift(std::span<const double> in, std::span<double> out,             \
                   std::size_t rows, std::size_t n_lon, std::size_t shift);       \
  /* One explicit diffusion substep over `channels` lat-lon slabs. */             \
  void diffuse(std::span<const double> in, std::span<double> out,                 \
               std::size_t channels, const DiffusionStencil &st, bool transpose); \
  /* sum_r sum_k w[r % n_rows] (a - b)^2 over rows of length n_lon. */            \
  double weighted_sq_diff(std::span<const double> a, std::span<const double> b,   \
                          std::span<const double> row_w, std::size_t n_lon);      \
  /* cols += update over a column-major rows x n_cols block. */                  \
  void add_columns(std::span<double> cols, std::span<const double> update,        \
                   std::size_t rows, std::size_t n_cols);

namespace serial {
DAB_KERNEL_DECLS
}  // namespace serial

namespace omp {
DAB_KERNEL_DECLS
}  // namespace omp

#undef DAB_KERNEL_DECLS

/// Runs f(i) for i in [0, n) across OpenMP threads. Iterations must be
/// independent. The first exception thrown is rethrown after the loop.
template <class F>
void parallel_for(std::size_t n, F &&f) {
  std::exception_ptr err;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < std::ptrdiff_t(n); ++i) {
    try {
      f(std::size_t(i));
    } catch (...) {
#pragma omp critical(dab_parallel_for_error)
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
}

}  // namespace dab::kernels

#endif  // DAB_KERNELS_HPP
