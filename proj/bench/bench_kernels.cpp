// Serial reference kernels against their OpenMP counterparts.
#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

#include "dab/kernels.hpp"
#include "dab/random.hpp"

namespace {

namespace k = dab::kernels;

std::vector<double> noise(std::size_t n, std::uint64_t seed) {
  const dab::CounterRng rng(seed);
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = rng.normal(i);
  return v;
}

template <bool Omp>
void BM_L96Tendency(benchmark::State &st) {
  const auto m = std::size_t(st.range(0));
  const auto x = noise(m, 1);
  std::vector<double> out(m);
  for (auto _ : st) {
    if constexpr (Omp)
      k::omp::l96_tendency(x, 8.0, out);
    else
      k::serial::l96_tendency(x, 8.0, out);
    benchmark::DoNotOptimize(out.data());
  }
  st.SetItemsProcessed(std::int64_t(st.iterations()) * std::int64_t(m));
}

template <bool Omp>
void BM_L96Adjoint(benchmark::State &st) {
  const auto m = std::size_t(st.range(0));
  const auto x = noise(m, 1), y = noise(m, 2);
  std::vector<double> out(m);
  for (auto _ : st) {
    if constexpr (Omp)
      k::omp::l96_adjoint(x, y, out);
    else
      k::serial::l96_adjoint(x, y, out);
    benchmark::DoNotOptimize(out.data());
  }
  st.SetItemsProcessed(std::int64_t(st.iterations()) * std::int64_t(m));
}

// Diffusion over a channels x 64 x 128 lat-lon slab stack.
template <bool Omp>
void BM_Diffuse(benchmark::State &st) {
  const std::size_t ch = std::size_t(st.range(0)), n_lat = 64, n_lon = 128;
  std::vector<double> up(n_lat), down(n_lat), inv_w(n_lat);
  for (std::size_t j = 0; j < n_lat; ++j) {
    const double w = std::cos((-90.0 + 180.0 * (double(j) + 0.5) / double(n_lat)) * M_PI / 180.0);
    inv_w[j] = 1.0 / w;
    up[j] = j + 1 < n_lat ? 0.05 * w : 0.0;
    down[j] = j > 0 ? 0.05 * w : 0.0;
  }
  const k::DiffusionStencil s{n_lat, n_lon, 0.05, up, down, inv_w};
  const auto in = noise(ch * n_lat * n_lon, 3);
  std::vector<double> out(in.size());
  for (auto _ : st) {
    if constexpr (Omp)
      k::omp::diffuse(in, out, ch, s, false);
    else
      k::serial::diffuse(in, out, ch, s, false);
    benchmark::DoNotOptimize(out.data());
  }
  st.SetItemsProcessed(std::int64_t(st.iterations()) * std::int64_t(in.size()));
}

template <bool Omp>
void BM_WeightedSqDiff(benchmark::State &st) {
  const std::size_t rows = std::size_t(st.range(0)), n_lon = 128;
  const auto a = noise(rows * n_lon, 4), b = noise(rows * n_lon, 5), w = noise(64, 6);
  for (auto _ : st) {
    double r;
    if constexpr (Omp)
      r = k::omp::weighted_sq_diff(a, b, w, n_lon);
    else
      r = k::serial::weighted_sq_diff(a, b, w, n_lon);
    benchmark::DoNotOptimize(r);
  }
  st.SetItemsProcessed(std::int64_t(st.iterations()) * std::int64_t(a.size()));
}

template <bool Omp>
void BM_AddColumns(benchmark::State &st) {
  const std::size_t rows = 8192, cols = std::size_t(st.range(0));
  auto c = noise(rows * cols, 7);
  const auto u = noise(rows * cols, 8);
  for (auto _ : st) {
    if constexpr (Omp)
      k::omp::add_columns(c, u, rows, cols);
    else
      k::serial::add_columns(c, u, rows, cols);
    benchmark::DoNotOptimize(c.data());
  }
  st.SetItemsProcessed(std::int64_t(st.iterations()) * std::int64_t(c.size()));
}

}  // namespace

BENCHMARK(BM_L96Tendency<false>)->Arg(40)->Arg(4096)->Arg(1 << 18);
BENCHMARK(BM_L96Tendency<true>)->Arg(40)->Arg(4096)->Arg(1 << 18);
BENCHMARK(BM_L96Adjoint<false>)->Arg(40)->Arg(1 << 18);
BENCHMARK(BM_L96Adjoint<true>)->Arg(40)->Arg(1 << 18);
BENCHMARK(BM_Diffuse<false>)->Arg(1)->Arg(16);
BENCHMARK(BM_Diffuse<true>)->Arg(1)->Arg(16);
BENCHMARK(BM_WeightedSqDiff<false>)->Arg(64)->Arg(4096);
BENCHMARK(BM_WeightedSqDiff<true>)->Arg(64)->Arg(4096);
BENCHMARK(BM_AddColumns<false>)->Arg(20)->Arg(200);
BENCHMARK(BM_AddColumns<true>)->Arg(20)->Arg(200);

BENCHMARK_MAIN();
