// SPDX-License-Identifier: Apache-2.0
//
// Serial reference path vs the OpenMP path for every kernel with both
// implementations. Run with --benchmark_filter=... to narrow, and set
// GAMSEG_JOBS (or call with taskset) to control the worker count.
#include <benchmark/benchmark.h>

#include <cstdint>
#include <vector>

#include "gam/kernels.hpp"
#include "gam/rng.hpp"

using namespace gam;
using kernels::Exec;

namespace {

std::vector<double> random_vec(int64_t n, uint64_t seed, double lo = -1.0,
                               double hi = 1.0) {
  Rng rng(seed);
  std::vector<double> v(static_cast<size_t>(n));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

Exec exec_of(const benchmark::State& st) {
  return st.range(0) == 0 ? Exec::serial : Exec::parallel;
}

void args_both(benchmark::internal::Benchmark* b) {
  b->Arg(0)->Arg(1)->ArgName("parallel");
}

// ---- block_sum ----

void BM_block_sum(benchmark::State& st) {
  const int64_t n = 1 << 20;
  const auto x = random_vec(n, 1);
  for (auto _ : st)
    benchmark::DoNotOptimize(kernels::block_sum(x.data(), n, exec_of(st)));
  st.SetItemsProcessed(st.iterations() * n);
}
BENCHMARK(BM_block_sum)->Apply(args_both);

// ---- conv2d: the encoder's workhorse shape (64x64, 3x3, 32->32) ----

void BM_conv2d_forward(benchmark::State& st) {
  const auto s = kernels::conv2d_shape(64, 64, 32, 3, 32, 1, 1);
  const auto x = random_vec(int64_t{s.H} * s.W * s.Cin, 2);
  const auto w = random_vec(int64_t{s.k} * s.k * s.Cin * s.Cout, 3);
  const auto b = random_vec(s.Cout, 4);
  std::vector<double> y(static_cast<size_t>(s.Ho) * s.Wo * s.Cout);
  for (auto _ : st) {
    kernels::conv2d_forward(s, x.data(), w.data(), b.data(), y.data(), exec_of(st));
    benchmark::DoNotOptimize(y.data());
  }
  st.SetItemsProcessed(st.iterations() * int64_t{s.Ho} * s.Wo * s.Cout * s.k * s.k *
                       s.Cin);
}
BENCHMARK(BM_conv2d_forward)->Apply(args_both);

void BM_conv2d_backward_input(benchmark::State& st) {
  const auto s = kernels::conv2d_shape(64, 64, 32, 3, 32, 1, 1);
  const auto gy = random_vec(int64_t{s.Ho} * s.Wo * s.Cout, 5);
  const auto w = random_vec(int64_t{s.k} * s.k * s.Cin * s.Cout, 6);
  std::vector<double> gx(static_cast<size_t>(s.H) * s.W * s.Cin);
  for (auto _ : st) {
    std::fill(gx.begin(), gx.end(), 0.0);
    kernels::conv2d_backward_input(s, gy.data(), w.data(), gx.data(), exec_of(st));
    benchmark::DoNotOptimize(gx.data());
  }
}
BENCHMARK(BM_conv2d_backward_input)->Apply(args_both);

void BM_conv2d_backward_params(benchmark::State& st) {
  const auto s = kernels::conv2d_shape(64, 64, 32, 3, 32, 1, 1);
  const auto x = random_vec(int64_t{s.H} * s.W * s.Cin, 7);
  const auto gy = random_vec(int64_t{s.Ho} * s.Wo * s.Cout, 8);
  std::vector<double> gw(static_cast<size_t>(s.k) * s.k * s.Cin * s.Cout);
  std::vector<double> gb(static_cast<size_t>(s.Cout));
  for (auto _ : st) {
    std::fill(gw.begin(), gw.end(), 0.0);
    std::fill(gb.begin(), gb.end(), 0.0);
    kernels::conv2d_backward_params(s, x.data(), gy.data(), gw.data(), gb.data(),
                                    exec_of(st));
    benchmark::DoNotOptimize(gw.data());
  }
}
BENCHMARK(BM_conv2d_backward_params)->Apply(args_both);

// ---- appearance model kernels at inference size (16x16 grid, D=32) ----

void BM_gauss_scores_forward(benchmark::State& st) {
  const int64_t P = 16 * 16;
  const int D = 32;
  const auto x = random_vec(P * D, 9);
  const auto mu = random_vec(D, 10);
  const auto var = random_vec(D, 11, 0.5, 2.0);
  std::vector<double> s(static_cast<size_t>(P));
  for (auto _ : st) {
    kernels::gauss_scores_forward(x.data(), P, D, mu.data(), var.data(), s.data(),
                                  exec_of(st));
    benchmark::DoNotOptimize(s.data());
  }
  st.SetItemsProcessed(st.iterations() * P * D);
}
BENCHMARK(BM_gauss_scores_forward)->Apply(args_both);

void BM_gauss_scores_backward(benchmark::State& st) {
  const int64_t P = 16 * 16;
  const int D = 32;
  const auto x = random_vec(P * D, 12);
  const auto mu = random_vec(D, 13);
  const auto var = random_vec(D, 14, 0.5, 2.0);
  const auto gs = random_vec(P, 15);
  std::vector<double> gx(static_cast<size_t>(P) * D), gmu(D), gvar(D);
  for (auto _ : st) {
    std::fill(gx.begin(), gx.end(), 0.0);
    std::fill(gmu.begin(), gmu.end(), 0.0);
    std::fill(gvar.begin(), gvar.end(), 0.0);
    kernels::gauss_scores_backward(x.data(), P, D, mu.data(), var.data(), gs.data(),
                                   gx.data(), gmu.data(), gvar.data(), exec_of(st));
    benchmark::DoNotOptimize(gx.data());
  }
}
BENCHMARK(BM_gauss_scores_backward)->Apply(args_both);

void BM_weighted_moments(benchmark::State& st) {
  const int64_t P = 16 * 16;
  const int D = 32;
  const auto x = random_vec(P * D, 16);
  const auto a = random_vec(P, 17, 0.0, 1.0);
  const auto mu = random_vec(D, 18);
  std::vector<double> sums(static_cast<size_t>(D) + 1), sq(static_cast<size_t>(D));
  for (auto _ : st) {
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(sq.begin(), sq.end(), 0.0);
    kernels::weighted_mean_sums(x.data(), a.data(), P, D, sums.data(), exec_of(st));
    kernels::weighted_sqdev_sums(x.data(), a.data(), mu.data(), P, D, sq.data(),
                                 exec_of(st));
    benchmark::DoNotOptimize(sq.data());
  }
  st.SetItemsProcessed(st.iterations() * P * D * 2);
}
BENCHMARK(BM_weighted_moments)->Apply(args_both);

// ---- decoder-side kernels ----

void BM_upsample2x_forward(benchmark::State& st) {
  const int H = 32, W = 32, C = 16;
  const auto x = random_vec(int64_t{H} * W * C, 19);
  std::vector<double> y(static_cast<size_t>(2 * H) * (2 * W) * C);
  for (auto _ : st) {
    kernels::upsample2x_forward(x.data(), H, W, C, y.data(), exec_of(st));
    benchmark::DoNotOptimize(y.data());
  }
  st.SetItemsProcessed(st.iterations() * int64_t{2 * H} * (2 * W) * C);
}
BENCHMARK(BM_upsample2x_forward)->Apply(args_both);

void BM_upsample2x_backward(benchmark::State& st) {
  const int H = 32, W = 32, C = 16;
  const auto gy = random_vec(int64_t{2 * H} * (2 * W) * C, 20);
  std::vector<double> gx(static_cast<size_t>(H) * W * C);
  for (auto _ : st) {
    std::fill(gx.begin(), gx.end(), 0.0);
    kernels::upsample2x_backward(gy.data(), H, W, C, gx.data(), exec_of(st));
    benchmark::DoNotOptimize(gx.data());
  }
}
BENCHMARK(BM_upsample2x_backward)->Apply(args_both);

void BM_softmax_rows(benchmark::State& st) {
  const int64_t P = 64 * 64;
  const int C = 4;
  const auto x = random_vec(P * C, 21);
  std::vector<double> y(static_cast<size_t>(P) * C);
  for (auto _ : st) {
    kernels::softmax_rows_forward(x.data(), P, C, y.data(), exec_of(st));
    benchmark::DoNotOptimize(y.data());
  }
  st.SetItemsProcessed(st.iterations() * P * C);
}
BENCHMARK(BM_softmax_rows)->Apply(args_both);

}  // namespace

BENCHMARK_MAIN();
