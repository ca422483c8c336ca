// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "gam/error.hpp"

namespace gam::kernels {

// Every kernel has a serial reference path and an OpenMP path selected by
// Exec. Both paths use the same blocked accumulation order for reductions,
// so results are bit-identical for any thread count. Parallel loops only
// ever write disjoint output ranges.
enum class Exec { serial, parallel, auto_dispatch };

// Worker count used by the parallel path: explicit set_jobs() wins, then the
// GAMSEG_JOBS environment variable, then the OpenMP default. 0 resets.
void set_jobs(int n);
int jobs();

bool use_parallel(Exec e);

// All reductions accumulate in fixed blocks of this many items; partials are
// combined in block order on one thread.
inline constexpr int64_t reduce_block = 1024;

template <class F>
void for_each(int64_t n, F&& body, Exec e) {
  if (use_parallel(e)) {
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) body(i);
  } else {
    for (int64_t i = 0; i < n; ++i) body(i);
  }
}

// out[0..d) += sum over i of per-item contributions. `accumulate(i, acc)`
// must add item i into acc[0..d).
template <class F>
void block_accum(int64_t n, int d, F&& accumulate, double* out, Exec e) {
  const int64_t nb = (n + reduce_block - 1) / reduce_block;
  std::vector<double> partial(static_cast<size_t>(nb) * d, 0.0);
  for_each(
      nb,
      [&](int64_t b) {
        double* acc = partial.data() + static_cast<size_t>(b) * d;
        const int64_t lo = b * reduce_block;
        const int64_t hi = std::min(n, lo + reduce_block);
        for (int64_t i = lo; i < hi; ++i) accumulate(i, acc);
      },
      e);
  for (int64_t b = 0; b < nb; ++b) {
    const double* acc = partial.data() + static_cast<size_t>(b) * d;
    for (int j = 0; j < d; ++j) out[j] += acc[j];
  }
}

double block_sum(const double* x, int64_t n, Exec e);

// 2-D convolution on channel-last data: x is (H, W, Cin), w is
// (k, k, Cin, Cout), y is (Ho, Wo, Cout). Padding keeps the spatial size at
// stride 1 for odd k: pad = dilation * (k - 1) / 2.
struct Conv2DShape {
  int H, W, Cin, k, Cout, stride, dilation, pad, Ho, Wo;
};
Conv2DShape conv2d_shape(int H, int W, int Cin, int k, int Cout, int stride, int dilation);

void conv2d_forward(const Conv2DShape& s, const double* x, const double* w, const double* b,
                    double* y, Exec e);
void conv2d_backward_input(const Conv2DShape& s, const double* gy, const double* w,
                           double* gx_add, Exec e);
void conv2d_backward_params(const Conv2DShape& s, const double* x, const double* gy,
                            double* gw_add, double* gb_add, Exec e);

// Per-pixel Gaussian log score with diagonal covariance:
//   s[p] = -0.5 * (sum_d ln var[d] + sum_d (x[p,d] - mu[d])^2 / var[d])
void gauss_scores_forward(const double* x, int64_t P, int D, const double* mu,
                          const double* var, double* s, Exec e);
void gauss_scores_backward(const double* x, int64_t P, int D, const double* mu,
                           const double* var, const double* gs, double* gx_add,
                           double* gmu_add, double* gvar_add, Exec e);

// sums[0..D) = sum_p a[p] * x[p, d]; sums[D] = sum_p a[p]
void weighted_mean_sums(const double* x, const double* a, int64_t P, int D, double* sums,
                        Exec e);
// out[d] = sum_p a[p] * (x[p, d] - mu[d])^2
void weighted_sqdev_sums(const double* x, const double* a, const double* mu, int64_t P,
                         int D, double* out, Exec e);

// Bilinear 2x upsampling with half-pixel centers, edges clamped. The
// backward pass gathers: each input cell scans the output cells that can
// reference it and re-derives the forward weights, so no concurrent writes.
void upsample2x_forward(const double* x, int H, int W, int C, double* y, Exec e);
void upsample2x_backward(const double* gy, int H, int W, int C, double* gx_add, Exec e);

// Softmax over the trailing axis of a (P, C) view, max-subtracted per row.
void softmax_rows_forward(const double* x, int64_t P, int C, double* y, Exec e);
// gx[p, c] += y[p, c] * (gy[p, c] - sum_j gy[p, j] * y[p, j])
void softmax_rows_backward(const double* y, const double* gy, int64_t P, int C,
                           double* gx_add, Exec e);

}  // namespace gam::kernels
