// SPDX-License-Identifier: Apache-2.0
#include "gam/kernels.hpp"

#include <omp.h>

#include <atomic>
#include <cmath>
#include <cstdlib>

namespace gam::kernels {

namespace {
std::atomic<int> g_jobs{-1};

int env_jobs() {
  const char* s = std::getenv("GAMSEG_JOBS");
  if (s && *s) {
    char* end = nullptr;
    long v = std::strtol(s, &end, 10);
    if (end && *end == '\0' && v > 0) return static_cast<int>(v);
  }
  return 0;
}
}  // namespace

void set_jobs(int n) {
  g_jobs.store(n > 0 ? n : -1);
  if (n > 0) omp_set_num_threads(n);
}

int jobs() {
  int j = g_jobs.load();
  if (j > 0) return j;
  int e = env_jobs();
  if (e > 0) {
    // First touch resolves the environment once so omp regions agree.
    omp_set_num_threads(e);
    g_jobs.store(e);
    return e;
  }
  return omp_get_max_threads();
}

bool use_parallel(Exec e) {
  switch (e) {
    case Exec::serial: return false;
    case Exec::parallel: return true;
    default: return jobs() > 1;
  }
}

double block_sum(const double* x, int64_t n, Exec e) {
  double out = 0.0;
  block_accum(n, 1, [&](int64_t i, double* acc) { acc[0] += x[i]; }, &out, e);
  return out;
}

Conv2DShape conv2d_shape(int H, int W, int Cin, int k, int Cout, int stride, int dilation) {
  check(k >= 1 && k % 2 == 1, "conv kernel size must be odd, got ", k);
  check(stride >= 1 && dilation >= 1, "conv stride and dilation must be positive");
  Conv2DShape s;
  s.H = H;
  s.W = W;
  s.Cin = Cin;
  s.k = k;
  s.Cout = Cout;
  s.stride = stride;
  s.dilation = dilation;
  s.pad = dilation * (k - 1) / 2;
  const int span = dilation * (k - 1) + 1;
  check(H + 2 * s.pad >= span && W + 2 * s.pad >= span, "conv input ", H, "x", W,
        " too small for kernel span ", span);
  s.Ho = (H + 2 * s.pad - span) / stride + 1;
  s.Wo = (W + 2 * s.pad - span) / stride + 1;
  return s;
}

void conv2d_forward(const Conv2DShape& s, const double* x, const double* w, const double* b,
                    double* y, Exec e) {
  for_each(
      s.Ho,
      [&](int64_t ho) {
        for (int wo = 0; wo < s.Wo; ++wo) {
          double* yp = y + (ho * s.Wo + wo) * s.Cout;
          for (int co = 0; co < s.Cout; ++co) yp[co] = b ? b[co] : 0.0;
          for (int kh = 0; kh < s.k; ++kh) {
            const int hi = static_cast<int>(ho) * s.stride - s.pad + kh * s.dilation;
            if (hi < 0 || hi >= s.H) continue;
            for (int kw = 0; kw < s.k; ++kw) {
              const int wi = wo * s.stride - s.pad + kw * s.dilation;
              if (wi < 0 || wi >= s.W) continue;
              const double* xp = x + (static_cast<int64_t>(hi) * s.W + wi) * s.Cin;
              const double* wp = w + static_cast<int64_t>(kh * s.k + kw) * s.Cin * s.Cout;
              for (int ci = 0; ci < s.Cin; ++ci) {
                const double xv = xp[ci];
                const double* wr = wp + static_cast<int64_t>(ci) * s.Cout;
                for (int co = 0; co < s.Cout; ++co) yp[co] += xv * wr[co];
              }
            }
          }
        }
      },
      e);
}

void conv2d_backward_input(const Conv2DShape& s, const double* gy, const double* w,
                           double* gx_add, Exec e) {
  for_each(
      s.H,
      [&](int64_t hi) {
        for (int wi = 0; wi < s.W; ++wi) {
          double* gxp = gx_add + (hi * s.W + wi) * s.Cin;
          for (int kh = 0; kh < s.k; ++kh) {
            const int hnum = static_cast<int>(hi) + s.pad - kh * s.dilation;
            if (hnum < 0 || hnum % s.stride != 0) continue;
            const int ho = hnum / s.stride;
            if (ho >= s.Ho) continue;
            for (int kw = 0; kw < s.k; ++kw) {
              const int wnum = wi + s.pad - kw * s.dilation;
              if (wnum < 0 || wnum % s.stride != 0) continue;
              const int wo = wnum / s.stride;
              if (wo >= s.Wo) continue;
              const double* gyp = gy + (static_cast<int64_t>(ho) * s.Wo + wo) * s.Cout;
              const double* wp = w + static_cast<int64_t>(kh * s.k + kw) * s.Cin * s.Cout;
              for (int ci = 0; ci < s.Cin; ++ci) {
                const double* wr = wp + static_cast<int64_t>(ci) * s.Cout;
                double acc = 0.0;
                for (int co = 0; co < s.Cout; ++co) acc += gyp[co] * wr[co];
                gxp[ci] += acc;
              }
            }
          }
        }
      },
      e);
}

void conv2d_backward_params(const Conv2DShape& s, const double* x, const double* gy,
                            double* gw_add, double* gb_add, Exec e) {
  if (gw_add) {
    // Each filter tap owns a disjoint slab of gw, so taps parallelize
    // cleanly and the per-tap pixel order is fixed.
    for_each(
        static_cast<int64_t>(s.k) * s.k,
        [&](int64_t t) {
          const int kh = static_cast<int>(t) / s.k;
          const int kw = static_cast<int>(t) % s.k;
          double* gwp = gw_add + t * s.Cin * s.Cout;
          for (int ho = 0; ho < s.Ho; ++ho) {
            const int hi = ho * s.stride - s.pad + kh * s.dilation;
            if (hi < 0 || hi >= s.H) continue;
            for (int wo = 0; wo < s.Wo; ++wo) {
              const int wi = wo * s.stride - s.pad + kw * s.dilation;
              if (wi < 0 || wi >= s.W) continue;
              const double* xp = x + (static_cast<int64_t>(hi) * s.W + wi) * s.Cin;
              const double* gyp = gy + (static_cast<int64_t>(ho) * s.Wo + wo) * s.Cout;
              for (int ci = 0; ci < s.Cin; ++ci) {
                const double xv = xp[ci];
                double* row = gwp + static_cast<int64_t>(ci) * s.Cout;
                for (int co = 0; co < s.Cout; ++co) row[co] += xv * gyp[co];
              }
            }
          }
        },
        e);
  }
  if (gb_add) {
    block_accum(
        static_cast<int64_t>(s.Ho) * s.Wo, s.Cout,
        [&](int64_t p, double* acc) {
          const double* gyp = gy + p * s.Cout;
          for (int co = 0; co < s.Cout; ++co) acc[co] += gyp[co];
        },
        gb_add, e);
  }
}

void gauss_scores_forward(const double* x, int64_t P, int D, const double* mu,
                          const double* var, double* s, Exec e) {
  std::vector<double> inv(D);
  double logdet = 0.0;
  for (int d = 0; d < D; ++d) {
    inv[d] = 1.0 / var[d];
    logdet += std::log(var[d]);
  }
  for_each(
      P,
      [&](int64_t p) {
        const double* xp = x + p * D;
        double md = 0.0;
        for (int d = 0; d < D; ++d) {
          const double diff = xp[d] - mu[d];
          md += diff * diff * inv[d];
        }
        s[p] = -0.5 * (logdet + md);
      },
      e);
}

void gauss_scores_backward(const double* x, int64_t P, int D, const double* mu,
                           const double* var, const double* gs, double* gx_add,
                           double* gmu_add, double* gvar_add, Exec e) {
  std::vector<double> inv(D);
  for (int d = 0; d < D; ++d) inv[d] = 1.0 / var[d];
  if (gx_add) {
    for_each(
        P,
        [&](int64_t p) {
          const double* xp = x + p * D;
          double* gxp = gx_add + p * D;
          const double g = gs[p];
          for (int d = 0; d < D; ++d) gxp[d] += -g * (xp[d] - mu[d]) * inv[d];
        },
        e);
  }
  if (gmu_add || gvar_add) {
    std::vector<double> acc2(2 * static_cast<size_t>(D), 0.0);
    block_accum(
        P, 2 * D,
        [&](int64_t p, double* acc) {
          const double* xp = x + p * D;
          const double g = gs[p];
          for (int d = 0; d < D; ++d) {
            const double diff = xp[d] - mu[d];
            acc[d] += g * diff * inv[d];
            acc[D + d] += g * (-0.5 * inv[d] + 0.5 * diff * diff * inv[d] * inv[d]);
          }
        },
        acc2.data(), e);
    for (int d = 0; d < D; ++d) {
      if (gmu_add) gmu_add[d] += acc2[d];
      if (gvar_add) gvar_add[d] += acc2[D + d];
    }
  }
}

void weighted_mean_sums(const double* x, const double* a, int64_t P, int D, double* sums,
                        Exec e) {
  block_accum(
      P, D + 1,
      [&](int64_t p, double* acc) {
        const double ap = a[p];
        const double* xp = x + p * D;
        for (int d = 0; d < D; ++d) acc[d] += ap * xp[d];
        acc[D] += ap;
      },
      sums, e);
}

void weighted_sqdev_sums(const double* x, const double* a, const double* mu, int64_t P,
                         int D, double* out, Exec e) {
  block_accum(
      P, D,
      [&](int64_t p, double* acc) {
        const double ap = a[p];
        const double* xp = x + p * D;
        for (int d = 0; d < D; ++d) {
          const double diff = xp[d] - mu[d];
          acc[d] += ap * diff * diff;
        }
      },
      out, e);
}

namespace {
// Source row/col pair and interpolation weight for one upsampled index.
struct Lerp {
  int i0, i1;
  double w1;  // weight of i1; i0 gets 1 - w1
};

inline Lerp lerp_coord(int out_i, int in_n) {
  const double src = (out_i + 0.5) * 0.5 - 0.5;
  Lerp l;
  if (src <= 0.0) {
    l.i0 = l.i1 = 0;
    l.w1 = 0.0;
  } else if (src >= in_n - 1) {
    l.i0 = l.i1 = in_n - 1;
    l.w1 = 0.0;
  } else {
    l.i0 = static_cast<int>(src);
    l.i1 = l.i0 + 1;
    l.w1 = src - l.i0;
  }
  return l;
}
}  // namespace

void upsample2x_forward(const double* x, int H, int W, int C, double* y, Exec e) {
  const int Ho = 2 * H, Wo = 2 * W;
  for_each(
      Ho,
      [&](int64_t i) {
        const Lerp li = lerp_coord(static_cast<int>(i), H);
        for (int j = 0; j < Wo; ++j) {
          const Lerp lj = lerp_coord(j, W);
          const double* p00 = x + (static_cast<int64_t>(li.i0) * W + lj.i0) * C;
          const double* p01 = x + (static_cast<int64_t>(li.i0) * W + lj.i1) * C;
          const double* p10 = x + (static_cast<int64_t>(li.i1) * W + lj.i0) * C;
          const double* p11 = x + (static_cast<int64_t>(li.i1) * W + lj.i1) * C;
          const double w00 = (1.0 - li.w1) * (1.0 - lj.w1);
          const double w01 = (1.0 - li.w1) * lj.w1;
          const double w10 = li.w1 * (1.0 - lj.w1);
          const double w11 = li.w1 * lj.w1;
          double* yp = y + (i * Wo + j) * C;
          for (int c = 0; c < C; ++c)
            yp[c] = w00 * p00[c] + w01 * p01[c] + w10 * p10[c] + w11 * p11[c];
        }
      },
      e);
}

void upsample2x_backward(const double* gy, int H, int W, int C, double* gx_add, Exec e) {
  const int Ho = 2 * H, Wo = 2 * W;
  // Gather form: each input cell (a, b) re-derives the forward weights of
  // the nearby output cells, so serial and parallel runs add the same terms
  // in the same order.
  for_each(
      H,
      [&](int64_t a) {
        for (int b = 0; b < W; ++b) {
          double* gxp = gx_add + (a * W + b) * C;
          const int ilo = std::max(0, 2 * static_cast<int>(a) - 2);
          const int ihi = std::min(Ho - 1, 2 * static_cast<int>(a) + 3);
          const int jlo = std::max(0, 2 * b - 2);
          const int jhi = std::min(Wo - 1, 2 * b + 3);
          for (int i = ilo; i <= ihi; ++i) {
            const Lerp li = lerp_coord(i, H);
            double wi = 0.0;
            if (li.i0 == a) wi += 1.0 - li.w1;
            if (li.i1 == a) wi += li.w1;
            if (wi == 0.0) continue;
            for (int j = jlo; j <= jhi; ++j) {
              const Lerp lj = lerp_coord(j, W);
              double wj = 0.0;
              if (lj.i0 == b) wj += 1.0 - lj.w1;
              if (lj.i1 == b) wj += lj.w1;
              if (wj == 0.0) continue;
              const double wt = wi * wj;
              const double* gyp = gy + (static_cast<int64_t>(i) * Wo + j) * C;
              for (int c = 0; c < C; ++c) gxp[c] += wt * gyp[c];
            }
          }
        }
      },
      e);
}

void softmax_rows_forward(const double* x, int64_t P, int C, double* y, Exec e) {
  for_each(
      P,
      [&](int64_t p) {
        const double* xp = x + p * C;
        double* yp = y + p * C;
        double m = xp[0];
        for (int c = 1; c < C; ++c) m = std::max(m, xp[c]);
        double z = 0.0;
        for (int c = 0; c < C; ++c) {
          yp[c] = std::exp(xp[c] - m);
          z += yp[c];
        }
        const double invz = 1.0 / z;
        for (int c = 0; c < C; ++c) yp[c] *= invz;
      },
      e);
}

void softmax_rows_backward(const double* y, const double* gy, int64_t P, int C,
                           double* gx_add, Exec e) {
  for_each(
      P,
      [&](int64_t p) {
        const double* yp = y + p * C;
        const double* gyp = gy + p * C;
        double* gxp = gx_add + p * C;
        double dot = 0.0;
        for (int c = 0; c < C; ++c) dot += gyp[c] * yp[c];
        for (int c = 0; c < C; ++c) gxp[c] += yp[c] * (gyp[c] - dot);
      },
      e);
}

}  // namespace gam::kernels
