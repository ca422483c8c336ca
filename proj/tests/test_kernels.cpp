// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <vector>

#include "gam/kernels.hpp"
#include "gam/rng.hpp"
#include "gam/tensor.hpp"

using namespace gam;
using kernels::Exec;

namespace {

std::vector<double> rand_vec(int64_t n, Rng& rng, double lo = -1.5, double hi = 1.5) {
  std::vector<double> v(static_cast<size_t>(n));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

// Direct nested-loop cross-correlation with zero padding; the trusted slow
// form of conv2d_forward.
void conv_oracle(const kernels::Conv2DShape& s, const double* x, const double* w,
                 const double* b, double* y) {
  for (int ho = 0; ho < s.Ho; ++ho)
    for (int wo = 0; wo < s.Wo; ++wo)
      for (int co = 0; co < s.Cout; ++co) {
        double acc = b ? b[co] : 0.0;
        for (int kh = 0; kh < s.k; ++kh)
          for (int kw = 0; kw < s.k; ++kw)
            for (int ci = 0; ci < s.Cin; ++ci) {
              const int hi = ho * s.stride - s.pad + kh * s.dilation;
              const int wi = wo * s.stride - s.pad + kw * s.dilation;
              if (hi < 0 || hi >= s.H || wi < 0 || wi >= s.W) continue;
              acc += x[(static_cast<int64_t>(hi) * s.W + wi) * s.Cin + ci] *
                     w[((static_cast<int64_t>(kh) * s.k + kw) * s.Cin + ci) * s.Cout + co];
            }
        y[(static_cast<int64_t>(ho) * s.Wo + wo) * s.Cout + co] = acc;
      }
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-30});
}

}  // namespace

TEST_CASE("conv2d forward matches the nested-loop oracle") {
  Rng rng(101);
  for (int trial = 0; trial < 25; ++trial) {
    const int H = static_cast<int>(rng.uniform_int(3, 9));
    const int W = static_cast<int>(rng.uniform_int(3, 9));
    const int Cin = static_cast<int>(rng.uniform_int(1, 4));
    const int Cout = static_cast<int>(rng.uniform_int(1, 4));
    const int k = rng.bernoulli(0.5) ? 3 : 1;
    const int stride = rng.bernoulli(0.3) ? 2 : 1;
    const int dilation = (k == 3 && rng.bernoulli(0.4)) ? 2 : 1;
    auto s = kernels::conv2d_shape(H, W, Cin, k, Cout, stride, dilation);
    auto x = rand_vec(static_cast<int64_t>(H) * W * Cin, rng);
    auto w = rand_vec(static_cast<int64_t>(k) * k * Cin * Cout, rng);
    auto b = rand_vec(Cout, rng);
    std::vector<double> y(static_cast<size_t>(s.Ho) * s.Wo * Cout), yo = y;
    kernels::conv2d_forward(s, x.data(), w.data(), b.data(), y.data(), Exec::serial);
    conv_oracle(s, x.data(), w.data(), b.data(), yo.data());
    for (size_t i = 0; i < y.size(); ++i) CHECK(rel_err(y[i], yo[i]) <= 1e-12);
  }
}

TEST_CASE("conv2d shape arithmetic") {
  auto s = kernels::conv2d_shape(64, 64, 3, 3, 16, 1, 1);
  CHECK(s.Ho == 64);
  CHECK(s.Wo == 64);
  CHECK(s.pad == 1);
  auto s2 = kernels::conv2d_shape(64, 64, 3, 3, 16, 2, 1);
  CHECK(s2.Ho == 32);
  CHECK(s2.Wo == 32);
  auto sd = kernels::conv2d_shape(16, 16, 8, 3, 8, 1, 4);
  CHECK(sd.pad == 4);
  CHECK(sd.Ho == 16);
  CHECK_THROWS_AS(kernels::conv2d_shape(8, 8, 1, 2, 1, 1, 1), error);  // even kernel
  CHECK_THROWS_AS(kernels::conv2d_shape(8, 8, 1, 3, 1, 0, 1), error);
}

TEST_CASE("serial and parallel paths are bit-identical") {
  // Force a worker count above 1 so the parallel path really splits work,
  // even on a single-core host.
  const int saved = kernels::jobs();
  kernels::set_jobs(4);

  Rng rng(202);
  SUBCASE("block_sum on a non-multiple of the block size") {
    auto v = rand_vec(kernels::reduce_block * 3 + 137, rng);
    const double a = kernels::block_sum(v.data(), static_cast<int64_t>(v.size()), Exec::serial);
    const double b = kernels::block_sum(v.data(), static_cast<int64_t>(v.size()), Exec::parallel);
    CHECK(a == b);
  }

  SUBCASE("conv2d forward and both backwards") {
    auto s = kernels::conv2d_shape(17, 13, 5, 3, 7, 1, 2);
    auto x = rand_vec(static_cast<int64_t>(s.H) * s.W * s.Cin, rng);
    auto w = rand_vec(static_cast<int64_t>(s.k) * s.k * s.Cin * s.Cout, rng);
    auto b = rand_vec(s.Cout, rng);
    const int64_t ny = static_cast<int64_t>(s.Ho) * s.Wo * s.Cout;
    std::vector<double> ys(ny), yp(ny);
    kernels::conv2d_forward(s, x.data(), w.data(), b.data(), ys.data(), Exec::serial);
    kernels::conv2d_forward(s, x.data(), w.data(), b.data(), yp.data(), Exec::parallel);
    CHECK(ys == yp);

    auto gy = rand_vec(ny, rng);
    std::vector<double> gxs(x.size()), gxp(x.size());
    kernels::conv2d_backward_input(s, gy.data(), w.data(), gxs.data(), Exec::serial);
    kernels::conv2d_backward_input(s, gy.data(), w.data(), gxp.data(), Exec::parallel);
    CHECK(gxs == gxp);

    std::vector<double> gws(w.size()), gwp(w.size()), gbs(b.size()), gbp(b.size());
    kernels::conv2d_backward_params(s, x.data(), gy.data(), gws.data(), gbs.data(),
                                    Exec::serial);
    kernels::conv2d_backward_params(s, x.data(), gy.data(), gwp.data(), gbp.data(),
                                    Exec::parallel);
    CHECK(gws == gwp);
    CHECK(gbs == gbp);
  }

  SUBCASE("gauss scores forward and backward") {
    const int64_t P = 701;
    const int D = 6;
    auto x = rand_vec(P * D, rng);
    auto mu = rand_vec(D, rng);
    auto var = rand_vec(D, rng, 0.05, 2.0);
    std::vector<double> ss(P), sp(P);
    kernels::gauss_scores_forward(x.data(), P, D, mu.data(), var.data(), ss.data(),
                                  Exec::serial);
    kernels::gauss_scores_forward(x.data(), P, D, mu.data(), var.data(), sp.data(),
                                  Exec::parallel);
    CHECK(ss == sp);

    auto gs = rand_vec(P, rng);
    std::vector<double> gx1(x.size()), gx2(x.size()), gm1(D), gm2(D), gv1(D), gv2(D);
    kernels::gauss_scores_backward(x.data(), P, D, mu.data(), var.data(), gs.data(),
                                   gx1.data(), gm1.data(), gv1.data(), Exec::serial);
    kernels::gauss_scores_backward(x.data(), P, D, mu.data(), var.data(), gs.data(),
                                   gx2.data(), gm2.data(), gv2.data(), Exec::parallel);
    CHECK(gx1 == gx2);
    CHECK(gm1 == gm2);
    CHECK(gv1 == gv2);
  }

  SUBCASE("weighted sums") {
    const int64_t P = kernels::reduce_block + 55;
    const int D = 4;
    auto x = rand_vec(P * D, rng);
    auto a = rand_vec(P, rng, 0.0, 1.0);
    auto mu = rand_vec(D, rng);
    std::vector<double> s1(D + 1), s2(D + 1), q1(D), q2(D);
    kernels::weighted_mean_sums(x.data(), a.data(), P, D, s1.data(), Exec::serial);
    kernels::weighted_mean_sums(x.data(), a.data(), P, D, s2.data(), Exec::parallel);
    CHECK(s1 == s2);
    kernels::weighted_sqdev_sums(x.data(), a.data(), mu.data(), P, D, q1.data(),
                                 Exec::serial);
    kernels::weighted_sqdev_sums(x.data(), a.data(), mu.data(), P, D, q2.data(),
                                 Exec::parallel);
    CHECK(q1 == q2);
  }

  SUBCASE("upsample and softmax") {
    const int H = 9, W = 7, C = 3;
    auto x = rand_vec(static_cast<int64_t>(H) * W * C, rng);
    std::vector<double> u1(static_cast<size_t>(4) * H * W * C), u2 = u1;
    kernels::upsample2x_forward(x.data(), H, W, C, u1.data(), Exec::serial);
    kernels::upsample2x_forward(x.data(), H, W, C, u2.data(), Exec::parallel);
    CHECK(u1 == u2);
    auto gy = rand_vec(static_cast<int64_t>(4) * H * W * C, rng);
    std::vector<double> g1(x.size()), g2(x.size());
    kernels::upsample2x_backward(gy.data(), H, W, C, g1.data(), Exec::serial);
    kernels::upsample2x_backward(gy.data(), H, W, C, g2.data(), Exec::parallel);
    CHECK(g1 == g2);

    const int64_t P = 123;
    auto lg = rand_vec(P * C, rng, -20, 20);
    std::vector<double> y1(lg.size()), y2(lg.size());
    kernels::softmax_rows_forward(lg.data(), P, C, y1.data(), Exec::serial);
    kernels::softmax_rows_forward(lg.data(), P, C, y2.data(), Exec::parallel);
    CHECK(y1 == y2);
    auto gyo = rand_vec(P * C, rng);
    std::vector<double> gx1(lg.size()), gx2(lg.size());
    kernels::softmax_rows_backward(y1.data(), gyo.data(), P, C, gx1.data(), Exec::serial);
    kernels::softmax_rows_backward(y1.data(), gyo.data(), P, C, gx2.data(), Exec::parallel);
    CHECK(gx1 == gx2);
  }

  kernels::set_jobs(saved);
}

TEST_CASE("gauss scores match the closed form") {
  Rng rng(303);
  const int64_t P = 11;
  const int D = 3;
  auto x = rand_vec(P * D, rng);
  auto mu = rand_vec(D, rng);
  auto var = rand_vec(D, rng, 0.1, 1.0);
  std::vector<double> s(P);
  kernels::gauss_scores_forward(x.data(), P, D, mu.data(), var.data(), s.data(),
                                Exec::serial);
  for (int64_t p = 0; p < P; ++p) {
    double ref = 0;
    for (int d = 0; d < D; ++d) {
      const double diff = x[p * D + d] - mu[d];
      ref += std::log(var[d]) + diff * diff / var[d];
    }
    CHECK(s[p] == doctest::Approx(-0.5 * ref).epsilon(1e-12));
  }
}

TEST_CASE("upsample backward is the exact adjoint of forward") {
  // <U x, g> == <x, U^T g> for random x, g.
  Rng rng(404);
  const int H = 5, W = 6, C = 2;
  auto x = rand_vec(static_cast<int64_t>(H) * W * C, rng);
  auto g = rand_vec(static_cast<int64_t>(4) * H * W * C, rng);
  std::vector<double> ux(g.size());
  kernels::upsample2x_forward(x.data(), H, W, C, ux.data(), Exec::serial);
  std::vector<double> utg(x.size());
  kernels::upsample2x_backward(g.data(), H, W, C, utg.data(), Exec::serial);
  double lhs = 0, rhs = 0;
  for (size_t i = 0; i < ux.size(); ++i) lhs += ux[i] * g[i];
  for (size_t i = 0; i < x.size(); ++i) rhs += x[i] * utg[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("jobs control") {
  const int saved = kernels::jobs();
  kernels::set_jobs(3);
  CHECK(kernels::jobs() == 3);
  CHECK(kernels::use_parallel(Exec::parallel));
  CHECK(!kernels::use_parallel(Exec::serial));
  CHECK(kernels::use_parallel(Exec::auto_dispatch));
  kernels::set_jobs(1);
  CHECK(!kernels::use_parallel(Exec::auto_dispatch));
  kernels::set_jobs(saved);
}
