// SPDX-License-Identifier: Apache-2.0
#include "gam/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "gam/kernels.hpp"

namespace gam {

namespace {
int64_t checked_numel(const std::vector<int>& shape) {
  check(!shape.empty(), "tensor shape must have at least one dimension");
  int64_t n = 1;
  for (int d : shape) {
    check(d > 0, "tensor dimensions must be positive");
    n *= d;
  }
  return n;
}
}  // namespace

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
  data_.assign(static_cast<size_t>(checked_numel(shape_)), 0.0);
}

Tensor Tensor::full(std::vector<int> shape, double v) {
  Tensor t(std::move(shape));
  t.fill(v);
  return t;
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> data) {
  const int64_t n = checked_numel(shape);
  check(n == static_cast<int64_t>(data.size()), "tensor data size ", data.size(),
        " does not match shape element count ", n);
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::move(data);
  return t;
}

int Tensor::dim(int i) const {
  check(i >= 0 && i < ndim(), "dimension index ", i, " out of range for rank ", ndim());
  return shape_[static_cast<size_t>(i)];
}

std::string Tensor::shape_str() const {
  std::string s = "(";
  for (size_t i = 0; i < shape_.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape_[i]);
  }
  return s + ")";
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

namespace {
void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  check(a.same_shape(b), op, ": shape mismatch ", a.shape_str(), " vs ", b.shape_str());
}

template <class F>
Tensor zip(const Tensor& a, const Tensor& b, F&& f) {
  Tensor out(a.shape());
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) po[i] = f(pa[i], pb[i]);
  return out;
}
}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  return zip(a, b, [](double x, double y) { return x + y; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  return zip(a, b, [](double x, double y) { return x - y; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  return zip(a, b, [](double x, double y) { return x * y; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "div");
  const double* pb = b.data();
  for (int64_t i = 0; i < b.numel(); ++i)
    check(pb[i] != 0.0, "div: division by zero at flat index ", i);
  return zip(a, b, [](double x, double y) { return x / y; });
}

Tensor add_scalar(const Tensor& a, double c) {
  Tensor out(a.shape());
  for (int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] + c;
  return out;
}

Tensor mul_scalar(const Tensor& a, double c) {
  Tensor out(a.shape());
  for (int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] * c;
  return out;
}

double sum(const Tensor& a) {
  return kernels::block_sum(a.data(), a.numel(), kernels::Exec::auto_dispatch);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

Tensor channel_softmax(const Tensor& x) {
  check(x.ndim() == 3, "channel_softmax expects (H,W,C), got ", x.shape_str());
  Tensor y(x.shape());
  kernels::softmax_rows_forward(x.data(), static_cast<int64_t>(x.dim(0)) * x.dim(1),
                                x.dim(2), y.data(), kernels::Exec::auto_dispatch);
  return y;
}

Tensor bilinear_upsample2x(const Tensor& x) {
  check(x.ndim() == 2 || x.ndim() == 3, "bilinear_upsample2x expects rank 2 or 3, got ",
        x.shape_str());
  const int H = x.dim(0), W = x.dim(1);
  const int C = x.ndim() == 3 ? x.dim(2) : 1;
  std::vector<int> oshape = x.ndim() == 3 ? std::vector<int>{2 * H, 2 * W, C}
                                          : std::vector<int>{2 * H, 2 * W};
  Tensor y(oshape);
  kernels::upsample2x_forward(x.data(), H, W, C, y.data(), kernels::Exec::auto_dispatch);
  return y;
}

Tensor downsample_nearest(const Tensor& x, int factor) {
  check(factor >= 1, "downsample factor must be positive");
  check(x.ndim() == 2 || x.ndim() == 3, "downsample_nearest expects rank 2 or 3, got ",
        x.shape_str());
  const int H = x.dim(0), W = x.dim(1);
  const int C = x.ndim() == 3 ? x.dim(2) : 1;
  check(H % factor == 0 && W % factor == 0, "downsample factor ", factor,
        " must divide spatial dims ", H, "x", W);
  const int h = H / factor, w = W / factor;
  std::vector<int> oshape =
      x.ndim() == 3 ? std::vector<int>{h, w, C} : std::vector<int>{h, w};
  Tensor y(oshape);
  const int off = factor / 2;
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j)
      for (int c = 0; c < C; ++c)
        y[(static_cast<int64_t>(i) * w + j) * C + c] =
            x[(static_cast<int64_t>(i * factor + off) * W + (j * factor + off)) * C + c];
  return y;
}

}  // namespace gam
