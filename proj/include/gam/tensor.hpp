// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "gam/error.hpp"

namespace gam {

// Dense row-major double tensor. Images are stored channel-last (H, W, C),
// single-channel maps as (H, W), vectors as (D).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);  // zero-filled
  Tensor(std::initializer_list<int> shape) : Tensor(std::vector<int>(shape)) {}

  static Tensor full(std::vector<int> shape, double v);
  static Tensor from_data(std::vector<int> shape, std::vector<double> data);
  static Tensor scalar(double v) { return from_data({1}, {v}); }

  const std::vector<int>& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const;
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  bool defined() const { return !shape_.empty(); }
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  std::string shape_str() const;

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  // Indexed access for the common ranks; bounds are the caller's problem.
  double& at(int i, int j) { return data_[static_cast<size_t>(i) * shape_[1] + j]; }
  double at(int i, int j) const { return data_[static_cast<size_t>(i) * shape_[1] + j]; }
  double& at(int i, int j, int c) {
    return data_[(static_cast<size_t>(i) * shape_[1] + j) * shape_[2] + c];
  }
  double at(int i, int j, int c) const {
    return data_[(static_cast<size_t>(i) * shape_[1] + j) * shape_[2] + c];
  }

  void fill(double v);

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

// Elementwise arithmetic; shapes must match exactly (no broadcasting).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);  // throws on any zero divisor
Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);

double sum(const Tensor& a);  // blocked accumulation, see kernels.hpp
double max_abs_diff(const Tensor& a, const Tensor& b);

// Softmax over the trailing channel axis of an (H, W, C) tensor, computed
// with per-pixel max subtraction so large logits cannot overflow.
Tensor channel_softmax(const Tensor& x);

// Bilinear 2x upsampling of (H, W, C) or (H, W), half-pixel centers
// (align_corners = false), edges clamped.
Tensor bilinear_upsample2x(const Tensor& x);

// Nearest-neighbour downsample by an integer factor, sampling cell centers.
// Used to bring full-resolution label masks to feature resolution.
Tensor downsample_nearest(const Tensor& x, int factor);

}  // namespace gam
