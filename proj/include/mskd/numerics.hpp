// Copyright 2026 The MSKD Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace mskd {

using Vec = std::vector<double>;

inline constexpr double kGemClampEps = 1e-6;
inline constexpr double kNormEps = 1e-12;

// Dense row-major matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Builds a matrix whose rows are the given vectors (all the same length).
Matrix stack_rows(std::span<const Vec> rows);

bool all_finite(std::span<const double> values);
double l2_norm(std::span<const double> v);

// Generalized-mean pooling over the rows of `region` (one row per spatial
// cell, one column per channel). Inputs are clamped to kGemClampEps first.
// Throws std::invalid_argument("empty pooling region") on an empty region.
Vec gem_pool(const Matrix& region, double p);

// Gradient of gem_pool with respect to the (unclamped) region, given the
// pooled output and its upstream gradient. Cells at or below the clamp
// contribute nothing.
Matrix gem_pool_backward(const Matrix& region, double p,
                         std::span<const double> pooled,
                         std::span<const double> grad_pooled);

// v / ||v||. Throws std::domain_error("degenerate vector") when the norm is
// at or below kNormEps.
Vec l2_normalize(std::span<const double> v);

// Vector-Jacobian product of l2_normalize at `v`:
// (I - u u^T) g / ||v|| with u = v / ||v||.
Vec l2_normalize_backward(std::span<const double> v, std::span<const double> grad_out);

// Entry (i, j) = 1 - a_i . b_j. Rows of a and b must be unit-norm within
// 1e-6. Rows are independent, so `threads` > 1 splits them across workers
// without changing any value.
Matrix cosine_distance_matrix(const Matrix& a, const Matrix& b,
                              unsigned threads = 1);

// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h per coordinate.
Vec finite_diff_gradient(const std::function<double(std::span<const double>)>& f,
                         std::span<const double> x, double h = 1e-5);

// ||a - b|| / max(||a||, ||b||), or 0 when both vanish.
double relative_error(std::span<const double> a, std::span<const double> b);

}  // namespace mskd
