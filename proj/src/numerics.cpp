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

#include "mskd/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <thread>

#include "mskd/kernels.hpp"

namespace mskd {

Matrix stack_rows(std::span<const Vec> rows) {
  if (rows.empty()) return {};
  Matrix out(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != out.cols()) {
      throw std::invalid_argument("stack_rows: ragged rows");
    }
    std::copy(rows[r].begin(), rows[r].end(), out.row(r).begin());
  }
  return out;
}

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(),
                     [](double v) { return std::isfinite(v); });
}

double l2_norm(std::span<const double> v) {
  return std::sqrt(kernels::dot(v, v));
}

Vec gem_pool(const Matrix& region, double p) {
  if (region.rows() == 0 || region.cols() == 0) {
    throw std::invalid_argument("empty pooling region");
  }
  if (!(p >= 1.0)) throw std::invalid_argument("gem_pool: p must be >= 1");
  const double inv_count = 1.0 / static_cast<double>(region.rows());
  Vec out(region.cols(), 0.0);
  for (std::size_t c = 0; c < region.cols(); ++c) {
    double acc = 0.0;
    for (std::size_t s = 0; s < region.rows(); ++s) {
      acc += std::pow(std::max(region(s, c), kGemClampEps), p);
    }
    out[c] = std::pow(acc * inv_count, 1.0 / p);
  }
  return out;
}

Matrix gem_pool_backward(const Matrix& region, double p,
                         std::span<const double> pooled,
                         std::span<const double> grad_pooled) {
  if (pooled.size() != region.cols() || grad_pooled.size() != region.cols()) {
    throw std::invalid_argument("gem_pool_backward: dimension mismatch");
  }
  // d pooled_c / d x_sc = pooled_c^(1-p) x_sc^(p-1) / |S|
  const double inv_count = 1.0 / static_cast<double>(region.rows());
  Matrix grad(region.rows(), region.cols(), 0.0);
  for (std::size_t c = 0; c < region.cols(); ++c) {
    const double scale = grad_pooled[c] * std::pow(pooled[c], 1.0 - p) * inv_count;
    for (std::size_t s = 0; s < region.rows(); ++s) {
      const double x = region(s, c);
      if (x > kGemClampEps) grad(s, c) = scale * std::pow(x, p - 1.0);
    }
  }
  return grad;
}

Vec l2_normalize(std::span<const double> v) {
  const double norm = l2_norm(v);
  if (!(norm > kNormEps)) throw std::domain_error("degenerate vector");
  Vec out(v.begin(), v.end());
  for (double& x : out) x /= norm;
  return out;
}

Vec l2_normalize_backward(std::span<const double> v, std::span<const double> grad_out) {
  const double norm = l2_norm(v);
  if (!(norm > kNormEps)) throw std::domain_error("degenerate vector");
  Vec u(v.begin(), v.end());
  for (double& x : u) x /= norm;
  const double proj = kernels::dot(u, grad_out);
  Vec grad(grad_out.begin(), grad_out.end());
  kernels::axpy(-proj, u, grad);
  for (double& g : grad) g /= norm;
  return grad;
}

namespace {

void CheckUnitRows(const Matrix& m) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double norm = l2_norm(m.row(r));
    if (!(std::abs(norm - 1.0) <= 1e-6)) {
      throw std::invalid_argument("cosine_distance_matrix: row " + std::to_string(r) +
                                  " is not unit-norm");
    }
  }
}

}  // namespace

Matrix cosine_distance_matrix(const Matrix& a, const Matrix& b, unsigned threads) {
  if (a.cols() != b.cols()) {
    throw std::invalid_argument("cosine_distance_matrix: dimension mismatch");
  }
  CheckUnitRows(a);
  CheckUnitRows(b);
  Matrix out(a.rows(), b.rows());
  const auto& k = kernels::active();
  const bool self = &a == &b || a == b;
  auto fill_rows = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      k.one_minus_dots(b.flat().data(), b.rows(), a.row(i).data(), a.cols(),
                       out.row(i).data());
    }
  };
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(a.rows())));
  if (threads == 1) {
    fill_rows(0, a.rows());
  } else {
    std::vector<std::jthread> workers;
    const std::size_t chunk = (a.rows() + threads - 1) / threads;
    for (std::size_t begin = 0; begin < a.rows(); begin += chunk) {
      workers.emplace_back(fill_rows, begin, std::min(a.rows(), begin + chunk));
    }
  }
  for (double& d : out.flat()) d = std::clamp(d, 0.0, 2.0);
  if (self) {
    // Exact symmetry and a zero diagonal regardless of summation order.
    for (std::size_t i = 0; i < out.rows(); ++i) {
      out(i, i) = 0.0;
      for (std::size_t j = i + 1; j < out.cols(); ++j) out(j, i) = out(i, j);
    }
  }
  return out;
}

Vec finite_diff_gradient(const std::function<double(std::span<const double>)>& f,
                         std::span<const double> x, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_gradient: h must be > 0");
  Vec probe(x.begin(), x.end());
  Vec grad(x.size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + h;
    const double plus = f(probe);
    probe[i] = saved - h;
    const double minus = f(probe);
    probe[i] = saved;
    grad[i] = (plus - minus) / (2.0 * h);
  }
  return grad;
}

double relative_error(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("relative_error: size mismatch");
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::sqrt(std::max(na, nb));
  if (denom == 0.0) return 0.0;
  return std::sqrt(diff) / denom;
}

}  // namespace mskd
