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

#include "mskd/kernels.hpp"

namespace mskd::kernels {
namespace {

double DotScalar(const double* x, const double* y, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

void AxpyScalar(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void AxpbyScalar(double a, const double* x, double b, double* y,
                 std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a * x[i] + b * y[i];
}

void Blend3Scalar(double a, const double* x, double b, const double* y,
                  double c, const double* z, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a * x[i] + b * y[i] + c * z[i];
}

void OneMinusDotsScalar(const double* a, std::size_t n_rows, const double* b,
                        std::size_t n, double* out) {
  for (std::size_t r = 0; r < n_rows; ++r) {
    out[r] = 1.0 - DotScalar(a + r * n, b, n);
  }
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{DotScalar, AxpyScalar, AxpbyScalar,
                                 Blend3Scalar, OneMinusDotsScalar};
  return table;
}

}  // namespace mskd::kernels
