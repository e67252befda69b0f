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

// Dense double-precision inner loops. Every kernel has a scalar reference
// implementation; vectorized variants are chosen once at startup based on
// what the CPU reports, and can be overridden for equivalence testing.
//
// Each backend reduces in a fixed order, so results are reproducible run to
// run on the same backend. Backends agree with each other only up to
// rounding.

#include <cstddef>
#include <span>
#include <string_view>

namespace mskd::kernels {

enum class Backend { kScalar, kAvx2 };

struct KernelTable {
  // sum_i x[i] * y[i]
  double (*dot)(const double* x, const double* y, std::size_t n);
  // y += a * x
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  // y = a * x + b * y
  void (*axpby)(double a, const double* x, double b, double* y, std::size_t n);
  // out = a * x + b * y + c * z
  void (*blend3)(double a, const double* x, double b, const double* y,
                 double c, const double* z, double* out, std::size_t n);
  // out[i] = 1 - dot(row_i(a), b) for every row of a (row-major, n_rows x n)
  void (*one_minus_dots)(const double* a, std::size_t n_rows, const double* b,
                         std::size_t n, double* out);
};

const KernelTable& scalar_table();
#if defined(MSKD_HAVE_AVX2)
const KernelTable& avx2_table();
#endif

bool backend_available(Backend backend);
const KernelTable& table_for(Backend backend);

// Table used by the rest of the library.
const KernelTable& active();
Backend active_backend();
// Throws std::invalid_argument when the backend is not usable on this CPU.
void select_backend(Backend backend);
std::string_view backend_name(Backend backend);

// Restores the previously active backend on destruction.
class ScopedBackend {
 public:
  explicit ScopedBackend(Backend backend) : previous_(active_backend()) {
    select_backend(backend);
  }
  ~ScopedBackend() { select_backend(previous_); }
  ScopedBackend(const ScopedBackend&) = delete;
  ScopedBackend& operator=(const ScopedBackend&) = delete;

 private:
  Backend previous_;
};

inline double dot(std::span<const double> x, std::span<const double> y) {
  return active().dot(x.data(), y.data(), x.size());
}

inline void axpy(double a, std::span<const double> x, std::span<double> y) {
  active().axpy(a, x.data(), y.data(), x.size());
}

inline void axpby(double a, std::span<const double> x, double b,
                  std::span<double> y) {
  active().axpby(a, x.data(), b, y.data(), x.size());
}

}  // namespace mskd::kernels
