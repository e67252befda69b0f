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

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "mskd/kernels.hpp"

namespace mskd::kernels {
namespace {

bool CpuHasAvx2() {
#if defined(MSKD_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

// MSKD_KERNELS=scalar forces the reference kernels for a whole process.
Backend InitialBackend() {
  if (const char* env = std::getenv("MSKD_KERNELS")) {
    if (std::string(env) == "scalar") return Backend::kScalar;
  }
  return CpuHasAvx2() ? Backend::kAvx2 : Backend::kScalar;
}

std::atomic<Backend>& ActiveSlot() {
  static std::atomic<Backend> slot{InitialBackend()};
  return slot;
}

}  // namespace

bool backend_available(Backend backend) {
  switch (backend) {
    case Backend::kScalar:
      return true;
    case Backend::kAvx2:
      return CpuHasAvx2();
  }
  return false;
}

const KernelTable& table_for(Backend backend) {
  if (!backend_available(backend)) {
    throw std::invalid_argument("kernel backend not available: " +
                                std::string(backend_name(backend)));
  }
#if defined(MSKD_HAVE_AVX2)
  if (backend == Backend::kAvx2) return avx2_table();
#endif
  return scalar_table();
}

const KernelTable& active() {
#if defined(MSKD_HAVE_AVX2)
  if (ActiveSlot().load(std::memory_order_relaxed) == Backend::kAvx2) {
    return avx2_table();
  }
#endif
  return scalar_table();
}

Backend active_backend() { return ActiveSlot().load(); }

void select_backend(Backend backend) {
  if (!backend_available(backend)) {
    throw std::invalid_argument("kernel backend not available: " +
                                std::string(backend_name(backend)));
  }
  ActiveSlot().store(backend);
}

std::string_view backend_name(Backend backend) {
  switch (backend) {
    case Backend::kScalar:
      return "scalar";
    case Backend::kAvx2:
      return "avx2";
  }
  return "unknown";
}

}  // namespace mskd::kernels
