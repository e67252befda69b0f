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

#include <cstdint>
#include <filesystem>

#include "mskd/encoder.hpp"

namespace mskd {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 5e-4;  // added to the gradient as an L2 term
};

struct AdamState {
  EncoderGrads first_moment;
  EncoderGrads second_moment;
  std::uint64_t step = 0;
};

AdamState init_adam(const EncoderShape& shape);

// base_lr * factor^(epoch / every), epochs counted from 0.
double scheduled_lr(double base_lr, int epoch, int decay_every, double decay_factor);

// One Adam step over every trainable tensor. Throws std::domain_error on a
// non-finite gradient, leaving params and state untouched.
void adam_step(EncoderParams& params, AdamState& state, const EncoderGrads& grads, double lr,
               const AdamConfig& cfg);

// "MSKD-OPT v1 <num_params> <step>\n" then the first and second moments as
// little-endian doubles in trainable-parameter order.
void save_optimizer_state(const AdamState& state, const std::filesystem::path& path);
AdamState load_optimizer_state(const EncoderShape& shape, const std::filesystem::path& path);

}  // namespace mskd
