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
#include <string>
#include <vector>

namespace mskd {

struct GradcheckResult {
  std::string name;
  int trials = 0;
  double max_relative_error = 0.0;
  bool passed = false;
};

struct GradcheckOptions {
  int trials = 50;
  std::uint64_t seed = 7;
  double step = 1e-5;
  double tolerance = 1e-4;
};

// Compares every analytic gradient (cluster_nce, distill_l2, stage1_loss,
// stage2_loss and the encoder backward pass in train, eval and no-BN modes)
// with central finite differences. The relative error of one trial is
// ||analytic - numeric|| / max(||analytic||, ||numeric||).
std::vector<GradcheckResult> run_gradcheck(const GradcheckOptions& options = {});

}  // namespace mskd
