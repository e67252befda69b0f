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
#include <random>
#include <vector>

#include "mskd/clustering.hpp"

namespace mskd {

// P x K batch: min(P, C) distinct clusters drawn uniformly, then K members
// of each, without replacement when the cluster has at least K members and
// with replacement otherwise. Indices refer to labels.assignment.
// Throws std::invalid_argument("no clusters this epoch") when C == 0.
std::vector<std::size_t> pk_sample(const PseudoLabeling& labels, int p, int k,
                                   std::mt19937_64& rng);

}  // namespace mskd
