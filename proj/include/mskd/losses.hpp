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
#include <span>

#include "mskd/encoder.hpp"
#include "mskd/memory.hpp"
#include "mskd/numerics.hpp"

namespace mskd {

struct LossConfig {
  double tau = 0.05;     // softmax temperature
  double lambda2 = 0.1;  // weight of each local branch
  double mu = 1.0;       // distillation weight

  void validate() const;
};

struct LossValue {
  double loss = 0.0;
  Vec grad;
};

struct BranchLoss {
  double loss = 0.0;
  EmbeddingGrad grad;
};

// -log softmax(centroids u_q / tau)[positive], summed over all C rows.
// Centroids are constants: the gradient is with respect to u_q only.
LossValue cluster_nce(std::span<const double> u_q, const Matrix& centroids,
                      std::size_t positive, double tau);

// (1 - lambda2) L_global + lambda2 (L_up + L_down) with one positive id.
BranchLoss stage1_loss(const MultiScaleEmbedding& query, const ClusterMemoryBank& bank,
                       std::size_t positive, const LossConfig& cfg);

// mu ||u/||u|| - t/||t|| ||^2; the teacher vector t is a constant.
LossValue distill_l2(std::span<const double> student, std::span<const double> teacher,
                     double mu);

// Per branch cluster_nce + distill_l2, weighted like stage1_loss.
BranchLoss stage2_loss(const MultiScaleEmbedding& student, const MultiScaleEmbedding& teacher,
                       const ClusterMemoryBank& bank, std::size_t positive,
                       const LossConfig& cfg);

}  // namespace mskd
