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

#include <array>
#include <cstddef>
#include <span>

#include "mskd/clustering.hpp"
#include "mskd/encoder.hpp"
#include "mskd/numerics.hpp"

namespace mskd {

// Three C x D centroid dictionaries (global, up, down) sharing cluster ids.
class ClusterMemoryBank {
 public:
  ClusterMemoryBank() = default;
  ClusterMemoryBank(std::array<Matrix, kNumBranches> centroids, double momentum);

  std::size_t num_clusters() const { return centroids_[0].rows(); }
  std::size_t dim() const { return centroids_[0].cols(); }
  double momentum() const { return momentum_; }

  const Matrix& centroids(Branch b) const { return centroids_[static_cast<std::size_t>(b)]; }

  bool frozen() const { return frozen_; }
  void freeze() { frozen_ = true; }

  // Re-normalize a centroid after each update. Off by default.
  bool renormalize_centroids = false;

  // phi_k <- m phi_k + (1 - m) u_q on one branch.
  // Throws std::logic_error("memory frozen") when frozen.
  void momentum_update(Branch b, std::size_t k, std::span<const double> u_q);

  // Applies the same cluster id to all three branches.
  void momentum_update(std::size_t k, const MultiScaleEmbedding& query);

  // score_k = u_q . phi_k
  Vec similarity_row(Branch b, std::span<const double> u_q) const;

  friend bool operator==(const ClusterMemoryBank&, const ClusterMemoryBank&) = default;

 private:
  std::array<Matrix, kNumBranches> centroids_;
  double momentum_ = 0.1;
  bool frozen_ = false;
};

// Per-branch cluster means over the shared labels. `embeddings` and
// `labels.assignment` are index-aligned; outliers are skipped. Throws
// std::invalid_argument("no clusters") when labels has no cluster.
ClusterMemoryBank init_memory(std::span<const MultiScaleEmbedding> embeddings,
                              const PseudoLabeling& labels, double momentum);

}  // namespace mskd
