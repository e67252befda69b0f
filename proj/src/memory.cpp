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

#include "mskd/memory.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "mskd/kernels.hpp"

namespace mskd {

ClusterMemoryBank::ClusterMemoryBank(std::array<Matrix, kNumBranches> centroids,
                                     double momentum)
    : centroids_(std::move(centroids)), momentum_(momentum) {
  if (!(momentum >= 0.0 && momentum <= 1.0)) {
    throw std::invalid_argument("memory: momentum must lie in [0, 1]");
  }
  for (const auto& c : centroids_) {
    if (c.rows() != centroids_[0].rows() || c.cols() != centroids_[0].cols()) {
      throw std::invalid_argument("memory: branch shapes differ");
    }
    if (!all_finite(c.flat())) throw std::invalid_argument("memory: non-finite centroid");
  }
}

void ClusterMemoryBank::momentum_update(Branch b, std::size_t k, std::span<const double> u_q) {
  if (frozen_) throw std::logic_error("memory frozen");
  Matrix& c = centroids_[static_cast<std::size_t>(b)];
  if (k >= c.rows()) {
    throw std::out_of_range("memory: cluster id " + std::to_string(k) + " out of range");
  }
  if (u_q.size() != c.cols()) throw std::invalid_argument("memory: dimension mismatch");
  auto phi = c.row(k);
  kernels::axpby(1.0 - momentum_, u_q, momentum_, phi);
  if (renormalize_centroids) {
    const double norm = l2_norm(phi);
    if (norm > kNormEps) {
      for (double& x : phi) x /= norm;
    }
  }
}

void ClusterMemoryBank::momentum_update(std::size_t k, const MultiScaleEmbedding& query) {
  for (Branch b : kAllBranches) momentum_update(b, k, query[b]);
}

Vec ClusterMemoryBank::similarity_row(Branch b, std::span<const double> u_q) const {
  const Matrix& c = centroids(b);
  if (u_q.size() != c.cols()) throw std::invalid_argument("memory: dimension mismatch");
  Vec scores(c.rows());
  const auto& k = kernels::active();
  for (std::size_t r = 0; r < c.rows(); ++r) scores[r] = k.dot(c.row(r).data(), u_q.data(), c.cols());
  return scores;
}

ClusterMemoryBank init_memory(std::span<const MultiScaleEmbedding> embeddings,
                              const PseudoLabeling& labels, double momentum) {
  if (labels.num_clusters <= 0) throw std::invalid_argument("no clusters");
  if (labels.assignment.size() != embeddings.size()) {
    throw std::invalid_argument("memory: labels and embeddings differ in length");
  }
  const std::size_t clusters = static_cast<std::size_t>(labels.num_clusters);
  std::size_t dim = 0;
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    if (labels.assignment[i] != kOutlier) {
      dim = embeddings[i].global().size();
      break;
    }
  }
  std::array<Matrix, kNumBranches> sums;
  for (auto& s : sums) s = Matrix(clusters, dim);
  std::vector<std::size_t> counts(clusters, 0);
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    const int label = labels.assignment[i];
    if (label == kOutlier) continue;
    if (label < 0 || static_cast<std::size_t>(label) >= clusters) {
      throw std::invalid_argument("memory: label out of range");
    }
    ++counts[static_cast<std::size_t>(label)];
    for (std::size_t b = 0; b < kNumBranches; ++b) {
      if (embeddings[i].branch[b].size() != dim) {
        throw std::invalid_argument("memory: dimension mismatch");
      }
      kernels::axpy(1.0, embeddings[i].branch[b], sums[b].row(static_cast<std::size_t>(label)));
    }
  }
  for (std::size_t k = 0; k < clusters; ++k) {
    if (counts[k] == 0) throw std::invalid_argument("memory: empty cluster " + std::to_string(k));
    for (auto& s : sums) {
      for (double& x : s.row(k)) x /= static_cast<double>(counts[k]);
    }
  }
  return ClusterMemoryBank(std::move(sums), momentum);
}

}  // namespace mskd
