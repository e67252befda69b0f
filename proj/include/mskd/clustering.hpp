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
#include <vector>

#include "mskd/encoder.hpp"
#include "mskd/numerics.hpp"

namespace mskd {

inline constexpr int kNoise = -1;
inline constexpr int kOutlier = -1;

struct DbscanConfig {
  double eps = 0.6;
  int min_pts = 4;
};

// One epoch's shared pseudo labels. Cluster ids are 0..num_clusters-1,
// kOutlier marks instances DBSCAN left as noise.
struct PseudoLabeling {
  std::vector<int> assignment;
  int num_clusters = 0;
  int epoch = 0;

  std::size_t num_outliers() const;
  // Member indices of every cluster, in ascending index order.
  std::vector<std::vector<std::size_t>> members() const;

  friend bool operator==(const PseudoLabeling&, const PseudoLabeling&) = default;
};

// (1 - 2 lambda1) Dg + lambda1 Dup + lambda1 Ddown. Requires
// 0 <= lambda1 < 0.5 and square matrices of equal shape; the result is
// exactly symmetric with a zero diagonal.
Matrix blended_distance(const Matrix& d_global, const Matrix& d_up, const Matrix& d_down,
                        double lambda1);

// DBSCAN over a precomputed distance matrix. A point is core when at least
// min_pts points (itself included) lie within eps. Clusters are the
// eps-connected components of core points, numbered in the order their
// lowest-index core point is met; a border point joins the earliest such
// cluster that reaches it. Returns a cluster id or kNoise per point.
std::vector<int> dbscan(const Matrix& distances, const DbscanConfig& cfg);

// Renumbers cluster ids by first appearance and maps noise to kOutlier.
PseudoLabeling compact_labels(std::span<const int> raw, int epoch = 0);

// Per-branch cosine distances -> blend -> dbscan -> compact_labels.
PseudoLabeling generate_pseudo_labels(std::span<const MultiScaleEmbedding> embeddings,
                                      double lambda1, const DbscanConfig& cfg,
                                      int epoch = 0, unsigned threads = 1);

}  // namespace mskd
